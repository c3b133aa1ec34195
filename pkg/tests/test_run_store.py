import json

import pytest

from app.errors import MissingArtifactError
from app.models.schemas import ReportRow
from app.services.run_store import RunStore, config_hash


def rows(symbol, *values):
    return [ReportRow(symbol=symbol, study="estimate", value=v, ladder_value=i) for i, v in enumerate(values)]


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_save_and_load(tmp_path):
    store = RunStore(str(tmp_path))
    config = {"command": "estimate", "symbol": "xi1^2"}
    folder = store.save_run("estimate", config, 7, rows("xi1^2", 1.25, 2.5), {"note": "ok"})
    assert folder.name == config_hash(config)
    manifest = store.load_manifest(folder)
    assert manifest.seed == 7
    assert manifest.command == "estimate"
    assert [r.value for r in store.read_rows(folder)] == [1.25, 2.5]


def test_tampered_manifest_is_rejected(tmp_path):
    store = RunStore(str(tmp_path))
    folder = store.save_run("classify", {"symbol": "xi1"}, 0, rows("xi1", 1.0), {})
    path = folder / "manifest.json"
    manifest = json.loads(path.read_text())
    manifest["config"]["symbol"] = "xi1^3"
    path.write_text(json.dumps(manifest))
    with pytest.raises(MissingArtifactError):
        store.load_manifest(folder)


def test_merge_collects_every_run(tmp_path):
    store = RunStore(str(tmp_path))
    store.save_run("estimate", {"symbol": "xi1^2"}, 0, rows("xi1^2", 1.0, 2.0), {})
    store.save_run("classify", {"symbol": "xi1"}, 0, rows("xi1", 3.0), {})
    summary = store.merge()
    assert summary["row_count"] == 3
    assert summary["commands"] == {"classify": 1, "estimate": 1}
    assert len(summary["runs"]) == 2
    assert (tmp_path / "merged.csv").exists()


def test_merge_is_idempotent(tmp_path):
    store = RunStore(str(tmp_path))
    store.save_run("estimate", {"symbol": "xi1^2"}, 0, rows("xi1^2", 0.1, 1 / 3), {})
    store.merge()
    first = (tmp_path / "merged.csv").read_bytes()
    store.merge()
    assert (tmp_path / "merged.csv").read_bytes() == first


def test_merge_of_empty_directory(tmp_path):
    with pytest.raises(MissingArtifactError):
        RunStore(str(tmp_path / "nothing")).merge()
