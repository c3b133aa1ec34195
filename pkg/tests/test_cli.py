import json
from pathlib import Path

import numpy as np
import pytest

from app.main import main
from app.services.progress import progress_store


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


def test_classify_prints_json(capsys):
    code, payload = run_json(capsys, ["classify", "xi1^2 + xi2^2"])
    assert code == 0
    assert payload["command"] == "classify"
    assert payload["classification"]["H"]["holds"]
    assert "H=1" in payload["rows"][0]["flags"]


def test_parse_errors_exit_with_config_code(capsys):
    assert main(["classify", "xi1 + zeta"]) == 2
    assert '"code": "parse_error"' in capsys.readouterr().err


def test_bad_grid_flag(capsys):
    assert main(["decompose", "xi1^3 - xi1", "--grid", "1,32"]) == 2


def test_budget_is_enforced(monkeypatch):
    monkeypatch.setenv("LAB_MAX_WORK", "1000")
    assert main(["timedep", "xi1^2", "--grid", "1,32,128"]) == 3


def test_report_without_runs(lab_environment):
    assert main(["report", str(lab_environment / "empty")]) == 4


def test_decompose_reports_breakpoints(capsys):
    code, payload = run_json(capsys, ["decompose", "xi1^3 - xi1", "--grid", "1,32,256"])
    assert code == 0
    assert payload["rows"][0]["value"] == 3.0


def test_timedep_constant_coefficient(capsys):
    code, payload = run_json(capsys, ["timedep", "xi1^2", "--grid", "1,32,128", "--T", "4", "--time-samples", "32"])
    assert code == 0
    deviations = {r["estimate_kind"]: r["value"] for r in payload["rows"]}
    assert deviations["equality_deviation"] < 1e-9
    assert np.isfinite(deviations["norm"])


def test_runs_merge_into_a_report(capsys, lab_environment):
    assert main(["classify", "xi1^3"]) == 0
    assert main(["classify", "xi1^2 + xi2^2"]) == 0
    capsys.readouterr()
    code, payload = run_json(capsys, ["report", str(lab_environment / "out")])
    assert code == 0
    assert payload["row_count"] == 2
    assert payload["commands"] == {"classify": 2}


def test_threads_must_be_positive():
    assert main(["classify", "xi1^2", "--threads", "0"]) == 2


def test_unknown_command_exits_through_argparse():
    with pytest.raises(SystemExit):
        main(["integrate"])


def test_results_do_not_depend_on_thread_count(capsys, lab_environment):
    tables = []
    for threads in ("1", "8"):
        code, payload = run_json(capsys, [
            "estimate", "xi1^2", "--method", "ensemble", "--ensemble-size", "16",
            "--grid", "1,32,128", "--T", "4", "--time-samples", "32", "--seed", "5",
            "--threads", threads, "--out", str(lab_environment / f"threads-{threads}"),
        ])
        assert code == 0
        tables.append((Path(payload["run"]) / "results.csv").read_bytes())
    assert tables[0] == tables[1]


def test_failed_study_marks_its_progress_as_failed(capsys):
    assert main(["estimate", "xi1^2", "--study", "refinement"]) == 2
    assert progress_store["estimate:refinement"]["status"] == "error"
    assert "ladder" in progress_store["estimate:refinement"]["message"]
