import os
import csv
import json
import hashlib
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .. import __version__
from ..errors import MissingArtifactError
from ..models.schemas import REPORT_SCHEMA_VERSION, ReportRow, RunManifest

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
RESULTS = "results.csv"
DETAILS = "details.json"


def config_hash(config: Dict[str, Any]) -> str:
    """Content address of a config: sha256 of its canonical JSON"""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _write_json(path: Path, payload: Any) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _write_rows(path: Path, rows: List[ReportRow]) -> None:
    columns = ReportRow.columns()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            data = row.model_dump()
            writer.writerow([repr(data[c]) if isinstance(data[c], float) else data[c] for c in columns])


class RunStore:
    """Run folders under the output root: <root>/<confighash>/{manifest.json, results.csv, details.json}"""

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = Path(output_dir or os.getenv("LAB_OUTPUT_DIR", "out"))

    def run_dir(self, digest: str) -> Path:
        return self.output_dir / digest

    def save_run(
        self,
        command: str,
        config: Dict[str, Any],
        seed: int,
        rows: List[ReportRow],
        details: Dict[str, Any],
    ) -> Path:
        """Write results, details and the manifest for one run; returns the run folder"""
        digest = config_hash(config)
        folder = self.run_dir(digest)
        try:
            folder.mkdir(parents=True, exist_ok=True)
            _write_rows(folder / RESULTS, rows)
            _write_json(folder / DETAILS, details)
            manifest = RunManifest(
                config_hash=digest,
                tool_version=__version__,
                timestamp=datetime.now(),
                seed=seed,
                command=command,
                config=config,
                results=[RESULTS, DETAILS],
            )
            _write_json(folder / MANIFEST, manifest.model_dump(mode="json"))
        except OSError as e:
            logger.error(f"Error writing run {digest}: {str(e)}")
            raise
        logger.info(f"Saved {len(rows)} row(s) for '{command}' to {folder}")
        return folder

    def load_manifest(self, folder: Path) -> RunManifest:
        """Load and verify a run manifest"""
        path = Path(folder) / MANIFEST
        if not path.exists():
            raise MissingArtifactError(f"no manifest in {folder}")
        try:
            with open(path, "r") as f:
                manifest = RunManifest.model_validate(json.load(f))
        except (json.JSONDecodeError, ValidationError) as e:
            raise MissingArtifactError(f"unreadable manifest in {folder}", detail=str(e))
        if config_hash(manifest.config) != manifest.config_hash:
            raise MissingArtifactError(f"manifest hash mismatch in {folder}")
        return manifest

    def read_rows(self, folder: Path) -> List[ReportRow]:
        path = Path(folder) / RESULTS
        if not path.exists():
            raise MissingArtifactError(f"no {RESULTS} in {folder}")
        with open(path, "r", newline="") as f:
            return [ReportRow.model_validate(row) for row in csv.DictReader(f)]

    def list_runs(self, root: Optional[Path] = None) -> List[Path]:
        """Run folders under `root` that carry a manifest, in name order"""
        root = Path(root) if root is not None else self.output_dir
        if not root.is_dir():
            return []
        return sorted(p for p in root.iterdir() if (p / MANIFEST).exists())

    def merge(self, root: Optional[Path] = None) -> Dict[str, Any]:
        """Merge every run under `root` into merged.csv and summary.json"""
        root = Path(root) if root is not None else self.output_dir
        runs = self.list_runs(root)
        if not runs:
            raise MissingArtifactError(f"no run manifests under {root}")
        rows: List[ReportRow] = []
        commands: Dict[str, int] = {}
        for folder in runs:
            manifest = self.load_manifest(folder)
            commands[manifest.command] = commands.get(manifest.command, 0) + 1
            rows.extend(self.read_rows(folder))
        rows.sort(key=lambda r: (r.symbol, r.study, r.ladder_value))

        studies: Dict[str, int] = {}
        for row in rows:
            studies[row.study] = studies.get(row.study, 0) + 1
        summary = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "runs": [p.name for p in runs],
            "row_count": len(rows),
            "commands": commands,
            "studies": studies,
        }
        _write_rows(root / "merged.csv", rows)
        _write_json(root / "summary.json", summary)
        logger.info(f"Merged {len(rows)} row(s) from {len(runs)} run(s) under {root}")
        return summary


def get_run_store(output_dir: Optional[str] = None) -> RunStore:
    return RunStore(output_dir)
