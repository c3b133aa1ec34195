"""Shared plumbing for the subcommands: flags, config loading, budget, output."""
import os
import sys
import json
import logging
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from ..errors import BudgetExceededError, ConfigError
from ..models.schemas import (
    EstimateSpec,
    ExperimentConfig,
    GridSpec,
    ReportRow,
    SmootherSpec,
    StudySpec,
    WeightSpec,
)
from ..models.symbols import Symbol
from ..services.expression_parser import parse_symbol
from ..services.run_store import RunStore

logger = logging.getLogger(__name__)


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    parser.add_argument("--out", help="Output root for run folders (default: LAB_OUTPUT_DIR or 'out')")
    parser.add_argument("--grid", help="Uniform grid as n,L,N (overrides the config)")
    parser.add_argument("--threads", type=int, help="Worker threads; changes speed only")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")


def add_estimate_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--weight", help="Weight as kind:parameter, e.g. bracket:1 or homogeneous:-0.5")
    parser.add_argument("--smoother", help="Smoother as kind:exponent, e.g. invariant_power:0.5")
    parser.add_argument("--T", type=float, dest="T", help="Time window half-length")
    parser.add_argument("--time-samples", type=int, help="Trapezoid nodes in time")


def parse_list(text: Optional[str], cast=float) -> Optional[List]:
    if text is None:
        return None
    try:
        return [cast(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"cannot parse list '{text}': {str(e)}")


def parse_weight(text: str) -> WeightSpec:
    kind, _, parameter = text.partition(":")
    try:
        if kind == "unit":
            return WeightSpec(kind="unit")
        return WeightSpec(kind=kind, parameter=float(parameter or 1.0))
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"invalid weight '{text}'", detail=str(e))


def parse_smoother(text: str) -> SmootherSpec:
    kind, _, exponent = text.partition(":")
    try:
        return SmootherSpec(kind=kind, exponent=float(exponent or 0.5))
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"invalid smoother '{text}'", detail=str(e))


def load_config(args: argparse.Namespace, default_study: str, params: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Experiment config from --config (if any) with command-line values layered on top"""
    data: Dict[str, Any] = {"study": {"kind": default_study, "params": {}}}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON", detail=str(e))
        data.setdefault("study", {"kind": default_study, "params": {}})
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError("invalid experiment config", detail=str(e))

    updates: Dict[str, Any] = {}
    if getattr(args, "expression", None):
        updates["symbol"] = args.expression
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    elif not getattr(args, "config", None):
        updates["output_dir"] = os.getenv("LAB_OUTPUT_DIR", "out")
    if getattr(args, "grid", None):
        try:
            updates["grid"] = GridSpec.parse(args.grid)
        except (ValueError, ValidationError) as e:
            raise ConfigError(f"invalid --grid '{args.grid}'", detail=str(e))
    if getattr(args, "study", None):
        updates["study"] = StudySpec(kind=args.study, params=dict(config.study.params))
    if params:
        study = updates.get("study", config.study)
        merged = {**study.params, **{k: v for k, v in params.items() if v is not None}}
        updates["study"] = StudySpec(kind=study.kind, params=merged)
    return config.model_copy(update=updates)


def grid_of(config: ExperimentConfig, default: GridSpec) -> GridSpec:
    return config.grid or default


def symbol_of(config: ExperimentConfig, dimension: Optional[int] = None) -> Symbol:
    if not config.symbol:
        raise ConfigError("no symbol expression given")
    return parse_symbol(config.symbol, dimension or config.dimension)


def estimate_spec_of(config: ExperimentConfig, args: argparse.Namespace, default_T: float) -> EstimateSpec:
    """First estimate spec of the config, with --weight/--smoother/--T/--time-samples applied"""
    base = config.estimates[0] if config.estimates else EstimateSpec(T=default_T)
    data = base.model_dump()
    if getattr(args, "weight", None):
        data["weight"] = parse_weight(args.weight).model_dump()
    if getattr(args, "smoother", None):
        data["smoother"] = parse_smoother(args.smoother).model_dump()
    if getattr(args, "T", None) is not None:
        data["T"] = args.T
    if getattr(args, "time_samples", None) is not None:
        data["time_samples"] = args.time_samples
    try:
        return EstimateSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError("invalid estimate spec", detail=str(e))


def check_budget(grid: GridSpec, time_samples: int, members: int = 1) -> None:
    """Refuse runs whose work estimate prod N * N_t * members exceeds LAB_MAX_WORK"""
    limit = int(os.getenv("LAB_MAX_WORK", str(2 ** 34)))
    work = grid.size * time_samples * max(members, 1)
    if work > limit:
        raise BudgetExceededError(
            f"work estimate {work} exceeds budget {limit}",
            detail=f"grid {grid.label()}, N_t={time_samples}, members={members}",
        )


def row(symbol: str, study: str, value: float, **fields: Any) -> ReportRow:
    return ReportRow(symbol=symbol, study=study, value=float(value), **fields)


def spec_fields(spec: EstimateSpec, grid: GridSpec) -> Dict[str, Any]:
    return {
        "weight": spec.weight.label(),
        "smoother": spec.smoother.label(),
        "grid": grid.label(),
        "T": spec.T,
        "time_samples": spec.time_samples,
    }


def finish(
    command: str,
    config: ExperimentConfig,
    rows: List[ReportRow],
    details: Dict[str, Any],
    summary: Optional[Dict[str, Any]] = None,
) -> int:
    """Save the run, print its summary as JSON on stdout and return exit code 0"""
    store = RunStore(config.output_dir)
    snapshot = {"command": command, **config.model_dump(mode="json")}
    folder = store.save_run(command, snapshot, config.seed, rows, details)
    payload = {"command": command, "run": str(folder), "rows": [r.model_dump() for r in rows]}
    if summary:
        payload.update(summary)
    emit(payload)
    return 0


def emit(payload: Any) -> None:
    json.dump(payload, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")
    sys.stdout.flush()
