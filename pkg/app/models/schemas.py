import math
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

REPORT_SCHEMA_VERSION = 1
MAX_GRID_POINTS = 2 ** 24


class GridSpec(BaseModel):
    """Periodic sampling of the torus prod_j [-L_j/2, L_j/2)"""

    model_config = ConfigDict(frozen=True)

    dimension: int = Field(..., ge=1, le=3, description="Spatial dimension n")
    lengths: Tuple[float, ...] = Field(..., description="Per-axis extent L_j")
    points: Tuple[int, ...] = Field(..., description="Per-axis point count N_j (even, >= 8)")

    @model_validator(mode="after")
    def check_axes(self) -> "GridSpec":
        if len(self.lengths) != self.dimension or len(self.points) != self.dimension:
            raise ValueError(
                f"grid needs {self.dimension} lengths and point counts, got {len(self.lengths)} and {len(self.points)}"
            )
        for length in self.lengths:
            if not (length > 0 and math.isfinite(length)):
                raise ValueError(f"axis length must be positive, got {length}")
        for count in self.points:
            if count < 8 or count % 2:
                raise ValueError(f"axis point count must be even and >= 8, got {count}")
        if math.prod(self.points) > MAX_GRID_POINTS:
            raise ValueError(f"grid has {math.prod(self.points)} points, budget is {MAX_GRID_POINTS}")
        return self

    @classmethod
    def uniform(cls, dimension: int, length: float, points: int) -> "GridSpec":
        return cls(dimension=dimension, lengths=(float(length),) * dimension, points=(int(points),) * dimension)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse the `--grid n,L,N` flag"""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected n,L,N but got '{text}'")
        return cls.uniform(int(parts[0]), float(parts[1]), int(parts[2]))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.points)

    @property
    def size(self) -> int:
        return math.prod(self.points)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.lengths, self.points))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def nyquist(self) -> Tuple[float, ...]:
        """Largest representable |xi_j| per axis (pi N_j / L_j)"""
        return tuple(math.pi * N / L for L, N in zip(self.lengths, self.points))

    def label(self) -> str:
        return "x".join(str(N) for N in self.points) + "@" + "x".join(f"{L:g}" for L in self.lengths)


class BandSpec(BaseModel):
    radius: float = Field(..., gt=0, description="Inner radius R; the transition ends at 2R")


class WeightSpec(BaseModel):
    kind: Literal["bracket", "homogeneous", "unit"] = Field("bracket", description="<x>^{-s}, |x|^delta or 1")
    parameter: float = Field(1.0, description="s for bracket weights, delta for homogeneous weights")
    axis: Optional[int] = Field(None, ge=0, le=2, description="Restrict the bracket weight to one coordinate")

    def alpha(self, order: float) -> Optional[float]:
        """alpha = delta + m/2 for homogeneous weights"""
        if self.kind != "homogeneous":
            return None
        return self.parameter + order / 2.0

    def in_admissible_range(self, order: float, dimension: int) -> Optional[bool]:
        if self.kind == "bracket":
            return self.parameter > 0.5
        if self.kind == "homogeneous":
            alpha = self.alpha(order)
            return (order - dimension) / 2.0 < alpha < (order - 1) / 2.0
        return None

    def label(self) -> str:
        if self.kind == "unit":
            return "unit"
        suffix = f"[x{self.axis + 1}]" if self.axis is not None else ""
        return f"{self.kind}:{self.parameter:g}{suffix}"


class SmootherSpec(BaseModel):
    kind: Literal["classical", "bracket", "invariant_power", "invariant_bracket", "hoshiro", "unit"] = Field(
        "invariant_power", description="Frequency-side smoother sigma(D)"
    )
    exponent: float = Field(0.5, description="eta; for hoshiro the decay exponent s")
    scale: float = Field(1.0, gt=0, description="Constant factor applied to the smoother")

    @property
    def needs_symbol(self) -> bool:
        return self.kind in ("invariant_power", "invariant_bracket", "hoshiro")

    def label(self) -> str:
        text = "unit" if self.kind == "unit" else f"{self.kind}:{self.exponent:g}"
        return text if self.scale == 1.0 else f"{self.scale:g}*{text}"


class EstimateSpec(BaseModel):
    weight: WeightSpec = Field(default_factory=WeightSpec)
    smoother: SmootherSpec = Field(default_factory=SmootherSpec)
    T: float = Field(..., gt=0, description="The norm integrates t over [-T, T]")
    time_samples: int = Field(64, ge=16, description="Trapezoid nodes N_t")


class ConstantEstimate(BaseModel):
    value: float = Field(..., description="Estimated best constant C")
    method: Literal["ensemble", "power_iteration"]
    iterations: int = Field(..., description="Ensemble size or power iterations performed")
    residual: float = Field(..., description="Relative eigen-residual (0 for ensembles)")
    fingerprint: str = Field(..., description="Seed of the best member or hash of the top vector")
    converged: bool = True
    history: List[float] = Field(default_factory=list, description="Rayleigh quotients per iteration")


class CriticalPoint(BaseModel):
    point: List[float]
    rank: int
    signature: Tuple[int, int, int] = Field(..., description="(positive, negative, zero) Hessian eigenvalues")
    non_degenerate: bool
    gradient_norm: float

    @model_validator(mode="after")
    def check_degeneracy(self) -> "CriticalPoint":
        if self.non_degenerate != (self.rank == len(self.point)):
            raise ValueError("non-degenerate flag must match full Hessian rank")
        return self


class PredicateResult(BaseModel):
    holds: bool
    status: Literal["verified", "refuted", "unverified at resolution"]
    witness: Optional[float] = Field(None, description="min gradient, lower constant c or threshold radius")
    note: Optional[str] = None


class ClassificationReport(BaseModel):
    symbol: str
    dimension: int
    order: float
    kind: str
    principal_part: Optional[str] = None
    H: PredicateResult
    L: PredicateResult
    HL: PredicateResult
    Lprime: PredicateResult
    critical_points: List[CriticalPoint] = Field(default_factory=list)
    profile_zeros: Optional[List[float]] = None
    applicable_theorems: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_principal(self) -> "ClassificationReport":
        if self.H.holds and self.principal_part is None:
            raise ValueError("H holds but no principal part is recorded")
        return self

    def flag_string(self) -> str:
        flags = [("H", self.H), ("L", self.L), ("HL", self.HL), ("Lprime", self.Lprime)]
        return ";".join(f"{name}={int(result.holds)}" for name, result in flags)


class StudySpec(BaseModel):
    kind: str = Field(..., description="Study name understood by the subcommand")
    params: Dict[str, Any] = Field(default_factory=dict)


class ExperimentConfig(BaseModel):
    symbol: Optional[str] = Field(None, description="Symbol expression in the mini-language")
    dimension: Optional[int] = Field(None, ge=1, le=3)
    grid: Optional[GridSpec] = None
    estimates: List[EstimateSpec] = Field(default_factory=list)
    study: StudySpec
    seed: int = Field(0, ge=0, description="Master seed")
    output_dir: str = Field("out", description="Root directory for run folders")


class RunManifest(BaseModel):
    config_hash: str
    tool_version: str
    timestamp: datetime
    seed: int
    command: str
    config: Dict[str, Any]
    results: List[str] = Field(default_factory=list, description="Result files relative to the run folder")
    schema_version: int = REPORT_SCHEMA_VERSION


class ReportRow(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    symbol: str
    study: str
    flags: str = ""
    estimate_kind: str = ""
    weight: str = ""
    smoother: str = ""
    grid: str = ""
    T: float = 0.0
    time_samples: int = 0
    ladder_value: float = 0.0
    value: float
    method: str = ""
    residual: float = 0.0

    @field_validator("T", "ladder_value", "value", "residual")
    @classmethod
    def check_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"report cells must be finite, got {v}")
        return v

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.model_fields.keys())


class ErrorResponse(BaseModel):
    error: str = Field(..., description="Error message")
    detail: Optional[str] = Field(None, description="Additional error details")
    code: Optional[str] = Field(None, description="Error code")
