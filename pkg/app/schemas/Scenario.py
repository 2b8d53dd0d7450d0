from typing import Any, Dict, List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Scenario names
class ScenarioName:
    COMMUTATIVE_BANDS = "commutative-bands"
    DISPLACEABLE_CAPS = "displaceable-caps"
    SCALING_IN_N = "scaling-in-N"
    JANSSENS_FUZZ = "janssens-fuzz"
    REGISTRATION_CLASSICAL = "registration-classical"
    UNSHARPNESS_RATIO = "unsharpness-ratio"
    NOISE_ROBUSTNESS = "noise-robustness"
    REGION_CELLS = "region-cells"

    ALL = (
        COMMUTATIVE_BANDS,
        DISPLACEABLE_CAPS,
        SCALING_IN_N,
        JANSSENS_FUZZ,
        REGISTRATION_CLASSICAL,
        UNSHARPNESS_RATIO,
        NOISE_ROBUSTNESS,
        REGION_CELLS,
    )


TOLERANCE_DEFAULTS: Dict[str, float] = {
    "psd": 1e-10,
    "identity": 1e-9,
    "commutativity": 1e-8,
    "janssens": 1e-9,
    "nu_q_zero": 1e-9,
}


class SearchBudget(BaseModel):
    """How hard the cube searches for N and nu_q work."""

    model_config = ConfigDict(extra="forbid")

    exhaustive_cutoff: int = Field(default=14, ge=1, le=24)
    starts: int = Field(default=64, ge=1)
    iterations: int = Field(default=200, ge=1)
    step: float = Field(default=0.1, gt=0.0)
    seed: int = 0


class PartitionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["bands", "caps"]
    N: int = Field(ge=1)
    overlap: Optional[float] = Field(default=None, gt=0.0)
    centers: Optional[List[Tuple[float, float]]] = None  # (t, phi) pairs
    radius: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.type == "bands":
            if self.N < 2:
                raise ValueError("band partitions need N >= 2")
            if self.overlap is None:
                self.overlap = 0.4
        else:
            if self.centers is not None and len(self.centers) != self.N:
                raise ValueError(f"caps: {len(self.centers)} centers given for N={self.N}")
        return self


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Literal[
        "commutative-bands",
        "displaceable-caps",
        "scaling-in-N",
        "janssens-fuzz",
        "registration-classical",
        "unsharpness-ratio",
        "noise-robustness",
        "region-cells",
    ]
    seed: int
    m_list: List[int] = Field(default_factory=lambda: [8, 16, 32, 64, 128])
    partition: Optional[PartitionSpec] = None
    budget: SearchBudget = Field(default_factory=SearchBudget)
    output: Optional[str] = None
    tolerances: Dict[str, float] = Field(default_factory=dict)

    # scenario-specific knobs
    alpha: Optional[float] = Field(default=None, gt=0.0)
    m_min: int = Field(default=32, ge=1)
    n_list: List[int] = Field(default_factory=lambda: [4, 6, 8, 12])
    cases: int = Field(default=1000, ge=1)
    dims: Tuple[int, int] = (2, 6)
    outcomes: Tuple[int, int] = (2, 5)
    epsilon: float = Field(default=0.05, gt=0.0, lt=1.0)
    samples: int = Field(default=8, ge=1)
    grid: Optional[Tuple[int, int]] = None  # (n_t, n_phi) override

    @field_validator("m_list")
    @classmethod
    def _ascending(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("m_list must be nonempty")
        if any(m < 1 for m in v):
            raise ValueError("quantization levels must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("m_list must be strictly ascending")
        return v

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, v: Dict[str, float]) -> Dict[str, float]:
        unknown = sorted(set(v) - set(TOLERANCE_DEFAULTS))
        if unknown:
            raise ValueError(f"unknown tolerance keys: {', '.join(unknown)}")
        return v

    @field_validator("dims", "outcomes")
    @classmethod
    def _range(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if v[0] < 1 or v[1] < v[0]:
            raise ValueError(f"invalid range {v}")
        return v

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, TOLERANCE_DEFAULTS[name])


class ReportRow(BaseModel):
    scenario: str
    m: Optional[int] = None
    N: Optional[int] = None
    dim: Optional[int] = None
    nu_c: Optional[float] = None
    nu_q: Optional[float] = None
    noise_lower: Optional[float] = None
    ns_lower: Optional[float] = None
    ns_upper: Optional[float] = None
    m_times_nu_q: Optional[float] = None
    residual: Optional[float] = None
    wall_time_ms: float = 0.0
    witnesses: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None


# column order of the CSV; wall time lives in the JSON summary
CSV_COLUMNS = (
    "scenario",
    "m",
    "N",
    "dim",
    "nu_c",
    "nu_q",
    "noise_lower",
    "ns_lower",
    "ns_upper",
    "m_times_nu_q",
    "residual",
    "witnesses",
    "error",
)


class Verdict(BaseModel):
    name: str
    passed: bool = Field(serialization_alias="pass")
    detail: str = ""

    model_config = ConfigDict(populate_by_name=True)


class ScenarioReport(BaseModel):
    scenario: str
    seed: int
    rows: List[ReportRow] = []
    verdicts: List[Verdict] = []
    summary: Dict[str, Any] = Field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)
