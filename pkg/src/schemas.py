from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field


class Report(BaseModel):
    # inf / nan are legitimate results (infinite capacity, empty fits)
    model_config = ConfigDict(ser_json_inf_nan="constants")


# Reports

class CapacityEstimate(Report):
    capacity: float
    ns_number: float
    fit_window: Tuple[float, float]
    slope_stderr: float
    r_squared: float
    model: str
    points: int = 0
    power_slope: Optional[float] = None
    liminf_slope: Optional[float] = None
    capacity_liminf: Optional[float] = None
    window_shifted: bool = False


class DilatationVerdict(Report):
    verdict: Literal["equivalent", "inequivalent", "inconclusive"]
    constant: Optional[float] = None
    required: List[float] = []
    witness: List[float] = []


class LaplacianCount(Report):
    degree: int
    lam: float
    lhs: float
    harmonic: float
    f_degree: float
    f_next: float
    residual: float


class ClusterInfo(Report):
    label: int
    cells: int
    center: List[float]
    local_capacity: Optional[float] = None
    local_capacity_stderr: Optional[float] = None


class DivisorSummary(Report):
    criterion: str
    flagged_count: int
    flagged_measure: float
    cell_diameter: float
    clusters: List[ClusterInfo] = []
    determinant_agreement: Optional[float] = None


class BettiReport(Report):
    generic_betti: List[int]
    proj_dims: List[float]
    betti_integrals: List[float]
    exceptional_masses: List[float] = []
    torsion_all: bool
    vanishes: bool
    jump_cells: int
    divisor: DivisorSummary


class BranchFit(Report):
    order: int
    slope: float
    gamma: float
    points: int


class GermReport(Report):
    t0: float
    epsilon: float
    branch_orders: List[int]
    height: int
    zero_branches: int
    local_capacity: CapacityEstimate
    residuals: List[BranchFit]
    capacity_matches_height: bool


class TorusDegreeReport(Report):
    degree: int
    eigenvalues: List[Tuple[float, float]]
    eigenvalues_hit: List[Tuple[float, float]]
    hom_vn_dimension: float
    ext_is_zero: bool
    ext_capacity: Optional[CapacityEstimate] = None
    divisor_cells: int
    divisor_measure: float
    long_exact_sequence: List[str] = []


class DemoRow(Report):
    case: str
    parameter: str
    expected: float
    measured: float
    rel_error: float
    passed: bool


class SelfTestResult(Report):
    suite: str
    instances: int
    failures: int
    max_residual: float
    passed: bool


class AnalysisRecord(Report):
    name: str
    kind: str
    outputs: List[str] = []
    report: Dict[str, Any] = {}


class RunSummary(Report):
    command: str
    scenario: str
    seed: int
    eps_rank: float
    results: List[AnalysisRecord] = []
    passed: Optional[bool] = None


# Scenario file

Entry = Union[float, str]


class FactorSpec(BaseModel):
    kind: Literal["circle", "torus", "interval"]
    length: float = 1.0
    lower: float = 0.0
    upper: float = 1.0


class DomainSpec(BaseModel):
    factors: List[FactorSpec] = Field(min_length=1)
    resolution: List[int] = Field(min_length=1)


class MeasureSpec(BaseModel):
    density: Optional[str] = None


class FieldSpec(BaseModel):
    expr: Optional[str] = None
    matrix: Optional[List[List[Entry]]] = None
    table: Optional[str] = None


class ComplexSpec(BaseModel):
    maps: List[str] = Field(min_length=1)


class TorusSpecModel(BaseModel):
    tau: str
    bound: float = 10.0
    phi: Dict[str, List[List[Entry]]]


class AnalysisSpec(BaseModel):
    kind: Literal["sdf", "capacity", "divisor", "betti", "germ", "torus"]
    target: Optional[str] = None
    name: Optional[str] = None
    degree: int = 1
    t0: Optional[float] = None
    epsilon: Optional[float] = None
    lambda_window: Optional[Tuple[float, float]] = None
    eps_rank: Optional[float] = None
    c_grid: float = 1.0
    model: Literal["log_corrected", "power"] = "log_corrected"
    window: Literal["fixed", "mass"] = "fixed"
    mode: Literal["local", "threshold"] = "local"
    region: Optional[Tuple[List[float], List[float]]] = None
    budget: Optional[float] = None
    multiplicities: bool = False


class ScenarioFile(BaseModel):
    name: Optional[str] = None
    seed: int = 0
    domain: DomainSpec
    measure: MeasureSpec = MeasureSpec()
    fields: Dict[str, FieldSpec] = {}
    complexes: Dict[str, ComplexSpec] = {}
    torus: Optional[TorusSpecModel] = None
    analyses: List[AnalysisSpec] = []
