from pydantic import BaseModel, ConfigDict, Field
from datetime import datetime
from typing import Dict, List, Literal, Optional, Tuple, Union

MeasureFamily = Literal["kingman", "beta", "bolthausen_sznitman", "lambda_atoms", "xi_atoms", "lambda_density"]


class StrictModel(BaseModel):
    # 알 수 없는 키는 거부
    model_config = ConfigDict(extra="forbid")


class MeasureDescription(StrictModel):
    family: MeasureFamily
    kingman_mass: Optional[float] = None
    alpha: Optional[float] = None
    # lambda_atoms: [x, weight]; xi_atoms: [[x_1, x_2, ...], weight]
    atoms: Optional[List[Tuple[Union[List[float], float], float]]] = None
    grid: Optional[List[float]] = None
    density: Optional[List[float]] = None


class StopRuleModel(StrictModel):
    kind: Literal["tau", "tau_star", "time", "blocks"] = "tau"
    value: Optional[float] = None


class EventDocument(StrictModel):
    t: float
    kind: Literal["merger", "mutation"]
    participants: Optional[List[int]] = None
    new_id: Optional[int] = None
    lineage: Optional[int] = None
    mutation_id: Optional[int] = None


class GenealogyDocument(StrictModel):
    n: int = Field(ge=1)
    gamma: Optional[float] = None
    seed: Optional[int] = None
    events: List[EventDocument] = []
    tau: Optional[float] = None
    tau_star: Optional[float] = None
    end_time: Optional[float] = None


class ExperimentSpecDocument(StrictModel):
    measure: MeasureDescription
    n_grid: List[int]
    gamma: float
    replicates: int
    master_seed: int
    statistic: str = "mutations"
    stop: StopRuleModel = StopRuleModel()
    tolerances: Dict[str, float] = {}
    replicate_offset: int = 0
    # theorem_check 옵션
    t_grid: Optional[List[float]] = None
    s_grid: Optional[List[float]] = None
    t_sequence: Optional[List[float]] = None
    r_max: int = 2
    beta: Optional[float] = None


class CliConfig(StrictModel):
    """Keys accepted in a --config file; command-line flags override them."""

    measure: Optional[Union[str, MeasureDescription]] = None
    measure_file: Optional[str] = None
    n: Optional[List[int]] = None
    gamma: Optional[float] = None
    seed: Optional[int] = None
    replicates: Optional[int] = None
    stop: Optional[str] = None
    out: Optional[str] = None
    format: Literal["csv", "structured-text"] = "csv"
    q: Optional[List[float]] = None
    t: Optional[List[float]] = None
    variant: Literal["standard", "bar"] = "standard"
    statistic: Optional[str] = None
    theorem: Optional[str] = None
    martingale_t: Optional[float] = None
    import_path: Optional[str] = None
    export: Optional[str] = None
    experiment_file: Optional[str] = None
    partition: bool = False
    db: Optional[str] = None
    workers: Optional[int] = None
    r_max: Optional[int] = None
    beta: Optional[float] = None
    t_grid: Optional[List[float]] = None


# API 요청/응답 스키마
class PsiRequest(StrictModel):
    measure: MeasureDescription
    q: List[float]
    variant: Literal["standard", "bar"] = "standard"


class PsiPoint(BaseModel):
    q: float
    psi: float


class SpeedRequest(StrictModel):
    measure: MeasureDescription
    n: int = Field(ge=1)
    t: List[float] = []


class SpeedResponse(BaseModel):
    n: int
    ell: float
    horizon: float
    v: List[Tuple[float, float]]


class SimulateRequest(StrictModel):
    measure: MeasureDescription
    n: int = Field(ge=1)
    gamma: float = Field(ge=0)
    seed: int
    stop: StopRuleModel = StopRuleModel()


class SitesFamilyOut(BaseModel):
    mutation_id: int
    leaves: List[int]


class FamiliesResponse(BaseModel):
    sites_families: List[SitesFamilyOut]
    alleles_partition: List[List[int]]
    spectrum_sites: Dict[int, int]
    spectrum_alleles: Dict[int, int]


class EwensRow(BaseModel):
    configuration: List[int]
    probability: float


class EwensResponse(BaseModel):
    n: int
    gamma: float
    pmf: List[EwensRow]
    k_marginal: Dict[int, float]


class ExperimentRunBase(BaseModel):
    statistic: str
    master_seed: int
    replicates: int


class ExperimentRun(ExperimentRunBase):
    id: int
    created_at: datetime
    spec_json: str

    model_config = ConfigDict(from_attributes=True)


class SummaryRow(BaseModel):
    n: int
    statistic: str
    estimate: Optional[float] = None
    stderr: Optional[float] = None
    median: Optional[float] = None
    replicates: int

    model_config = ConfigDict(from_attributes=True)


class ExperimentRunWithSummary(ExperimentRun):
    summary: List[SummaryRow] = []
