from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class EstimateReport(BaseModel):
    """
    Kết quả một phép kiểm tra bất đẳng thức.

    ``defect`` is the worst signed margin over the checked set (rhs − lhs for
    an upper bound, lhs − rhs for a lower bound), so a check passes iff
    ``defect >= -tolerance``. ``lhs``/``rhs`` are the two sides at the worst
    location.
    """

    name: str
    lhs: float
    rhs: float
    defect: float
    location: Optional[Tuple[float, float]] = None
    passed: bool = False
    tolerance: float = 0.0
    instance_id: str = "global"
    grid_n: Optional[int] = None
    details: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _sync_pass(self):
        self.passed = bool(self.defect >= -self.tolerance)
        return self

    def to_row(self) -> List[str]:
        loc = "" if self.location is None else f"{self.location[0]:.6g},{self.location[1]:.6g}"
        instance = self.instance_id if self.grid_n is None else f"{self.instance_id}@n{self.grid_n}"
        return [
            instance,
            self.name,
            repr(float(self.lhs)),
            repr(float(self.rhs)),
            repr(float(self.defect)),
            loc,
            "pass" if self.passed else "FAIL",
        ]


TABLE_HEADER = ["instance_id", "check", "lhs", "rhs", "defect", "location", "pass"]


class SolveSummary(BaseModel):
    instance_id: str
    grid_n: int
    h: float
    residual_sup: float
    iterations: int
    path: str
    converged: bool = True
    max_error: Optional[float] = None
    residual_history: List[float] = Field(default_factory=list)
    message: Optional[str] = None


class ConvergenceRow(BaseModel):
    instance_id: str
    h: float
    error: float
    observed_order: Optional[float] = None


class InstanceReport(BaseModel):
    instance_id: str
    solves: List[SolveSummary] = Field(default_factory=list)
    checks: List[EstimateReport] = Field(default_factory=list)
    convergence: List[ConvergenceRow] = Field(default_factory=list)


class RunReport(BaseModel):
    """Tổng hợp toàn bộ lượt chạy; ``passed`` đúng khi mọi check bật đều pass."""

    app_version: str
    seed: int
    config_name: str = ""
    instances: List[InstanceReport] = Field(default_factory=list)
    global_checks: List[EstimateReport] = Field(default_factory=list)
    passed: bool = True
    exit_code: int = 0
    failed_stage: Optional[str] = None

    def all_checks(self) -> List[EstimateReport]:
        rows = [c for inst in self.instances for c in inst.checks]
        return rows + list(self.global_checks)

    def all_solves(self) -> List[SolveSummary]:
        return [s for inst in self.instances for s in inst.solves]

    def convergence_table(self) -> List[ConvergenceRow]:
        return [row for inst in self.instances for row in inst.convergence]

    def refresh_status(self) -> "RunReport":
        if any(not s.converged for s in self.all_solves()):
            self.passed, self.exit_code, self.failed_stage = False, 2, "solver"
        elif any(not c.passed for c in self.all_checks()):
            self.passed, self.exit_code, self.failed_stage = False, 3, "checker"
        else:
            self.passed, self.exit_code, self.failed_stage = True, 0, None
        return self


class ChainLink(BaseModel):
    """One link lhs ≤ rhs of the arctan-to-b chain; ``applicable`` is False where its hypothesis fails."""

    name: str
    lhs: float
    rhs: float
    applicable: bool = True
    holds: bool = True
