from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from ..utils.errors import LedgerMissingError

Provenance = Literal["measured", "gamma-ceiling", "derived-formula"]

#### constants ledger section ################################################

class LedgerEntry(BaseModel):
    """One constant with the parameters it was computed for"""
    name: str
    value: float
    provenance: Provenance
    params: Dict[str, float] = {}
    note: Optional[str] = None


def _params_key(params: Dict[str, float]) -> tuple:
    return tuple(sorted((k, round(float(v), 12)) for k, v in params.items()))


class ConstantsLedger(BaseModel):
    """Append-only store of measured and derived constants"""
    entries: List[LedgerEntry] = []

    def record(self, name: str, value: float, provenance: Provenance, note: Optional[str] = None, **params: float) -> LedgerEntry:
        entry = LedgerEntry(name=name, value=float(value), provenance=provenance, params=params, note=note)
        self.entries.append(entry)
        return entry

    def get(self, name: str, provenance: Optional[Provenance] = None, **params: float) -> float:
        """Latest value of a constant for the given parameters"""
        key = _params_key(params)
        for entry in reversed(self.entries):
            if entry.name != name or _params_key(entry.params) != key:
                continue
            if provenance is not None and entry.provenance != provenance:
                continue
            return entry.value
        raise LedgerMissingError(f"no ledger entry for {name} {dict(params)} ({provenance or 'any provenance'})")

    def has(self, name: str, provenance: Optional[Provenance] = None, **params: float) -> bool:
        try:
            self.get(name, provenance, **params)
            return True
        except LedgerMissingError:
            return False

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {"name": e.name, "value": e.value, "provenance": e.provenance, **e.params, "note": e.note or ""}
            for e in self.entries
        ]

#### diagnostics section #####################################################

class DensityDiagnostics(BaseModel):
    """Guard values recorded with every lattice inversion"""
    t: float
    points: int
    half_extent: float
    mass: float
    min_value: float
    ringing: float  # magnitude of the most negative node, 0 if none
    tail_bound: float  # |exp(-t psi)| at the largest resolved frequency
    extent_ratio: float  # periodised tail / max of the field


class DecayFit(BaseModel):
    slope: float
    expected_slope: float
    intercept: float
    constant: float  # norm at t=1, i.e. c4 or c5
    t_list: List[float]
    norms: List[float]

    @property
    def relative_error(self) -> float:
        if self.expected_slope == 0.0:
            return abs(self.slope)
        return abs(self.slope - self.expected_slope) / abs(self.expected_slope)


class KomatsuReport(BaseModel):
    dim: int
    delta: float
    z_values: List[float]
    integrals: List[float]
    c6_values: List[float]
    spread: float  # (max - min) / mean of the c6 estimates
    closed_form: Optional[float] = None


class ModulusReport(BaseModel):
    """Measured Holder or fractional modulus next to its Gamma ceiling"""
    lam: float
    delta: float
    kind: Literal["holder", "gradient-holder", "fractional", "gradient-fractional"]
    measured: float
    ceiling: float


class Lambda0Result(BaseModel):
    lambda0: float
    k_at_lambda0: float
    grid: List[float]
    k_values: List[float]
    provenance: Provenance
    monotone: bool


class NeumannReport(BaseModel):
    lam: float
    k_lambda: float
    terms: int
    truncation_bound: float
    g_norm: float
    sup_norm: float
    trace: List[Dict[str, float]] = []

#### monte carlo section #####################################################

class MCEstimate(BaseModel):
    mean: float
    stderr: float
    paths: int
    bias_bound: float = 0.0


class ComparisonRecord(BaseModel):
    """Monte Carlo resolvent functional against the Neumann series value"""
    s: float
    x: List[float]
    lam: float
    mc_mean: float
    mc_stderr: float
    neumann_value: float
    neumann_truncation_bound: float
    systematic_bound: float
    mc_bias_bound: float = 0.0

    @property
    def allowance(self) -> float:
        return 3.0 * self.mc_stderr + self.neumann_truncation_bound + self.systematic_bound + self.mc_bias_bound

    @property
    def agrees(self) -> bool:
        return abs(self.mc_mean - self.neumann_value) <= self.allowance


class DynkinReport(BaseModel):
    lhs: float
    rhs: float
    residual: float
    stderr: float
    allowance: float

    @property
    def passed(self) -> bool:
        return self.residual <= 3.0 * self.stderr + self.allowance


class KrylovReport(BaseModel):
    p: float
    rows: List[Dict[str, float]] = []
    baseline: float = 0.0
    max_ratio: float = 0.0

#### acceptance section ######################################################

class CheckOutcome(BaseModel):
    """One named acceptance check of a scenario"""
    scenario: str
    check: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


class RunSummary(BaseModel):
    name: str
    outcomes: List[CheckOutcome] = []
    files: List[str] = []
    ledger: ConstantsLedger = Field(default_factory=ConstantsLedger)

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)
