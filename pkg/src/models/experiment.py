from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..core.lattice import LatticeGrid, LatticeField, SpaceTimeFunction
from ..utils.config import load_config_file
from ..utils.errors import ConfigError
from .kernel import JumpKernelModel
from .levy import LevyTriple

ScenarioKind = Literal[
    "density", "scaling", "decay", "komatsu", "resolvent", "neumann", "mollify", "truncate", "simulate", "verify"
]

# (N, L) per dimension
CONSTANTS_LATTICE = {1: (8192, 128.0), 2: (512, 32.0), 3: (64, 16.0)}

#### parameter blocks section ################################################

class GridSpec(BaseModel):
    dim: int = Field(default=1, ge=1, le=3)
    N: int = 1024
    L: float = Field(default=32.0, gt=0)

    def build(self) -> LatticeGrid:
        return LatticeGrid(dim=self.dim, half_extent=self.L, points=self.N)

    @classmethod
    def constants_default(cls, dim: int) -> "GridSpec":
        """Wide lattice for the t = 1 constants c4 and c5, where heavy tails need a large extent"""
        N, L = CONSTANTS_LATTICE[dim]
        return cls(dim=dim, N=N, L=L)


class QuadratureSpec(BaseModel):
    tol: float = Field(default=1e-10, gt=0)
    order: int = Field(default=10, ge=2)
    first_cell: float = Field(default=1e-8, gt=0)


class MonteCarloSpec(BaseModel):
    paths: int = Field(default=10000, ge=1)
    dt: float = Field(default=0.01, gt=0)
    eps: Optional[float] = None
    delta_cut: Optional[float] = None
    seed: int = 0
    block: int = Field(default=1000, ge=1)
    s: float = 0.0
    T: float = Field(default=1.0, gt=0)
    x: List[float] = [0.0]
    small_jump_gaussian: bool = False
    include_stable: bool = True


class SourceSpec(BaseModel):
    """Source g: a constant or a trigonometric sum with an optional time factor"""
    kind: Literal["constant", "trig"] = "trig"
    value: float = 1.0
    amplitudes: List[float] = [1.0]
    wavevectors: List[List[float]] = [[1.0]]
    phases: List[float] = []
    time_amplitude: float = 0.0
    time_frequency: float = 0.0

    @model_validator(mode="after")
    def _lengths(self) -> "SourceSpec":
        if len(self.amplitudes) != len(self.wavevectors):
            raise ValueError("amplitudes and wavevectors must have the same length")
        if self.phases and len(self.phases) != len(self.amplitudes):
            raise ValueError("phases must match amplitudes in length")
        return self

    @property
    def time_frozen(self) -> bool:
        return self.kind == "constant" or self.time_amplitude == 0.0

    def spatial(self, coords: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(coords.shape[:-1], self.value)
        phases = self.phases or [0.0] * len(self.amplitudes)
        out = np.zeros(coords.shape[:-1])
        for a, k, phase in zip(self.amplitudes, self.wavevectors, phases):
            out = out + a * np.cos(coords @ np.asarray(k, dtype=float) + phase)
        return out

    def bound(self) -> float:
        if self.kind == "constant":
            return abs(self.value)
        return float(sum(abs(a) for a in self.amplitudes) * (1.0 + abs(self.time_amplitude)))

    def build(self, grid: LatticeGrid) -> SpaceTimeFunction:
        values = self.spatial(grid.coordinates())
        if self.time_frozen:
            return SpaceTimeFunction.frozen(LatticeField(grid=grid, values=values))
        amp, freq = self.time_amplitude, self.time_frequency
        return SpaceTimeFunction.from_callable(
            grid, lambda t, x: values * (1.0 + amp * np.sin(freq * t)), bound=self.bound(),
        )


class Tolerances(BaseModel):
    oracle: float = 1e-6
    oracle_window: float = 10.0
    mass: float = 1e-6
    scaling: float = 1e-5
    decay: float = 0.02
    komatsu: float = 0.01
    resolvent: float = 1e-8
    identity: float = 1e-4
    perturbed_identity: float = 1e-3
    ratio_slack: float = 0.02
    mollify_slope: float = -0.9
    ks_pvalue: float = 0.01
    krylov_factor: float = 2.0
    operator: float = 1e-8

#### scenario section ########################################################

class Scenario(BaseModel):
    """One reproducible experiment of a given kind"""
    name: str
    kind: ScenarioKind
    levy: Dict[str, Any]
    kernel: Optional[Dict[str, Any]] = None
    grid: GridSpec = GridSpec()
    constants_grid: Optional[GridSpec] = None
    quadrature: QuadratureSpec = QuadratureSpec()
    mc: MonteCarloSpec = MonteCarloSpec()
    source: SourceSpec = SourceSpec()
    tolerances: Tolerances = Tolerances()
    oracle: Optional[Literal["cauchy", "gaussian", "stable-lattice"]] = None

    t: float = Field(default=1.0, gt=0)
    t_list: List[float] = [0.25, 4.0]
    delta: float = 0.0
    r: float = 1.0
    axis: Optional[int] = None
    lambdas: List[float] = []
    lambda_grid: List[float] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
    z_list: List[float] = [0.1, 1.0, 10.0]
    n_list: List[int] = [4, 8, 16, 32]
    delta_cuts: List[float] = [0.4, 0.2, 0.1, 0.05]
    widths: List[float] = [1.0, 0.5, 0.25]
    mollify_n: Optional[int] = None
    ensemble_size: int = Field(default=20, ge=1)
    moduli: Literal["measured", "gamma-ceiling"] = "measured"
    p: Optional[float] = None
    q: Optional[float] = None

    @model_validator(mode="after")
    def _parse_models(self) -> "Scenario":
        # surface triple and kernel errors as field-level validation errors
        triple = self.triple()
        if self.kernel is not None:
            JumpKernelModel.from_config(self.kernel, triple.dim)
        if triple.dim != self.grid.dim:
            raise ValueError(f"grid dimension {self.grid.dim} does not match the triple dimension {triple.dim}")
        if self.constants_grid is not None and self.constants_grid.dim != triple.dim:
            raise ValueError(f"constants grid dimension {self.constants_grid.dim} does not match the triple dimension {triple.dim}")
        if self.kind in ("neumann", "mollify", "truncate", "verify") and self.kernel is None:
            raise ValueError(f"{self.kind} scenarios need a kernel block")
        return self

    def triple(self) -> LevyTriple:
        return LevyTriple.from_config(self.levy)

    def constants_lattice(self) -> LatticeGrid:
        spec = self.constants_grid or GridSpec.constants_default(self.grid.dim)
        return spec.build()

    def kernel_model(self) -> JumpKernelModel:
        dim = self.triple().dim
        if self.kernel is None:
            return JumpKernelModel.zero(dim, beta=min(0.5, 0.5 * self.triple().alpha))
        return JumpKernelModel.from_config(self.kernel, dim)


class ExperimentConfig(BaseModel):
    """One config file = one experiment: a named list of scenarios"""
    name: str = "experiment"
    output_dir: str = "outputs"
    scenarios: List[Scenario] = []

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        data = load_config_file(path)
        data.setdefault("name", Path(path).stem)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
            raise ConfigError(f"Invalid experiment config: {problems}")
