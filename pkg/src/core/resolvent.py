from functools import lru_cache
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import integrate
from scipy.special import gamma as gamma_fn

from ..models.levy import LevyTriple, StablePart
from ..models.results import KomatsuReport, ModulusReport
from ..utils.console import get_logger
from ..utils.errors import DomainError, InadmissibleExponentError, QuadratureError
from .lattice import LatticeField, LatticeGrid, SpaceTimeFunction
from .symbol import Exponent, stable_symbol, triple_symbol

logger = get_logger(__name__)

NODE_CHUNK = 64

#### propagator section ######################################################

class Propagator:
    """Transition semigroup P_u = exp(-u psi(k)) acting on lattice fields by Fourier multipliers"""

    def __init__(self, exponent: Exponent, grid: LatticeGrid):
        self.grid = grid
        self.freqs = grid.frequencies()
        self.psi = exponent(self.freqs)
        self._spatial_axes = tuple(range(-grid.dim, 0))
        self._nyquist = grid.nyquist_mask()

    @classmethod
    def for_triple(cls, triple: LevyTriple, grid: LatticeGrid) -> "Propagator":
        return cls(triple_symbol(triple), grid)

    @classmethod
    def for_stable(cls, stable: StablePart, grid: LatticeGrid) -> "Propagator":
        return cls(stable_symbol(stable), grid)

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values, axes=self._spatial_axes)

    def backward(self, spectrum: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifftn(spectrum, axes=self._spatial_axes))

    def gradient_symbol(self, axis: int) -> np.ndarray:
        return np.where(self._nyquist, 0.0, 1j * self.freqs[..., axis])

    def fractional_symbol(self, delta: float) -> np.ndarray:
        return -np.linalg.norm(self.freqs, axis=-1) ** delta

    def semigroup(self, u: float, values: np.ndarray) -> np.ndarray:
        return self.backward(np.exp(-u * self.psi) * self.forward(values))

    def generator(self, values: np.ndarray) -> np.ndarray:
        """L f for the generator with symbol -psi"""
        return self.backward(-self.psi * self.forward(values))

    def gradient(self, values: np.ndarray, axis: int) -> np.ndarray:
        return self.backward(self.gradient_symbol(axis) * self.forward(values))

    def fractional(self, values: np.ndarray, delta: float) -> np.ndarray:
        return self.backward(self.fractional_symbol(delta) * self.forward(values))

    def stationary_resolvent(self, lam: float, values: np.ndarray) -> np.ndarray:
        """(lam - L)^{-1} f, exact for time-frozen inputs"""
        return self.backward(self.forward(values) / (lam + self.psi))

#### quadrature scheme section ###############################################

class QuadratureScheme(BaseModel):
    """Gauss-Legendre nodes for int_0^U e^{-lam u} (.) du on geometric-then-uniform cells"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lam: float
    order: int
    tol: float
    edges: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray  # Gauss weights times e^{-lam u}

    @model_validator(mode="after")
    def _tail(self) -> "QuadratureScheme":
        if self.tail_bound > self.tol:
            raise QuadratureError(
                f"quadrature horizon {self.horizon:.4g} leaves tail {self.tail_bound:.3e} > tol {self.tol:.0e}"
            )
        return self

    @property
    def horizon(self) -> float:
        return float(self.edges[-1])

    @property
    def tail_bound(self) -> float:
        """e^{-lam U}/lam, multiplied by ||g|| at use"""
        return float(np.exp(-self.lam * self.horizon) / self.lam)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_edges(cls, lam: float, edges: np.ndarray, order: int, tol: float) -> "QuadratureScheme":
        x, w = np.polynomial.legendre.leggauss(order)
        a, b = edges[:-1, None], edges[1:, None]
        nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
        weights = (0.5 * (b - a) * w).ravel() * np.exp(-lam * nodes)
        return cls(lam=lam, order=order, tol=tol, edges=edges, nodes=nodes, weights=weights)

    @classmethod
    def build(cls, lam: float, tol: float = 1e-10, order: int = 10, first_cell: float = 1e-8) -> "QuadratureScheme":
        """
        Geometric cells doubling from first_cell up to 1/lam, then cells of length 1/lam

        Args:
            lam: resolvent parameter, > 0
            tol: bound on the truncated tail e^{-lam U}/lam
            order: Gauss-Legendre points per cell
            first_cell: length of the innermost cell
        """
        if not lam > 0:
            raise DomainError(f"lambda must be positive, got {lam}")
        scale = 1.0 / lam
        horizon = max(scale, np.log(1.0 / (lam * tol)) / lam) * (1.0 + 1e-12)
        near = [0.0]
        edge = min(first_cell, 0.5 * scale)
        while edge < scale:
            near.append(edge)
            edge *= 2.0
        cells = int(np.ceil((horizon - scale) / scale))
        far = scale + scale * np.arange(cells + 1)
        edges = np.unique(np.concatenate([near, far]))
        return cls.from_edges(lam, edges, order, tol)

    def with_breakpoints(self, points: Iterable[float]) -> "QuadratureScheme":
        """Same scheme with extra cell edges (kinks of the integrand in u)"""
        inner = [p for p in points if 0.0 < p < self.horizon]
        if not inner:
            return self
        edges = np.unique(np.concatenate([self.edges, inner]))
        return QuadratureScheme.from_edges(self.lam, edges, self.order, self.tol)

#### resolvent section #######################################################

class Resolvent:
    """Time-space resolvent R_lam g(t,.) = int_0^inf e^{-lam u} P_u g(t+u,.) du"""

    def __init__(self, propagator: Propagator, lam: float, scheme: Optional[QuadratureScheme] = None):
        self.propagator = propagator
        self.lam = lam
        self.scheme = scheme or QuadratureScheme.build(lam)
        if abs(self.scheme.lam - lam) > 1e-12 * lam:
            raise DomainError(f"scheme built for lambda={self.scheme.lam}, used with {lam}")
        self._kernel: Optional[np.ndarray] = None

    @property
    def grid(self) -> LatticeGrid:
        return self.propagator.grid

    def _frozen_kernel(self) -> np.ndarray:
        """sum_m w_m e^{-u_m psi}, the quadrature image of 1/(lam + psi)"""
        if self._kernel is None:
            psi, scheme = self.propagator.psi, self.scheme
            kernel = np.zeros(psi.shape, dtype=complex)
            for start in range(0, scheme.node_count, NODE_CHUNK):
                nodes = scheme.nodes[start:start + NODE_CHUNK]
                weights = scheme.weights[start:start + NODE_CHUNK]
                kernel += np.tensordot(weights, np.exp(-np.multiply.outer(nodes, psi)), axes=1)
            self._kernel = kernel
        return self._kernel

    def spectrum(self, g: SpaceTimeFunction, t: float) -> np.ndarray:
        """Fourier coefficients of R_lam g(t, .)"""
        prop = self.propagator
        scheme = self.scheme
        if g.time_frozen:
            return self._frozen_kernel() * prop.forward(g.at(t))
        if g.times is not None:
            scheme = scheme.with_breakpoints(g.times - t)
        total = np.zeros(self.grid.shape, dtype=complex)
        # fixed chunk order keeps the reduction deterministic
        for start in range(0, scheme.node_count, NODE_CHUNK):
            nodes = scheme.nodes[start:start + NODE_CHUNK]
            weights = scheme.weights[start:start + NODE_CHUNK]
            frames = prop.forward(g.at_many(t + nodes))
            decay = np.exp(-np.multiply.outer(nodes, prop.psi))
            total += np.tensordot(weights, decay * frames, axes=1)
        return total

    def apply(self, g: SpaceTimeFunction, t: float) -> LatticeField:
        return LatticeField(grid=self.grid, values=self.propagator.backward(self.spectrum(g, t)))

    def apply_gradient(self, g: SpaceTimeFunction, t: float, axis: int) -> LatticeField:
        spectrum = self.propagator.gradient_symbol(axis) * self.spectrum(g, t)
        return LatticeField(grid=self.grid, values=self.propagator.backward(spectrum))

    def apply_fractional(self, g: SpaceTimeFunction, t: float, delta: float, axis: Optional[int] = None) -> LatticeField:
        spectrum = self.propagator.fractional_symbol(delta) * self.spectrum(g, t)
        if axis is not None:
            spectrum = self.propagator.gradient_symbol(axis) * spectrum
        return LatticeField(grid=self.grid, values=self.propagator.backward(spectrum))

    def identity_residual(self, g: SpaceTimeFunction, times: Sequence[float], tau: float = 1e-4) -> float:
        """sup over times of |lam R g - d_t R g - L R g - g|"""
        prop = self.propagator
        worst = 0.0
        for t in times:
            center = self.spectrum(g, t)
            derivative = (self.spectrum(g, t + tau) - self.spectrum(g, t - tau)) / (2.0 * tau)
            lhs = prop.backward((self.lam + prop.psi) * center - derivative)
            worst = max(worst, float(np.max(np.abs(lhs - g.at(t)))))
        return worst


def apply_R(lam: float, g: SpaceTimeFunction, t: float, scheme: QuadratureScheme, propagator: Propagator) -> LatticeField:
    return Resolvent(propagator, lam, scheme).apply(g, t)


def apply_grad_R(lam: float, g: SpaceTimeFunction, t: float, axis: int, scheme: QuadratureScheme,
                 propagator: Propagator) -> LatticeField:
    return Resolvent(propagator, lam, scheme).apply_gradient(g, t, axis)


def resolvent_multiplier_apply(lam: float, field: LatticeField, propagator: Propagator) -> LatticeField:
    return field.with_values(propagator.stationary_resolvent(lam, field.values))


def resolvent_identity_residual(lam: float, g: SpaceTimeFunction, times: Sequence[float],
                                scheme: QuadratureScheme, propagator: Propagator, tau: float = 1e-4) -> float:
    return Resolvent(propagator, lam, scheme).identity_residual(g, times, tau)

#### test function ensembles section #########################################

def random_ensemble(grid: LatticeGrid, count: int, seed: int = 0, modes: int = 6,
                    square_waves: bool = True) -> List[SpaceTimeFunction]:
    """Bounded lattice-periodic test functions: random trig sums and square waves, frozen in time"""
    rng = np.random.default_rng(seed)
    coords = grid.coordinates()
    base = np.pi / grid.half_extent
    out = []
    for i in range(count):
        wave = np.zeros(grid.shape)
        for _ in range(modes):
            k = base * rng.integers(-8, 9, size=grid.dim)
            wave += rng.normal() * np.cos(coords @ k + rng.uniform(0, 2 * np.pi))
        if square_waves and i % 2 == 1:
            wave = np.sign(wave)
        peak = np.max(np.abs(wave))
        wave = wave / peak if peak > 0 else np.ones(grid.shape)
        out.append(SpaceTimeFunction.frozen(LatticeField(grid=grid, values=wave)))
    return out


def lattice_shifts(grid: LatticeGrid, max_radius: float = 1.0) -> List[np.ndarray]:
    """Integer node offsets j with 0 < |j h| <= max_radius"""
    steps = int(np.floor(max_radius / grid.spacing))
    offsets = []
    for n in sorted({int(round(v)) for v in np.geomspace(1, max(steps, 1), 24)}):
        for axis in range(grid.dim):
            j = np.zeros(grid.dim, dtype=int)
            j[axis] = n
            offsets.append(j)
        if grid.dim > 1 and n * np.sqrt(grid.dim) * grid.spacing <= max_radius:
            offsets.append(np.full(grid.dim, n))
    return offsets

#### holder moduli section ###################################################

def gamma_ceiling(c4: float, alpha: float, delta: float, lam: float) -> float:
    """c4 int_0^inf e^{-lam u} u^{-delta/alpha} du = c4 Gamma(1 - delta/alpha) lam^{delta/alpha - 1}"""
    return float(c4 * gamma_fn(1.0 - delta / alpha) * lam ** (delta / alpha - 1.0))


def gradient_gamma_ceiling(c5: float, alpha: float, delta: float, lam: float) -> float:
    """c5 Gamma(1 - (1+delta)/alpha) lam^{(1+delta)/alpha - 1}"""
    return float(c5 * gamma_fn(1.0 - (1.0 + delta) / alpha) * lam ** ((1.0 + delta) / alpha - 1.0))


def komatsu_c7(d: int, delta: float) -> float:
    return float(-gamma_fn((d - delta) / 2.0) / (np.pi ** (d / 2.0) * 2.0 ** delta * gamma_fn(delta / 2.0)))


def komatsu_c6_closed_form(delta: float) -> float:
    """d=1 value of int |(|w+z|^{delta-1} - |w|^{delta-1})| dw / |z|^delta"""
    return 2.0 ** (2.0 - delta) / delta


@lru_cache(maxsize=32)
def komatsu_factor(d: int, delta: float) -> float:
    """c6 |c7|: turns a sup bound on |d|^delta f into a delta-Holder bound on f"""
    c6 = komatsu_c6_closed_form(delta) if d == 1 else komatsu_check(delta, d, [1.0]).c6_values[0]
    return c6 * abs(komatsu_c7(d, delta))


def _check_holder_delta(alpha: float, delta: float, gradient: bool) -> None:
    if gradient:
        if not (1.0 < alpha < 2.0 and 0.0 < delta < alpha - 1.0):
            raise DomainError(f"gradient modulus needs 1 < alpha < 2 and 0 < delta < alpha-1, got alpha={alpha}, delta={delta}")
    elif not 0.0 < delta < min(alpha, 1.0):
        raise DomainError(f"Holder modulus needs 0 < delta < min(alpha, 1), got delta={delta}")


def holder_modulus(
    resolvent: Resolvent,
    alpha: float,
    delta: float,
    ensemble: Sequence[SpaceTimeFunction],
    times: Sequence[float],
    c_ceiling: float,
    gradient: bool = False,
    max_radius: float = 1.0
) -> ModulusReport:
    """
    Measured sup |R g(t,x+z) - R g(t,x)| / (|z|^delta ||g||), or its gradient version

    Args:
        resolvent: R_lam on a lattice
        alpha: stability index of the dominating stable part
        delta: Holder order
        ensemble: source functions g
        times: evaluation times t
        c_ceiling: c4 (or c5 for the gradient) from the ledger
        gradient: measure the modulus of grad R g instead
        max_radius: largest |z| sampled
    """
    _check_holder_delta(alpha, delta, gradient)
    grid = resolvent.grid
    offsets = lattice_shifts(grid, max_radius)
    worst = 0.0
    for g in ensemble:
        norm = g.sup_norm()
        if norm == 0.0:
            continue
        for t in times:
            if gradient:
                fields = [resolvent.apply_gradient(g, t, ax).values for ax in range(grid.dim)]
            else:
                fields = [resolvent.apply(g, t).values]
            stack = np.stack(fields, axis=-1)
            for j in offsets:
                radius = np.linalg.norm(j) * grid.spacing
                diff = np.roll(stack, tuple(-j), axis=tuple(range(grid.dim))) - stack
                ratio = np.max(np.linalg.norm(diff, axis=-1)) / (radius ** delta * norm)
                worst = max(worst, float(ratio))
    lam = resolvent.lam
    if gradient:
        ceiling = np.sqrt(grid.dim) * komatsu_factor(grid.dim, delta) * gradient_gamma_ceiling(c_ceiling, alpha, delta, lam)
    else:
        ceiling = komatsu_factor(grid.dim, delta) * gamma_ceiling(c_ceiling, alpha, delta, lam)
    kind = "gradient-holder" if gradient else "holder"
    logger.debug(f"{kind} modulus lam={lam}: measured={worst:.4g} ceiling={ceiling:.4g}")
    return ModulusReport(lam=lam, delta=delta, kind=kind, measured=worst, ceiling=float(ceiling))


def fractional_modulus(
    resolvent: Resolvent,
    alpha: float,
    delta: float,
    ensemble: Sequence[SpaceTimeFunction],
    times: Sequence[float],
    c_ceiling: float,
    gradient: bool = False
) -> ModulusReport:
    """Measured sup | |d|^delta R g | / ||g|| against the Gamma-integral ceiling"""
    _check_holder_delta(alpha, delta, gradient)
    worst = 0.0
    for g in ensemble:
        norm = g.sup_norm()
        if norm == 0.0:
            continue
        for t in times:
            if gradient:
                sup = max(resolvent.apply_fractional(g, t, delta, axis=ax).sup_norm() for ax in range(resolvent.grid.dim))
            else:
                sup = resolvent.apply_fractional(g, t, delta).sup_norm()
            worst = max(worst, sup / norm)
    lam = resolvent.lam
    if gradient:
        ceiling = gradient_gamma_ceiling(c_ceiling, alpha, delta, lam)
    else:
        ceiling = gamma_ceiling(c_ceiling, alpha, delta, lam)
    kind = "gradient-fractional" if gradient else "fractional"
    return ModulusReport(lam=lam, delta=delta, kind=kind, measured=worst, ceiling=ceiling)

#### komatsu section #########################################################

def _komatsu_integral_1d(delta: float, a: float) -> float:
    """2 int_{w < -a/2} (|w+a|^{delta-1} - |w|^{delta-1}) dw"""
    f = lambda w: abs(w + a) ** (delta - 1.0) - abs(w) ** (delta - 1.0)
    pieces = [(-np.inf, -2.0 * a), (-2.0 * a, -a), (-a, -0.5 * a)]
    total = 0.0
    for lo, hi in pieces:
        value, err = integrate.quad(f, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-11)
        total += value
    return 2.0 * total


def _komatsu_integral_2d(delta: float, a: float) -> float:
    """2 int_H (|w+z|^{delta-2} - |w|^{delta-2}) dw in polar coordinates centred at w = -z"""
    z = np.array([a, 0.0])

    def radial(theta: float) -> float:
        e = np.array([np.cos(theta), np.sin(theta)])
        # rho^{delta-1} (1 - rho^{2-delta} |rho e - z|^{delta-2}), first factor taken as the weight
        inner = lambda rho: 1.0 - rho ** (2.0 - delta) * np.linalg.norm(rho * e - z) ** (delta - 2.0)
        upper = np.inf if e[0] <= 0 else a / (2.0 * e[0])
        head_hi = min(a, upper)
        head, _ = integrate.quad(inner, 0.0, head_hi, weight="alg", wvar=(delta - 1.0, 0.0), limit=200)
        if upper <= a:
            return head
        # rho = a / s maps [a, upper) onto (a/upper, 1]
        full = lambda s: (a / s) ** (delta - 1.0) * inner(a / s) * a / (s * s)
        tail, _ = integrate.quad(full, 0.0 if np.isinf(upper) else a / upper, 1.0, limit=200)
        return head + tail

    value, _ = integrate.quad(radial, 0.0, np.pi, points=[0.5 * np.pi], limit=200, epsrel=1e-9)
    return 2.0 * 2.0 * value


def komatsu_check(delta: float, d: int, z_list: Sequence[float]) -> KomatsuReport:
    """c6(z) = int |(|w+z|^{delta-d} - |w|^{delta-d})| dw / |z|^delta for each |z| in z_list"""
    if d not in (1, 2):
        raise DomainError(f"Komatsu quadrature supports d in {{1, 2}}, got {d}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    integrals, c6 = [], []
    for z in z_list:
        a = abs(float(z))
        if a == 0.0:
            raise DomainError("z must be non-zero")
        try:
            value = _komatsu_integral_1d(delta, a) if d == 1 else _komatsu_integral_2d(delta, a)
        except Exception as e:
            raise QuadratureError(f"Failed to integrate the Komatsu identity at |z|={a}: {str(e)}")
        integrals.append(value)
        c6.append(value / a ** delta)
    c6_arr = np.asarray(c6)
    return KomatsuReport(
        dim=d,
        delta=delta,
        z_values=[abs(float(z)) for z in z_list],
        integrals=integrals,
        c6_values=c6,
        spread=float((c6_arr.max() - c6_arr.min()) / c6_arr.mean()),
        closed_form=komatsu_c6_closed_form(delta) if d == 1 else None,
    )

#### L^q L^p section #########################################################

def conjugate(p: float) -> float:
    return np.inf if p == 1.0 else (1.0 if np.isinf(p) else p / (p - 1.0))


def lq_lp_norm(g: SpaceTimeFunction, p: float, q: float, horizon: float, samples: int = 201) -> float:
    """(int_0^T ||g(t)||_{L^p}^q dt)^{1/q} by the trapezoid rule in t"""
    ts = np.linspace(0.0, horizon, samples) if g.times is None else g.times[g.times <= horizon]
    frames = g.at_many(ts)
    axes = tuple(range(1, frames.ndim))
    spatial = (g.grid.cell_volume * np.sum(np.abs(frames) ** p, axis=axes)) ** (1.0 / p)
    return float(integrate.trapezoid(spatial ** q, ts) ** (1.0 / q))


def lq_lp_exponent(d: int, alpha: float, delta: float, p: float, q: float) -> float:
    """s = q*(d/p* - delta - d)/alpha; the time integral is finite iff s > -1"""
    p_star, q_star = conjugate(p), conjugate(q)
    return q_star * (d / p_star - delta - d) / alpha


def check_lq_lp(d: int, alpha: float, delta: float, p: float, q: float) -> None:
    if not d / p + alpha / q < alpha - delta:
        raise InadmissibleExponentError(
            f"need d/p + alpha/q < alpha - delta, got {d / p + alpha / q:.4g} >= {alpha - delta:.4g} (p={p}, q={q})"
        )


def lq_lp_constant(c4_pstar: float, d: int, alpha: float, delta: float, p: float, q: float, lam: float) -> float:
    """
    N_lam = c4(delta, p*) (int_0^inf e^{-q* lam u} u^s du)^{1/q*}

    Args:
        c4_pstar: || |d|^delta p~_1 ||_{L^{p*}} (delta=0 gives the plain density norm)
        d, alpha: dimension and stability index
        delta: fractional order (0 for c_lambda)
        p, q: integrability exponents of g in space and time
        lam: resolvent parameter
    """
    check_lq_lp(d, alpha, delta, p, q)
    s = lq_lp_exponent(d, alpha, delta, p, q)
    q_star = conjugate(q)
    integral = gamma_fn(s + 1.0) / (q_star * lam) ** (s + 1.0)
    return float(c4_pstar * integral ** (1.0 / q_star))
