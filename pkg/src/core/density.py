from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from ..models.levy import StablePart
from ..models.results import DecayFit, DensityDiagnostics
from ..utils.config import parallel_map
from ..utils.console import get_logger
from ..utils.errors import DomainError, ExtentError, QuadratureError, ResolutionError
from .lattice import LatticeField, LatticeGrid
from .symbol import Exponent, stable_symbol, unit_sphere_samples

logger = get_logger(__name__)

TAIL_TOL = 1e-12
EXTENT_TOL = 1e-2
MASS_TOL = 1e-6
RINGING_TOL = 1e-9
MAX_SUGGESTED_POINTS = 2 ** 22

Multiplier = Callable[[np.ndarray], np.ndarray]

#### lattice inversion section ###############################################

class DensityInverter:
    """Fourier inversion p(x) = (2 pi)^-d int e^{-iu.x} m(u) e^{-t psi(u)} du on a periodic lattice"""

    def __init__(
        self,
        tail_tol: float = TAIL_TOL,
        extent_tol: float = EXTENT_TOL,
        mass_tol: float = MASS_TOL
    ):
        self.tail_tol = tail_tol
        self.extent_tol = extent_tol
        self.mass_tol = mass_tol

    def invert(
        self,
        exponent: Exponent,
        t: float,
        grid: LatticeGrid,
        multiplier: Optional[Multiplier] = None,
        odd: bool = False
    ) -> Tuple[LatticeField, DensityDiagnostics]:
        """
        Invert exp(-t psi), optionally times a Fourier multiplier

        Args:
            exponent: vectorised psi on frequency points (..., d)
            t: time, > 0
            grid: lattice; the result is the 2L-periodised field
            multiplier: m(u) applied before inversion (None for the density itself)
            odd: zero the Nyquist shell, required for odd multipliers
        """
        if not t > 0:
            raise DomainError(f"t must be positive, got {t}")
        freqs = grid.frequencies()
        psi = exponent(freqs)
        if np.min(psi.real) < -1e-12 * (1.0 + np.max(np.abs(psi))):
            raise DomainError("exponent has negative real part; not a characteristic exponent")
        spectrum = np.exp(-t * psi)
        if multiplier is not None:
            spectrum = spectrum * multiplier(freqs)

        shell = grid.nyquist_mask()
        tail = float(np.max(np.abs(spectrum[shell])))
        if tail >= self.tail_tol:
            suggested = self.suggest_points(exponent, t, grid)
            raise ResolutionError(
                f"lattice does not resolve decay at t={t}: |integrand| = {tail:.3e} at |u|max={grid.max_frequency:.4g} "
                f"(need < {self.tail_tol:.0e}); try N={suggested}",
                suggested_points=suggested,
            )
        if odd:
            spectrum = np.where(shell, 0.0, spectrum)

        values = self._transform(spectrum, grid)
        field = LatticeField(grid=grid, values=values)
        diagnostics = self._diagnose(field, t, tail, check_extent=multiplier is None)
        return field, diagnostics

    def _transform(self, spectrum: np.ndarray, grid: LatticeGrid) -> np.ndarray:
        """(1/2L)^d fftn(spectrum * (-1)^m), real part"""
        scaled = spectrum * grid.alternating_sign()
        return np.real(np.fft.fftn(scaled)) / (2.0 * grid.half_extent) ** grid.dim

    def _diagnose(self, field: LatticeField, t: float, tail: float, check_extent: bool) -> DensityDiagnostics:
        values = field.values
        peak = float(np.max(np.abs(values)))
        # x = -L is the node shared with +L under periodisation
        boundary = np.zeros(values.shape, dtype=bool)
        for ax in range(field.grid.dim):
            index = [slice(None)] * field.grid.dim
            index[ax] = 0
            boundary[tuple(index)] = True
        extent_ratio = float(np.max(np.abs(values[boundary])) / peak) if peak > 0 else 0.0
        min_value = float(values.min())
        diagnostics = DensityDiagnostics(
            t=t,
            points=field.grid.points,
            half_extent=field.grid.half_extent,
            mass=field.mass(),
            min_value=min_value,
            ringing=max(0.0, -min_value),
            tail_bound=tail,
            extent_ratio=extent_ratio,
        )
        if check_extent:
            if extent_ratio > self.extent_tol:
                raise ExtentError(
                    f"periodised tail too heavy at t={t}: p(+-L)/max p = {extent_ratio:.3e} "
                    f"> {self.extent_tol:.0e}; enlarge L={field.grid.half_extent}"
                )
            if abs(diagnostics.mass - 1.0) > self.mass_tol:
                logger.warning(f"density mass {diagnostics.mass:.10f} deviates from 1 by more than {self.mass_tol:.0e}")
            if diagnostics.ringing > RINGING_TOL:
                logger.warning(f"negative ringing {diagnostics.ringing:.3e} in density at t={t}")
        logger.debug(
            f"inverted t={t} N={field.grid.points} L={field.grid.half_extent}: "
            f"tail={tail:.2e} extent={extent_ratio:.2e} mass={diagnostics.mass:.12f}"
        )
        return diagnostics

    def suggest_points(self, exponent: Exponent, t: float, grid: LatticeGrid) -> int:
        """Smallest power-of-two N that resolves the decay of exp(-t psi) on the cube boundary"""
        directions = unit_sphere_samples(grid.dim, 64)
        directions = directions / np.max(np.abs(directions), axis=-1, keepdims=True)
        points = grid.points
        while points < MAX_SUGGESTED_POINTS:
            points *= 2
            u_max = np.pi * points / (2.0 * grid.half_extent)
            if np.max(np.abs(np.exp(-t * exponent(u_max * directions)))) < self.tail_tol:
                return points
        return MAX_SUGGESTED_POINTS


_default_inverter = DensityInverter()


def invert_density(exponent: Exponent, t: float, grid: LatticeGrid) -> LatticeField:
    """Density of the law with characteristic exponent psi at time t"""
    field, _ = _default_inverter.invert(exponent, t, grid)
    return field


def invert_with_diagnostics(exponent: Exponent, t: float, grid: LatticeGrid) -> Tuple[LatticeField, DensityDiagnostics]:
    return _default_inverter.invert(exponent, t, grid)

#### multipliers section #####################################################

def fractional_multiplier(delta: float) -> Multiplier:
    """-|u|^delta, the symbol of |d|^delta under the inversion convention"""
    return lambda u: -np.linalg.norm(u, axis=-1) ** delta


def gradient_multiplier(axis: int) -> Multiplier:
    """-i u_axis, the symbol of d/dx_axis under the inversion convention"""
    return lambda u: -1j * u[..., axis]


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta < 1.0:
        raise DomainError(f"fractional order must lie in [0, 1), got {delta}")


def fractional_apply(exponent: Exponent, delta: float, t: float, grid: LatticeGrid) -> LatticeField:
    """|d|^delta p_t; delta=0 returns p_t itself (the multiplier -|u|^0 would flip its sign)"""
    _check_delta(delta)
    if delta == 0.0:
        return invert_density(exponent, t, grid)
    field, _ = _default_inverter.invert(exponent, t, grid, multiplier=fractional_multiplier(delta))
    return field


def gradient_apply(exponent: Exponent, axis: int, t: float, grid: LatticeGrid) -> LatticeField:
    if not 0 <= axis < grid.dim:
        raise DomainError(f"axis {axis} outside 0..{grid.dim - 1}")
    field, _ = _default_inverter.invert(exponent, t, grid, multiplier=gradient_multiplier(axis), odd=True)
    return field


def fractional_gradient_apply(exponent: Exponent, delta: float, axis: int, t: float, grid: LatticeGrid) -> LatticeField:
    """|d|^delta d_axis p_t"""
    _check_delta(delta)
    if delta == 0.0:
        return gradient_apply(exponent, axis, t, grid)
    frac, grad = fractional_multiplier(delta), gradient_multiplier(axis)
    field, _ = _default_inverter.invert(exponent, t, grid, multiplier=lambda u: frac(u) * grad(u), odd=True)
    return field

#### norms section ###########################################################

def lr_norm(field: LatticeField, r: float) -> float:
    """Riemann-sum L^r norm (h^d sum |v|^r)^(1/r); r=inf gives the sup norm"""
    if not r >= 1.0:
        raise DomainError(f"L^r norm needs r >= 1, got {r}")
    magnitude = np.abs(field.values)
    if np.isinf(r):
        return float(magnitude.max())
    return float((field.grid.cell_volume * np.sum(magnitude ** r)) ** (1.0 / r))


def expected_decay_slope(d: int, alpha: float, delta: float, r: float, gradient: bool = False) -> float:
    return (d / r - delta - d - (1.0 if gradient else 0.0)) / alpha


def _self_similar_grid(grid: LatticeGrid, t: float, alpha: float) -> LatticeGrid:
    return grid.rescaled(t ** (1.0 / alpha))


def _operator_norm(exponent: Exponent, delta: float, r: float, t: float,
                   grid: LatticeGrid, axis: Optional[int]) -> float:
    if axis is None:
        field = fractional_apply(exponent, delta, t, grid)
    else:
        field = fractional_gradient_apply(exponent, delta, axis, t, grid)
    return lr_norm(field, r)


def measure_c4(stable: StablePart, delta: float, r: float, grid: LatticeGrid) -> float:
    """c4 = || |d|^delta p~_1 ||_{L^r}"""
    return _operator_norm(stable_symbol(stable), delta, r, 1.0, grid, None)


def measure_c5(stable: StablePart, delta: float, r: float, grid: LatticeGrid, axis: int = 0) -> float:
    """c5 = || |d|^delta d_axis p~_1 ||_{L^r}"""
    return _operator_norm(stable_symbol(stable), delta, r, 1.0, grid, axis)


def decay_exponent_fit(
    stable: StablePart,
    delta: float,
    r: float,
    t_list: List[float],
    grid: LatticeGrid,
    exponent: Optional[Exponent] = None,
    axis: Optional[int] = None
) -> DecayFit:
    """
    Least-squares slope of log || |d|^delta p_t ||_{L^r} against log t

    Args:
        stable: stable part fixing alpha and the self-similar lattice extent L t^{1/alpha}
        delta: fractional order in [0, 1)
        r: norm index >= 1
        t_list: at least four log-spaced times
        grid: lattice used at t = 1
        exponent: exponent to invert; defaults to the pure stable one
        axis: fit the gradient version along this axis
    """
    if len(t_list) < 4:
        raise DomainError(f"decay fit needs at least 4 times, got {len(t_list)}")
    exponent = exponent or stable_symbol(stable)
    ts = np.asarray(sorted(t_list), dtype=float)
    norms = parallel_map(
        lambda t: _operator_norm(exponent, delta, r, t, _self_similar_grid(grid, t, stable.alpha), axis),
        ts,
    )
    slope, intercept = np.polyfit(np.log(ts), np.log(norms), 1)
    fit = DecayFit(
        slope=float(slope),
        expected_slope=expected_decay_slope(stable.dim, stable.alpha, delta, r, gradient=axis is not None),
        intercept=float(intercept),
        constant=float(np.exp(intercept)),
        t_list=ts.tolist(),
        norms=[float(n) for n in norms],
    )
    logger.debug(f"decay fit slope={fit.slope:.6f} expected={fit.expected_slope:.6f}")
    return fit

#### structure checks section ################################################

def scaling_check(stable: StablePart, t: float, grid: LatticeGrid, order: int = 5) -> float:
    """sup |p~_t(x) - t^{-d/alpha} p~_1(t^{-1/alpha} x + shift)| on the lattice"""
    alpha, d = stable.alpha, stable.dim
    exponent = stable_symbol(stable)
    p_t = invert_density(exponent, t, grid)
    # p~_1 on the image lattice keeps both sides under the same periodisation
    image_grid = grid.rescaled(t ** (-1.0 / alpha))
    p_1 = invert_density(exponent, 1.0, image_grid)
    x = grid.coordinates()
    gamma = stable.gamma
    if alpha == 1.0:
        y = x / t - gamma * np.log(t)
    else:
        y = t ** (-1.0 / alpha) * x + (1.0 - t ** (1.0 - 1.0 / alpha)) * gamma
    rhs = t ** (-d / alpha) * p_1.interpolate(y, order=order)
    return float(np.max(np.abs(p_t.values - rhs)))


def lattice_convolution(f: LatticeField, g: LatticeField) -> LatticeField:
    """Periodic convolution (f * g)(x) on the lattice with the origin at node N/2"""
    grid = f.grid
    conv = np.real(np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(g.values))) * grid.cell_volume
    conv = np.roll(conv, grid.points // 2, axis=tuple(range(grid.dim)))
    return LatticeField(grid=grid, values=conv)


def chapman_kolmogorov_residual(exponent: Exponent, t: float, s: float, grid: LatticeGrid) -> float:
    p_ts = invert_density(exponent, t + s, grid)
    conv = lattice_convolution(invert_density(exponent, t, grid), invert_density(exponent, s, grid))
    return float(np.max(np.abs(p_ts.values - conv.values)))

#### closed forms section ####################################################

def periodized_cauchy(x: np.ndarray, scale: float, half_extent: float) -> np.ndarray:
    """sum_k (1/pi) a / (a^2 + (x + 2Lk)^2) in closed form"""
    c = np.pi * scale / half_extent
    return np.sinh(c) / (2.0 * half_extent * (np.cosh(c) - np.cos(np.pi * np.asarray(x) / half_extent)))


def fractional_constant(d: int, delta: float) -> float:
    """c3 with |d|^delta f(x) = c3 int [f(x+y) - f(x)] |y|^{-d-delta} dy"""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {delta}")
    return float(2.0 ** delta * gamma_fn((d + delta) / 2.0) / (np.pi ** (d / 2.0) * abs(gamma_fn(-delta / 2.0))))


def fractional_kernel_apply(f: Callable[[float], float], delta: float, x: float) -> float:
    """d=1 integral form of |d|^delta f at x, by singularity-split quadrature"""
    c3 = fractional_constant(1, delta)
    fx = f(x)

    def second_difference(y: float) -> float:
        if y == 0.0:
            return 0.0
        return (f(x + y) + f(x - y) - 2.0 * fx) / (y * y)

    try:
        near, _ = integrate.quad(second_difference, 0.0, 1.0, weight="alg", wvar=(1.0 - delta, 0.0), limit=200)
        far, _ = integrate.quad(lambda y: (f(x + y) + f(x - y)) * y ** (-1.0 - delta), 1.0, np.inf, limit=400)
    except Exception as e:
        raise QuadratureError(f"Failed to integrate the fractional kernel: {str(e)}")
    return float(c3 * (near + far - 2.0 * fx / delta))
