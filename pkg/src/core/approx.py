from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate
from scipy.special import j0

from ..models.kernel import JumpKernelModel, Modulator, Mollifier, TruncationCutoff, sphere_area
from ..utils.console import get_logger
from ..utils.errors import DomainError, QuadratureError
from .lattice import LatticeGrid
from .perturb import KernelOperator

logger = get_logger(__name__)

#### bump section ############################################################

def _bump_profile(r: float) -> float:
    return float(np.exp(-1.0 / (1.0 - r * r))) if r < 1.0 else 0.0


def _radial_quad(fn, what: str) -> float:
    try:
        value, _ = integrate.quad(fn, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    except Exception as e:
        raise QuadratureError(f"Failed to integrate {what}: {str(e)}")
    return value


@lru_cache(maxsize=None)
def bump_normalizer(d: int) -> float:
    """1 / int_{|x|<1} e^{-1/(1-|x|^2)} dx"""
    mass = sphere_area(d) * _radial_quad(lambda r: _bump_profile(r) * r ** (d - 1), "the bump mass")
    return 1.0 / mass


@lru_cache(maxsize=4096)
def _bump_transform_radial(rho: float, d: int) -> float:
    c = bump_normalizer(d)
    if rho == 0.0:
        return 1.0
    if d == 1:
        fn = lambda r: 2.0 * np.cos(rho * r) * _bump_profile(r)
    elif d == 2:
        fn = lambda r: 2.0 * np.pi * j0(rho * r) * _bump_profile(r) * r
    else:
        fn = lambda r: 4.0 * np.pi * np.sinc(rho * r / np.pi) * _bump_profile(r) * r * r
    return c * _radial_quad(fn, "the bump transform")


def bump_transform(xi: np.ndarray, d: int) -> np.ndarray:
    """phi^(xi) = int phi(x) e^{-i xi.x} dx, real and radial; xi of shape (..., d)"""
    xi = np.asarray(xi, dtype=float)
    if d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    rho = np.linalg.norm(xi, axis=-1)
    unique, inverse = np.unique(np.round(rho, 12), return_inverse=True)
    values = np.array([_bump_transform_radial(float(v), d) for v in unique])
    return values[inverse].reshape(rho.shape)


def bump_first_moment(d: int, n: int = 1) -> float:
    """int |y| phi_n(y) dy = n^{-1} int |y| phi(y) dy"""
    radial = _radial_quad(lambda r: _bump_profile(r) * r ** d, "the bump first moment")
    return bump_normalizer(d) * sphere_area(d) * radial / n


def mollifier_mass(d: int, n: int) -> float:
    """int phi_n by radial quadrature over its support |x| < 1/n"""
    support = Mollifier(dim=d, scale=n).support_radius
    try:
        radial, _ = integrate.quad(lambda r: _bump_profile(n * r) * r ** (d - 1), 0.0, support, epsabs=1e-15, epsrel=1e-12)
    except Exception as e:
        raise QuadratureError(f"Failed to integrate the mollifier mass: {str(e)}")
    return bump_normalizer(d) * n ** d * sphere_area(d) * radial

#### mollification section ###################################################

def mollify_modulator(modulator: Modulator, mollifier: Mollifier) -> Modulator:
    """kappa * phi_n; each term sin(k.x + phase) picks up the factor phi^(k/n)"""
    factors = [float(bump_transform(mollifier.transform_argument(t.wavevector), mollifier.dim)) for t in modulator.terms]
    return modulator.scaled(factors)


def mollify_kernel(model: JumpKernelModel, n: int) -> JumpKernelModel:
    """M_n(t,x,B) = int M(t,x-z,B) phi_n(z) dz for the trigonometric family"""
    if n < 1:
        raise DomainError(f"mollifier scale must be a positive integer, got {n}")
    mollifier = Mollifier(dim=model.dim, scale=n)
    return model.model_copy(update={
        "kappa": mollify_modulator(model.kappa, mollifier),
        "eta": mollify_modulator(model.eta, mollifier),
        "mollified_by": mollifier,
    })


def modulator_mollify_gap(modulator: Modulator, n: int, grid: LatticeGrid, t: float = 0.0) -> Tuple[float, float]:
    """(sup |kappa_n - kappa| on the lattice, Lip(kappa) * first moment of phi_n)"""
    coords = grid.coordinates()
    smooth = mollify_modulator(modulator, Mollifier(dim=grid.dim, scale=n))
    gap = float(np.max(np.abs(smooth.value(t, coords) - modulator.value(t, coords))))
    return gap, modulator.lipschitz() * bump_first_moment(grid.dim, n)

#### test functions section ##################################################

class TrigTestFunction(BaseModel):
    """f(x) = sum_j a_j cos(k_j.x + phase_j) with closed-form C^k norms"""
    model_config = ConfigDict(frozen=True)

    amplitudes: List[float]
    wavevectors: List[List[float]]
    phases: List[float] = []

    def _phases(self) -> List[float]:
        return self.phases or [0.0] * len(self.amplitudes)

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for a, k, phase in zip(self.amplitudes, self.wavevectors, self._phases()):
            out = out + a * np.cos(x @ np.asarray(k) + phase)
        return out

    def c_norm(self, order: int) -> float:
        """sum_{m<=order} sup |D^m f|, bounded termwise by |a_j| |k_j|^m"""
        total = 0.0
        for a, k in zip(self.amplitudes, self.wavevectors):
            kn = float(np.linalg.norm(k))
            total += abs(a) * sum(kn ** m for m in range(order + 1))
        return total

    @classmethod
    def cosine(cls, frequency: float = 1.0, d: int = 1) -> "TrigTestFunction":
        return cls(amplitudes=[1.0], wavevectors=[[frequency] + [0.0] * (d - 1)])


def _lattice_smooth(values: np.ndarray, grid: LatticeGrid, n: int) -> np.ndarray:
    """Lattice convolution with phi_n as the multiplier phi^(k/n)"""
    axes = tuple(range(grid.dim))
    multiplier = bump_transform(grid.frequencies() / n, grid.dim)
    return np.real(np.fft.ifftn(multiplier * np.fft.fftn(values, axes=axes), axes=axes))


def mollify_error(
    f: TrigTestFunction,
    model: JumpKernelModel,
    alpha: float,
    n: int,
    grid: LatticeGrid,
    t: float = 0.0
) -> Tuple[float, float]:
    """
    (measured sup |K_{n,t} f - (K_t f) * phi_n|, certified bound)

    Args:
        f: trigonometric test function resolved by the lattice
        model: unmollified kernel
        alpha: stability index (picks the C^2 or C^3 form of the bound)
        n: mollifier scale
        grid: lattice; periodic for f and the modulators
        t: time
    """
    values = f.values(grid.coordinates())
    raw = KernelOperator(model, alpha, grid).apply(values, t)
    smoothed = KernelOperator(mollify_kernel(model, n), alpha, grid).apply(values, t)
    measured = float(np.max(np.abs(smoothed - _lattice_smooth(raw, grid, n))))
    return measured, mollify_bound(f, model, alpha, n)


def mollify_bound(f: TrigTestFunction, model: JumpKernelModel, alpha: float, n: int) -> float:
    """4 n^{-1} ||f||_{C^3} B_M, or 2 n^{-1} ||f||_{C^2} B_M when alpha <= 1"""
    if alpha <= 1.0:
        return 2.0 / n * f.c_norm(2) * model.beta_moment_bound()
    return 4.0 / n * f.c_norm(3) * model.beta_moment_bound()


def mollify_sweep(f: TrigTestFunction, model: JumpKernelModel, alpha: float, n_list: Sequence[int],
                  grid: LatticeGrid) -> Tuple[List[Dict[str, float]], float]:
    """Rows (n, measured_sup, bound) and the log-log slope of measured against n"""
    rows = []
    for n in n_list:
        measured, bound = mollify_error(f, model, alpha, n, grid)
        rows.append({"n": n, "measured_sup": measured, "bound": bound})
    slope = _loglog_slope([r["n"] for r in rows], [r["measured_sup"] for r in rows])
    logger.debug(f"mollification sweep over n={list(n_list)}: slope {slope:.3f}")
    return rows, slope


def _loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= 0):
        return float("-inf")
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(ys), 1)[0])

#### truncation section ######################################################

def truncate_kernel(model: JumpKernelModel, delta_cut: float) -> JumpKernelModel:
    """M^delta = chi_delta M"""
    return model.model_copy(update={"cutoff": TruncationCutoff(delta_cut=delta_cut)})


def _radial_mass(beta_prime: float, cutoff: TruncationCutoff, power: float = 0.0) -> float:
    """int_{delta/2}^1 chi(r) r^{power-1-beta'} dr"""
    try:
        value, _ = integrate.quad(
            lambda r: float(cutoff.weight(r)) * r ** (power - 1.0 - beta_prime),
            0.5 * cutoff.delta_cut, 1.0, points=[cutoff.delta_cut], epsabs=1e-13, epsrel=1e-11, limit=200,
        )
    except Exception as e:
        raise QuadratureError(f"Failed to integrate the truncated radial mass: {str(e)}")
    return value


def truncated_mass_bound(model: JumpKernelModel) -> float:
    """Lambda_max >= sup Lambda(t,x), the thinning envelope"""
    if model.cutoff is None:
        raise DomainError("kernel has no cutoff; its total mass is infinite")
    bp, half = model.small.beta_prime, 0.5 * model.cutoff.delta_cut
    radial = np.log(1.0 / half) if bp == 0.0 else (half ** -bp - 1.0) / bp
    small = model.kappa.sup_bound() * model.small.angular_mass(model.dim) * radial
    big = model.eta.sup_bound() * float(model.big_weights.sum()) if model.big else 0.0
    return float(small + big)


def truncated_mass(model: JumpKernelModel) -> Tuple[float, float]:
    """Exact (small, big) masses per unit kappa and eta"""
    if model.cutoff is None:
        raise DomainError("kernel has no cutoff; its total mass is infinite")
    small = model.small.angular_mass(model.dim) * _radial_mass(model.small.beta_prime, model.cutoff)
    big = 0.0
    for y, w in zip(model.big_jumps, model.big_weights):
        big += w * float(model.cutoff.weight(np.linalg.norm(y)))
    return float(small), float(big)


class RadialTable(BaseModel):
    """Inverse CDF of chi(r) r^{-1-beta'} on [delta/2, 1]"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    radii: np.ndarray
    cdf: np.ndarray

    @classmethod
    def build(cls, beta_prime: float, cutoff: TruncationCutoff, size: int = 4097) -> "RadialTable":
        # log-spaced so the r^{-1-beta'} mass near delta/2 is resolved
        radii = np.geomspace(0.5 * cutoff.delta_cut, 1.0, size)
        density = cutoff.weight(radii) * radii ** (-1.0 - beta_prime)
        cdf = np.concatenate([[0.0], integrate.cumulative_trapezoid(density, radii)])
        if cdf[-1] <= 0:
            raise QuadratureError("truncated radial law has zero mass")
        return cls(radii=radii, cdf=cdf / cdf[-1])

    def sample(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.cdf, self.radii)


def truncation_error(f: TrigTestFunction, model: JumpKernelModel, alpha: float, delta_cut: float,
                     grid: LatticeGrid, t: float = 0.0) -> Tuple[float, float]:
    """(measured sup |K^delta_t f - K_t f|, delta^{alpha-beta} ||f||_{C^2} B_M)"""
    values = f.values(grid.coordinates())
    full = KernelOperator(model, alpha, grid).apply(values, t)
    cut = KernelOperator(truncate_kernel(model, delta_cut), alpha, grid).apply(values, t)
    measured = float(np.max(np.abs(cut - full)))
    bound = delta_cut ** (alpha - model.beta) * f.c_norm(2) * model.beta_moment_bound()
    return measured, bound


def truncation_sweep(f: TrigTestFunction, model: JumpKernelModel, alpha: float, delta_cuts: Sequence[float],
                     grid: LatticeGrid) -> Tuple[List[Dict[str, float]], float]:
    """Rows (delta_cut, measured_sup, bound, mass_bound) and the fitted decay exponent"""
    rows = []
    for delta in delta_cuts:
        measured, bound = truncation_error(f, model, alpha, delta, grid)
        rows.append({
            "delta_cut": delta,
            "measured_sup": measured,
            "bound": bound,
            "mass_bound": truncated_mass_bound(truncate_kernel(model, delta)),
        })
    exponent = _loglog_slope([r["delta_cut"] for r in rows], [r["measured_sup"] for r in rows])
    return rows, exponent

#### compensator section #####################################################

def compensator_moment(model: JumpKernelModel, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """(small, big) vectors with c_delta(t,x) = kappa(t,x) small + eta(t,x) big"""
    d = model.dim
    zero = np.zeros(d)
    if alpha <= 1.0:
        return zero, zero
    if model.cutoff is None:
        raise DomainError("compensator needs a truncated kernel")
    small = model.small.angular_first_moment(d) * _radial_mass(model.small.beta_prime, model.cutoff, power=1.0)
    big = np.zeros(d)
    for y, w in zip(model.big_jumps, model.big_weights):
        if np.linalg.norm(y) <= 1.0:
            big = big + w * float(model.cutoff.weight(np.linalg.norm(y))) * y
    return np.asarray(small, dtype=float), big


def compensator(model: JumpKernelModel, alpha: float, t: float, x: np.ndarray) -> np.ndarray:
    """c_delta(t,x) = 1_{alpha>1} int_{|y|<=1} y M^delta(t,x,dy), x of shape (..., d)"""
    x = np.asarray(x, dtype=float)
    if model.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    small, big = compensator_moment(model, alpha)
    out = np.multiply.outer(model.kappa.value(t, x), small)
    if model.big:
        out = out + np.multiply.outer(model.eta.value(t, x), big)
    return out


def compensator_lipschitz(model: JumpKernelModel, alpha: float) -> float:
    small, big = compensator_moment(model, alpha)
    return float(model.kappa.lipschitz() * np.linalg.norm(small) + model.eta.lipschitz() * np.linalg.norm(big))

