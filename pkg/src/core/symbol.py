from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from ..models.levy import LevyTriple, StablePart
from ..utils.console import get_logger
from ..utils.errors import DomainError, QuadratureError

logger = get_logger(__name__)

Exponent = Callable[[np.ndarray], np.ndarray]

# c1 = int_1^inf r^-2 sin r dr + int_0^1 r^-2 (sin r - r) dr
ALPHA_ONE_CONSTANT = 1.0 - np.euler_gamma
QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-12

#### one-ray integral section ################################################

def ray_integral(alpha: float, s: np.ndarray) -> np.ndarray:
    """
    Closed form of h_alpha(s) = int_0^inf (e^{isr} - 1 - isr 1_{r<=1}) r^{-1-alpha} dr

    Args:
        alpha: stability index in (0, 2)
        s: real argument, any shape
    """
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    s = np.asarray(s, dtype=float)
    abs_s = np.abs(s)
    if alpha == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = np.where(abs_s > 0, np.log(np.where(abs_s > 0, abs_s, 1.0)), 0.0)
        return -0.5 * np.pi * abs_s + 1j * s * (ALPHA_ONE_CONSTANT - log_term)
    # principal branch: (-is)^alpha = |s|^alpha exp(-i pi alpha sgn(s) / 2)
    power = abs_s ** alpha * np.exp(-0.5j * np.pi * alpha * np.sign(s))
    return gamma_fn(-alpha) * power + 1j * s / (alpha - 1.0)


def _sine_remainder(a: float, r: float) -> float:
    """(sin(ar) - ar) / r^3 without cancellation near r = 0"""
    x = a * r
    if x < 1e-2:
        return -a ** 3 / 6.0 * (1.0 - x * x / 20.0 + x ** 4 / 840.0)
    return (np.sin(x) - x) / r ** 3


def ray_integral_quad(alpha: float, s: float) -> complex:
    """Adaptive-quadrature evaluation of the same one-ray integral, accurate to about 1e-12"""
    if s == 0.0:
        return 0j
    sign, a = np.sign(s), abs(s)
    near = dict(weight="alg", limit=400, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)
    # QAWF on [1, inf) only honours epsabs
    far = dict(limlst=500, limit=400, epsabs=QUAD_EPSABS)
    try:
        # [0, 1]: cos(ar) - 1 = -(a r)^2 / 2 * sinc^2, sin(ar) - ar kept as a smooth quotient
        re_near, _ = integrate.quad(
            lambda r: -0.5 * a * a * np.sinc(a * r / (2.0 * np.pi)) ** 2,
            0.0, 1.0, wvar=(1.0 - alpha, 0.0), **near,
        )
        im_near, _ = integrate.quad(lambda r: _sine_remainder(a, r), 0.0, 1.0, wvar=(2.0 - alpha, 0.0), **near)
        tail = lambda r: r ** (-1.0 - alpha)
        re_far, _ = integrate.quad(tail, 1.0, np.inf, weight="cos", wvar=a, **far)
        im_far, _ = integrate.quad(tail, 1.0, np.inf, weight="sin", wvar=a, **far)
    except Exception as e:
        raise QuadratureError(f"Failed to integrate the one-ray integral: {str(e)}")
    real = re_near + re_far - 1.0 / alpha
    imag = sign * (im_near + im_far)
    return complex(real, imag)


def alpha_one_constant_quad() -> float:
    """c1 from its defining convergent integrals"""
    near, _ = integrate.quad(lambda r: (np.sin(r) - r) / r ** 2 if r > 0 else 0.0, 0.0, 1.0,
                             epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)
    far, _ = integrate.quad(lambda r: r ** -2.0, 1.0, np.inf, weight="sin", wvar=1.0, epsabs=QUAD_EPSABS, limlst=500)
    return near + far

#### exponents section #######################################################

def as_points(u: np.ndarray, d: int) -> np.ndarray:
    """Coerce u to shape (..., d); in d=1 bare scalars and 1-d arrays are batches of points"""
    u = np.asarray(u, dtype=float)
    if d == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        return u[..., None]
    if u.shape[-1] != d:
        raise DomainError(f"frequency has dimension {u.shape[-1]}, expected {d}")
    return u


def stable_exponent(stable: StablePart, u: np.ndarray) -> np.ndarray:
    """psi~(u) = -sum_j w_j h_alpha(u . xi_j) for u of shape (..., d)"""
    u = as_points(u, stable.dim)
    proj = u @ stable.mu.directions.T
    return -(ray_integral(stable.alpha, proj) * stable.mu.weights).sum(axis=-1)


def gamma_vector(stable: StablePart) -> np.ndarray:
    return stable.gamma


def gamma_vector_quad(stable: StablePart) -> np.ndarray:
    """
    Centering vector from the radial integrals of each ray

    For alpha < 1 and alpha > 1 the radial factor is integrated numerically. At alpha = 1 the
    centering is the first moment of mu by definition, so the radial factor is exactly 1.
    """
    alpha = stable.alpha
    if alpha < 1.0:
        radial = -integrate.quad(lambda r: r ** -alpha, 0.0, 1.0, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)[0]
    elif alpha > 1.0:
        radial = integrate.quad(lambda r: r ** -alpha, 1.0, np.inf, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)[0]
    else:
        radial = 1.0
    return radial * (stable.mu.weights[:, None] * stable.mu.directions).sum(axis=0)


def full_exponent(triple: LevyTriple, u: np.ndarray) -> np.ndarray:
    """psi(u) = u.a.u - i b.u + psi~(u) + sum_k rate_k (1 - e^{iu.y_k} + 1_{|y_k|<=1} i u.y_k)"""
    u = as_points(u, triple.dim)
    a, b = triple.diffusion, triple.drift
    value = np.einsum("...i,ij,...j->...", u, a, u) - 1j * (u @ b) + stable_exponent(triple.stable, u)
    if triple.extra:
        ys = triple.extra_jumps
        small = (np.linalg.norm(ys, axis=1) <= 1.0).astype(float)
        uy = u @ ys.T
        value = value + ((1.0 - np.exp(1j * uy) + 1j * uy * small) * triple.extra_rates).sum(axis=-1)
    return value


def stable_symbol(stable: StablePart) -> Exponent:
    return lambda u: stable_exponent(stable, u)


def triple_symbol(triple: LevyTriple) -> Exponent:
    return lambda u: full_exponent(triple, u)

#### structure checks section ################################################

def homogeneity_residual(stable: StablePart, rho: float, u: np.ndarray) -> float:
    """|LHS - RHS| of the scaling identity for psi~ under u -> rho u"""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    gamma = stable.gamma
    lhs = stable_exponent(stable, rho * u)
    base = stable_exponent(stable, u)
    if stable.alpha == 1.0:
        rhs = rho * base + 1j * rho * np.log(rho) * float(u @ gamma)
    else:
        lhs = lhs + 1j * rho * float(u @ gamma)
        rhs = rho ** stable.alpha * (base + 1j * float(u @ gamma))
    return float(np.max(np.abs(lhs - rhs)))


def unit_sphere_samples(d: int, n: int = 256) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    # fibonacci sphere
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (1.0 + 5 ** 0.5) * k
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def ellipticity_constant(stable: StablePart, n_dirs: int = 256) -> float:
    """c2 = min over |u|=1 of Re psi~(u); Re psi~ is alpha-homogeneous"""
    units = unit_sphere_samples(stable.dim, n_dirs)
    c2 = float(np.min(stable_exponent(stable, units).real))
    logger.debug(f"ellipticity constant c2={c2:.6g} over {len(units)} directions")
    return c2


def conjugate_symmetry_residual(triple: LevyTriple, u: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.max(np.abs(full_exponent(triple, -u) - np.conj(full_exponent(triple, u)))))
