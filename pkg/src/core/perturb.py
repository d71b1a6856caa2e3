from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn, j0, roots_jacobi

from ..models.kernel import JumpKernelModel, TruncationCutoff
from ..models.results import ConstantsLedger, Lambda0Result, NeumannReport
from ..utils.console import get_logger
from ..utils.errors import ContractionError, DomainError, GridExhaustedError, InadmissibleExponentError, QuadratureError
from .lattice import LatticeField, LatticeGrid, SpaceTimeFunction
from .resolvent import Propagator, Resolvent, conjugate, check_lq_lp, komatsu_factor, lq_lp_constant, lq_lp_exponent

logger = get_logger(__name__)

CONTRACTION_TARGET = 0.5
SYMBOL_CHUNK = 512
CUTOFF_PANELS = 32

#### radial quadrature section ###############################################

def radial_rule(
    beta_prime: float,
    s_max: float,
    cutoff: Optional[TruncationCutoff] = None,
    order: int = 16,
    refine: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights with sum_j w_j F(r_j) ~ int_0^1 F(r) chi(r) r^{-1-beta'} dr for F(r) = O(r)

    Args:
        beta_prime: small-jump index
        s_max: largest frequency |s| in e^{irs}; sets the panel width 4/s_max
        cutoff: optional truncation chi_delta
        order: Gauss points per panel
        refine: panel subdivision factor (2 for the error estimate)
    """
    width = min(1.0, 4.0 / max(s_max, 1e-12)) / refine
    nodes, weights = [], []
    x, w = np.polynomial.legendre.leggauss(order)

    def _panels(lo: float, hi: float, count: int) -> None:
        edges = np.linspace(lo, hi, count + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * w)

    if cutoff is None:
        # Gauss-Jacobi panel for the r^{-beta'} endpoint, F(r)/r smooth
        xj, wj = roots_jacobi(order, 0.0, -beta_prime)
        r = 0.5 * width * (1.0 + xj)
        nodes.append(r)
        weights.append(wj * (0.5 * width) ** (1.0 - beta_prime) / r * r ** (1.0 + beta_prime))
        start = width
    else:
        delta = cutoff.delta_cut
        _panels(0.5 * delta, delta, max(CUTOFF_PANELS * refine, int(np.ceil(0.5 * delta / width))))
        start = delta
    if start < 1.0:
        _panels(start, 1.0, int(np.ceil((1.0 - start) / width)))
    r = np.concatenate(nodes)
    wts = np.concatenate(weights) * r ** (-1.0 - beta_prime)
    if cutoff is not None:
        wts = wts * cutoff.weight(r)
    return r, wts


def _ray_profile(s: np.ndarray, r: np.ndarray, wts: np.ndarray, compensated: bool) -> np.ndarray:
    """sum_j w_j (e^{i r_j s} - 1 - c i r_j s) for each s"""
    out = np.empty(s.shape, dtype=complex)
    flat, res = s.ravel(), out.reshape(-1)
    for start in range(0, flat.size, SYMBOL_CHUNK):
        rs = np.multiply.outer(flat[start:start + SYMBOL_CHUNK], r)
        vals = np.expm1(1j * rs)
        if compensated:
            vals = vals - 1j * rs
        res[start:start + SYMBOL_CHUNK] = vals @ wts
    return out


def _isotropic_profile(kn: np.ndarray, r: np.ndarray, wts: np.ndarray, d: int) -> np.ndarray:
    """sum_j w_j int_{S^{d-1}} (e^{i r_j |k| theta_1} - 1) dtheta; odd compensation integrates to 0"""
    out = np.empty(kn.shape, dtype=float)
    flat, res = kn.ravel(), out.reshape(-1)
    for start in range(0, flat.size, SYMBOL_CHUNK):
        v = np.multiply.outer(flat[start:start + SYMBOL_CHUNK], r)
        if d == 2:
            angular = 2.0 * np.pi * (j0(v) - 1.0)
        else:
            angular = 4.0 * np.pi * (np.sinc(v / np.pi) - 1.0)
        res[start:start + SYMBOL_CHUNK] = angular @ wts
    return out

#### jump symbols section ####################################################

def _small_symbol_once(model: JumpKernelModel, alpha: float, freqs: np.ndarray, order: int, refine: int) -> np.ndarray:
    d = model.dim
    norms = np.linalg.norm(freqs, axis=-1)
    r, wts = radial_rule(model.small.beta_prime, float(norms.max()), model.cutoff, order, refine)
    if model.small.is_isotropic and d > 1:
        unique, inverse = np.unique(np.round(norms, 12), return_inverse=True)
        return _isotropic_profile(unique, r, wts, d)[inverse].reshape(norms.shape).astype(complex)
    if model.small.atoms is None:
        directions, weights = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    else:
        directions = np.array([a.direction for a in model.small.atoms], dtype=float)
        weights = np.array([a.weight for a in model.small.atoms], dtype=float)
    compensated = alpha > 1.0
    total = np.zeros(norms.shape, dtype=complex)
    for theta, omega in zip(directions, weights):
        s = freqs @ theta
        # the profile at -s is the conjugate of the profile at s
        unique, inverse = np.unique(np.round(np.abs(s), 12), return_inverse=True)
        prof = _ray_profile(unique, r, wts, compensated)[inverse].reshape(s.shape)
        total += omega * np.where(s < 0, np.conj(prof), prof)
    return total


def small_jump_symbol(model: JumpKernelModel, alpha: float, freqs: np.ndarray, order: int = 16, tol: float = 1e-8) -> np.ndarray:
    """Symbol of f -> int [f(x+y) - f(x) - 1_{alpha>1} y.grad f(x)] chi(y) |y|^{-d-beta'} dy (kappa = 1)"""
    coarse = _small_symbol_once(model, alpha, freqs, order, refine=1)
    fine = _small_symbol_once(model, alpha, freqs, order, refine=2)
    err = float(np.max(np.abs(fine - coarse)))
    scale = 1.0 + float(np.max(np.abs(fine)))
    if err > tol * scale:
        raise QuadratureError(f"small-jump symbol quadrature error {err:.3e} exceeds {tol:.0e} x {scale:.3g}")
    logger.debug(f"small-jump symbol: quadrature error estimate {err:.2e}")
    return fine


def big_jump_symbol(model: JumpKernelModel, alpha: float, freqs: np.ndarray) -> np.ndarray:
    """sum_j pi_j (e^{ik.y_j} - 1 - 1_{alpha>1} 1_{|y_j|<=1} i k.y_j) chi(y_j) (eta = 1)"""
    total = np.zeros(freqs.shape[:-1], dtype=complex)
    if not model.big:
        return total
    for y, weight in zip(model.big_jumps, model.big_weights):
        ky = freqs @ y
        norm = float(np.linalg.norm(y))
        term = np.expm1(1j * ky)
        if alpha > 1.0 and norm <= 1.0:
            term = term - 1j * ky
        factor = float(model.cutoff.weight(norm)) if model.cutoff is not None else 1.0
        total += weight * factor * term
    return total


def jump_symbol(model: JumpKernelModel, k: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """(small, big) Fourier symbols; K_t f = kappa(t,x) S f + eta(t,x) B f"""
    k = np.asarray(k, dtype=float)
    if model.dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    return small_jump_symbol(model, alpha, k), big_jump_symbol(model, alpha, k)

#### kernel operator section #################################################

class KernelOperator:
    """K_t on a lattice: state modulation applied after the spectral jump operators"""

    def __init__(self, model: JumpKernelModel, alpha: float, grid: LatticeGrid, order: int = 16, tol: float = 1e-8):
        model.check_alpha(alpha)
        if model.dim != grid.dim:
            raise DomainError(f"kernel dimension {model.dim} does not match lattice dimension {grid.dim}")
        self.model = model
        self.alpha = alpha
        self.grid = grid
        self.coords = grid.coordinates()
        freqs = grid.frequencies()
        self.small = small_jump_symbol(model, alpha, freqs, order, tol) if model.kappa.sup_bound() > 0 else None
        self.big = big_jump_symbol(model, alpha, freqs) if model.big and model.eta.sup_bound() > 0 else None
        self._axes = tuple(range(-grid.dim, 0))

    def components(self, values: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        """Unmodulated (S f, B f); None for a part the kernel does not carry"""
        if self.small is None and self.big is None:
            return None, None
        spectrum = np.fft.fftn(values, axes=self._axes)
        small = None if self.small is None else np.real(np.fft.ifftn(self.small * spectrum, axes=self._axes))
        big = None if self.big is None else np.real(np.fft.ifftn(self.big * spectrum, axes=self._axes))
        return small, big

    def apply(self, values: np.ndarray, t: float) -> np.ndarray:
        """K_t f for f given by lattice values"""
        out = np.zeros(values.shape)
        small, big = self.components(values)
        if small is not None:
            out += self.model.kappa.value(t, self.coords) * small
        if big is not None:
            out += self.model.eta.value(t, self.coords) * big
        return out

    def apply_field(self, field: LatticeField, t: float) -> LatticeField:
        return field.with_values(self.apply(field.values, t))

    @property
    def time_independent(self) -> bool:
        return self.model.kappa.time_amplitude == 0.0 and self.model.eta.time_amplitude == 0.0


def apply_K(f: LatticeField, model: JumpKernelModel, t: float, alpha: float) -> LatticeField:
    return KernelOperator(model, alpha, f.grid).apply_field(f, t)


def apply_KR(resolvent: Resolvent, g: SpaceTimeFunction, kernel: KernelOperator, t: float,
             lambda0: Optional[float] = None) -> LatticeField:
    """K_t applied to R_lam g(t, .)"""
    if lambda0 is not None and resolvent.lam < lambda0:
        logger.warning(f"lambda={resolvent.lam} below lambda0={lambda0}; contraction not certified")
    return kernel.apply_field(resolvent.apply(g, t), t)


def generator_apply(propagator: Propagator, kernel: KernelOperator, t: float, field: LatticeField) -> LatticeField:
    """(L + K_t) f"""
    return field.with_values(propagator.generator(field.values) + kernel.apply(field.values, t))

#### contraction constants section ###########################################

def case_two_delta(alpha: float, beta: float) -> float:
    """Midpoint of (max(0, beta-1), alpha-1), so beta < delta+1 < alpha"""
    return 0.5 * (max(0.0, beta - 1.0) + (alpha - 1.0))


def contraction_delta(alpha: float, beta: float) -> float:
    """Holder order used for k_lambda: beta if alpha <= 1, the case-two midpoint otherwise"""
    if not beta < alpha:
        raise DomainError(f"need beta < alpha, got beta={beta}, alpha={alpha}")
    return beta if alpha <= 1.0 else case_two_delta(alpha, beta)


def contraction_constant(modulus: float, lam: float, b_m: float, alpha: float, d: int = 1) -> float:
    """(C + 2/lam) B_M for alpha <= 1, (sqrt(d) C^ + 2/lam) B_M otherwise"""
    if alpha > 1.0:
        modulus = np.sqrt(d) * modulus
    return float((modulus + 2.0 / lam) * b_m)


def k_lambda(model: JumpKernelModel, lam: float, delta: float, alpha: float, ledger: ConstantsLedger,
             provenance: str = "measured") -> float:
    """k_lambda from the ledger modulus C_lambda (alpha <= 1) or C^_lambda (alpha > 1)"""
    name = "C_hat_lambda" if alpha > 1.0 else "C_lambda"
    modulus = ledger.get(name, provenance, lam=lam, delta=delta)
    k = contraction_constant(modulus, lam, model.beta_moment_bound(), alpha, model.dim)
    ledger.record("k_lambda", k, "derived-formula", note=f"from {name} [{provenance}]", lam=lam, delta=delta)
    return k


def find_lambda0(
    model: JumpKernelModel,
    alpha: float,
    modulus: Callable[[float], float],
    lambda_grid: Sequence[float],
    tol: float = 1e-3,
    provenance: str = "measured",
    ledger: Optional[ConstantsLedger] = None
) -> Lambda0Result:
    """
    Smallest lambda with k_lambda < 1/2: grid scan then bisection

    Args:
        model: jump kernel, supplies B_M
        alpha: stability index (selects the k_lambda branch)
        modulus: lam -> C_lambda or C^_lambda (measured or Gamma ceiling)
        lambda_grid: increasing search grid
        tol: bisection width
        provenance: tag written with lambda0
        ledger: optional ledger receiving lambda0
    """
    grid = sorted(float(v) for v in lambda_grid)
    b_m = model.beta_moment_bound()
    k_of = lambda lam: contraction_constant(modulus(lam), lam, b_m, alpha, model.dim)
    k_values: List[float] = []
    hit = None
    for i, lam in enumerate(grid):
        k_values.append(k_of(lam))
        if k_values[-1] < CONTRACTION_TARGET:
            hit = i
            break
    if hit is None:
        raise GridExhaustedError(
            f"k_lambda >= 1/2 on the whole grid up to lambda={grid[-1]:.4g} (last k={k_values[-1]:.4g}); enlarge the range"
        )
    monotone = all(b <= a * 1.05 + 1e-15 for a, b in zip(k_values, k_values[1:]))
    if not monotone:
        logger.warning(f"k_lambda not monotone on the grid: {k_values}")
    if hit == 0:
        lam0, k0 = grid[0], k_values[0]
    else:
        lo, hi = grid[hit - 1], grid[hit]
        k0 = k_values[-1]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            k_mid = k_of(mid)
            if k_mid < CONTRACTION_TARGET:
                hi, k0 = mid, k_mid
            else:
                lo = mid
        lam0 = hi
    if ledger is not None:
        ledger.record("lambda0", lam0, "derived-formula", note=f"moduli [{provenance}]")
    logger.debug(f"lambda0={lam0:.6g} with k={k0:.4g}")
    return Lambda0Result(
        lambda0=lam0, k_at_lambda0=k0, grid=grid[:len(k_values)], k_values=k_values,
        provenance="gamma-ceiling" if provenance == "gamma-ceiling" else "measured", monotone=monotone,
    )

#### neumann series section ##################################################

class NeumannSeries:
    """Partial sum G_lam g = sum_{i<=K} R_lam (K R_lam)^i g with its iterates"""

    def __init__(self, resolvent: Resolvent, iterates: List[SpaceTimeFunction], report: NeumannReport):
        self.resolvent = resolvent
        self.iterates = iterates
        self.report = report

    def value(self, t: float) -> LatticeField:
        total = sum(self.resolvent.apply(h, t).values for h in self.iterates)
        return LatticeField(grid=self.resolvent.grid, values=total)


class NeumannSolver:
    """Builds the Neumann series for L + K_t with a certified truncation bound"""

    def __init__(self, resolvent: Resolvent, kernel: KernelOperator, k_lambda: float, tol: float = 1e-8,
                 max_terms: int = 200):
        if not k_lambda < CONTRACTION_TARGET:
            raise ContractionError(f"k_lambda={k_lambda:.4g} >= 1/2 at lambda={resolvent.lam}; raise lambda above lambda0")
        self.resolvent = resolvent
        self.kernel = kernel
        self.k_lambda = k_lambda
        self.tol = tol
        self.max_terms = max_terms

    def terms_needed(self, g_norm: float) -> int:
        """Smallest K with lam^{-1} k^{K+1} / (1-k) ||g|| < tol"""
        k, lam = self.k_lambda, self.resolvent.lam
        if k == 0.0 or g_norm == 0.0:
            return 0
        K = 0
        while (k ** (K + 1)) / (1.0 - k) * g_norm / lam >= self.tol and K < self.max_terms:
            K += 1
        return K

    def run(self, g: SpaceTimeFunction, times: Optional[Sequence[float]] = None) -> NeumannSeries:
        """
        Iterate h_{i+1} = K R h_i on a time grid (single slab for time-frozen inputs)

        Args:
            g: source function
            times: sampling grid for the iterates; ignored when g and the kernel are time-independent
        """
        resolvent, kernel = self.resolvent, self.kernel
        lam = resolvent.lam
        g_norm = g.sup_norm()
        K = self.terms_needed(g_norm)
        frozen = g.time_frozen and kernel.time_independent
        if not frozen and times is None:
            raise DomainError("time-dependent Neumann series needs a time grid")
        iterates = [g]
        trace = []
        previous = g_norm
        sup_total = None
        for i in range(K + 1):
            h = iterates[-1]
            if frozen:
                term = resolvent.apply(h, 0.0).values
                term_norm = float(np.max(np.abs(term)))
                iterate_norm = h.sup_norm()
            else:
                term_frames = np.stack([resolvent.apply(h, t).values for t in times])
                term_norm = float(np.max(np.abs(term_frames)))
                iterate_norm = float(np.max(np.abs(h.at_many(np.asarray(times)))))
                term = term_frames
            sup_total = term if sup_total is None else sup_total + term
            trace.append({
                "i": i,
                "iterate_norm": iterate_norm,
                "term_norm": term_norm,
                "iterate_ratio": iterate_norm / previous if previous > 0 else 0.0,
            })
            previous = iterate_norm
            if i == K or iterate_norm == 0.0:
                break
            if frozen:
                nxt = LatticeField(grid=resolvent.grid, values=kernel.apply(term, 0.0))
                iterates.append(SpaceTimeFunction.frozen(nxt))
            else:
                frames = np.stack([kernel.apply(frame, t) for frame, t in zip(term_frames, times)])
                iterates.append(SpaceTimeFunction.from_samples(resolvent.grid, np.asarray(times), frames, extension=g.extension))
        bound = (self.k_lambda ** (K + 1)) / (1.0 - self.k_lambda) * g_norm / lam
        report = NeumannReport(
            lam=lam, k_lambda=self.k_lambda, terms=len(iterates), truncation_bound=bound,
            g_norm=g_norm, sup_norm=float(np.max(np.abs(sup_total))), trace=trace,
        )
        logger.debug(f"Neumann series: {report.terms} terms, bound {bound:.2e}, sup {report.sup_norm:.4g}")
        return NeumannSeries(resolvent, iterates, report)


def neumann_G(resolvent: Resolvent, g: SpaceTimeFunction, kernel: KernelOperator, k_lam: float, tol: float = 1e-8,
              times: Optional[Sequence[float]] = None) -> NeumannSeries:
    return NeumannSolver(resolvent, kernel, k_lam, tol).run(g, times)


def perturbed_identity_residual(series: NeumannSeries, kernel: KernelOperator, g: SpaceTimeFunction,
                                times: Sequence[float], tau: float = 1e-5) -> float:
    """sup |lam G - d_t G - L G - K_t G - g| at the given times"""
    resolvent = series.resolvent
    prop = resolvent.propagator
    frozen = all(h.time_frozen for h in series.iterates) and kernel.time_independent
    worst = 0.0
    for t in times:
        center = series.value(t).values
        if frozen:
            dt = 0.0
        else:
            dt = (series.value(t + tau).values - series.value(t - tau).values) / (2.0 * tau)
        lhs = resolvent.lam * center - dt - prop.generator(center) - kernel.apply(center, t)
        worst = max(worst, float(np.max(np.abs(lhs - g.at(t)))))
    return worst

#### krylov constants section ################################################

def krylov_delta(alpha: float, beta: float, d: int, p: float, q: float) -> float:
    """Midpoint of (max(0, beta-1), alpha-1-d/p-alpha/q) for the gradient L^q L^p bound"""
    upper = alpha - 1.0 - d / p - alpha / q
    lower = max(0.0, beta - 1.0)
    if not upper > lower:
        raise InadmissibleExponentError(
            f"no admissible delta: need alpha-1-d/p-alpha/q > max(0, beta-1), got {upper:.4g} <= {lower:.4g}"
        )
    return 0.5 * (lower + upper)


def gradient_lq_lp_constant(c5_pstar: float, d: int, alpha: float, delta: float, p: float, q: float, lam: float) -> float:
    """N~_lam: the L^q L^p -> sup constant of |d|^delta grad R_lam"""
    if not d / p + alpha / q < alpha - 1.0 - delta:
        raise InadmissibleExponentError(f"gradient bound needs d/p + alpha/q < alpha - 1 - delta (p={p}, q={q})")
    q_star = conjugate(q)
    s = lq_lp_exponent(d, alpha, delta + 1.0, p, q)
    return float(c5_pstar * (gamma_fn(s + 1.0) / (q_star * lam) ** (s + 1.0)) ** (1.0 / q_star))


def krylov_constant(
    lam: float,
    p: float,
    q: float,
    alpha: float,
    beta: float,
    d: int,
    b_m: float,
    ledger: ConstantsLedger
) -> float:
    """
    l_lam = c_lam (1 + 2 c~_lam) with ||G_lam g|| <= l_lam ||g||_{L^q L^p}

    Args:
        lam: resolvent parameter
        p, q: space and time integrability of g
        alpha, beta: stability index and kernel moment index
        d: dimension
        b_m: beta-moment bound of the kernel
        ledger: must hold c4 (delta=0 and delta=beta, r=p*) or c5 (r=p*) entries
    """
    if not d / p + alpha / q < alpha - beta:
        raise InadmissibleExponentError(
            f"Krylov estimate needs d/p + alpha/q < alpha - beta, got {d / p + alpha / q:.4g} >= {alpha - beta:.4g}"
        )
    r = conjugate(p)
    c_lam = lq_lp_constant(ledger.get("c4", delta=0.0, r=r), d, alpha, 0.0, p, q, lam)
    if alpha <= 1.0:
        check_lq_lp(d, alpha, beta, p, q)
        holder = komatsu_factor(d, beta) * lq_lp_constant(ledger.get("c4", delta=beta, r=r), d, alpha, beta, p, q, lam)
    else:
        delta = krylov_delta(alpha, beta, d, p, q)
        holder = np.sqrt(d) * komatsu_factor(d, delta) * gradient_lq_lp_constant(
            ledger.get("c5", delta=delta, r=r), d, alpha, delta, p, q, lam
        )
    c_tilde = (holder + 2.0 * c_lam) * b_m
    l_lam = c_lam * (1.0 + 2.0 * c_tilde)
    ledger.record("c_lambda", c_lam, "derived-formula", lam=lam, p=p, q=q)
    ledger.record("c_tilde_lambda", c_tilde, "derived-formula", lam=lam, p=p, q=q)
    ledger.record("l_lambda", l_lam, "derived-formula", lam=lam, p=p, q=q)
    return float(l_lam)


def krylov_inputs(alpha: float, beta: float, d: int, p: float, q: float) -> Dict[str, float]:
    """The (name, delta) pairs krylov_constant reads from the ledger, with r = p*"""
    r = conjugate(p)
    if alpha <= 1.0:
        return {"c4@0": 0.0, "c4@beta": beta, "r": r}
    return {"c4@0": 0.0, "c5@delta": krylov_delta(alpha, beta, d, p, q), "r": r}

#### moment check section ####################################################

def beta_moment_quadrature(model: JumpKernelModel) -> float:
    """B_M by radial quadrature of the sup-scaled kernel, check on the closed form"""
    bp = model.small.beta_prime
    radial, _ = integrate.quad(lambda r: r ** (model.beta - bp - 1.0), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    small = model.kappa.sup_bound() * model.small.angular_mass(model.dim) * radial
    big = 0.0
    for y, weight in zip(model.big_jumps, model.big_weights):
        big += weight * min(1.0, float(np.linalg.norm(y)) ** model.beta)
    return float(small + model.eta.sup_bound() * big)
