from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from ..core.approx import RadialTable, compensator_moment, truncated_mass, truncated_mass_bound
from ..core.lattice import LatticeField, LatticeGrid, SpaceTimeFunction
from ..core.perturb import KernelOperator, NeumannSolver, generator_apply
from ..core.resolvent import Propagator
from ..core.symbol import full_exponent, stable_exponent
from ..models.kernel import JumpKernelModel
from ..models.levy import LevyTriple
from ..models.results import ComparisonRecord, DynkinReport, KrylovReport, MCEstimate, NeumannReport
from ..utils.config import parallel_map
from ..utils.console import get_logger
from ..utils.errors import DomainError, InadmissibleExponentError, ModelBoundError, StepSizeError

logger = get_logger(__name__)

MAX_STEP_JUMP_PROBABILITY = 0.1
ENVELOPE_SLACK = 1e-12

Observable = Callable[[float, np.ndarray], np.ndarray]

#### path models section #####################################################

class JumpRecord(BaseModel):
    time: float
    size: List[float]
    source: Literal["stable-ray", "extra", "state-kernel"]


class PathSample(BaseModel):
    """One simulated path with its jump log"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    s: float
    x: List[float]
    dt: float
    times: np.ndarray
    states: np.ndarray  # (K+1, d)
    jumps: List[JumpRecord] = []
    seed: int
    path_index: int = 0


class PathEnsemble(BaseModel):
    """Block-simulated paths sharing (s, x, T, dt)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    s: float
    x: List[float]
    dt: float
    times: np.ndarray
    states: np.ndarray  # (paths, K+1, d)
    jump_counts: Dict[str, int] = {}
    seed: int
    block_size: int

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not on the path grid (step {self.dt})")
        return k

    def evaluate(self, fn: Observable) -> np.ndarray:
        """fn(t_k, X_{t_k}) for all paths, shape (paths, K+1)"""
        return np.stack([np.asarray(fn(float(t), self.states[:, k])) for k, t in enumerate(self.times)], axis=1)

    def terminal(self) -> np.ndarray:
        return self.states[:, -1]


class SamplerSettings(BaseModel):
    dt: float = Field(gt=0)
    eps: Optional[float] = None  # stable jump cutoff; default dt^{1/(2-alpha)}
    small_jump_gaussian: bool = False
    include_stable: bool = True  # off only for calibration runs of the Gaussian and jump parts
    block_size: int = Field(default=1000, ge=1)

#### rng section #############################################################

def block_generator(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, block); independent of evaluation order"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))

#### sampler section #########################################################

class PathSampler:
    """Euler-type scheme for L + K^delta_{n,t}: Gaussian, drift, stable rays, extra jumps, thinned state jumps"""

    def __init__(self, triple: LevyTriple, settings: SamplerSettings, model: Optional[JumpKernelModel] = None):
        d = triple.dim
        self.triple = triple
        self.settings = settings
        self.model = model
        self.alpha = triple.alpha
        self.dim = d
        self.dt = settings.dt
        eps = settings.eps if settings.eps is not None else min(1.0, settings.dt ** (1.0 / (2.0 - self.alpha)))
        if not 0.0 < eps <= 1.0:
            raise DomainError(f"stable jump cutoff eps must lie in (0, 1], got {eps}")
        self.eps = eps

        # covariance rate 2a
        evals, evecs = np.linalg.eigh(triple.diffusion)
        self._gauss = evecs * np.sqrt(np.clip(evals, 0.0, None))

        mu = triple.stable.mu
        weights = mu.weights if settings.include_stable else np.zeros(len(mu.atoms))
        self._rays = mu.directions
        self._ray_rates = weights * eps ** -self.alpha / self.alpha
        if self.alpha == 1.0:
            inner = np.log(1.0 / eps)
        else:
            inner = (1.0 - eps ** (1.0 - self.alpha)) / (1.0 - self.alpha)
        drift = triple.drift - inner * (weights[:, None] * mu.directions).sum(axis=0)
        if triple.extra:
            small = np.linalg.norm(triple.extra_jumps, axis=1) <= 1.0
            drift = drift - (triple.extra_rates[:, None] * triple.extra_jumps * small[:, None]).sum(axis=0)
        self._drift = drift
        small_cov = eps ** (2.0 - self.alpha) / (2.0 - self.alpha) * np.einsum("j,ji,jk->ik", weights, mu.directions, mu.directions)
        s_evals, s_evecs = np.linalg.eigh(small_cov)
        self._small_gauss = s_evecs * np.sqrt(np.clip(s_evals, 0.0, None))

        self._state_jumps = model is not None and not model.is_null
        if self._state_jumps:
            self._setup_state_jumps(model)

    def _setup_state_jumps(self, model: JumpKernelModel) -> None:
        if model.dim != self.dim:
            raise DomainError(f"kernel dimension {model.dim} does not match triple dimension {self.dim}")
        if model.cutoff is None:
            raise DomainError("state-dependent jumps need a truncated kernel (set delta_cut)")
        model.check_alpha(self.alpha)
        self.envelope = truncated_mass_bound(model)
        if self.envelope * self.dt >= MAX_STEP_JUMP_PROBABILITY:
            raise StepSizeError(
                f"Lambda_max * dt = {self.envelope * self.dt:.3g} >= {MAX_STEP_JUMP_PROBABILITY}; reduce dt below "
                f"{MAX_STEP_JUMP_PROBABILITY / self.envelope:.3g}"
            )
        self._small_mass, self._big_mass = truncated_mass(model)
        self._radial = RadialTable.build(model.small.beta_prime, model.cutoff)
        self._comp_small, self._comp_big = compensator_moment(model, self.alpha)
        if model.small.atoms is not None:
            self._small_dirs = np.array([a.direction for a in model.small.atoms], dtype=float)
            w = np.array([a.weight for a in model.small.atoms], dtype=float)
            self._small_probs = w / w.sum()
        if model.big:
            w = np.array([wt * float(model.cutoff.weight(np.linalg.norm(y))) for y, wt in zip(model.big_jumps, model.big_weights)])
            self._big_probs = w / w.sum() if w.sum() > 0 else w

    def time_grid(self, s: float, T: float) -> np.ndarray:
        steps = int(round((T - s) / self.dt))
        if steps < 1 or abs(steps * self.dt - (T - s)) > 1e-9 * max(1.0, T):
            raise StepSizeError(f"T - s = {T - s} is not a positive multiple of dt = {self.dt}")
        return s + self.dt * np.arange(steps + 1)

    def _small_directions(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.model.small.atoms is not None:
            return self._small_dirs[rng.choice(len(self._small_dirs), size=count, p=self._small_probs)]
        if self.dim == 1:
            return np.where(rng.random(count) < 0.5, -1.0, 1.0)[:, None]
        z = rng.standard_normal((count, self.dim))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def _step(self, rng: np.random.Generator, t: float, X: np.ndarray, counts: Dict[str, int],
              log: Optional[List[JumpRecord]]) -> np.ndarray:
        P, d, dt = X.shape[0], self.dim, self.dt
        new = X + self._drift * dt

        # left-endpoint state quantities
        if self._state_jumps:
            kappa = self.model.kappa.value(t, X)
            eta = self.model.eta.value(t, X) if self.model.big else np.zeros(P)
            comp = np.multiply.outer(kappa, self._comp_small) + np.multiply.outer(eta, self._comp_big)
            new = new - comp * dt
            small_rate = kappa * self._small_mass
            rate = small_rate + eta * self._big_mass
            if np.any(rate > self.envelope * (1.0 + ENVELOPE_SLACK)):
                raise ModelBoundError(f"thinning envelope violated: Lambda={rate.max():.6g} > Lambda_max={self.envelope:.6g}")

        new = new + np.sqrt(2.0 * dt) * rng.standard_normal((P, d)) @ self._gauss.T

        for ray, ray_rate in zip(self._rays, self._ray_rates):
            n = rng.poisson(ray_rate * dt, P)
            total = int(n.sum())
            if total == 0:
                continue
            sizes = self.eps * rng.random(total) ** (-1.0 / self.alpha)
            owner = np.repeat(np.arange(P), n)
            new = new + np.bincount(owner, weights=sizes, minlength=P)[:, None] * ray
            counts["stable-ray"] = counts.get("stable-ray", 0) + total
            if log is not None:
                log.extend(JumpRecord(time=t, size=list(r * ray), source="stable-ray") for r in sizes)
        if self.settings.small_jump_gaussian:
            new = new + np.sqrt(dt) * rng.standard_normal((P, d)) @ self._small_gauss.T

        for y, rate_y in zip(self.triple.extra_jumps, self.triple.extra_rates):
            n = rng.poisson(rate_y * dt, P)
            if n.any():
                new = new + n[:, None] * y
                counts["extra"] = counts.get("extra", 0) + int(n.sum())
                if log is not None:
                    log.extend(JumpRecord(time=t, size=list(y), source="extra") for _ in range(int(n.sum())))

        if self._state_jumps:
            candidates = rng.poisson(self.envelope * dt, P)
            accepted = rng.binomial(candidates, np.clip(rate / self.envelope, 0.0, 1.0))
            total = int(accepted.sum())
            if total:
                owner = np.repeat(np.arange(P), accepted)
                share = np.divide(small_rate, rate, out=np.ones(P), where=rate > 0)[owner]
                from_small = rng.random(total) < share
                sizes = np.zeros((total, d))
                k_small = int(from_small.sum())
                if k_small:
                    radii = self._radial.sample(rng.random(k_small))
                    sizes[from_small] = radii[:, None] * self._small_directions(rng, k_small)
                if total - k_small:
                    pick = rng.choice(len(self._big_probs), size=total - k_small, p=self._big_probs)
                    sizes[~from_small] = self.model.big_jumps[pick]
                for i in range(d):
                    new[:, i] += np.bincount(owner, weights=sizes[:, i], minlength=P)
                counts["state-kernel"] = counts.get("state-kernel", 0) + total
                if log is not None:
                    log.extend(JumpRecord(time=t, size=list(v), source="state-kernel") for v in sizes)
        return new

    def simulate_block(self, rng: np.random.Generator, count: int, times: np.ndarray, x: np.ndarray,
                       log: Optional[List[JumpRecord]] = None) -> Tuple[np.ndarray, Dict[str, int]]:
        states = np.empty((count, len(times), self.dim))
        states[:, 0] = x
        counts: Dict[str, int] = {}
        for k, t in enumerate(times[:-1]):
            states[:, k + 1] = self._step(rng, float(t), states[:, k], counts, log)
        return states, counts


def _start(x: Sequence[float], d: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise DomainError(f"start point must have {d} coordinates, got {x.shape}")
    return x


def sample_path(sampler: PathSampler, s: float, x: Sequence[float], T: float, seed: int,
                path_index: int = 0) -> PathSample:
    """Single path; identical to path `path_index` of sample_ensemble with block_size=1"""
    x0 = _start(x, sampler.dim)
    times = sampler.time_grid(s, T)
    log: List[JumpRecord] = []
    states, _ = sampler.simulate_block(block_generator(seed, path_index), 1, times, x0, log)
    return PathSample(s=s, x=list(x0), dt=sampler.dt, times=times, states=states[0], jumps=log,
                      seed=seed, path_index=path_index)


def sample_ensemble(sampler: PathSampler, s: float, x: Sequence[float], T: float, paths: int, seed: int,
                    block_size: Optional[int] = None) -> PathEnsemble:
    """
    Simulate `paths` paths in blocks; block b draws from the stream keyed by (seed, b)

    Args:
        sampler: configured path sampler
        s, x: start time and point
        T: horizon
        paths: number of paths
        seed: master seed
        block_size: paths per block (defaults to the sampler setting)
    """
    if paths < 1:
        raise DomainError(f"need at least one path, got {paths}")
    x0 = _start(x, sampler.dim)
    times = sampler.time_grid(s, T)
    size = block_size or sampler.settings.block_size
    blocks = [(b, min(size, paths - b * size)) for b in range((paths + size - 1) // size)]
    results = parallel_map(lambda item: sampler.simulate_block(block_generator(seed, item[0]), item[1], times, x0), blocks)
    states = np.concatenate([r[0] for r in results], axis=0)
    counts: Dict[str, int] = {}
    for _, block_counts in results:
        for key, value in block_counts.items():
            counts[key] = counts.get(key, 0) + value
    logger.debug(f"simulated {paths} paths x {len(times) - 1} steps, jumps {counts}")
    return PathEnsemble(s=s, x=list(x0), dt=sampler.dt, times=times, states=states, jump_counts=counts,
                        seed=seed, block_size=size)

#### observables section #####################################################

def field_observable(field: LatticeField) -> Observable:
    """Time-independent observable from periodic interpolation of a lattice field"""
    return lambda t, X: np.real(field.interpolate(X))


def spacetime_observable(g: SpaceTimeFunction) -> Observable:
    return lambda t, X: np.real(g.field_at(t).interpolate(X))


def exponential_weights(times: np.ndarray, s: float, lam: float, rule: str = "trapezoid") -> np.ndarray:
    """
    Weights w_k with sum_k w_k g_k = int_s^T e^{-lam (u-s)} g(u) du for g linear ("trapezoid")
    or constant ("left") between nodes; exact for constant g
    """
    h = np.diff(times)
    start = np.exp(-lam * (times[:-1] - s))
    w = np.zeros(len(times))
    if lam == 0.0:
        if rule == "left":
            w[:-1] = h
        else:
            w[:-1] += 0.5 * h
            w[1:] += 0.5 * h
        return w
    x = lam * h
    full = -np.expm1(-x) / lam
    if rule == "left":
        w[:-1] = start * full
        return w
    # int_0^h e^{-lam v} v/h dv
    right = (-np.expm1(-x) - x * np.exp(-x)) / (lam * x)
    w[:-1] += start * (full - right)
    w[1:] += start * right
    return w


def _mean_stderr(values: np.ndarray) -> Tuple[float, float]:
    n = len(values)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, stderr


def estimate_V(ensemble: PathEnsemble, g: Observable, lam: float, g_bound: Optional[float] = None) -> MCEstimate:
    """E[int_s^T e^{-lam(t-s)} g(t, X_t) dt] with the tail bias bound e^{-lam(T-s)} ||g|| / lam"""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    values = ensemble.evaluate(g)
    per_path = values @ exponential_weights(ensemble.times, ensemble.s, lam)
    mean, stderr = _mean_stderr(per_path)
    bound = g_bound if g_bound is not None else float(np.max(np.abs(values)))
    bias = np.exp(-lam * (ensemble.horizon - ensemble.s)) * bound / lam
    return MCEstimate(mean=mean, stderr=stderr, paths=ensemble.paths, bias_bound=float(bias))

#### spectral bounds section #################################################

def spectral_derivative_bound(field: LatticeField, order: int) -> float:
    """sum_{m<=order} sup |D^m f| bounded by the l1 norm of |k|^m f^_k"""
    axes = tuple(range(field.grid.dim))
    coeffs = np.abs(np.fft.fftn(field.values, axes=axes)) / field.values.size
    kn = np.linalg.norm(field.grid.frequencies(), axis=-1)
    return float(sum(np.sum(kn ** m * coeffs) for m in range(order + 1)))


def small_jump_bias(sampler: PathSampler, field: LatticeField) -> float:
    """sup |generator gap| on a field from stable jumps below eps"""
    if not sampler.settings.include_stable:
        return 0.0
    mass = float(sampler.triple.stable.mu.total_mass)
    a, eps = sampler.alpha, sampler.eps
    if sampler.settings.small_jump_gaussian:
        return mass * eps ** (3.0 - a) / (3.0 - a) * spectral_derivative_bound(field, 3)
    return mass * eps ** (2.0 - a) / (2.0 - a) * spectral_derivative_bound(field, 2)

#### dynkin section ##########################################################

def _generator_bounds(propagator: Propagator, kernel: Optional[KernelOperator], f: LatticeField,
                      times: np.ndarray) -> Tuple[List[LatticeField], Dict[str, float]]:
    """
    A f at each time with the sup bounds the Dynkin allowances are built from

    first: sup |A f|; second: sup |(d_t + A) A f|; third: sup |(d_t + A)^2 A f|;
    freeze: sup of the coefficient-freezing gap rate, sup |(d_t + A) K f| + ||kappa|| sup |A S f| + ||eta|| sup |A B f|
    """
    def A(t: float, values: np.ndarray) -> np.ndarray:
        if kernel is None:
            return propagator.generator(values)
        return propagator.generator(values) + kernel.apply(values, t)

    frozen = kernel is None or kernel.time_independent
    nodes = times[:1] if frozen else times
    first, second, third, freeze = [], [], [], []
    a1_frames, a2_frames, kf_frames = [], [], []
    parts = kernel.components(f.values) if kernel is not None else (None, None)
    for t in nodes:
        t = float(t)
        a1 = A(t, f.values)
        a2 = A(t, a1)
        a3 = A(t, a2)
        a1_frames.append(a1)
        a2_frames.append(a2)
        first.append(float(np.max(np.abs(a1))))
        second.append(float(np.max(np.abs(a2))))
        third.append(float(np.max(np.abs(a3))))
        gap = 0.0
        if kernel is not None:
            kf = kernel.apply(f.values, t)
            kf_frames.append(kf)
            gap = float(np.max(np.abs(A(t, kf))))
            small, big = parts
            if small is not None:
                gap += kernel.model.kappa.sup_bound() * float(np.max(np.abs(A(t, small))))
            if big is not None:
                gap += kernel.model.eta.sup_bound() * float(np.max(np.abs(A(t, big))))
        freeze.append(gap)
    bounds = {"first": max(first), "second": max(second), "third": max(third), "freeze": max(freeze)}
    if not frozen and len(times) > 2:
        h = float(times[1] - times[0])
        slope = lambda frames: max(float(np.max(np.abs(b - a))) for a, b in zip(frames[:-1], frames[1:])) / h
        curvature = max(float(np.max(np.abs(c - 2.0 * b + a))) for a, b, c in zip(a1_frames, a1_frames[1:], a1_frames[2:])) / h ** 2
        bounds["second"] += slope(a1_frames)
        bounds["third"] += 2.0 * slope(a2_frames) + curvature
        if kf_frames:
            bounds["freeze"] += slope(kf_frames)
    fields = [f.with_values(a) for a in a1_frames]
    if frozen:
        fields = fields * len(times)
    return fields, bounds


def dynkin_residual(ensemble: PathEnsemble, f: LatticeField, propagator: Propagator,
                    kernel: Optional[KernelOperator], t1: float, t2: float,
                    sampler: Optional[PathSampler] = None) -> DynkinReport:
    """
    E f(X_t2) - E f(X_t1) against E int_t1^t2 A f(u, X_u) du (trapezoid rule on the path grid)

    The allowance covers the trapezoid error (t2-t1) dt^2/12 sup |A^3 f|, the gap from freezing the
    kernel coefficients over a step (t2-t1) dt/2 x freeze bound, and the small-jump truncation bias.

    Args:
        ensemble: simulated paths
        f: time-independent lattice test function
        propagator: the Levy generator on the lattice
        kernel: state-dependent jump operator (None for a pure Levy generator)
        t1, t2: times on the path grid
        sampler: if given, the small-jump truncation bias is added to the allowance
    """
    i1, i2 = ensemble.time_index(t1), ensemble.time_index(t2)
    if not i2 > i1:
        raise DomainError(f"need t2 > t1, got {t1}, {t2}")
    times = ensemble.times[i1:i2 + 1]
    fields, bounds = _generator_bounds(propagator, kernel, f, times)
    weights = exponential_weights(times, float(times[0]), 0.0)
    integral = np.zeros(ensemble.paths)
    for k, (field, w) in enumerate(zip(fields, weights)):
        integral += w * field.interpolate(ensemble.states[:, i1 + k]).real
    start = f.interpolate(ensemble.states[:, i1]).real
    end = f.interpolate(ensemble.states[:, i2]).real
    lhs, _ = _mean_stderr(end - start)
    rhs, _ = _mean_stderr(integral)
    diff, stderr = _mean_stderr(end - start - integral)
    span, dt = t2 - t1, ensemble.dt
    allowance = span * (dt * dt / 12.0 * bounds["third"] + 0.5 * dt * bounds["freeze"])
    if sampler is not None:
        allowance += span * small_jump_bias(sampler, f)
    return DynkinReport(lhs=lhs, rhs=rhs, residual=abs(diff), stderr=stderr, allowance=float(allowance))


def resolvent_dynkin_residual(ensemble: PathEnsemble, f: LatticeField, lam: float, propagator: Propagator,
                              kernel: Optional[KernelOperator], sampler: Optional[PathSampler] = None) -> DynkinReport:
    """lam V(f) - f(x) against V(A f), V the discounted path integral over [s, T] (left rule)"""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    fields, bounds = _generator_bounds(propagator, kernel, f, ensemble.times)
    w = exponential_weights(ensemble.times, ensemble.s, lam, rule="left")
    fv = np.stack([f.interpolate(ensemble.states[:, k]).real for k in range(len(ensemble.times))], axis=1)
    av = np.stack([field.interpolate(ensemble.states[:, k]).real for k, field in enumerate(fields)], axis=1)
    lhs_paths = lam * (fv @ w) - fv[:, 0]
    rhs_paths = av @ w
    lhs, _ = _mean_stderr(lhs_paths)
    rhs, _ = _mean_stderr(rhs_paths)
    diff, stderr = _mean_stderr(lhs_paths - rhs_paths)
    span, dt = ensemble.horizon - ensemble.s, ensemble.dt
    tail = np.exp(-lam * span) * (f.sup_norm() + bounds["first"] / lam)
    # sum_k e^{-lam (t_k - s)} int_0^dt v dv <= dt/2 (dt + 1/lam)
    rate = lam * bounds["first"] + bounds["second"] + bounds["freeze"]
    allowance = tail + 0.5 * dt * (dt + 1.0 / lam) * rate
    if sampler is not None:
        allowance += small_jump_bias(sampler, f) / lam
    return DynkinReport(lhs=lhs, rhs=rhs, residual=abs(diff), stderr=stderr, allowance=float(allowance))

#### neumann cross-validation section ########################################

def mc_vs_neumann(
    sampler: PathSampler,
    solver: NeumannSolver,
    g: SpaceTimeFunction,
    s: float,
    x: Sequence[float],
    T: float,
    paths: int,
    seed: int,
    times: Optional[Sequence[float]] = None
) -> Tuple[ComparisonRecord, NeumannReport]:
    """
    Monte Carlo resolvent functional against G_lam g(s, x) on the same truncated kernel

    Args:
        sampler: sampler for L + K^delta
        solver: Neumann solver built on the same kernel (or on its untruncated version)
        g: source function on the solver lattice
        s, x: start
        T: simulation horizon
        paths: Monte Carlo sample size
        seed: master seed
        times: time grid for time-dependent Neumann iterates
    """
    kernel = solver.kernel
    lam = solver.resolvent.lam
    if sampler.model is not None and kernel.model.model_copy(update={"cutoff": None}) != sampler.model.model_copy(update={"cutoff": None}):
        raise DomainError("sampler and Neumann solver use different kernels")
    series = solver.run(g, times)
    F = series.value(s)
    x0 = _start(x, sampler.dim)
    neumann_value = float(F.interpolate(x0[None, :])[0].real)

    ensemble = sample_ensemble(sampler, s, x0, T, paths, seed)
    estimate = estimate_V(ensemble, spacetime_observable(g), lam, g.sup_norm())

    prop = solver.resolvent.propagator
    g_field = g.field_at(s)
    residual = float(np.max(np.abs(lam * F.values - g_field.values)))
    ag = generator_apply(prop, kernel, s, g_field).sup_norm()
    systematic = ensemble.dt / (2.0 * lam) * (lam * residual + ag)
    systematic += small_jump_bias(sampler, F) / lam
    if kernel.model.cutoff is None and sampler.model is not None and sampler.model.cutoff is not None:
        delta = sampler.model.cutoff.delta_cut
        systematic += 2.0 / lam * delta ** (sampler.alpha - kernel.model.beta) * spectral_derivative_bound(F, 2) * kernel.model.beta_moment_bound()
    record = ComparisonRecord(
        s=s, x=list(x0), lam=lam, mc_mean=estimate.mean, mc_stderr=estimate.stderr,
        neumann_value=neumann_value, neumann_truncation_bound=series.report.truncation_bound,
        systematic_bound=float(systematic), mc_bias_bound=estimate.bias_bound,
    )
    logger.debug(f"MC {record.mc_mean:.6g} +- {record.mc_stderr:.2g} vs Neumann {neumann_value:.6g} (allowance {record.allowance:.2g})")
    return record, series.report

#### krylov section ##########################################################

def krylov_gate(d: int, alpha: float, beta: float, p: float) -> None:
    threshold = (d + alpha) / (alpha - beta)
    if not p > threshold:
        raise InadmissibleExponentError(f"need p > (d+alpha)/(alpha-beta) = {threshold:.4g}, got p={p}")


def gaussian_bump_lp_norm(width: float, d: int, p: float, span: float) -> float:
    """||exp(-|x|^2/width^2)||_{L^p([0,span] x R^d)}"""
    return float((span * (np.pi / p) ** (d / 2.0) * width ** d) ** (1.0 / p))


def krylov_mc_check(ensemble: PathEnsemble, widths: Sequence[float], p: float, alpha: float, beta: float,
                    center: Optional[Sequence[float]] = None) -> KrylovReport:
    """E int_s^T |f_w(X_t)| dt over ||f_w||_{L^p} for shrinking unit-height Gaussian bumps"""
    d = ensemble.states.shape[-1]
    krylov_gate(d, alpha, beta, p)
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    weights = exponential_weights(ensemble.times, ensemble.s, 0.0)
    span = ensemble.horizon - ensemble.s
    rows = []
    for width in widths:
        bump = lambda t, X, w=width: np.exp(-np.sum((X - c) ** 2, axis=-1) / w ** 2)
        mean, stderr = _mean_stderr(ensemble.evaluate(bump) @ weights)
        norm = gaussian_bump_lp_norm(width, d, p, span)
        rows.append({"width": width, "lhs": mean, "stderr": stderr, "lp_norm": norm, "ratio": mean / norm})
    baseline = rows[0]["ratio"] if rows else 0.0
    max_ratio = max((r["ratio"] for r in rows), default=0.0)
    return KrylovReport(p=p, rows=rows, baseline=baseline, max_ratio=max_ratio)

#### marginal law section ####################################################

def ks_marginal_test(ensemble: PathEnsemble, cdf: Callable[[np.ndarray], np.ndarray], component: int = 0) -> Tuple[float, float]:
    """(statistic, p-value) of X_T - x against a reference CDF"""
    sample = ensemble.terminal()[:, component] - ensemble.x[component]
    result = stats.kstest(sample, cdf)
    return float(result.statistic), float(result.pvalue)


def lattice_cdf(field: LatticeField) -> Callable[[np.ndarray], np.ndarray]:
    """CDF on [-L, L) from a 1-d lattice density, clamped to [0, 1] outside"""
    if field.grid.dim != 1:
        raise DomainError("lattice_cdf needs a 1-d density")
    grid: LatticeGrid = field.grid
    density = np.real(field.values)
    edges = grid.axis() + 0.5 * grid.spacing
    cumulative = np.cumsum(density) * grid.spacing
    cumulative = cumulative / cumulative[-1]
    return lambda x: np.interp(x, edges, cumulative, left=0.0, right=1.0)


def sampler_propagator(sampler: PathSampler, grid: LatticeGrid) -> Propagator:
    """Lattice generator matching what the sampler simulates"""
    triple = sampler.triple
    if sampler.settings.include_stable:
        return Propagator.for_triple(triple, grid)
    return Propagator(lambda u: full_exponent(triple, u) - stable_exponent(triple.stable, u), grid)
