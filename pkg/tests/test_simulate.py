import numpy as np
import pytest
from scipy import stats

from src.core import perturb
from src.core.approx import truncate_kernel
from src.core.density import invert_density
from src.core.lattice import LatticeField, LatticeGrid, SpaceTimeFunction
from src.core.resolvent import Propagator, Resolvent
from src.core.symbol import triple_symbol
from src.models.kernel import JumpKernelModel
from src.models.levy import LevyTriple
from src.processors import simulate
from src.utils.errors import DomainError, InadmissibleExponentError, StepSizeError


@pytest.fixture
def cauchy_sampler(cauchy_triple) -> simulate.PathSampler:
    return simulate.PathSampler(cauchy_triple, simulate.SamplerSettings(dt=0.01))


@pytest.fixture
def rough_kernel() -> JumpKernelModel:
    return JumpKernelModel.from_config({
        "beta": 0.5,
        "beta_prime": 0.3,
        "kappa": {"base": 1.0, "terms": [{"a": 0.5, "k": [1.0]}]},
        "eta": 1.0,
        "Pi_atoms": [{"y": [1.5], "w": 0.3}],
    }, dim=1)


#### quadrature weights ####

@pytest.mark.parametrize("rule", ["trapezoid", "left"])
def test_weights_exact_for_constants(rule):
    times = np.linspace(0.0, 1.0, 11)
    w = simulate.exponential_weights(times, 0.0, 2.0, rule=rule)
    assert w.sum() == pytest.approx(-np.expm1(-2.0) / 2.0, rel=1e-12)


def test_trapezoid_weights_exact_for_linear():
    times = np.linspace(0.0, 1.0, 5)
    w = simulate.exponential_weights(times, 0.0, 2.0)
    # int_0^1 u e^{-2u} du
    assert w @ times == pytest.approx((1.0 - 3.0 * np.exp(-2.0)) / 4.0, rel=1e-12)


def test_undiscounted_weights():
    times = np.linspace(0.5, 2.0, 7)
    assert simulate.exponential_weights(times, 0.5, 0.0).sum() == pytest.approx(1.5)

#### sampler ####

def test_same_seed_same_path(cauchy_sampler):
    a = simulate.sample_path(cauchy_sampler, 0.0, [0.0], 0.1, seed=7)
    b = simulate.sample_path(cauchy_sampler, 0.0, [0.0], 0.1, seed=7)
    c = simulate.sample_path(cauchy_sampler, 0.0, [0.0], 0.1, seed=8)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_single_path_matches_ensemble_member(cauchy_sampler):
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 0.1, paths=5, seed=3, block_size=1)
    path = simulate.sample_path(cauchy_sampler, 0.0, [0.0], 0.1, seed=3, path_index=3)
    assert np.array_equal(path.states, ensemble.states[3])


def test_time_grid_must_divide_horizon(cauchy_sampler):
    with pytest.raises(StepSizeError):
        cauchy_sampler.time_grid(0.0, 0.105)


def test_start_point_dimension(cauchy_sampler):
    with pytest.raises(DomainError):
        simulate.sample_path(cauchy_sampler, 0.0, [0.0, 1.0], 0.1, seed=0)


def test_state_jumps_need_cutoff(stable_triple, rough_kernel):
    with pytest.raises(DomainError):
        simulate.PathSampler(stable_triple, simulate.SamplerSettings(dt=0.001), rough_kernel)


def test_coarse_step_rejected(stable_triple, rough_kernel):
    with pytest.raises(StepSizeError):
        simulate.PathSampler(stable_triple, simulate.SamplerSettings(dt=0.1), truncate_kernel(rough_kernel, 0.1))


def test_state_jumps_are_counted(stable_triple, rough_kernel):
    sampler = simulate.PathSampler(stable_triple, simulate.SamplerSettings(dt=0.001, eps=0.1), truncate_kernel(rough_kernel, 0.1))
    ensemble = simulate.sample_ensemble(sampler, 0.0, [0.0], 0.1, paths=200, seed=1)
    assert ensemble.jump_counts.get("state-kernel", 0) > 0
    assert np.all(np.isfinite(ensemble.states))

#### functionals ####

def test_constant_functional(cauchy_sampler):
    lam, T = 2.0, 0.5
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], T, paths=20, seed=0)
    estimate = simulate.estimate_V(ensemble, lambda t, X: np.ones(len(X)), lam, 1.0)
    assert estimate.mean == pytest.approx(-np.expm1(-lam * T) / lam, rel=1e-12)
    assert estimate.stderr == pytest.approx(0.0, abs=1e-14)
    assert estimate.bias_bound == pytest.approx(np.exp(-lam * T) / lam)


def test_stderr_shrinks_with_paths(cauchy_sampler):
    g = lambda t, X: np.cos(X[:, 0])
    few = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 0.5, paths=1000, seed=21)
    many = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 0.5, paths=10000, seed=22)
    ratio = simulate.estimate_V(few, g, 1.0).stderr / simulate.estimate_V(many, g, 1.0).stderr
    assert ratio == pytest.approx(np.sqrt(10.0), rel=0.2)


def test_functional_needs_positive_lambda(cauchy_sampler):
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 0.1, paths=2, seed=0)
    with pytest.raises(DomainError):
        simulate.estimate_V(ensemble, lambda t, X: np.ones(len(X)), 0.0)


#### generator checks ####

def _cosine_field(grid: LatticeGrid) -> LatticeField:
    return LatticeField(grid=grid, values=np.cos(grid.axis()))


def test_dynkin_formula_on_cauchy_paths(cauchy_sampler, cauchy_triple, periodic_grid):
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 0.5, paths=4000, seed=31)
    propagator = Propagator.for_triple(cauchy_triple, periodic_grid)
    report = simulate.dynkin_residual(ensemble, _cosine_field(periodic_grid), propagator, None, 0.0, 0.5, cauchy_sampler)
    # E cos(X_t) = exp(-pi t)
    assert report.lhs == pytest.approx(np.expm1(-0.5 * np.pi), abs=0.05)
    assert report.allowance < 0.1
    assert report.passed


def test_dynkin_needs_increasing_times(cauchy_sampler, cauchy_triple, periodic_grid):
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 0.1, paths=4, seed=0)
    propagator = Propagator.for_triple(cauchy_triple, periodic_grid)
    with pytest.raises(DomainError):
        simulate.dynkin_residual(ensemble, _cosine_field(periodic_grid), propagator, None, 0.1, 0.1)


def test_resolvent_dynkin_on_cauchy_paths(cauchy_sampler, cauchy_triple, periodic_grid):
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 1.0, paths=4000, seed=32)
    propagator = Propagator.for_triple(cauchy_triple, periodic_grid)
    f = _cosine_field(periodic_grid)
    report = simulate.resolvent_dynkin_residual(ensemble, f, 8.0, propagator, None, cauchy_sampler)
    assert report.passed
    with pytest.raises(DomainError):
        simulate.resolvent_dynkin_residual(ensemble, f, 0.0, propagator, None)


def test_krylov_ratio_stays_bounded(stable_triple):
    sampler = simulate.PathSampler(stable_triple, simulate.SamplerSettings(dt=0.01, eps=0.1, small_jump_gaussian=True))
    ensemble = simulate.sample_ensemble(sampler, 0.0, [0.0], 0.5, paths=2000, seed=41)
    report = simulate.krylov_mc_check(ensemble, [1.0, 0.5, 0.25], 4.0, 1.5, 0.5)
    assert len(report.rows) == 3
    assert all(np.isfinite(row["ratio"]) and row["ratio"] > 0 for row in report.rows)
    assert report.max_ratio <= 2.0 * report.baseline


@pytest.mark.slow
def test_monte_carlo_agrees_with_neumann(stable_triple, flagship_kernel, periodic_grid):
    model = truncate_kernel(flagship_kernel, 0.1)
    sampler = simulate.PathSampler(stable_triple, simulate.SamplerSettings(dt=0.01, eps=0.1, small_jump_gaussian=True), model)
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 8.0)
    solver = perturb.NeumannSolver(res, perturb.KernelOperator(model, 1.5, periodic_grid), 0.3)
    g = SpaceTimeFunction.frozen(_cosine_field(periodic_grid))
    record, report = simulate.mc_vs_neumann(sampler, solver, g, 0.0, [0.0], 1.0, paths=4000, seed=51)
    assert report.terms > 1
    assert record.agrees


def test_krylov_gate():
    simulate.krylov_gate(1, 1.2, 0.5, 20.0)
    with pytest.raises(InadmissibleExponentError):
        simulate.krylov_gate(1, 1.2, 0.5, 3.0)


def test_bump_norm_closed_form():
    # int exp(-2 x^2) dx = sqrt(pi / 2)
    assert simulate.gaussian_bump_lp_norm(1.0, 1, 2.0, 1.0) == pytest.approx(np.sqrt(np.sqrt(np.pi / 2.0)))


def test_lattice_cdf_is_a_cdf(cauchy_triple, cauchy_grid):
    cdf = simulate.lattice_cdf(invert_density(triple_symbol(cauchy_triple), 1.0, cauchy_grid))
    values = cdf(np.linspace(-70.0, 70.0, 301))
    assert values[0] == 0.0 and values[-1] == pytest.approx(1.0)
    assert np.all(np.diff(values) >= -1e-15)
    assert cdf(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-2)

#### marginal laws ####

@pytest.mark.slow
def test_gaussian_marginal():
    triple = LevyTriple.from_config({
        "alpha": 1.5, "atoms": [{"dir": [1.0], "w": 1.0}, {"dir": [-1.0], "w": 1.0}], "a": [[0.5]],
    })
    sampler = simulate.PathSampler(triple, simulate.SamplerSettings(dt=0.01, include_stable=False))
    ensemble = simulate.sample_ensemble(sampler, 0.0, [0.0], 1.0, paths=5000, seed=11)
    # covariance rate 2a
    _, pvalue = simulate.ks_marginal_test(ensemble, stats.norm(scale=1.0).cdf)
    assert pvalue > 1e-3


@pytest.mark.slow
def test_cauchy_marginal(cauchy_sampler):
    ensemble = simulate.sample_ensemble(cauchy_sampler, 0.0, [0.0], 1.0, paths=5000, seed=5)
    _, pvalue = simulate.ks_marginal_test(ensemble, stats.cauchy(scale=np.pi).cdf)
    assert pvalue > 1e-3


def test_sampler_propagator_drops_stable_part(periodic_grid):
    triple = LevyTriple.from_config({
        "alpha": 1.5, "atoms": [{"dir": [1.0], "w": 1.0}, {"dir": [-1.0], "w": 1.0}], "a": [[0.5]],
    })
    sampler = simulate.PathSampler(triple, simulate.SamplerSettings(dt=0.01, include_stable=False))
    prop = simulate.sampler_propagator(sampler, periodic_grid)
    u = periodic_grid.frequencies()[..., 0]
    assert np.allclose(prop.psi, 0.5 * u ** 2)
