import numpy as np
import pytest
from scipy.special import sici

from src.core import perturb
from src.core.lattice import LatticeField, SpaceTimeFunction
from src.core.resolvent import Propagator, Resolvent, gamma_ceiling
from src.models.kernel import JumpKernelModel
from src.models.results import ConstantsLedger
from src.utils.errors import ContractionError, DomainError, GridExhaustedError, InadmissibleExponentError


def _cosine(grid) -> SpaceTimeFunction:
    return SpaceTimeFunction.frozen(LatticeField(grid=grid, values=np.cos(grid.axis())))


#### kernel operator ####

def test_kernel_annihilates_constants(flagship_kernel, periodic_grid):
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    assert np.max(np.abs(kernel.apply(np.ones(periodic_grid.shape), 0.0))) < 1e-10


def test_big_jump_operator_on_cosine(periodic_grid):
    model = JumpKernelModel.from_config({"beta": 0.5, "eta": 1.0, "Pi_atoms": [{"y": [1.5], "w": 1.0}]}, dim=1)
    x = periodic_grid.axis()
    out = perturb.KernelOperator(model, 1.5, periodic_grid).apply(np.cos(x), 0.0)
    assert np.max(np.abs(out - (np.cos(x + 1.5) - np.cos(x)))) < 1e-10


def test_components_recombine_into_kernel(flagship_kernel, periodic_grid):
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    values = np.cos(periodic_grid.axis()) + 0.3 * np.sin(2.0 * periodic_grid.axis())
    small, big = kernel.components(values)
    coords = periodic_grid.coordinates()
    expected = flagship_kernel.kappa.value(0.0, coords) * small + flagship_kernel.eta.value(0.0, coords) * big
    assert np.max(np.abs(kernel.apply(values, 0.0) - expected)) < 1e-14


def test_components_of_small_only_kernel(periodic_grid):
    model = JumpKernelModel.from_config({"beta": 0.5, "kappa": 1.0}, dim=1)
    small, big = perturb.KernelOperator(model, 1.5, periodic_grid).components(np.cos(periodic_grid.axis()))
    assert big is None
    assert small.shape == periodic_grid.shape


def test_small_jump_symbol_closed_form():
    # beta' = 0, both directions: 2 int_0^1 (cos rs - 1)/r dr = 2 (Ci(s) - gamma - log s)
    model = JumpKernelModel.from_config({"beta": 0.5, "kappa": 1.0}, dim=1)
    s = np.array([1.0, 3.0])
    symbol = perturb.small_jump_symbol(model, 0.8, s[:, None])
    ci = sici(s)[1]
    assert np.max(np.abs(symbol - 2.0 * (ci - np.euler_gamma - np.log(s)))) < 1e-7


def test_beta_moment_quadrature_matches_closed_form(flagship_kernel):
    assert perturb.beta_moment_quadrature(flagship_kernel) == pytest.approx(flagship_kernel.beta_moment_bound(), rel=1e-9)


def test_kernel_needs_beta_below_alpha(flagship_kernel, periodic_grid):
    with pytest.raises(DomainError):
        perturb.KernelOperator(flagship_kernel, 0.4, periodic_grid)

#### contraction ####

def test_contraction_delta():
    assert perturb.contraction_delta(0.8, 0.5) == 0.5
    assert perturb.contraction_delta(1.5, 0.5) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        perturb.contraction_delta(1.2, 1.3)


def test_find_lambda0_bisects(flagship_kernel):
    # B_M = 0.32, k = 3 B_M / lam crosses 1/2 at 1.92
    result = perturb.find_lambda0(flagship_kernel, 0.8, lambda lam: 1.0 / lam, [1.0, 2.0, 4.0, 8.0])
    assert result.lambda0 == pytest.approx(1.92, abs=2e-3)
    assert result.k_at_lambda0 < 0.5
    assert result.monotone


def test_larger_kernel_needs_larger_lambda0(flagship_kernel):
    alpha, delta = 0.8, 0.5
    modulus = lambda lam: gamma_ceiling(1.0, alpha, delta, lam)
    grid = [2.0 ** i for i in range(18)]
    base = perturb.find_lambda0(flagship_kernel, alpha, modulus, grid, tol=0.5, provenance="gamma-ceiling")
    heavier = perturb.find_lambda0(flagship_kernel.scaled(4.0), alpha, modulus, grid, tol=0.5, provenance="gamma-ceiling")
    assert heavier.lambda0 > base.lambda0
    assert heavier.provenance == "gamma-ceiling"


def test_find_lambda0_grid_exhausted(flagship_kernel):
    with pytest.raises(GridExhaustedError):
        perturb.find_lambda0(flagship_kernel, 0.8, lambda lam: 1.0 / lam, [0.5, 1.0])


def test_k_lambda_reads_ledger(flagship_kernel):
    ledger = ConstantsLedger()
    ledger.record("C_hat_lambda", 0.1, "measured", lam=4.0, delta=0.25)
    k = perturb.k_lambda(flagship_kernel, 4.0, 0.25, 1.5, ledger)
    assert k == pytest.approx(0.6 * flagship_kernel.beta_moment_bound())
    assert ledger.has("k_lambda", lam=4.0, delta=0.25)

#### neumann series ####

def test_solver_refuses_weak_contraction(stable_triple, periodic_grid, flagship_kernel):
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 4.0)
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    with pytest.raises(ContractionError):
        perturb.NeumannSolver(res, kernel, 0.5)


def test_zero_kernel_reduces_to_resolvent(stable_triple, periodic_grid):
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 2.0)
    kernel = perturb.KernelOperator(JumpKernelModel.zero(1), 1.5, periodic_grid)
    g = _cosine(periodic_grid)
    series = perturb.NeumannSolver(res, kernel, 0.0).run(g)
    assert series.report.terms == 1
    assert np.allclose(series.value(0.0).values, res.apply(g, 0.0).values, atol=1e-14)


def test_perturbed_identity(stable_triple, periodic_grid, flagship_kernel):
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 8.0)
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    g = _cosine(periodic_grid)
    series = perturb.NeumannSolver(res, kernel, 0.3, tol=1e-10).run(g)
    assert series.report.terms > 1
    assert series.report.sup_norm <= 2.0 * g.sup_norm() / 8.0
    assert perturb.perturbed_identity_residual(series, kernel, g, [0.0]) < 1e-6


def test_neumann_g_matches_solver(stable_triple, periodic_grid, flagship_kernel):
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 8.0)
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    g = _cosine(periodic_grid)
    series = perturb.neumann_G(res, g, kernel, 0.3, tol=1e-10)
    direct = perturb.NeumannSolver(res, kernel, 0.3, tol=1e-10).run(g)
    assert series.report.terms == direct.report.terms
    assert np.allclose(series.value(0.0).values, direct.value(0.0).values, atol=1e-15)
    with pytest.raises(ContractionError):
        perturb.neumann_G(res, g, kernel, 0.6)


def test_neumann_g_with_time_limited_source(stable_triple, periodic_grid, flagship_kernel):
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 8.0)
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    times = np.linspace(0.0, 1.0, 9)
    frames = np.broadcast_to(np.cos(periodic_grid.axis()), (len(times),) + periodic_grid.shape).copy()
    g = SpaceTimeFunction.from_samples(periodic_grid, times, frames)
    with pytest.raises(DomainError):
        perturb.neumann_G(res, g, kernel, 0.3)
    series = perturb.neumann_G(res, g, kernel, 0.3, times=times)
    assert series.report.sup_norm <= 2.0 * g.sup_norm() / 8.0


def test_terms_needed_meets_tolerance(stable_triple, periodic_grid, flagship_kernel):
    res = Resolvent(Propagator.for_triple(stable_triple, periodic_grid), 4.0)
    kernel = perturb.KernelOperator(flagship_kernel, 1.5, periodic_grid)
    solver = perturb.NeumannSolver(res, kernel, 0.25, tol=1e-8)
    K = solver.terms_needed(1.0)
    assert 0.25 ** (K + 1) / 0.75 / 4.0 < 1e-8
    assert 0.25 ** K / 0.75 / 4.0 >= 1e-8

#### krylov ####

def test_krylov_delta_admissibility():
    assert perturb.krylov_delta(1.2, 0.5, 1, 20.0, 20.0) == pytest.approx(0.045)
    with pytest.raises(InadmissibleExponentError):
        perturb.krylov_delta(1.2, 0.5, 1, 2.0, 2.0)


def test_krylov_constant_decreases_in_lambda():
    p = q = 20.0
    inputs = perturb.krylov_inputs(1.2, 0.5, 1, p, q)
    ledger = ConstantsLedger()
    ledger.record("c4", 1.0, "measured", delta=0.0, r=inputs["r"])
    ledger.record("c5", 1.0, "measured", delta=inputs["c5@delta"], r=inputs["r"])
    values = [perturb.krylov_constant(lam, p, q, 1.2, 0.5, 1, 0.3, ledger) for lam in (1.0, 2.0, 4.0)]
    assert values[0] > values[1] > values[2] > 0.0
    assert ledger.has("l_lambda", lam=2.0, p=p, q=q)
