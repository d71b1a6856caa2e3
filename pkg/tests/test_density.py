import numpy as np
import pytest
from scipy import integrate

from src.core import density
from src.core.lattice import LatticeGrid
from src.core.symbol import stable_symbol, triple_symbol
from src.utils.errors import DomainError, ExtentError, ResolutionError

from .conftest import make_stable


def test_cauchy_matches_periodised_closed_form(cauchy_triple, cauchy_grid):
    field, diagnostics = density.invert_with_diagnostics(triple_symbol(cauchy_triple), 1.0, cauchy_grid)
    x = cauchy_grid.axis()
    oracle = density.periodized_cauchy(x, np.pi, cauchy_grid.half_extent)
    window = np.abs(x) <= 10.0
    assert np.max(np.abs(field.values - oracle)[window]) < 1e-8
    assert diagnostics.mass == pytest.approx(1.0, abs=1e-10)
    assert diagnostics.ringing < 1e-9


def test_cauchy_peak_value(cauchy_triple, cauchy_grid):
    field = density.invert_density(triple_symbol(cauchy_triple), 1.0, cauchy_grid)
    assert field.at([0.0]) == pytest.approx(1.0 / np.pi ** 2, abs=1e-3)


def test_periodised_cauchy_tends_to_cauchy():
    x = np.array([0.0, 1.0, 3.0])
    wide = density.periodized_cauchy(x, 1.0, 1e5)
    assert np.allclose(wide, 1.0 / (np.pi * (1.0 + x ** 2)), rtol=1e-6)


@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_scaling_law(alpha):
    grid = LatticeGrid(dim=1, half_extent=256.0, points=16384)
    stable = make_stable(alpha)
    for t in (0.25, 4.0):
        assert density.scaling_check(stable, t, grid) < 1e-4


def test_chapman_kolmogorov(cauchy_triple, cauchy_grid):
    assert density.chapman_kolmogorov_residual(triple_symbol(cauchy_triple), 0.5, 0.5, cauchy_grid) < 1e-9


def test_cauchy_l2_decay(cauchy_stable, cauchy_grid):
    fit = density.decay_exponent_fit(cauchy_stable, 0.0, 2.0, [0.1, 1.0, 10.0, 100.0], cauchy_grid)
    assert fit.expected_slope == pytest.approx(-0.5)
    assert fit.relative_error < 0.02
    assert fit.constant == pytest.approx(np.sqrt(1.0 / (2.0 * np.pi ** 2)), rel=1e-2)


def test_decay_fit_needs_four_times(cauchy_stable, cauchy_grid):
    with pytest.raises(DomainError):
        density.decay_exponent_fit(cauchy_stable, 0.0, 2.0, [1.0, 2.0, 4.0], cauchy_grid)


def test_measured_c4_is_density_norm(cauchy_stable, cauchy_grid):
    # delta = 0, r = 1: the L^1 norm of a density
    assert density.measure_c4(cauchy_stable, 0.0, 1.0, cauchy_grid) == pytest.approx(1.0, abs=1e-8)


def test_fractional_kernel_form_matches_multiplier():
    delta, x = 0.5, 0.3
    kernel_form = density.fractional_kernel_apply(lambda y: np.exp(-y * y), delta, x)
    # -(1/pi) int_0^inf u^delta sqrt(pi) e^{-u^2/4} cos(u x) du
    spectral, _ = integrate.quad(lambda u: u ** delta * np.sqrt(np.pi) * np.exp(-u * u / 4.0) * np.cos(u * x), 0.0, np.inf)
    assert kernel_form == pytest.approx(-spectral / np.pi, rel=1e-6)


def test_fractional_order_range(cauchy_triple, cauchy_grid):
    with pytest.raises(DomainError):
        density.fractional_apply(triple_symbol(cauchy_triple), 1.0, 1.0, cauchy_grid)
    with pytest.raises(DomainError):
        density.fractional_constant(1, 0.0)


def test_unresolved_lattice_suggests_points(cauchy_stable):
    grid = LatticeGrid(dim=1, half_extent=64.0, points=64)
    with pytest.raises(ResolutionError) as info:
        density.invert_density(stable_symbol(cauchy_stable), 0.01, grid)
    assert info.value.suggested_points > 64


def test_small_extent_is_rejected(cauchy_stable):
    grid = LatticeGrid(dim=1, half_extent=4.0, points=256)
    with pytest.raises(ExtentError):
        density.invert_density(stable_symbol(cauchy_stable), 1.0, grid)


def test_time_must_be_positive(cauchy_stable, cauchy_grid):
    with pytest.raises(DomainError):
        density.invert_density(stable_symbol(cauchy_stable), 0.0, cauchy_grid)


def test_grid_points_power_of_two():
    with pytest.raises(ValueError):
        LatticeGrid(dim=1, half_extent=1.0, points=100)
