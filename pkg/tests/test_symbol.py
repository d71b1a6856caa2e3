import numpy as np
import pytest

from src.core.symbol import (
    ALPHA_ONE_CONSTANT,
    alpha_one_constant_quad,
    conjugate_symmetry_residual,
    ellipticity_constant,
    full_exponent,
    gamma_vector_quad,
    homogeneity_residual,
    ray_integral,
    ray_integral_quad,
    stable_exponent,
)
from src.models.levy import LevyTriple, SpectralMeasure, StablePart
from src.utils.errors import DomainError

from .conftest import make_stable


@pytest.mark.parametrize("alpha", [0.3, 0.7, 1.3, 1.8])
@pytest.mark.parametrize("s", [0.1, -0.1, 1.0, -1.0, 10.0, -10.0])
def test_ray_integral_matches_quadrature(alpha, s):
    closed = complex(ray_integral(alpha, np.array(s)))
    numeric = ray_integral_quad(alpha, s)
    assert abs(closed - numeric) < 1e-10


@pytest.mark.parametrize("s", [0.3, 2.0, -1.7])
def test_ray_integral_at_alpha_one_matches_quadrature(s):
    closed = complex(ray_integral(1.0, np.array(s)))
    numeric = ray_integral_quad(1.0, s)
    assert abs(closed - numeric) < 1e-9


def test_alpha_one_constant():
    assert alpha_one_constant_quad() == pytest.approx(ALPHA_ONE_CONSTANT, abs=1e-8)


def test_symmetric_cauchy_exponent(cauchy_stable):
    u = np.array([0.5, 2.0, -3.0])
    psi = stable_exponent(cauchy_stable, u)
    assert np.allclose(psi.real, np.pi * np.abs(u), atol=1e-12)
    assert np.allclose(psi.imag, 0.0, atol=1e-12)


def test_exponent_has_nonnegative_real_part():
    stable = make_stable(0.7)
    u = np.linspace(-20.0, 20.0, 401)
    assert np.all(stable_exponent(stable, u).real >= -1e-12)


@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.5])
@pytest.mark.parametrize("rho", [0.25, 3.0])
def test_homogeneity(alpha, rho):
    stable = make_stable(alpha)
    for u in (0.4, -1.3, 2.5):
        scale = abs(stable_exponent(stable, rho * u)[0]) + 1.0
        assert homogeneity_residual(stable, rho, np.array([u])) < 1e-9 * scale


def test_homogeneity_in_two_dimensions():
    mu = SpectralMeasure.from_pairs([([1.0, 0.0], 1.0), ([0.0, 1.0], 0.5), ([-0.6, -0.8], 0.8)])
    stable = StablePart(alpha=1.3, mu=mu)
    u = np.array([0.7, -1.1])
    assert homogeneity_residual(stable, 2.0, u) < 1e-9 * (1.0 + abs(stable_exponent(stable, 2.0 * u)))


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.4])
def test_gamma_vector_matches_radial_integrals(alpha):
    stable = make_stable(alpha)
    assert np.allclose(stable.gamma, gamma_vector_quad(stable), atol=1e-8)


def test_ellipticity_is_positive():
    mu = SpectralMeasure.from_pairs([([1.0, 0.0], 1.0), ([0.0, 1.0], 0.5)])
    assert ellipticity_constant(StablePart(alpha=1.2, mu=mu)) > 0.0


def test_conjugate_symmetry_with_all_parts():
    triple = LevyTriple.from_config({
        "alpha": 1.2,
        "atoms": [{"dir": [1.0], "w": 1.0}, {"dir": [-1.0], "w": 0.3}],
        "a": [[0.4]],
        "b": [0.7],
        "extra": [{"y": [0.5], "rate": 0.3}, {"y": [-2.0], "rate": 1.1}],
    })
    u = np.linspace(-5.0, 5.0, 51)
    assert conjugate_symmetry_residual(triple, u) < 1e-12


def test_full_exponent_adds_gaussian_part(cauchy_stable):
    triple = LevyTriple(a=[[0.5]], b=[0.0], stable=cauchy_stable)
    u = np.array([1.0, 2.0])
    assert np.allclose(full_exponent(triple, u), 0.5 * u ** 2 + np.pi * np.abs(u))


def test_invalid_measures_rejected():
    with pytest.raises(ValueError):
        SpectralMeasure.from_pairs([([1.0, 0.1], 1.0), ([0.0, 1.0], 1.0)])
    with pytest.raises(ValueError):
        SpectralMeasure.from_pairs([([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)])
    with pytest.raises(ValueError):
        SpectralMeasure.from_pairs([([1.0], 0.0)])


def test_alpha_out_of_range():
    with pytest.raises(DomainError):
        ray_integral(2.0, np.array([1.0]))
    with pytest.raises(ValueError):
        StablePart(alpha=2.0, mu=SpectralMeasure.symmetric_1d())
