import numpy as np
import pytest

from src.core import approx
from src.core.perturb import small_jump_symbol
from src.models.kernel import JumpKernelModel, Modulator, Mollifier, TruncationCutoff
from src.utils.errors import DomainError


@pytest.fixture
def unscaled_kernel() -> JumpKernelModel:
    return JumpKernelModel.from_config({
        "beta": 0.5,
        "beta_prime": 0.3,
        "kappa": {"base": 1.0, "terms": [{"a": 0.5, "k": [1.0]}]},
        "eta": 1.0,
        "Pi_atoms": [{"y": [1.5], "w": 0.3}],
    }, dim=1)


#### bump ####

@pytest.mark.parametrize("d", [1, 2])
def test_bump_transform_at_origin(d):
    assert float(approx.bump_transform(np.zeros(d), d)) == pytest.approx(1.0)


def test_bump_transform_bounded():
    values = approx.bump_transform(np.array([[1.0], [5.0], [20.0]]), 1)
    assert np.all(np.abs(values) <= 1.0)


@pytest.mark.parametrize("d,n", [(1, 1), (1, 8), (2, 4)])
def test_mollifier_has_unit_mass(d, n):
    assert approx.mollifier_mass(d, n) == pytest.approx(1.0, rel=1e-9)


def test_first_moment_scales_with_n():
    assert approx.bump_first_moment(1, 4) == pytest.approx(approx.bump_first_moment(1) / 4.0)
    assert 0.0 < approx.bump_first_moment(1) < 1.0

#### mollification ####

def test_mollified_kernel_keeps_moment_bound(unscaled_kernel):
    smooth = approx.mollify_kernel(unscaled_kernel, 4)
    assert smooth.mollified_by == Mollifier(dim=1, scale=4)
    assert smooth.mollified_by.support_radius == 0.25
    assert smooth.kappa.base == unscaled_kernel.kappa.base
    assert smooth.beta_moment_bound() <= unscaled_kernel.beta_moment_bound()


def test_mollifier_scales_frequencies():
    mollifier = Mollifier(dim=2, scale=4)
    assert np.allclose(mollifier.transform_argument([2.0, -8.0]), [0.5, -2.0])
    with pytest.raises(DomainError):
        mollifier.transform_argument([1.0])


def test_mollified_modulator_damps_each_term():
    modulator = Modulator.from_config({"base": 1.0, "terms": [{"a": 0.5, "k": [1.0]}, {"a": 0.2, "k": [3.0]}]})
    smooth = approx.mollify_modulator(modulator, Mollifier(dim=1, scale=2))
    for before, after, k in zip(modulator.terms, smooth.terms, (1.0, 3.0)):
        assert after.amplitude == pytest.approx(before.amplitude * float(approx.bump_transform(np.array([k / 2.0]), 1)))
    assert smooth.base == modulator.base


def test_mollify_scale_must_be_positive(unscaled_kernel):
    with pytest.raises(DomainError):
        approx.mollify_kernel(unscaled_kernel, 0)


def test_modulator_gap_within_lipschitz_bound(periodic_grid):
    modulator = Modulator.from_config({"base": 1.0, "terms": [{"a": 0.5, "k": [1.0]}]})
    for n in (2, 8):
        gap, bound = approx.modulator_mollify_gap(modulator, n, periodic_grid)
        assert gap <= bound


def test_mollify_error_below_bound(unscaled_kernel, periodic_grid):
    rows, _ = approx.mollify_sweep(approx.TrigTestFunction.cosine(), unscaled_kernel, 1.5, [4, 16], periodic_grid)
    for row in rows:
        assert row["measured_sup"] <= row["bound"]


def test_constant_modulator_gap_is_pure_smoothing(periodic_grid):
    model = JumpKernelModel.from_config({"beta": 0.5, "beta_prime": 0.3, "kappa": 1.0}, dim=1)
    n = 4
    measured, _ = approx.mollify_error(approx.TrigTestFunction.cosine(), model, 1.5, n, periodic_grid)
    sigma = abs(small_jump_symbol(model, 1.5, np.array([[1.0]]))[0])
    # |sigma(1)| (1 - phi^(1/n)), up to the lattice sampling of |cos|
    expected = sigma * (1.0 - float(approx.bump_transform(np.array([1.0 / n]), 1)))
    assert measured == pytest.approx(expected, rel=2e-3)


def test_trig_norms():
    f = approx.TrigTestFunction(amplitudes=[1.0, 0.5], wavevectors=[[1.0], [2.0]])
    assert f.c_norm(2) == pytest.approx(3.0 + 0.5 * 7.0)
    assert f.values(np.array([[0.0]]))[0] == pytest.approx(1.5)

#### truncation ####

def test_truncation_error_below_bound(unscaled_kernel, periodic_grid):
    rows, _ = approx.truncation_sweep(approx.TrigTestFunction.cosine(), unscaled_kernel, 1.5, [0.1, 0.3], periodic_grid)
    for row in rows:
        assert row["measured_sup"] <= row["bound"]


def test_mass_envelope_dominates_exact_mass(unscaled_kernel):
    cut = approx.truncate_kernel(unscaled_kernel, 0.2)
    small, big = approx.truncated_mass(cut)
    envelope = approx.truncated_mass_bound(cut)
    assert cut.kappa.sup_bound() * small + cut.eta.sup_bound() * big <= envelope
    assert small > 0.0 and big == pytest.approx(0.3)


def test_untruncated_mass_is_rejected(unscaled_kernel):
    with pytest.raises(DomainError):
        approx.truncated_mass_bound(unscaled_kernel)


def test_cutoff_range(unscaled_kernel):
    with pytest.raises(ValueError):
        approx.truncate_kernel(unscaled_kernel, 1.5)


def test_radial_table_samples_support():
    table = approx.RadialTable.build(0.3, TruncationCutoff(delta_cut=0.2))
    radii = table.sample(np.linspace(0.0, 1.0, 101))
    assert radii.min() >= 0.1 - 1e-12
    assert radii.max() <= 1.0 + 1e-12
    assert np.all(np.diff(radii) >= 0.0)

#### compensator ####

def test_compensator_vanishes_below_one(unscaled_kernel):
    assert np.all(approx.compensator(unscaled_kernel, 0.8, 0.0, np.zeros(3)) == 0.0)


def test_compensator_needs_cutoff(unscaled_kernel):
    with pytest.raises(DomainError):
        approx.compensator(unscaled_kernel, 1.5, 0.0, np.zeros(3))


def test_symmetric_small_law_has_no_compensator(unscaled_kernel):
    cut = approx.truncate_kernel(unscaled_kernel, 0.2)
    assert np.allclose(approx.compensator(cut, 1.5, 0.0, np.linspace(-1.0, 1.0, 5)), 0.0)


def test_one_sided_compensator_between_radial_bounds():
    model = JumpKernelModel.from_config({
        "beta": 0.5, "beta_prime": 0.3, "kappa": 1.0, "small_atoms": [{"dir": 1.0, "w": 1.0}], "delta_cut": 0.2,
    }, dim=1)
    value = float(approx.compensator(model, 1.5, 0.0, np.array([0.0]))[0, 0])
    # int_a^1 r^{-0.3} dr = (1 - a^0.7) / 0.7
    assert (1.0 - 0.2 ** 0.7) / 0.7 <= value <= (1.0 - 0.1 ** 0.7) / 0.7
    assert approx.compensator_lipschitz(model, 1.5) == 0.0
