import numpy as np
import pytest

from src.core.lattice import LatticeGrid
from src.models.kernel import JumpKernelModel
from src.models.levy import LevyTriple, SpectralMeasure, StablePart


def make_stable(alpha: float, weights=(1.0, 0.4)) -> StablePart:
    return StablePart(alpha=alpha, mu=SpectralMeasure.from_pairs([([1.0], weights[0]), ([-1.0], weights[1])]))


@pytest.fixture
def cauchy_stable() -> StablePart:
    """Symmetric alpha=1 part with psi~(u) = pi |u|"""
    return StablePart(alpha=1.0, mu=SpectralMeasure.symmetric_1d(1.0))


@pytest.fixture
def cauchy_triple(cauchy_stable) -> LevyTriple:
    return LevyTriple.pure_stable(cauchy_stable)


@pytest.fixture
def cauchy_grid() -> LatticeGrid:
    return LatticeGrid(dim=1, half_extent=64.0, points=4096)


@pytest.fixture
def periodic_grid() -> LatticeGrid:
    """Extent 8 pi so that integer wavenumbers are lattice periodic"""
    return LatticeGrid(dim=1, half_extent=8.0 * np.pi, points=512)


@pytest.fixture
def stable_triple() -> LevyTriple:
    return LevyTriple.from_config({
        "alpha": 1.5,
        "atoms": [{"dir": [1.0], "w": 1.0}, {"dir": [-1.0], "w": 0.6}],
        "a": [[0.1]],
    })


@pytest.fixture
def flagship_kernel() -> JumpKernelModel:
    """beta=0.5, beta'=0.3, kappa = c (1 + sin(x)/2), one big-jump atom"""
    return JumpKernelModel.from_config({
        "beta": 0.5,
        "beta_prime": 0.3,
        "kappa": {"base": 0.02, "terms": [{"a": 0.01, "k": [1.0]}]},
        "eta": 0.02,
        "Pi_atoms": [{"y": [1.5], "w": 1.0}],
    }, dim=1)
