from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.errors import DomainError, InvalidMeasureError

UNIT_TOL = 1e-12
NONDEGENERACY_TOL = 1e-10
PSD_TOL = 1e-10

#### spectral measure section ################################################

class SpectralAtom(BaseModel):
    """One atom of a discrete measure on the unit sphere"""
    model_config = ConfigDict(frozen=True)

    direction: List[float]
    weight: float

    @field_validator("weight")
    @classmethod
    def _positive_weight(cls, v: float) -> float:
        if not v > 0:
            raise InvalidMeasureError(f"atom weight must be > 0, got {v}")
        return v


class SpectralMeasure(BaseModel):
    """Finite non-degenerate measure mu on S^{d-1} driving the stable part"""
    model_config = ConfigDict(frozen=True)

    atoms: List[SpectralAtom] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_atoms(self) -> "SpectralMeasure":
        dims = {len(a.direction) for a in self.atoms}
        if len(dims) != 1:
            raise InvalidMeasureError(f"atoms have mixed dimensions {sorted(dims)}")
        dirs = self.directions
        norms = np.linalg.norm(dirs, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
        if bad.size:
            raise InvalidMeasureError(
                f"direction {bad[0]} is not a unit vector (|xi| = {norms[bad[0]]:.15g})"
            )
        smallest = self.smallest_singular_value()
        if not smallest > NONDEGENERACY_TOL:
            raise InvalidMeasureError(
                f"measure is degenerate: directions do not span R^{self.dim} "
                f"(smallest singular value {smallest:.3e})"
            )
        return self

    @property
    def dim(self) -> int:
        return len(self.atoms[0].direction)

    @property
    def directions(self) -> np.ndarray:
        return np.array([a.direction for a in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms], dtype=float)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def smallest_singular_value(self) -> float:
        scaled = self.weights[:, None] * self.directions
        if scaled.shape[0] < scaled.shape[1]:
            return 0.0
        return float(np.linalg.svd(scaled, compute_uv=False).min())

    @classmethod
    def from_pairs(cls, pairs: List[tuple], normalize: bool = False) -> "SpectralMeasure":
        """Build from (direction, weight) pairs, optionally normalising directions"""
        atoms = []
        for direction, weight in pairs:
            vec = np.atleast_1d(np.asarray(direction, dtype=float))
            if normalize:
                vec = vec / np.linalg.norm(vec)
            atoms.append(SpectralAtom(direction=vec.tolist(), weight=float(weight)))
        return cls(atoms=atoms)

    @classmethod
    def symmetric_1d(cls, weight: float = 1.0) -> "SpectralMeasure":
        return cls.from_pairs([([1.0], weight), ([-1.0], weight)])


class StablePart(BaseModel):
    """alpha-stable component with Levy measure mu(dxi) r^{-1-alpha} dr"""
    model_config = ConfigDict(frozen=True)

    alpha: float
    mu: SpectralMeasure

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        if not 0.0 < v < 2.0:
            raise DomainError(f"alpha must lie in (0, 2), got {v}")
        return v

    @property
    def dim(self) -> int:
        return self.mu.dim

    @property
    def gamma(self) -> np.ndarray:
        """Centering vector making psi~ homogeneous (closed form per alpha branch)"""
        first_moment = (self.mu.weights[:, None] * self.mu.directions).sum(axis=0)
        if self.alpha == 1.0:
            return first_moment
        # alpha<1: -int_{|y|<=1} y nu~ ; alpha>1: int_{|y|>1} y nu~ ; both reduce to this
        return first_moment / (self.alpha - 1.0)

#### levy triple section #####################################################

class JumpAtom(BaseModel):
    """Atom of the extra finite jump measure"""
    model_config = ConfigDict(frozen=True)

    y: List[float]
    rate: float

    @field_validator("rate")
    @classmethod
    def _nonnegative_rate(cls, v: float) -> float:
        if v < 0 or not np.isfinite(v):
            raise InvalidMeasureError(f"jump rate must be finite and >= 0, got {v}")
        return v

    @field_validator("y")
    @classmethod
    def _nonzero_jump(cls, v: List[float]) -> List[float]:
        if np.linalg.norm(v) == 0.0:
            raise InvalidMeasureError("jump vector y must be non-zero")
        return v


class LevyTriple(BaseModel):
    """Generator L = sum a_ij d_ij + b.grad + stable part + finite extra jumps"""
    model_config = ConfigDict(frozen=True)

    a: List[List[float]]
    b: List[float]
    stable: StablePart
    extra: List[JumpAtom] = []

    @model_validator(mode="after")
    def _check_triple(self) -> "LevyTriple":
        d = self.stable.dim
        a = self.diffusion
        if a.shape != (d, d):
            raise DomainError(f"diffusion matrix must be {d}x{d}, got {a.shape}")
        if len(self.b) != d:
            raise DomainError(f"drift must have length {d}, got {len(self.b)}")
        if not np.allclose(a, a.T, atol=UNIT_TOL, rtol=0.0):
            raise DomainError("diffusion matrix must be symmetric")
        min_eig = float(np.linalg.eigvalsh(a).min())
        if min_eig < -PSD_TOL:
            raise DomainError(f"diffusion matrix must be positive semi-definite (min eigenvalue {min_eig:.3e})")
        for atom in self.extra:
            if len(atom.y) != d:
                raise InvalidMeasureError(f"extra jump {atom.y} is not in R^{d}")
        return self

    @property
    def dim(self) -> int:
        return self.stable.dim

    @property
    def alpha(self) -> float:
        return self.stable.alpha

    @property
    def diffusion(self) -> np.ndarray:
        return np.array(self.a, dtype=float).reshape(len(self.a), -1)

    @property
    def drift(self) -> np.ndarray:
        return np.array(self.b, dtype=float)

    @property
    def extra_jumps(self) -> np.ndarray:
        if not self.extra:
            return np.zeros((0, self.dim))
        return np.array([j.y for j in self.extra], dtype=float)

    @property
    def extra_rates(self) -> np.ndarray:
        return np.array([j.rate for j in self.extra], dtype=float)

    @classmethod
    def pure_stable(cls, stable: StablePart) -> "LevyTriple":
        d = stable.dim
        return cls(a=np.zeros((d, d)).tolist(), b=[0.0] * d, stable=stable)

    @classmethod
    def from_config(cls, spec: Dict[str, Any]) -> "LevyTriple":
        """Build from the config keys alpha, atoms, a, b, extra"""
        atoms = [SpectralAtom(direction=list(np.atleast_1d(a["dir"])), weight=a["w"]) for a in spec["atoms"]]
        stable = StablePart(alpha=spec["alpha"], mu=SpectralMeasure(atoms=atoms))
        d = stable.dim
        a = spec.get("a", np.zeros((d, d)).tolist())
        b = spec.get("b", [0.0] * d)
        extra = [JumpAtom(y=list(np.atleast_1d(e["y"])), rate=e["rate"]) for e in spec.get("extra", [])]
        return cls(a=a, b=list(np.atleast_1d(b)), stable=stable, extra=extra)
