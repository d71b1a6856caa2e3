from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import gamma as gamma_fn

from ..utils.errors import DomainError, InvalidMeasureError
from .levy import SpectralAtom

#### modulator section #######################################################

class TrigTerm(BaseModel):
    """amplitude * sin(k.x + phase)"""
    model_config = ConfigDict(frozen=True)

    amplitude: float
    wavevector: List[float]
    phase: float = 0.0


class Modulator(BaseModel):
    """Bounded modulator (base + sum a_j sin(k_j.x + phi_j)) * (1 + a_t sin(w t))"""
    model_config = ConfigDict(frozen=True)

    base: float
    terms: List[TrigTerm] = []
    time_amplitude: float = 0.0
    time_frequency: float = 0.0

    @model_validator(mode="after")
    def _nonnegative(self) -> "Modulator":
        swing = sum(abs(term.amplitude) for term in self.terms)
        if self.base < swing:
            raise DomainError(f"modulator can go negative: base {self.base} < sum |a_j| = {swing}")
        if abs(self.time_amplitude) > 1.0:
            raise DomainError(f"time amplitude must satisfy |a_t| <= 1, got {self.time_amplitude}")
        return self

    @property
    def is_constant_in_x(self) -> bool:
        return all(term.amplitude == 0.0 for term in self.terms)

    def time_factor(self, t: float) -> float:
        return 1.0 + self.time_amplitude * np.sin(self.time_frequency * t)

    def value(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate at time t on points x of shape (..., d)"""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.base, dtype=float)
        for term in self.terms:
            out = out + term.amplitude * np.sin(x @ np.asarray(term.wavevector) + term.phase)
        return out * self.time_factor(t)

    def sup_bound(self) -> float:
        return (self.base + sum(abs(term.amplitude) for term in self.terms)) * (1.0 + abs(self.time_amplitude))

    def lipschitz(self) -> float:
        slope = sum(abs(term.amplitude) * np.linalg.norm(term.wavevector) for term in self.terms)
        return float(slope * (1.0 + abs(self.time_amplitude)))

    def scaled(self, factors: List[float]) -> "Modulator":
        """Same modulator with each spatial amplitude multiplied by its factor"""
        terms = [
            term.model_copy(update={"amplitude": term.amplitude * float(f)})
            for term, f in zip(self.terms, factors)
        ]
        return self.model_copy(update={"terms": terms})

    @classmethod
    def constant(cls, value: float) -> "Modulator":
        return cls(base=value)

    @classmethod
    def from_config(cls, spec: Any) -> "Modulator":
        if isinstance(spec, (int, float)):
            return cls.constant(float(spec))
        terms = [
            TrigTerm(amplitude=term["a"], wavevector=list(np.atleast_1d(term["k"])), phase=term.get("phase", 0.0))
            for term in spec.get("terms", [])
        ]
        return cls(
            base=spec["base"],
            terms=terms,
            time_amplitude=spec.get("time_amplitude", 0.0),
            time_frequency=spec.get("time_frequency", 0.0),
        )

#### jump laws section #######################################################

def sphere_area(d: int) -> float:
    """Surface measure of S^{d-1}; equals 2 for d=1 (the points +-1)"""
    return float(2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0))


class SmallJumpLaw(BaseModel):
    """Small-jump density |y|^{-d-beta'} on 0<|y|<=1, isotropic unless atoms are given"""
    model_config = ConfigDict(frozen=True)

    beta_prime: float
    atoms: Optional[List[SpectralAtom]] = None

    @field_validator("beta_prime")
    @classmethod
    def _range(cls, v: float) -> float:
        if not 0.0 <= v < 2.0:
            raise DomainError(f"beta_prime must lie in [0, 2), got {v}")
        return v

    @property
    def is_isotropic(self) -> bool:
        return self.atoms is None

    def angular_mass(self, d: int) -> float:
        if self.atoms is None:
            return sphere_area(d)
        return float(sum(atom.weight for atom in self.atoms))

    def angular_first_moment(self, d: int) -> np.ndarray:
        if self.atoms is None:
            return np.zeros(d)
        return np.sum([atom.weight * np.asarray(atom.direction) for atom in self.atoms], axis=0)


class BigJumpAtom(BaseModel):
    """Atom of the finite measure Pi scaled by eta(t, x)"""
    model_config = ConfigDict(frozen=True)

    y: List[float]
    weight: float

    @model_validator(mode="after")
    def _check(self) -> "BigJumpAtom":
        if np.linalg.norm(self.y) == 0.0:
            raise InvalidMeasureError("big-jump atom must be non-zero")
        if self.weight < 0:
            raise InvalidMeasureError(f"big-jump weight must be >= 0, got {self.weight}")
        return self

#### approximation parameters section ########################################

def smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step equal to 0 for s<=0 and 1 for s>=1"""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        left = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        right = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return left / (left + right)


class TruncationCutoff(BaseModel):
    """Radial cutoff chi_delta: 0 on |y| <= delta/2, 1 on |y| >= delta"""
    model_config = ConfigDict(frozen=True)

    delta_cut: float

    @field_validator("delta_cut")
    @classmethod
    def _range(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise DomainError(f"delta_cut must lie in (0, 1), got {v}")
        return v

    def weight(self, radius: np.ndarray) -> np.ndarray:
        return smooth_step(2.0 * np.asarray(radius, dtype=float) / self.delta_cut - 1.0)


class Mollifier(BaseModel):
    """Scaled bump phi_n(x) = n^d phi(n x)"""
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1, le=3)
    scale: int = Field(ge=1)

    @property
    def support_radius(self) -> float:
        return 1.0 / self.scale

    def transform_argument(self, wavevector: List[float]) -> np.ndarray:
        """phi_n^(k) = phi^(k / n)"""
        k = np.asarray(wavevector, dtype=float)
        if k.shape[-1] != self.dim:
            raise DomainError(f"wavevector {wavevector} is not in R^{self.dim}")
        return k / self.scale

#### kernel model section ####################################################

class JumpKernelModel(BaseModel):
    """M(t,x,dy) = kappa(t,x) small-jump law + eta(t,x) Pi, optionally truncated"""
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1, le=3)
    beta: float
    small: SmallJumpLaw
    kappa: Modulator
    eta: Modulator = Modulator(base=0.0)
    big: List[BigJumpAtom] = []
    cutoff: Optional[TruncationCutoff] = None
    mollified_by: Optional[Mollifier] = None

    @model_validator(mode="after")
    def _check_model(self) -> "JumpKernelModel":
        if not 0.0 < self.beta < 2.0:
            raise DomainError(f"beta must lie in (0, 2), got {self.beta}")
        if not self.small.beta_prime < self.beta:
            raise DomainError(f"need beta' < beta, got beta'={self.small.beta_prime}, beta={self.beta}")
        for modulator in (self.kappa, self.eta):
            for term in modulator.terms:
                if len(term.wavevector) != self.dim:
                    raise DomainError(f"modulator wavevector {term.wavevector} is not in R^{self.dim}")
        for atom in self.big:
            if len(atom.y) != self.dim:
                raise InvalidMeasureError(f"big-jump atom {atom.y} is not in R^{self.dim}")
        for atom in self.small.atoms or []:
            if len(atom.direction) != self.dim:
                raise InvalidMeasureError(f"small-jump direction {atom.direction} is not in R^{self.dim}")
            if abs(np.linalg.norm(atom.direction) - 1.0) > 1e-12:
                raise InvalidMeasureError(f"small-jump direction {atom.direction} is not a unit vector")
        return self

    @property
    def big_jumps(self) -> np.ndarray:
        if not self.big:
            return np.zeros((0, self.dim))
        return np.array([atom.y for atom in self.big], dtype=float)

    @property
    def big_weights(self) -> np.ndarray:
        return np.array([atom.weight for atom in self.big], dtype=float)

    @property
    def is_null(self) -> bool:
        no_small = self.kappa.sup_bound() == 0.0
        no_big = self.eta.sup_bound() == 0.0 or float(self.big_weights.sum()) == 0.0
        return no_small and no_big

    def check_alpha(self, alpha: float) -> None:
        if not self.beta < alpha:
            raise DomainError(f"need beta < alpha, got beta={self.beta}, alpha={alpha}")

    def beta_moment_bound(self) -> float:
        """B_M = sup_{t,x} int 1 ^ |y|^beta M(t,x,dy), exact for the parametric family"""
        small = self.kappa.sup_bound() * self.small.angular_mass(self.dim) / (self.beta - self.small.beta_prime)
        if not self.big:
            return float(small)
        norms = np.linalg.norm(self.big_jumps, axis=1)
        big = self.eta.sup_bound() * float(np.sum(self.big_weights * np.minimum(1.0, norms ** self.beta)))
        return float(small + big)

    def scaled(self, factor: float) -> "JumpKernelModel":
        """Kernel multiplied by a constant factor"""
        def _scale(m: Modulator) -> Modulator:
            terms = [t.model_copy(update={"amplitude": t.amplitude * factor}) for t in m.terms]
            return m.model_copy(update={"base": m.base * factor, "terms": terms})
        return self.model_copy(update={"kappa": _scale(self.kappa), "eta": _scale(self.eta)})

    @classmethod
    def zero(cls, dim: int, beta: float = 0.5) -> "JumpKernelModel":
        return cls(dim=dim, beta=beta, small=SmallJumpLaw(beta_prime=0.0), kappa=Modulator.constant(0.0))

    @classmethod
    def from_config(cls, spec: Dict[str, Any], dim: int) -> "JumpKernelModel":
        """Build from the config keys beta, beta_prime, kappa, eta, Pi_atoms, small_atoms, delta_cut"""
        small_atoms = None
        if spec.get("small_atoms"):
            small_atoms = [
                SpectralAtom(direction=list(np.atleast_1d(a["dir"])), weight=a["w"]) for a in spec["small_atoms"]
            ]
        big = [BigJumpAtom(y=list(np.atleast_1d(a["y"])), weight=a["w"]) for a in spec.get("Pi_atoms", [])]
        cutoff = TruncationCutoff(delta_cut=spec["delta_cut"]) if spec.get("delta_cut") else None
        return cls(
            dim=dim,
            beta=spec["beta"],
            small=SmallJumpLaw(beta_prime=spec.get("beta_prime", 0.0), atoms=small_atoms),
            kappa=Modulator.from_config(spec.get("kappa", spec.get("kappa_sup", 0.0))),
            eta=Modulator.from_config(spec.get("eta", spec.get("eta_sup", 0.0))),
            big=big,
            cutoff=cutoff,
        )
