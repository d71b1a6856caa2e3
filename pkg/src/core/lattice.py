from typing import Callable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.ndimage import map_coordinates

from ..utils.errors import DomainError

#### lattice geometry section ################################################

class LatticeGrid(BaseModel):
    """Periodic lattice x_k = -L + k h on [-L, L)^d with h = 2L/N"""
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1, le=3)
    half_extent: float = Field(gt=0)
    points: int

    @field_validator("points")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v < 4 or v & (v - 1):
            raise DomainError(f"points per axis must be a power of two >= 4, got {v}")
        return v

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def max_frequency(self) -> float:
        return np.pi / self.spacing

    def axis(self) -> np.ndarray:
        return -self.half_extent + self.spacing * np.arange(self.points)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (N,)*d + (d,)"""
        mesh = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def frequency_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    def frequencies(self) -> np.ndarray:
        """Dual lattice in fft order, shape (N,)*d + (d,), step pi/L"""
        mesh = np.meshgrid(*([self.frequency_axis()] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def alternating_sign(self) -> np.ndarray:
        """(-1)^(m_1+...+m_d) in fft order; moves the inversion origin to x_0 = -L"""
        idx = np.indices(self.shape).sum(axis=0)
        return np.where(idx % 2 == 0, 1.0, -1.0)

    def nyquist_mask(self) -> np.ndarray:
        """True on frequency nodes with some coordinate at the Nyquist index"""
        idx = np.indices(self.shape)
        return np.any(idx == self.points // 2, axis=0)

    def rescaled(self, factor: float) -> "LatticeGrid":
        return self.model_copy(update={"half_extent": self.half_extent * factor})

    def with_points(self, points: int) -> "LatticeGrid":
        return self.model_copy(update={"points": points})

    def index_of(self, x: np.ndarray) -> np.ndarray:
        """Fractional lattice index of points x, shape (..., d) -> (d, ...)"""
        x = np.asarray(x, dtype=float)
        return np.moveaxis((x + self.half_extent) / self.spacing, -1, 0)

#### lattice field section ###################################################

class LatticeField(BaseModel):
    """Real or complex samples on a LatticeGrid"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: LatticeGrid
    values: np.ndarray

    @model_validator(mode="after")
    def _shape(self) -> "LatticeField":
        if self.values.shape != self.grid.shape:
            raise DomainError(f"field shape {self.values.shape} does not match lattice {self.grid.shape}")
        return self

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mass(self) -> float:
        return float(np.real(self.values.sum()) * self.grid.cell_volume)

    def with_values(self, values: np.ndarray) -> "LatticeField":
        return LatticeField(grid=self.grid, values=values)

    def interpolate(self, points: np.ndarray, order: int = 5) -> np.ndarray:
        """Periodic spline interpolation at points of shape (..., d)"""
        coords = self.grid.index_of(points)
        values = self.values
        if np.iscomplexobj(values):
            re = map_coordinates(values.real, coords, order=order, mode="grid-wrap")
            im = map_coordinates(values.imag, coords, order=order, mode="grid-wrap")
            return re + 1j * im
        return map_coordinates(values, coords, order=order, mode="grid-wrap")

    def at(self, x: List[float]) -> float:
        """Value at a single point"""
        point = np.asarray(x, dtype=float).reshape(1, self.grid.dim)
        return float(np.real(self.interpolate(point)[0]))

#### space-time function section #############################################

class SpaceTimeFunction(BaseModel):
    """g(t, x) on a lattice: sampled on a time grid or given by a callable"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: LatticeGrid
    times: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None  # shape (K+1,) + grid.shape
    func: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    extension: Literal["zero", "constant"] = "zero"
    time_frozen: bool = False
    bound: Optional[float] = None

    @model_validator(mode="after")
    def _check(self) -> "SpaceTimeFunction":
        if (self.samples is None) == (self.func is None):
            raise DomainError("SpaceTimeFunction needs exactly one of samples or func")
        if self.samples is not None:
            if self.times is None or self.samples.shape != (len(self.times),) + self.grid.shape:
                raise DomainError("samples must have shape (len(times),) + lattice shape")
            if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
                raise DomainError("time grid must have >= 2 strictly increasing nodes")
        return self

    @classmethod
    def from_samples(cls, grid: LatticeGrid, times: np.ndarray, samples: np.ndarray,
                     extension: Literal["zero", "constant"] = "zero") -> "SpaceTimeFunction":
        return cls(grid=grid, times=np.asarray(times, dtype=float), samples=np.asarray(samples), extension=extension)

    @classmethod
    def from_callable(cls, grid: LatticeGrid, func: Callable[[float, np.ndarray], np.ndarray],
                      bound: Optional[float] = None, time_frozen: bool = False) -> "SpaceTimeFunction":
        """func(t, coordinates) -> values on the lattice"""
        return cls(grid=grid, func=func, bound=bound, time_frozen=time_frozen)

    @classmethod
    def frozen(cls, field: LatticeField) -> "SpaceTimeFunction":
        values = field.values
        return cls(grid=field.grid, func=lambda t, x: values, bound=field.sup_norm(), time_frozen=True)

    @classmethod
    def constant(cls, grid: LatticeGrid, value: float) -> "SpaceTimeFunction":
        values = np.full(grid.shape, float(value))
        return cls(grid=grid, func=lambda t, x: values, bound=abs(float(value)), time_frozen=True)

    @property
    def horizon(self) -> Optional[float]:
        return None if self.times is None else float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        return self.at_many(np.array([t]))[0]

    def at_many(self, ts: np.ndarray) -> np.ndarray:
        """Values at several times, shape (len(ts),) + lattice shape"""
        ts = np.asarray(ts, dtype=float)
        if self.func is not None:
            if self.time_frozen:
                frame = np.asarray(self.func(0.0, self.grid.coordinates()))
                return np.broadcast_to(frame, ts.shape + self.grid.shape)
            coords = self.grid.coordinates()
            return np.stack([np.asarray(self.func(float(t), coords)) for t in ts])
        times, samples = self.times, self.samples
        k = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
        span = times[k + 1] - times[k]
        w = np.clip((ts - times[k]) / span, 0.0, 1.0)
        w = w.reshape(w.shape + (1,) * self.grid.dim)
        out = (1.0 - w) * samples[k] + w * samples[k + 1]
        beyond = ts > times[-1]
        if np.any(beyond) and self.extension == "zero":
            out[beyond] = 0.0
        return out

    def field_at(self, t: float) -> LatticeField:
        return LatticeField(grid=self.grid, values=self.at(t))

    def sup_norm(self) -> float:
        """||g|| from the declared bound, the samples, or the single frame of a time-frozen callable"""
        if self.bound is not None:
            return self.bound
        if self.samples is not None:
            return float(np.max(np.abs(self.samples)))
        if self.time_frozen:
            return float(np.max(np.abs(self.at(0.0))))
        raise DomainError("time-dependent callable has no sup bound; pass bound= to from_callable")

    def map_frames(self, fn: Callable[[float, np.ndarray], np.ndarray], times: np.ndarray) -> "SpaceTimeFunction":
        """Sampled function with frames fn(t_k, g(t_k)) on the given time grid"""
        times = np.asarray(times, dtype=float)
        frames = np.stack([fn(float(t), self.at(float(t))) for t in times])
        return SpaceTimeFunction.from_samples(self.grid, times, frames, extension=self.extension)
