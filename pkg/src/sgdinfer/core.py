"""Shared numeric vocabulary: parameter vectors, symmetric matrices, step
schedules, observations and deterministic seeding.

Vectors are plain float64 ``numpy`` arrays. Most routines in the package
accept an optional leading batch axis so that many independent streams can be
advanced in lockstep; nothing in this module mixes rows of a batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not agree with the model dimension."""


def as_param_vector(values, name: str = "beta") -> np.ndarray:
    """Validate and return ``values`` as a finite 1-d float64 array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"{name} must be a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return ``(m + m')/2`` over the last two axes; the result is exactly symmetric."""
    return 0.5 * (m + np.swapaxes(m, -1, -2))


class SymMatrix:
    """Packed upper-triangle storage of a symmetric d x d matrix.

    ``m[i, j]`` and ``m[j, i]`` address the same slot, so symmetry cannot be
    broken by assignment. Estimators in this package return dense symmetric
    arrays; this type is for callers that want the structural guarantee.
    """

    def __init__(self, d: int):
        if d < 1:
            raise DimensionError("d must be >= 1")
        self.d = d
        self._data = np.zeros(d * (d + 1) // 2)

    def _slot(self, i: int, j: int) -> int:
        if not (0 <= i < self.d and 0 <= j < self.d):
            raise IndexError((i, j))
        if i > j:
            i, j = j, i
        return i * self.d - i * (i - 1) // 2 + (j - i)

    def __getitem__(self, ij):
        return float(self._data[self._slot(*ij)])

    def __setitem__(self, ij, value):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError("SymMatrix entries must be finite")
        self._data[self._slot(*ij)] = value

    @classmethod
    def from_array(cls, m) -> SymMatrix:
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        out = cls(m.shape[0])
        iu = np.triu_indices(out.d)
        sym = symmetrize(m)
        if not np.all(np.isfinite(sym)):
            raise ValueError("SymMatrix entries must be finite")
        out._data[:] = sym[iu]
        return out

    def to_array(self) -> np.ndarray:
        m = np.zeros((self.d, self.d))
        iu = np.triu_indices(self.d)
        m[iu] = self._data
        m.T[iu] = self._data
        return m

    def __array__(self, dtype=None, copy=None):
        m = self.to_array()
        return m if dtype is None else m.astype(dtype)

    def __repr__(self):
        return f"SymMatrix({self.to_array()!r})"


@dataclass(frozen=True)
class StepSchedule:
    """Learning-rate law ``gamma_t = gamma0 * t**(-a)`` with ``1/2 < a < 1``."""

    gamma0: float
    a: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma0) and self.gamma0 > 0):
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not (0.5 < self.a < 1.0):
            raise ValueError(f"exponent a must lie in (1/2, 1), got {self.a}")

    def __call__(self, t: int) -> float:
        return step_size(self, t)


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    return schedule.gamma0 * float(t) ** (-schedule.a)


class Observation(NamedTuple):
    """One data point: covariates ``x`` and response ``y``."""

    x: np.ndarray
    y: float


def make_observation(x, y, d: int | None = None) -> Observation:
    x = as_param_vector(x, "x")
    if d is not None and x.shape[0] != d:
        raise DimensionError(f"observation has dimension {x.shape[0]}, model expects {d}")
    y = float(y)
    if not np.isfinite(y):
        raise ValueError("response y must be finite")
    return Observation(x, y)


@dataclass(frozen=True)
class SeedSpec:
    """A reproducible random stream identified by ``(master_seed, stream_index)``.

    Streams are built on the counter-based Philox generator keyed through
    ``numpy.random.SeedSequence`` spawn keys, so distinct pairs give
    independent streams and equal pairs give bit-identical ones regardless of
    which process or thread asks for them.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")

    def generator(self, *subkeys: int) -> np.random.Generator:
        """Generator for this stream; ``subkeys`` select further independent substreams."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index, *subkeys))
        return np.random.Generator(np.random.Philox(ss))
