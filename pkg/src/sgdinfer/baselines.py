"""Competing variance estimators for the averaged SGD iterate.

* ``PlugIn``: online sandwich ``H^-1 S H^-1`` from per-observation Hessian
  and score contributions.
* ``RecursiveBatchMeans``: overlapping batch means updated in constant
  memory; the batch for iterate ``t`` runs from the largest anchor ``<= t``
  through ``t``.
* ``batch_means_fixed``: offline batch means over ``M + 1`` contiguous
  batches with the first discarded.

All of these target the asymptotic variance itself, so intervals use
normal quantiles (:func:`normal_ci`).
"""

from __future__ import annotations

import itertools
import math
from statistics import NormalDist
from typing import Iterable, Iterator

import numpy as np

from .core import DimensionError, symmetrize
from .inference import ConfidenceInterval
from .models import GradientModel


class SingularHessianError(ValueError):
    pass


def sandwich(H, S) -> np.ndarray:
    """``H^-1 S H^-1`` by two linear solves; works on stacks of matrices."""
    H = np.asarray(H, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    cond = np.linalg.cond(H)
    if not np.all(np.isfinite(cond)) or np.any(cond >= 1e12):
        raise SingularHessianError("Hessian estimate is singular or ill-conditioned")
    X = np.linalg.solve(H, S)
    return symmetrize(np.swapaxes(np.linalg.solve(H, np.swapaxes(X, -1, -2)), -1, -2))


class PlugIn:
    """Running sums of Hessian and score outer products."""

    def __init__(self, d: int, batch_shape: tuple = ()):
        self.d = d
        self.n = 0
        self.H_sum = np.zeros(batch_shape + (d, d))
        self.S_sum = np.zeros(batch_shape + (d, d))

    def update(self, model: GradientModel, beta_prev, x, y):
        """``beta_prev`` is the iterate before this observation was consumed."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.H_sum.shape[:-1]:
            raise DimensionError(f"expected x of shape {self.H_sum.shape[:-1]}, got {x.shape}")
        self.H_sum += model.hessian_contrib(beta_prev, x, y)
        self.S_sum += model.score_outer(beta_prev, x, y)
        self.n += 1
        return self

    @property
    def H(self):
        return self.H_sum / self.n

    @property
    def S(self):
        return self.S_sum / self.n

    def finalize(self) -> np.ndarray:
        if self.n == 0:
            raise SingularHessianError("no observations")
        return sandwich(self.H, self.S)


def plugin_update(state: PlugIn, model: GradientModel, beta_prev, obs) -> PlugIn:
    return state.update(model, beta_prev, obs.x, obs.y)


def plugin_finalize(state: PlugIn) -> np.ndarray:
    return state.finalize()


# ---------------------------------------------------------------------------
# batch means


def power_anchors(a: float) -> Iterator[int]:
    """Anchors ``floor(m**(1/(1-a)))`` for m = 1, 2, ..., made strictly increasing."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    expo = 1.0 / (1.0 - a)
    last = 0
    for m in itertools.count(1):
        v = int(math.floor(m**expo))
        if v > last:
            last = v
            yield v


def arithmetic_anchors(step: int = 2, start: int = 1) -> Iterator[int]:
    """``start, start + step, ...``; ``step=2`` gives the layout {1, 3, 5, ...}."""
    return itertools.count(start, step)


class RecursiveBatchMeans:
    """Overlapping batch means with constant-memory sufficient statistics.

    With ``S_t`` the sum of the current batch and ``l_t`` its length, the
    estimate is ``sum_t (S_t - l_t bb)(S_t - l_t bb)' / sum_t l_t``, expanded
    into running sums so ``bb`` can be supplied at finalize time.
    """

    def __init__(self, d: int, anchors: Iterable[int], batch_shape: tuple = (), shift=None):
        self.d = d
        self.t = 0
        self._anchors = iter(anchors)
        self.next_anchor = next(self._anchors)
        if self.next_anchor != 1:
            raise ValueError("the first anchor must be 1")
        self.shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=np.float64)
        self.open_sum = np.zeros(batch_shape + (d,))
        self.open_len = 0
        self.SS = np.zeros(batch_shape + (d, d))
        self.LS = np.zeros(batch_shape + (d,))
        self.L2 = 0.0
        self.L = 0.0
        self.n_batches = 0

    def update(self, beta):
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != self.open_sum.shape:
            raise DimensionError(f"expected shape {self.open_sum.shape}, got {beta.shape}")
        self.t += 1
        if self.t == self.next_anchor:
            self.open_sum = np.zeros_like(self.open_sum)
            self.open_len = 0
            self.next_anchor = next(self._anchors)
            if self.next_anchor <= self.t:
                raise ValueError("anchors must be strictly increasing")
        self.open_sum = self.open_sum + (beta - self.shift)
        self.open_len += 1
        s, l = self.open_sum, float(self.open_len)
        self.SS += s[..., :, None] * s[..., None, :]
        self.LS += l * s
        self.L2 += l * l
        self.L += l
        self.n_batches += 1
        return self

    def finalize(self, beta_bar) -> np.ndarray:
        if self.L == 0:
            raise ValueError("no batches: total weight is zero")
        bb = np.asarray(beta_bar, dtype=np.float64) - self.shift
        cross = bb[..., :, None] * self.LS[..., None, :]
        m = self.SS - cross - np.swapaxes(cross, -1, -2) + self.L2 * (bb[..., :, None] * bb[..., None, :])
        return symmetrize(m) / self.L


def bm_recursive_update(state: RecursiveBatchMeans, beta_t) -> RecursiveBatchMeans:
    return state.update(beta_t)


def bm_finalize(state: RecursiveBatchMeans, beta_bar) -> np.ndarray:
    return state.finalize(beta_bar)


def batch_means_oracle(iterates, anchors: Iterable[int]) -> np.ndarray:
    """Direct evaluation of the overlapping batch-means estimate from history."""
    x = np.asarray(iterates, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n == 0:
        raise ValueError("no iterates")
    starts = np.array(list(itertools.takewhile(lambda a: a <= n, anchors)))
    if starts.size == 0 or starts[0] != 1:
        raise ValueError("the first anchor must be 1")
    t = np.arange(1, n + 1)
    first = starts[np.searchsorted(starts, t, side="right") - 1]
    csum = np.vstack([np.zeros(x.shape[1]), np.cumsum(x, axis=0)])
    sizes = t - first + 1
    dev = (csum[t] - csum[first - 1]) - sizes[:, None] * x.mean(axis=0)
    return symmetrize(dev.T @ dev) / sizes.sum()


def batch_means_fixed(iterates, M: int, mean: str = "retained") -> np.ndarray:
    """Split into ``M + 1`` near-equal contiguous batches, drop the first, and
    return ``M^-1 sum_k n_k (bhat_k - bb)(bhat_k - bb)'``.

    ``mean="retained"`` centres at the mean of the kept batches, ``"all"`` at
    the mean of every iterate.
    """
    x = np.asarray(iterates, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if M < 1:
        raise ValueError("M must be >= 1")
    if x.shape[0] < M + 1:
        raise ValueError(f"need at least {M + 1} iterates for {M + 1} batches")
    batches = np.array_split(x, M + 1)[1:]
    if mean == "retained":
        center = np.concatenate(batches).mean(axis=0)
    elif mean == "all":
        center = x.mean(axis=0)
    else:
        raise ValueError("mean must be 'retained' or 'all'")
    out = np.zeros((x.shape[1], x.shape[1]))
    for b in batches:
        dev = b.mean(axis=0) - center
        out += b.shape[0] * np.outer(dev, dev)
    return out / M


def normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


def normal_ci(beta_bar_j: float, upsilon_jj: float, n: int, level: float = 0.95) -> ConfidenceInterval:
    if upsilon_jj < 0:
        raise ValueError(f"variance must be non-negative, got {upsilon_jj}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    half = z * math.sqrt(upsilon_jj / n)
    return ConfidenceInterval(beta_bar_j - half, beta_bar_j + half, level, degenerate=(upsilon_jj == 0))
