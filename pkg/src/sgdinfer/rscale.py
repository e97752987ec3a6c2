"""Online random-scaling matrix for averaged SGD.

For retained iterates ``beta_1..beta_n`` with mean ``beta_bar_n`` the scaling
matrix is

    V_n = n^-2 * sum_s (sum_{t<=s} beta_t - s*beta_bar_n)(...)'

It is kept in constant memory through

    A_t = A_{t-1} + t^2 * bb_t bb_t'
    b_t = b_{t-1} + t^2 * bb_t
    V_t = t^-2 * (A_t - bb_t b_t' - b_t bb_t' + bb_t bb_t' * sum_{s<=t} s^2)

where ``bb_t`` is the running average after the t-th retained iterate.
``A_t`` grows like ``t^3 |bb|^2`` and the last line cancels it back down to
``O(t^2)``. Centring every average by a fixed ``shift`` (for instance the
average at the end of burn-in) leaves ``V_t`` unchanged and keeps the
cancellation benign when the parameter is far from the origin.
``shift="first"`` uses the first average received, which also makes a
constant path give exactly zero.
"""

from __future__ import annotations

import numpy as np

from .core import DimensionError, symmetrize


def sum_of_squares(t: int) -> float:
    """``1^2 + ... + t^2``, exact in integers before conversion."""
    return float(t * (t + 1) * (2 * t + 1) // 6)


class RandomScaling:
    """Full d x d accumulator. Arrays may have a leading batch shape."""

    def __init__(self, d: int, batch_shape: tuple = (), shift=None):
        if d < 1:
            raise DimensionError("d must be >= 1")
        self.d = d
        self.t = 0
        self._shift_first = isinstance(shift, str) and shift == "first"
        if shift is None or self._shift_first:
            self.shift = np.zeros(d)
        else:
            self.shift = np.asarray(shift, dtype=np.float64)
        self.beta_bar = np.zeros(batch_shape + (d,))  # centred by shift
        self.A = np.zeros(batch_shape + (d, d))
        self.b = np.zeros(batch_shape + (d,))

    @property
    def s2sum(self) -> float:
        return sum_of_squares(self.t)

    @property
    def mean(self) -> np.ndarray:
        return self.beta_bar + self.shift

    def update(self, beta_bar):
        """Fold in the running average after the next retained iterate."""
        beta_bar = np.asarray(beta_bar, dtype=np.float64)
        if self._shift_first and self.t == 0:
            self.shift = beta_bar.copy()
        bb = beta_bar - self.shift
        if bb.shape != self.beta_bar.shape:
            raise DimensionError(f"expected shape {self.beta_bar.shape}, got {bb.shape}")
        self.t += 1
        w = float(self.t) * self.t
        self.A += w * (bb[..., :, None] * bb[..., None, :])
        self.b += w * bb
        self.beta_bar = bb
        return self

    def update_iterate(self, beta):
        """Convenience: update from a raw iterate, maintaining the mean here."""
        k = self.t + 1
        bb = self.mean * ((k - 1) / k) + np.asarray(beta, dtype=np.float64) / k
        return self.update(bb)

    def finalize(self) -> np.ndarray:
        if self.t == 0:
            raise ValueError("no iterates: random scaling needs t >= 1")
        bb, b = self.beta_bar, self.b
        cross = bb[..., :, None] * b[..., None, :]
        m = self.A - cross - np.swapaxes(cross, -1, -2) + self.s2sum * (bb[..., :, None] * bb[..., None, :])
        return symmetrize(m) / (float(self.t) * self.t)


class ScalarRandomScaling:
    """Single diagonal element ``V_jj``; three scalars (or batch vectors) of state."""

    def __init__(self, j: int, shift=0.0):
        self.j = j
        self.t = 0
        self._shift_first = isinstance(shift, str) and shift == "first"
        self.shift = 0.0 if self._shift_first else shift
        self.beta_bar = 0.0
        self.A = 0.0
        self.b = 0.0

    @property
    def s2sum(self) -> float:
        return sum_of_squares(self.t)

    @property
    def mean(self):
        return self.beta_bar + self.shift

    def update(self, beta_bar_j):
        if self._shift_first and self.t == 0:
            self.shift = beta_bar_j
        bb = beta_bar_j - self.shift
        self.t += 1
        w = float(self.t) * self.t
        self.A = self.A + w * (bb * bb)
        self.b = self.b + w * bb
        self.beta_bar = bb
        return self

    def update_iterate(self, beta_j):
        k = self.t + 1
        return self.update(self.mean * ((k - 1) / k) + beta_j / k)

    def finalize(self):
        if self.t == 0:
            raise ValueError("no iterates: random scaling needs t >= 1")
        bb = self.beta_bar
        cross = bb * self.b
        return (self.A - cross - cross + self.s2sum * (bb * bb)) / (float(self.t) * self.t)


def rs_update(state: RandomScaling, beta_bar_new) -> RandomScaling:
    return state.update(beta_bar_new)


def rs_finalize(state: RandomScaling) -> np.ndarray:
    return state.finalize()


def rs_update_scalar(state: ScalarRandomScaling, beta_bar_j_new) -> ScalarRandomScaling:
    return state.update(beta_bar_j_new)


def rs_batch_oracle(iterates) -> np.ndarray:
    """Two-pass evaluation of the scaling matrix from stored iterates ``(n, d)``."""
    x = np.asarray(iterates, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n == 0:
        raise ValueError("rs_batch_oracle needs at least one iterate")
    mean = x.mean(axis=0)
    dev = np.cumsum(x, axis=0) - np.arange(1, n + 1)[:, None] * mean
    return symmetrize(dev.T @ dev) / (float(n) * n)
