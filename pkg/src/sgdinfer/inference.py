"""t and Wald statistics studentized by random scaling, their critical values,
and a Monte Carlo simulator of the limiting Brownian functionals."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import SeedSpec

# One-sided quantiles of W(1) / sqrt(int_0^1 (W(r) - r W(1))^2 dr).
CRITICAL_VALUES = {0.90: 3.875, 0.95: 5.323, 0.975: 6.747, 0.99: 8.613}


class DegenerateScaleError(ValueError):
    """The scaling matrix is zero or singular in the tested direction."""


class UntabulatedLevelError(ValueError):
    pass


def one_sided_probability(level: float) -> float:
    """Two-sided coverage ``1 - alpha`` -> one-sided probability ``1 - alpha/2``."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    return round(1.0 - (1.0 - level) / 2.0, 10)


def critical_value(level: float) -> float:
    """Tabulated two-sided critical value for the random-scaling t-statistic."""
    p = one_sided_probability(level)
    for q, cv in CRITICAL_VALUES.items():
        if abs(q - p) < 1e-9:
            return cv
    raise UntabulatedLevelError(
        f"level {level} is not tabulated (available: 0.80, 0.90, 0.95, 0.98); "
        "simulate the quantile with simulate_critical_values and pass it explicitly"
    )


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    degenerate: bool = False

    @property
    def length(self):
        return self.upper - self.lower

    def __contains__(self, value):
        return bool(self.lower <= value <= self.upper)


@dataclass(frozen=True)
class LinearRestriction:
    """Null hypothesis ``R beta = c`` with ``R`` of full row rank."""

    R: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=np.float64))
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        if c.shape != (R.shape[0],):
            raise ValueError(f"c must have length {R.shape[0]}, got shape {c.shape}")
        if R.shape[0] > R.shape[1]:
            raise ValueError("more restrictions than parameters")
        sv = np.linalg.svd(R, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("R is rank deficient")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "c", c)

    @property
    def ell(self) -> int:
        return self.R.shape[0]

    @classmethod
    def coordinate(cls, j: int, d: int, value: float) -> LinearRestriction:
        R = np.zeros((1, d))
        R[0, j] = 1.0
        return cls(R, np.array([value]))


def t_statistic(beta_bar_j, beta0_j, v_jj, n: int):
    v_jj = np.asarray(v_jj, dtype=np.float64)
    if np.any(v_jj <= 0):
        raise DegenerateScaleError("V_jj must be positive (constant path or call before burn-in ended)")
    out = np.sqrt(n) * (np.asarray(beta_bar_j) - beta0_j) / np.sqrt(v_jj)
    return out if out.ndim else float(out)


def confidence_interval(
    beta_bar_j: float,
    v_jj: float,
    n: int,
    level: float = 0.95,
    critical_value_: float | None = None,
) -> ConfidenceInterval:
    """``beta_bar_j +/- cv * sqrt(V_jj / n)``.

    ``critical_value_`` overrides the table, e.g. with a simulated quantile
    for an untabulated level.
    """
    if v_jj < 0:
        raise ValueError(f"V_jj must be non-negative, got {v_jj}")
    cv = critical_value(level) if critical_value_ is None else float(critical_value_)
    half = cv * np.sqrt(v_jj / n)
    return ConfidenceInterval(beta_bar_j - half, beta_bar_j + half, level, degenerate=(v_jj == 0))


def wald_statistic(restriction: LinearRestriction, beta_bar, V, n: int) -> float:
    """``n (R b - c)' (R V R')^-1 (R b - c)`` via a Cholesky solve."""
    R, c = restriction.R, restriction.c
    resid = R @ np.asarray(beta_bar, dtype=np.float64) - c
    M = R @ np.asarray(V, dtype=np.float64) @ R.T
    M = 0.5 * (M + M.T)
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) >= 1e12:
        raise DegenerateScaleError("R V R' is singular or ill-conditioned")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise DegenerateScaleError("R V R' is not positive definite") from None
    z = np.linalg.solve(L, resid)
    return float(n * (z @ z))


# ---------------------------------------------------------------------------
# Monte Carlo critical values


def _brownian_functional(z: np.ndarray, statistic: str) -> np.ndarray:
    """Evaluate the limit functional on increments ``z`` of shape (paths, grid, ell).

    Partial sums give ``W(k/grid)``; the integral is the Riemann sum over the
    grid, i.e. exactly the discrete scaling matrix with n = grid.
    """
    grid = z.shape[1]
    W = np.cumsum(z, axis=1) / np.sqrt(grid)
    W1 = W[:, -1, :]
    r = np.arange(1, grid + 1) / grid
    Wbar = W - r[None, :, None] * W1[:, None, :]
    if statistic == "t":
        integral = np.einsum("pk,pk->p", Wbar[..., 0], Wbar[..., 0]) / grid
        return W1[:, 0] / np.sqrt(integral)
    M = np.einsum("pki,pkj->pij", Wbar, Wbar) / grid
    sol = np.linalg.solve(M, W1[..., None])[..., 0]
    return np.einsum("pi,pi->p", W1, sol)


def _chunk_size(grid: int, ell: int) -> int:
    return max(1, 2_000_000 // (grid * ell))


@dataclass
class CriticalValueSimulation:
    statistic: str
    ell: int
    paths: int
    grid: int
    seed: SeedSpec
    values: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    draws: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, q):
        return self.values[q]

    def rows(self):
        for q in sorted(self.values):
            yield {
                "statistic": self.statistic,
                "ell": self.ell,
                "quantile": q,
                "value": self.values[q],
                "paths": self.paths,
                "grid": self.grid,
                "seed": self.seed.master_seed,
            }

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.DictWriter(buf, fieldnames=CRITVAL_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({**row, "value": f"{row['value']:.6f}"})
        return buf.getvalue() if fh is None else ""


CRITVAL_COLUMNS = ["statistic", "ell", "quantile", "value", "paths", "grid", "seed"]


def quantile_stderr(sample: np.ndarray, p: float) -> float:
    """Order-statistic (binomial) standard error of the empirical p-quantile."""
    s = np.sort(sample)
    n = s.size
    delta = np.sqrt(p * (1 - p) / n)
    lo = s[max(0, int(np.floor(n * (p - delta))) - 1)]
    hi = s[min(n - 1, int(np.ceil(n * (p + delta))) - 1)]
    return float(hi - lo) / 2.0


def simulate_critical_values(
    ell: int,
    quantiles,
    paths: int = 200_000,
    grid: int = 2000,
    seed: SeedSpec | int = 0,
    statistic: str = "t",
    threads: int = 1,
    keep_draws: bool = False,
) -> CriticalValueSimulation:
    """Empirical quantiles of the pivotal limit of the t (ell = 1) or Wald statistic.

    Paths are processed in fixed-size blocks, block ``k`` drawing from
    ``seed.generator(k)``, so the result does not depend on ``threads``.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if statistic not in ("t", "wald"):
        raise ValueError("statistic must be 't' or 'wald'")
    if statistic == "t" and ell != 1:
        raise ValueError("the t form is defined for ell = 1 only")
    if grid < 100:
        raise ValueError("grid must be >= 100")
    if paths < 1000:
        raise ValueError("paths must be >= 1000")
    quantiles = sorted(float(q) for q in quantiles)
    if not quantiles or not all(0 < q < 1 for q in quantiles):
        raise ValueError("quantiles must lie in (0, 1)")
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))

    size = _chunk_size(grid, ell)
    blocks = [(k, min(size, paths - k * size)) for k in range(-(-paths // size))]

    def run(block):
        k, m = block
        z = seed.generator(k).standard_normal((m, grid, ell))
        return _brownian_functional(z, statistic)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    draws = np.concatenate(parts)

    out = CriticalValueSimulation(statistic, ell, paths, grid, seed)
    for q in quantiles:
        out.values[q] = float(np.quantile(draws, q))
        out.stderr[q] = quantile_stderr(draws, q)
    if keep_draws:
        out.draws = draws
    return out
