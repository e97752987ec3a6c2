"""Synthetic designs and the Monte Carlo replication harness.

Replications of one design are advanced together as a batch of independent
streams: row ``r`` of every array belongs to replication ``rep_indices[r]``
and its data come only from ``SeedSpec(seed, rep_index)``. No operation
mixes rows, so a replication's numbers do not depend on which batch, worker
or order it ran in.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import (
    PlugIn,
    RecursiveBatchMeans,
    SingularHessianError,
    arithmetic_anchors,
    normal_quantile,
    power_anchors,
    sandwich,
)
from .core import Observation, SeedSpec, StepSchedule
from .inference import critical_value
from .models import get_model
from .rscale import RandomScaling, ScalarRandomScaling
from .sgd import DivergenceError

METHODS = ("random_scaling", "random_scaling_scalar", "plugin", "batch_means")

RESULT_COLUMNS = [
    "model", "d", "gamma0", "a", "method", "checkpoint", "replications",
    "coverage", "mc_se", "avg_length", "avg_time_sec", "level", "seed",
]  # fmt: skip

TIMING_NOTE = (
    "avg_time_sec: per-replication wall time of the shared SGD step plus the "
    "method's own accumulator updates and finalize calls; data generation excluded"
)


def true_beta(d: int) -> np.ndarray:
    """Equi-spaced on [0, 1]; the midpoint 0.5 when d = 1."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d == 1:
        return np.array([0.5])
    return np.linspace(0.0, 1.0, d)


def default_burn_in(d: int) -> int:
    return 0 if d <= 5 else 1000


class DesignStream:
    """Chunked data source for one replication.

    Covariates and noise come from separate substreams, so the sequence of
    observations does not depend on the chunk sizes requested.
    """

    def __init__(self, model: str, seed: SeedSpec, d: int, beta=None, noise_scale: float = 1.0):
        if model not in ("linear", "logistic"):
            raise ValueError(f"unknown model {model!r}")
        self.model = model
        self.d = d
        self.beta = true_beta(d) if beta is None else np.asarray(beta, dtype=np.float64)
        self.noise_scale = noise_scale
        self._x_rng = seed.generator(0)
        self._e_rng = seed.generator(1)

    def draw(self, m: int):
        x = self._x_rng.standard_normal((m, self.d))
        index = x @ self.beta
        if self.model == "linear":
            y = index + self.noise_scale * self._e_rng.standard_normal(m)
        else:
            y = (index - self._e_rng.logistic(size=m) >= 0).astype(np.float64)
        return x, y


def _observations(stream: DesignStream, count: int, chunk: int = 4096):
    done = 0
    while done < count:
        m = min(chunk, count - done)
        x, y = stream.draw(m)
        for i in range(m):
            yield Observation(x[i], float(y[i]))
        done += m


def generate_linear(seed: SeedSpec, d: int, count: int, beta=None, noise_scale: float = 1.0):
    """``y = x'beta + eps`` with ``x ~ N(0, I_d)``, ``eps ~ N(0, 1)``."""
    return _observations(DesignStream("linear", seed, d, beta, noise_scale), count)


def generate_logistic(seed: SeedSpec, d: int, count: int, beta=None):
    """``y = 1(x'beta - eps >= 0)`` with standard logistic ``eps``."""
    return _observations(DesignStream("logistic", seed, d, beta), count)


@dataclass
class ExperimentConfig:
    model: str = "linear"
    d: int = 5
    gamma0: float = 0.5
    a: float = 0.505
    n: int = 100_000
    burn_in: int | None = None
    checkpoints: tuple = ()
    methods: tuple = ("random_scaling", "plugin", "batch_means")
    replications: int = 1000
    level: float = 0.95
    seed: int = 0
    target_coordinate: int = 1  # 1-based
    critical_value: float | None = None
    batch_anchors: str = "power"  # or "odd" for {1, 3, 5, ...}
    noise_scale: float = 1.0

    def __post_init__(self):
        self.checkpoints = tuple(sorted(int(c) for c in (self.checkpoints or (self.n,))))
        self.methods = tuple(self.methods)
        if self.burn_in is None:
            self.burn_in = default_burn_in(self.d)
        self.schedule  # validates gamma0 and a
        get_model(self.model)
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 1 <= self.target_coordinate <= self.d:
            raise ValueError(f"target_coordinate must be in 1..{self.d}")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.checkpoints[-1] > self.n:
            raise ValueError("checkpoints must not exceed n")
        if self.checkpoints[0] <= self.burn_in:
            raise ValueError("every checkpoint must come after the burn-in")
        if self.batch_anchors not in ("power", "odd"):
            raise ValueError("batch_anchors must be 'power' or 'odd'")
        if self.critical_value is None and any(m.startswith("random_scaling") for m in self.methods):
            critical_value(self.level)

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.gamma0, self.a)

    def anchors(self):
        return power_anchors(self.a) if self.batch_anchors == "power" else arithmetic_anchors(2)


@dataclass
class MethodResult:
    covered: bool
    ci_length: float
    elapsed_seconds: float  # shared SGD step + this method, cumulative
    accumulator_seconds: float  # this method only, cumulative
    estimate: float
    scale: float  # V_jj for random scaling, Upsilon_jj for the baselines
    n_eff: int


@dataclass
class ReplicationRecord:
    rep_index: int
    results: dict = field(default_factory=dict)  # (method, checkpoint) -> MethodResult

    def to_json(self) -> str:
        rows = [{"method": m, "checkpoint": c, **asdict(r)} for (m, c), r in sorted(self.results.items())]
        return json.dumps({"rep_index": self.rep_index, "results": rows})


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list
    diverged: list  # (rep_index, t)


def _make_accumulators(cfg: ExperimentConfig, R: int):
    d, j = cfg.d, cfg.target_coordinate - 1
    acc = {}
    for m in cfg.methods:
        if m == "random_scaling":
            acc[m] = RandomScaling(d, (R,), shift="first")
        elif m == "random_scaling_scalar":
            acc[m] = ScalarRandomScaling(j, shift="first")
        elif m == "plugin":
            acc[m] = PlugIn(d, (R,))
        elif m == "batch_means":
            acc[m] = RecursiveBatchMeans(d, cfg.anchors(), (R,))
    return acc


def _plugin_rows(p: PlugIn) -> np.ndarray:
    try:
        return p.finalize()
    except SingularHessianError:
        out = np.full(p.H_sum.shape, np.nan)
        for r in range(out.shape[0]):
            try:
                out[r] = sandwich(p.H[r], p.S[r])
            except SingularHessianError:
                pass
        return out


def run_batch(cfg: ExperimentConfig, rep_indices) -> RunResult:
    """Run the replications ``rep_indices`` of ``cfg`` in lockstep."""
    rep_indices = list(rep_indices)
    R, d = len(rep_indices), cfg.d
    j = cfg.target_coordinate - 1
    model = get_model(cfg.model)
    sched = cfg.schedule
    target = true_beta(d)[j]
    cv = cfg.critical_value if cfg.critical_value is not None else critical_value(cfg.level)
    z = normal_quantile(1.0 - (1.0 - cfg.level) / 2.0)
    streams = [DesignStream(cfg.model, SeedSpec(cfg.seed, r), d, noise_scale=cfg.noise_scale) for r in rep_indices]
    acc = _make_accumulators(cfg, R)
    own = dict.fromkeys(acc, 0.0)
    shared = 0.0
    records = [ReplicationRecord(r) for r in rep_indices]
    alive = np.ones(R, dtype=bool)
    diverged = []

    beta = np.zeros((R, d))
    beta_bar = np.zeros((R, d))
    k = 0
    checkpoints = set(cfg.checkpoints)
    chunk = int(max(64, min(4096, 2_000_000 // (R * d))))
    clock = time.perf_counter
    t = 0
    with np.errstate(all="ignore"):
        while t < cfg.n:
            m = min(chunk, cfg.n - t)
            draws = [s.draw(m) for s in streams]
            X = np.stack([x for x, _ in draws], axis=1)  # (m, R, d)
            Y = np.stack([y for _, y in draws], axis=1)  # (m, R)
            for i in range(m):
                t += 1
                x, y = X[i], Y[i]
                c0 = clock()
                beta_prev = beta
                beta = beta - sched(t) * model.gradient(beta, x, y)
                retained = t > cfg.burn_in
                if retained:
                    k += 1
                    beta_bar = beta_bar * ((k - 1) / k) + beta / k
                c1 = clock()
                shared += c1 - c0
                if retained:
                    for name, a in acc.items():
                        if name == "random_scaling":
                            a.update(beta_bar)
                        elif name == "random_scaling_scalar":
                            a.update(beta_bar[:, j])
                        elif name == "plugin":
                            a.update(model, beta_prev, x, y)
                        else:
                            a.update(beta)
                        c2 = clock()
                        own[name] += c2 - c1
                        c1 = c2
                if t in checkpoints:
                    ok = np.isfinite(beta).all(axis=1) & np.isfinite(beta_bar).all(axis=1)
                    for r in np.flatnonzero(alive & ~ok):
                        diverged.append((rep_indices[r], t))
                    alive &= ok
                    _evaluate(acc, own, shared, records, alive, beta_bar, k, t, j, target, cv, z, R)
    return RunResult(cfg, [rec for rec, a in zip(records, alive) if a], diverged)


def _evaluate(acc, own, shared, records, alive, beta_bar, k, t, j, target, cv, z, R):
    est = beta_bar[:, j]
    for name, a in acc.items():
        c0 = time.perf_counter()
        if name == "random_scaling":
            scale = a.finalize()[:, j, j]
        elif name == "random_scaling_scalar":
            scale = np.broadcast_to(a.finalize(), (R,))
        elif name == "plugin":
            scale = _plugin_rows(a)[:, j, j]
        else:
            scale = a.finalize(beta_bar)[:, j, j]
        own[name] += time.perf_counter() - c0
        crit = cv if name.startswith("random_scaling") else z
        half = crit * np.sqrt(np.maximum(scale, 0.0) / k)
        covered = np.abs(est - target) <= half
        elapsed = (shared + own[name]) / R
        for r in np.flatnonzero(alive):
            records[r].results[(name, t)] = MethodResult(
                covered=bool(covered[r]) and bool(np.isfinite(half[r])),
                ci_length=float(2 * half[r]),
                elapsed_seconds=elapsed,
                accumulator_seconds=own[name] / R,
                estimate=float(est[r]),
                scale=float(scale[r]),
                n_eff=k,
            )


def run_replication(cfg: ExperimentConfig, rep_index: int) -> ReplicationRecord:
    res = run_batch(cfg, [rep_index])
    if res.diverged:
        rep, t = res.diverged[0]
        raise DivergenceError(t, f"replication {rep}")
    return res.records[0]


def _run_block(args):
    cfg, reps = args
    return run_batch(cfg, reps)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, batch_size: int = 500) -> RunResult:
    """All replications, split into contiguous blocks of at most ``batch_size``."""
    reps = list(range(cfg.replications))
    blocks = [(cfg, reps[i : i + batch_size]) for i in range(0, len(reps), batch_size)]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_block, blocks))
    else:
        parts = [_run_block(b) for b in blocks]
    records = sorted((r for p in parts for r in p.records), key=lambda r: r.rep_index)
    diverged = sorted(x for p in parts for x in p.diverged)
    return RunResult(cfg, records, diverged)


@dataclass
class MetricRow:
    coverage: float
    mc_se: float
    avg_length: float
    avg_time: float
    replications: int


def aggregate(records) -> dict:
    """(method, checkpoint) -> MetricRow, reduced in rep_index order."""
    records = sorted(records, key=lambda r: r.rep_index)
    if not records:
        raise ValueError("no replication records to aggregate")
    out = {}
    for key in sorted(records[0].results):
        rows = [rec.results[key] for rec in records]
        n = len(rows)
        p = sum(r.covered for r in rows) / n
        out[key] = MetricRow(
            coverage=p,
            mc_se=math.sqrt(p * (1 - p) / n),
            avg_length=math.fsum(r.ci_length for r in rows) / n,
            avg_time=math.fsum(r.elapsed_seconds for r in rows) / n,
            replications=n,
        )
    return out


def results_csv(cfg: ExperimentConfig, metrics: dict, fh=None, header: bool = True) -> str:
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(RESULT_COLUMNS)
    for (method, checkpoint), m in sorted(metrics.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1])):
        w.writerow([
            cfg.model, cfg.d, cfg.gamma0, cfg.a, method, checkpoint, m.replications,
            f"{m.coverage:.4f}", f"{m.mc_se:.4f}", f"{m.avg_length:.6f}", f"{m.avg_time:.4f}",
            cfg.level, cfg.seed,
        ])  # fmt: skip
    return buf.getvalue() if fh is None else ""


def write_jsonl(records, fh):
    for rec in records:
        fh.write(rec.to_json() + "\n")


def study_designs(replications: int = 1000, seed: int = 0) -> list:
    """Every design of the full-scale study: n = 1e5, checkpoints every 25000."""
    out = []
    for model, dims in (("linear", (5, 20)), ("logistic", (5, 20, 200))):
        for d in dims:
            for gamma0 in (0.5, 1.0):
                for a in (0.505, 0.667):
                    out.append(ExperimentConfig(
                        model=model, d=d, gamma0=gamma0, a=a, n=100_000,
                        checkpoints=(25_000, 50_000, 75_000, 100_000),
                        replications=replications, seed=seed,
                    ))  # fmt: skip
    return out
