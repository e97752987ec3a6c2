import csv
import io
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sgdinfer.bench import (
    RESULT_COLUMNS,
    DesignStream,
    ExperimentConfig,
    MethodResult,
    ReplicationRecord,
    aggregate,
    generate_linear,
    generate_logistic,
    results_csv,
    run_batch,
    run_experiment,
    run_replication,
    study_designs,
    true_beta,
    write_jsonl,
)
from sgdinfer.core import SeedSpec
from sgdinfer.inference import critical_value
from sgdinfer.models import sigmoid


def test_true_beta():
    assert_allclose(true_beta(2), [0.0, 1.0])
    assert_allclose(true_beta(5), [0, 0.25, 0.5, 0.75, 1.0])
    assert_allclose(true_beta(1), [0.5])
    with pytest.raises(ValueError):
        true_beta(0)


def _take(gen):
    obs = list(gen)
    return np.array([o.x for o in obs]), np.array([o.y for o in obs])


def test_generators_deterministic():
    x1, y1 = _take(generate_linear(SeedSpec(3, 7), 4, 500))
    x2, y2 = _take(generate_linear(SeedSpec(3, 7), 4, 500))
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    x3, _ = _take(generate_linear(SeedSpec(3, 8), 4, 500))
    assert not np.array_equal(x1, x3)
    _, l1 = _take(generate_logistic(SeedSpec(3), 2, 300))
    _, l2 = _take(generate_logistic(SeedSpec(3), 2, 300))
    assert np.array_equal(l1, l2)


def test_stream_independent_of_chunking():
    a = DesignStream("linear", SeedSpec(5), 3)
    b = DesignStream("linear", SeedSpec(5), 3)
    xa, ya = a.draw(1000)
    parts = [b.draw(m) for m in (1, 499, 500)]
    assert np.array_equal(xa, np.vstack([p[0] for p in parts]))
    assert np.array_equal(ya, np.concatenate([p[1] for p in parts]))


def test_linear_moments():
    n = 100_000
    x, y = DesignStream("linear", SeedSpec(11), 5).draw(n)
    assert np.all(np.abs(x.mean(axis=0)) < 4 / math.sqrt(n))
    # var of a sample variance of N(0,1) is 2/n
    assert np.all(np.abs(x.var(axis=0) - 1) < 4 * math.sqrt(2 / n))
    resid = y - x @ true_beta(5)
    assert abs(resid.var() - 1) < 4 * math.sqrt(2 / n)


def test_logistic_symmetric_when_beta_zero():
    n = 100_000
    _, y = DesignStream("logistic", SeedSpec(12), 3, beta=np.zeros(3)).draw(n)
    assert set(np.unique(y)) == {0.0, 1.0}
    assert abs(y.mean() - 0.5) < 4 / math.sqrt(n)


def test_logistic_conditional_probability():
    x, y = DesignStream("logistic", SeedSpec(13), 5).draw(400_000)
    idx = x @ true_beta(5)
    near = np.abs(idx - 1.0) < 0.05
    m = near.sum()
    p = sigmoid(idx[near]).mean()  # ~ sigma(1) = 0.7311
    assert abs(p - 0.7311) < 0.005
    assert abs(y[near].mean() - p) < 4 * math.sqrt(p * (1 - p) / m)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(a=0.4)
    with pytest.raises(ValueError):
        ExperimentConfig(n=100, checkpoints=(200,))
    with pytest.raises(ValueError):
        ExperimentConfig(replications=0)
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("bootstrap",))
    with pytest.raises(ValueError):
        ExperimentConfig(d=3, target_coordinate=4)
    with pytest.raises(ValueError):
        ExperimentConfig(d=20, n=5000, checkpoints=(500, 5000))  # before burn-in
    with pytest.raises(ValueError):
        ExperimentConfig(level=0.85)  # untabulated without a simulated cv
    ExperimentConfig(level=0.85, critical_value=4.5)
    assert ExperimentConfig(d=20).burn_in == 1000
    assert ExperimentConfig(d=5).burn_in == 0
    assert ExperimentConfig(n=10, checkpoints=(10, 5)).checkpoints == (5, 10)


ALL = ("random_scaling", "random_scaling_scalar", "plugin", "batch_means")


def test_run_replication_contract():
    cfg = ExperimentConfig(model="linear", d=1, n=1000, checkpoints=(250, 1000), methods=ALL, replications=1, seed=1)
    rec = run_replication(cfg, 0)
    assert set(rec.results) == {(m, c) for m in ALL for c in (250, 1000)}
    for r in rec.results.values():
        assert r.ci_length >= 0 and r.n_eff in (250, 1000)
    json.loads(rec.to_json())


def test_ci_length_recomputable_and_time_monotone():
    cfg = ExperimentConfig(
        model="logistic", d=3, n=3000, burn_in=200, checkpoints=(1000, 2000, 3000), methods=ALL,
        replications=4, seed=2,
    )  # fmt: skip
    res = run_batch(cfg, range(4))
    cv = critical_value(0.95)
    z = 1.959963984540054
    for rec in res.records:
        for (m, c), r in rec.results.items():
            assert r.n_eff == c - 200
            crit = cv if m.startswith("random_scaling") else z
            assert r.ci_length == pytest.approx(2 * crit * math.sqrt(r.scale / r.n_eff), rel=1e-12)
        for m in ALL:
            times = [rec.results[(m, c)].elapsed_seconds for c in cfg.checkpoints]
            assert times == sorted(times)
            own = [rec.results[(m, c)].accumulator_seconds for c in cfg.checkpoints]
            assert own == sorted(own)


def test_scalar_state_matches_full_in_harness():
    cfg = ExperimentConfig(d=4, n=2000, methods=("random_scaling", "random_scaling_scalar"), replications=3, seed=9)
    for rec in run_batch(cfg, range(3)).records:
        full = rec.results[("random_scaling", 2000)]
        scal = rec.results[("random_scaling_scalar", 2000)]
        assert scal.scale == pytest.approx(full.scale, rel=1e-10)
        assert scal.covered == full.covered


def _numbers(metrics):
    return {k: (m.coverage, m.mc_se, m.avg_length, m.replications) for k, m in metrics.items()}


def test_replications_exchangeable():
    cfg = ExperimentConfig(d=2, n=1500, checkpoints=(500, 1500), methods=ALL, replications=7, seed=4)
    a = run_experiment(cfg, workers=1, batch_size=7)
    b = run_experiment(cfg, workers=2, batch_size=3)
    assert _numbers(aggregate(a.records)) == _numbers(aggregate(b.records))
    # per-rep numbers agree bit for bit, whatever the batch composition
    c = run_batch(cfg, [6, 2])
    for rec in c.records:
        ref = a.records[rec.rep_index]
        for key, r in rec.results.items():
            assert (r.estimate, r.scale, r.covered) == (ref.results[key].estimate, ref.results[key].scale, ref.results[key].covered)


def test_noiseless_design_converges():
    cfg = ExperimentConfig(d=1, n=20_000, methods=("random_scaling",), replications=3, seed=0, noise_scale=0.0)
    for rec in run_batch(cfg, range(3)).records:
        r = rec.results[("random_scaling", 20_000)]
        assert abs(r.estimate - 0.5) < 1e-2
        assert r.covered and 0 < r.ci_length < 0.05


def _rec(i, covered, length=0.5, elapsed=1.0):
    return ReplicationRecord(i, {("random_scaling", 10): MethodResult(covered, length, elapsed, 0.5, 0.0, 1.0, 10)})


def test_aggregate_examples():
    recs = [_rec(i, i < 956) for i in range(1000)]
    m = aggregate(recs)[("random_scaling", 10)]
    assert m.coverage == 0.956
    assert round(m.mc_se, 4) == 0.0065
    m1 = aggregate([_rec(0, True)])[("random_scaling", 10)]
    assert m1.coverage == 1.0 and m1.mc_se == 0.0
    assert aggregate([_rec(i, False, 0.125) for i in range(9)])[("random_scaling", 10)].avg_length == 0.125
    with pytest.raises(ValueError):
        aggregate([])


def test_results_csv_header_and_rows():
    cfg = ExperimentConfig(d=2, n=600, checkpoints=(300, 600), methods=ALL, replications=2, seed=3)
    res = run_experiment(cfg)
    text = results_csv(cfg, aggregate(res.records))
    assert text.splitlines()[0] == "model,d,gamma0,a,method,checkpoint,replications,coverage,mc_se,avg_length,avg_time_sec,level,seed"
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == RESULT_COLUMNS
    assert [(r["method"], int(r["checkpoint"])) for r in rows] == [(m, c) for m in ALL for c in (300, 600)]
    buf = io.StringIO()
    write_jsonl(res.records, buf)
    assert len(buf.getvalue().splitlines()) == 2


def test_study_designs_cover_every_cell():
    designs = study_designs(replications=5)
    assert len(designs) == 2 * 2 * 2 + 3 * 2 * 2
    assert {(c.model, c.d) for c in designs} >= {("linear", 5), ("logistic", 200)}
    assert all(c.checkpoints == (25_000, 50_000, 75_000, 100_000) for c in designs)


@pytest.mark.slow
def test_final_length_at_full_horizon():
    # linear, d = 5, a = 0.505, n = 1e5: reference length 0.016
    cfg = ExperimentConfig(n=100_000, methods=("random_scaling",), replications=40, seed=5)
    m = aggregate(run_experiment(cfg).records)[("random_scaling", 100_000)]
    assert abs(m.avg_length - 0.016) < 0.2 * 0.016
