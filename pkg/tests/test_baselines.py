import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sgdinfer.baselines import (
    PlugIn,
    RecursiveBatchMeans,
    SingularHessianError,
    arithmetic_anchors,
    batch_means_fixed,
    batch_means_oracle,
    bm_finalize,
    bm_recursive_update,
    normal_ci,
    normal_quantile,
    plugin_finalize,
    plugin_update,
    power_anchors,
    sandwich,
)
from sgdinfer.core import DimensionError, Observation, SeedSpec, StepSchedule
from sgdinfer.models import LINEAR

# published standard normal quantile
Z975 = 1.959963984540054


def obs(x, y):
    return Observation(np.asarray(x, dtype=float), float(y))


def test_plugin_single_observation():
    p = plugin_update(PlugIn(1), LINEAR, np.zeros(1), obs([1], 2))
    assert_allclose(p.H, [[1.0]])
    assert_allclose(p.S, [[4.0]])
    assert_allclose(plugin_finalize(p), [[4.0]])


def test_plugin_zero_residual_and_mean():
    p = PlugIn(2)
    beta = np.array([0.5, -1.0])
    plugin_update(p, LINEAR, beta, obs([1.0, 2.0], -1.5))
    assert np.array_equal(p.S_sum, np.zeros((2, 2)))
    q = PlugIn(1)
    for _ in range(2):
        plugin_update(q, LINEAR, np.zeros(1), obs([1], 0.0))
    assert_allclose(q.H, [[1.0]])


def test_plugin_errors():
    with pytest.raises(SingularHessianError):
        PlugIn(2).finalize()
    with pytest.raises(DimensionError):
        PlugIn(2).update(LINEAR, np.zeros(2), np.ones(3), 0.0)
    p = PlugIn(2)
    plugin_update(p, LINEAR, np.zeros(2), obs([1.0, 1.0], 1.0))  # rank one
    with pytest.raises(SingularHessianError):
        p.finalize()


def test_sandwich_examples():
    assert_allclose(sandwich([[1.0]], [[4.0]]), [[4.0]])
    assert_allclose(sandwich(2 * np.eye(2), np.eye(2)), 0.25 * np.eye(2), rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_sandwich_on_injected_population_values(d, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d))
    H = a @ a.T + np.eye(d)
    b = rng.normal(size=(d, d))
    S = b @ b.T
    Hinv = np.linalg.inv(H)
    expected = Hinv @ S @ Hinv
    got = sandwich(H, S)
    assert np.array_equal(got, got.T)
    assert np.linalg.norm(got - expected) <= 1e-10 * max(1.0, np.linalg.norm(expected))


def test_plugin_batched_matches_rows():
    rng = np.random.default_rng(4)
    beta = rng.normal(size=(3, 2))
    batched = PlugIn(2, (3,))
    rows = [PlugIn(2) for _ in range(3)]
    for _ in range(20):
        x = rng.normal(size=(3, 2))
        y = rng.normal(size=3)
        batched.update(LINEAR, beta, x, y)
        for r in range(3):
            rows[r].update(LINEAR, beta[r], x[r], y[r])
    V = batched.finalize()
    for r in range(3):
        assert_allclose(V[r], rows[r].finalize(), rtol=1e-13)


def test_plugin_recovers_unit_variance_design():
    # d = 1, x = 1, eps ~ N(0, 1): H = S = 1, so the sandwich is 1
    reps, n = 50, 100_000
    rng = SeedSpec(77).generator()
    sched = StepSchedule(0.5, 0.505)
    beta = np.zeros((reps, 1))
    x = np.ones((reps, 1))
    p = PlugIn(1, (reps,))
    t = 0
    for _ in range(n // 10_000):
        for e in rng.standard_normal((10_000, reps)):
            t += 1
            y = 0.5 + e
            p.update(LINEAR, beta, x, y)
            beta = beta - sched(t) * LINEAR.gradient(beta, x, y)
    est = p.finalize()[:, 0, 0]
    se = est.std(ddof=1) / np.sqrt(reps)
    assert abs(est.mean() - 1.0) < 3 * se


# --- batch means


def _stream_bm(x, anchors):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    bm = RecursiveBatchMeans(x.shape[1], anchors)
    for beta in x:
        bm_recursive_update(bm, beta)
    return bm, x


def test_odd_rule_example():
    bm = RecursiveBatchMeans(1, arithmetic_anchors(2))
    sums, sizes = [], []
    for v in (1.0, 2.0, 3.0, 4.0):
        bm.update([v])
        sums.append(bm.open_sum[0])
        sizes.append(bm.open_len)
    assert sums == [1, 3, 3, 7] and sizes == [1, 2, 1, 2]
    assert bm_finalize(bm, [2.5])[0, 0] == pytest.approx(1.75, rel=1e-15)
    assert batch_means_oracle([1, 2, 3, 4], arithmetic_anchors(2))[0, 0] == pytest.approx(1.75, rel=1e-15)


def test_constant_iterates_give_zero():
    c = np.array([0.3, -1.7])
    bm, _ = _stream_bm(np.tile(c, (25, 1)), power_anchors(0.6))
    assert_allclose(bm.finalize(c), 0.0, atol=1e-13)


def test_bm_errors():
    with pytest.raises(ValueError):
        RecursiveBatchMeans(1, [2, 5])
    with pytest.raises(ValueError):
        RecursiveBatchMeans(1, [1]).finalize([0.0])
    with pytest.raises(DimensionError):
        RecursiveBatchMeans(2, [1, 3]).update([1.0])


def test_anchor_rules():
    assert list(itertools.islice(arithmetic_anchors(2), 5)) == [1, 3, 5, 7, 9]
    a = list(itertools.islice(power_anchors(0.505), 6))
    assert a[0] == 1 and all(x < y for x, y in zip(a, a[1:]))
    # 1/(1-0.505) ~ 2.0202: 2**2.0202 = 4.056..., 3**2.0202 = 9.200...
    assert a[:3] == [1, 4, 9]


def _random_rule(rng, n):
    gaps = rng.integers(1, 8, size=n)
    return [1] + list(1 + np.cumsum(gaps))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 250), st.integers(0, 2**32 - 1))
def test_recursive_matches_oracle(d, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)).cumsum(axis=0) * 0.2 + rng.normal(size=d)
    rule = _random_rule(rng, n + 1)
    bm, _ = _stream_bm(x, rule)
    got = bm.finalize(x.mean(axis=0))
    want = batch_means_oracle(x, rule)
    assert np.linalg.norm(got - want) <= 1e-8 * max(np.linalg.norm(want), 1e-300)
    ev = np.linalg.eigvalsh(got)
    assert ev.min() >= -1e-10 * max(np.trace(got), 0.0) - 1e-14 * n


def test_shifted_batch_means_agree():
    x = np.random.default_rng(2).normal(size=(300, 2)) + 40.0
    plain, _ = _stream_bm(x, power_anchors(0.667))
    shifted = RecursiveBatchMeans(2, power_anchors(0.667), shift=x[0])
    for beta in x:
        shifted.update(beta)
    mean = x.mean(axis=0)
    assert_allclose(shifted.finalize(mean), plain.finalize(mean), rtol=1e-8)


def test_fixed_batch_means_examples():
    assert batch_means_fixed([0, 0, 2, 2, 4, 4], 2)[0, 0] == pytest.approx(2.0, rel=1e-15)
    assert_allclose(batch_means_fixed(np.ones((12, 3)), 3), 0.0)
    # M = 1: only one retained batch and it is its own centre
    assert batch_means_fixed([5.0, 1.0, 2.0], 1)[0, 0] == 0.0
    # centring on every iterate: retained batches {2,2} {4,4}, overall mean 2
    assert batch_means_fixed([0, 0, 2, 2, 4, 4], 2, mean="all")[0, 0] == pytest.approx(4.0)
    with pytest.raises(ValueError):
        batch_means_fixed([1.0, 2.0], 2)
    with pytest.raises(ValueError):
        batch_means_fixed([1.0, 2.0, 3.0], 1, mean="median")


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 200), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_fixed_batch_means_psd(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d))
    M = max(1, n // 10)
    U = batch_means_fixed(x, min(M, n - 1))
    assert np.array_equal(U, U.T)
    assert np.linalg.eigvalsh(U).min() >= -1e-10 * np.trace(U) - 1e-15


def test_normal_quantile_and_ci():
    assert normal_quantile(0.975) == pytest.approx(Z975, abs=1e-12)
    assert abs(normal_quantile(0.975) - 1.959964) < 1e-5
    ci = normal_ci(0.0, 1.0, 100, 0.95)
    assert ci.lower == pytest.approx(-0.1959964, abs=1e-7)
    assert ci.upper == pytest.approx(0.1959964, abs=1e-7)
    flat = normal_ci(3.0, 0.0, 10)
    assert flat.degenerate and flat.length == 0.0
    with pytest.raises(ValueError):
        normal_ci(0.0, -1.0, 10)
