import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import worked_pair, hy_double_sum, lag_realized, random_pair

from covest.core import InsufficientOverlapError, ObservationPair, TickSeries
from covest.estimators import (WeightVector, hayashi_yoshida, hayashi_yoshida_overlap, msrv_univariate,
                               multiscale, one_scale, optimal_weights, realized_covolatility,
                               tsrv_univariate)
from covest.sim import SimConfig, simulate_pair
from covest.sync import retained_pair, synchronize


def tail_sum_constant(M):
    a = optimal_weights(M).alpha
    i = np.arange(1, M + 1)
    tails = np.cumsum((a / i)[::-1])[::-1]  # sum_{i >= j} alpha_i / i
    return M * math.fsum((tails[1:] ** 2).tolist())


def min_constant(M):
    a = optimal_weights(M).alpha
    i = np.arange(1, M + 1)
    b = a / i
    return M * float(b @ np.minimum.outer(i, i) @ b)


def thirteen_constant(M):
    a = optimal_weights(M).alpha
    total = 0.0
    for k in range(1, M + 1):
        l = np.arange(1, k + 1)
        total += math.fsum((l / (6 * M) * (3 - l / k) * a[k - 1] * a[:k]).tolist())
    return 2 * total


# ---------------------------------------------------------------- weights

def test_weights_m2():
    assert optimal_weights(2).alpha.tolist() == [-1.0, 2.0]


def test_weights_conditions_and_constants():
    for M in (2, 3, 10, 137, 1000):
        c1, c2 = optimal_weights(M).conditions()
        assert abs(c1 - 1) < 1e-12 and abs(c2) < 1e-12
    assert tail_sum_constant(1000) == pytest.approx(1.2, rel=0.01)
    assert min_constant(1000) == pytest.approx(1.2, rel=0.01)
    assert thirteen_constant(1000) == pytest.approx(13 / 35, rel=0.01)


def test_weights_reject_small_m_and_bad_vectors():
    with pytest.raises(ValueError):
        optimal_weights(1)
    with pytest.raises(ValueError):
        WeightVector(2, [0.5, 0.5])


# ---------------------------------------------------------------- HY

def test_hy_worked_example_expansion():
    rng = np.random.default_rng(3)
    X, Y = rng.normal(size=11), rng.normal(size=11)
    p = worked_pair(X, Y)
    hand = ((X[3] - X[0]) * (Y[1] - Y[0]) + (X[3] - X[2]) * (Y[3] - Y[1])
            + (X[6] - X[3]) * (Y[4] - Y[3]) + (X[7] - X[5]) * (Y[5] - Y[4])
            + (X[8] - X[6]) * (Y[6] - Y[5]) + (X[8] - X[7]) * (Y[8] - Y[6])
            + (X[9] - X[8]) * (Y[9] - Y[7]) + (X[10] - X[9]) * (Y[10] - Y[8]))
    assert hayashi_yoshida(p, synchronize(p)).value == pytest.approx(hand, abs=1e-14)
    # the example's schemes end together, so nothing is truncated
    assert hy_double_sum(p.x.times, X, p.y.times, Y) == pytest.approx(hand, abs=1e-14)


def test_hy_dual_form_random():
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(400):
        p = random_pair(rng)
        try:
            s = synchronize(p)
        except InsufficientOverlapError:
            continue
        q = retained_pair(p, s)
        ref = hy_double_sum(q.x.times, q.x.values, q.y.times, q.y.values)
        assert hayashi_yoshida(p, s).value == pytest.approx(ref, abs=1e-12)
        assert hayashi_yoshida_overlap(q) == pytest.approx(ref, abs=1e-12)
        checked += 1
    assert checked > 300


def test_hy_synchronous_equals_rc():
    rng = np.random.default_rng(1)
    t = np.arange(21) / 20
    p = ObservationPair(TickSeries(t, rng.normal(size=21)), TickSeries(t, rng.normal(size=21)))
    assert hayashi_yoshida(p, synchronize(p)).value == pytest.approx(realized_covolatility(p).value, abs=1e-14)


# ---------------------------------------------------------------- one-scale / multiscale

def test_one_scale_lag1_is_hy():
    rng = np.random.default_rng(2)
    p = random_pair(rng, 40)
    s = synchronize(p)
    assert one_scale(p, s, 1).value == hayashi_yoshida(p, s).value


def test_one_scale_synchronous_lag3():
    rng = np.random.default_rng(4)
    t = np.arange(31) / 30
    x, y = rng.normal(size=31), rng.normal(size=31)
    p = ObservationPair(TickSeries(t, x), TickSeries(t, y))
    assert one_scale(p, synchronize(p), 3).value == pytest.approx(lag_realized(x, y, 3), abs=1e-13)


def test_one_scale_last_lag_single_term():
    rng = np.random.default_rng(5)
    p = random_pair(rng, 30)
    s = synchronize(p)
    N = s.n_sync
    X, Y = p.x.values, p.y.values
    term = (X[s.g_idx[N]] - X[s.l_idx[1]]) * (Y[s.gamma_idx[N]] - Y[s.lambda_idx[1]]) / N
    assert one_scale(p, s, N).value == pytest.approx(term, abs=1e-15)
    with pytest.raises(ValueError):
        one_scale(p, s, N + 1)


def test_multiscale_m2_hand_expansion():
    t = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    x = np.array([0.0, 1.0, -1.0, 2.0, 0.5])
    y = np.array([1.0, 0.0, 2.0, 1.0, 3.0])
    p = ObservationPair(TickSeries(t, x), TickSeries(t, y))
    lag1 = sum((x[j] - x[j - 1]) * (y[j] - y[j - 1]) for j in range(1, 5))
    lag2 = sum((x[j] - x[j - 2]) * (y[j] - y[j - 2]) for j in range(2, 5))
    hand = -1 * lag1 + 2 * lag2 / 2
    assert multiscale(p, synchronize(p), 2, optimal_weights(2)).value == pytest.approx(hand, abs=1e-14)


def test_multiscale_errors_and_constant():
    rng = np.random.default_rng(6)
    p = random_pair(rng, 20)
    s = synchronize(p)
    with pytest.raises(ValueError):
        multiscale(p, s, s.n_sync + 1)
    with pytest.raises(ValueError):
        multiscale(p, s, 3, optimal_weights(2))
    c = ObservationPair(TickSeries(p.x.times, np.full(len(p.x), 7.0)), TickSeries(p.y.times, np.ones(len(p.y))))
    assert multiscale(c, synchronize(c), 2).value == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-50, 50), st.floats(-50, 50))
def test_multiscale_identities(seed, shift_x, shift_y):
    rng = np.random.default_rng(seed)
    p = random_pair(rng, 50)
    try:
        s = synchronize(p)
    except InsufficientOverlapError:
        return
    N = s.n_sync
    for M in sorted({min(N, 2), min(N, 5), N}):
        if M < 2:
            continue
        w = optimal_weights(M)
        ms = multiscale(p, s, M, w).value
        combo = math.fsum(a * one_scale(p, s, i).value for i, a in enumerate(w.alpha, start=1))
        assert ms == pytest.approx(combo, abs=1e-10)
        q = ObservationPair(TickSeries(p.x.times, p.x.values + shift_x),
                            TickSeries(p.y.times, p.y.values + shift_y))
        assert multiscale(q, synchronize(q), M, w).value == pytest.approx(ms, abs=1e-9)
    r = p.swapped()
    sr = synchronize(r)
    assert hayashi_yoshida(r, sr).value == pytest.approx(hayashi_yoshida(p, s).value, abs=1e-12)
    if N >= 3:
        assert multiscale(r, sr, 3).value == pytest.approx(multiscale(p, s, 3).value, abs=1e-12)


def test_multiscale_noiseless_synchronous_brownian():
    cfg = SimConfig(sampling="equidistant", n=2000, eta2_x=0, eta2_y=0, rho=0.5)
    vals = []
    for k in range(200):
        p = simulate_pair(cfg, np.random.default_rng(k))
        vals.append(multiscale(p, synchronize(p), 10).value)
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - 0.5) < 3 * se


# ---------------------------------------------------------------- univariate

def test_univariate_constant():
    s = TickSeries(np.arange(10) / 9, np.full(10, 3.0))
    assert tsrv_univariate(s, 3).value == 0
    assert msrv_univariate(s, 3).value == 0
    with pytest.raises(ValueError):
        msrv_univariate(s, 1, None)
    with pytest.raises(ValueError):
        tsrv_univariate(s, 1)


def test_tsrv_pure_noise_unbiased():
    rng = np.random.default_rng(8)
    n, eta2, i = 2000, 0.01, 20
    t = np.arange(n + 1) / n
    vals = [tsrv_univariate(TickSeries(t, math.sqrt(eta2) * rng.standard_normal(n + 1)), i).value
            for _ in range(1000)]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals)) < 3 * se


def test_tsrv_noiseless_brownian():
    rng = np.random.default_rng(9)
    n = 3000
    i = math.ceil(n ** (2 / 3))
    t = np.arange(n + 1) / n
    vals = []
    for _ in range(300):
        x = np.concatenate(([0.0], np.cumsum(rng.standard_normal(n) / math.sqrt(n))))
        vals.append(tsrv_univariate(TickSeries(t, x), i).value)
    # exact expectation: the lag-i average sees (n - i + 1)/n of the signal and the
    # correction removes a further 1/i of it
    target = (n - i + 1) / n * (1 - 1 / i)
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - target) < 3 * se
    assert abs(np.mean(vals) - 1) < 0.1


def test_msrv_noisy_brownian():
    rng = np.random.default_rng(10)
    n = 4000
    M = math.ceil(math.sqrt(n))
    t = np.arange(n + 1) / n
    vals = []
    for _ in range(200):
        x = np.concatenate(([0.0], np.cumsum(rng.standard_normal(n) / math.sqrt(n))))
        vals.append(msrv_univariate(TickSeries(t, x + 0.01 * rng.standard_normal(n + 1)), M).value)
    # exact expectation: sum_i alpha_i (n - i + 1)/n for the signal, -2 eta^2 for the noise
    a = optimal_weights(M).alpha
    target = math.fsum(a * (n - np.arange(M)) / n) - 2 * 0.01 ** 2
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - target) < 3 * se
    assert abs(np.mean(vals) - 1) < 0.05
