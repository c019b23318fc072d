"""Straight-line reference implementations used only by the tests."""

from __future__ import annotations

import numpy as np

from covest.core import ObservationPair, TickSeries

# tick layout of the worked synchronization example
WORKED_X = [0.0, 0.05, 0.10, 0.25, 0.30, 0.35, 0.45, 0.55, 0.70, 0.80, 0.90]
WORKED_Y = [0.0, 0.15, 0.20, 0.25, 0.40, 0.50, 0.60, 0.65, 0.75, 0.85, 0.90]


def worked_pair(xv=None, yv=None) -> ObservationPair:
    xv = np.arange(11.0) if xv is None else xv
    yv = np.arange(11.0) ** 2 if yv is None else yv
    return ObservationPair(TickSeries(WORKED_X, xv, "x"), TickSeries(WORKED_Y, yv, "y"), 1.0)


def refresh_scan(tx, ty):
    """Groups from refresh times: ``T_k`` is the first time both schemes ticked after ``T_{k-1}``.

    Returns index lists ``(l, g, lam, gam)`` or ``None`` if no group forms.
    """
    tx, ty = list(tx), list(ty)

    def first_ge(ts, s):
        for i, t in enumerate(ts):
            if t >= s:
                return i
        return None

    def first_gt(ts, s):
        for i, t in enumerate(ts):
            if t > s:
                return i
        return None

    def last_le(ts, s):
        out = None
        for i, t in enumerate(ts):
            if t <= s:
                out = i
        return out

    T0 = max(tx[0], ty[0])
    g0, c0 = first_ge(tx, T0), first_ge(ty, T0)
    if g0 is None or c0 is None:
        return None
    L, G, K, C = [0], [g0], [0], [c0]
    Tprev = T0
    while True:
        a, b = first_gt(tx, Tprev), first_gt(ty, Tprev)
        if a is None or b is None:
            break
        Tk = max(tx[a], ty[b])
        g, c = first_ge(tx, Tk), first_ge(ty, Tk)
        if g is None or c is None:
            break
        L.append(last_le(tx, Tprev))
        K.append(last_le(ty, Tprev))
        G.append(g)
        C.append(c)
        Tprev = Tk
    return L, G, K, C


def hy_double_sum(tx, x, ty, y) -> float:
    """Sum of dX_i dY_j over all pairs of overlapping observation intervals."""
    total = 0.0
    for i in range(1, len(tx)):
        for j in range(1, len(ty)):
            if min(tx[i], ty[j]) > max(tx[i - 1], ty[j - 1]):
                total += (x[i] - x[i - 1]) * (y[j] - y[j - 1])
    return total


def lag_realized(x, y, i) -> float:
    """Average of lag-``i`` realized covolatilities on a common grid."""
    return sum((x[j] - x[j - i]) * (y[j] - y[j - i]) for j in range(i, len(x))) / i


def random_pair(rng, max_ticks=50, grid=400) -> ObservationPair:
    n, m = rng.integers(2, max_ticks + 1, 2)
    tx = np.sort(rng.choice(grid + 1, n, replace=False)) / grid
    ty = np.sort(rng.choice(grid + 1, m, replace=False)) / grid
    return ObservationPair(TickSeries(tx, rng.normal(size=n)), TickSeries(ty, rng.normal(size=m)), 1.0)
