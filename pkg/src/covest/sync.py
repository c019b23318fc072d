"""Iterative synchronization of two tick schemes and the derived time functionals.

The synchronizer groups ticks into intervals ``[l_k, g_k]`` (for X) and
``[lambda_k, gamma_k]`` (for Y) whose overlaps reproduce the Hayashi-Yoshida
estimator as a single sum. ``T_k = min(g_k, gamma_k)`` are the refresh times.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .core import InsufficientOverlapError, ObservationPair, TickSeries


def _ro(a, dtype=float) -> np.ndarray:
    out = np.asarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SyncResult:
    """Output of :func:`synchronize`.

    All sequences have length ``n_sync + 1`` and are indexed ``0..N``.
    ``*_idx`` arrays map each entry to its position in the original series.
    """

    g_idx: np.ndarray
    l_idx: np.ndarray
    gamma_idx: np.ndarray
    lambda_idx: np.ndarray
    g: np.ndarray
    l: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    refresh: np.ndarray
    horizon: float
    dropped_x: tuple[int, int] = (0, 0)
    dropped_y: tuple[int, int] = (0, 0)

    @property
    def n_sync(self) -> int:
        return self.refresh.size - 1

    def diagnostics(self) -> dict:
        return {
            "n_sync": self.n_sync,
            "dropped_x_head": self.dropped_x[0],
            "dropped_x_tail": self.dropped_x[1],
            "dropped_y_head": self.dropped_y[0],
            "dropped_y_tail": self.dropped_y[1],
        }


def _group_indices(tx: list, ty: list) -> tuple[list, list, list, list]:
    """Run the recursion on plain lists; returns index lists (g, l, gamma, lambda)."""
    n, m = len(tx), len(ty)
    # first step
    if tx[0] <= ty[0]:
        gi, li, ci, ki = bisect_left(tx, ty[0]), 0, 0, 0
        if gi == n:
            return [], [], [], []
    else:
        gi, li, ci, ki = 0, 0, bisect_left(ty, tx[0]), 0
        if ci == m:
            return [], [], [], []
    G, L, C, K = [gi], [li], [ci], [ki]
    while True:
        gp, cp = gi, ci
        tg, tc = tx[gp], ty[cp]
        if tg == tc:
            xn, yn = gp + 1, cp + 1
            if xn >= n or yn >= m:
                break
            if tx[xn] <= ty[yn]:
                gi = bisect_left(tx, ty[yn])
                if gi == n:
                    break
                ci = yn
            else:
                ci = bisect_left(ty, tx[xn])
                if ci == m:
                    break
                gi = xn
            li, ki = gp, cp
        elif tg < tc:
            xn = gp + 1
            if xn >= n:
                break
            if tc <= tx[xn]:
                ci = bisect_left(ty, tx[xn])
                if ci == m:
                    break
                gi = xn
            else:
                gi = bisect_left(tx, tc)
                if gi == n:
                    break
                ci = cp
            li, ki = gp, cp - 1
        else:
            yn = cp + 1
            if yn >= m:
                break
            if tg <= ty[yn]:
                gi = bisect_left(tx, ty[yn])
                if gi == n:
                    break
                ci = yn
            else:
                ci = bisect_left(ty, tg)
                if ci == m:
                    break
                gi = gp
            li, ki = gp - 1, cp
        G.append(gi)
        L.append(li)
        C.append(ci)
        K.append(ki)
    return G, L, C, K


def synchronize(pair: ObservationPair) -> SyncResult:
    """Group the ticks of ``pair`` with the iterative synchronization algorithm.

    ``t+(s)`` is the first tick at or after ``s`` and ``t-(s)`` the last tick
    strictly before ``s``; applied to a tick of the same scheme ``t+`` moves to
    the next tick. A tie ``t_0 = tau_0`` takes the ``t_0 <= tau_0`` branch. The
    recursion stops when a required tick does not exist; the last complete
    group defines ``N``.

    Raises
    ------
    InsufficientOverlapError
        If fewer than two groups can be formed.
    """
    tx = pair.x.times.tolist()
    ty = pair.y.times.tolist()
    G, L, C, K = _group_indices(tx, ty)
    if len(G) < 2:
        raise InsufficientOverlapError(
            f"insufficient overlap: only {len(G)} synchronized group(s) could be formed"
        )
    g_idx = np.asarray(G, dtype=np.int64)
    l_idx = np.asarray(L, dtype=np.int64)
    c_idx = np.asarray(C, dtype=np.int64)
    k_idx = np.asarray(K, dtype=np.int64)
    xt, yt = pair.x.times, pair.y.times
    g, gamma = xt[g_idx], yt[c_idx]
    return SyncResult(
        g_idx=_ro(g_idx, np.int64),
        l_idx=_ro(l_idx, np.int64),
        gamma_idx=_ro(c_idx, np.int64),
        lambda_idx=_ro(k_idx, np.int64),
        g=_ro(g),
        l=_ro(xt[l_idx]),
        gamma=_ro(gamma),
        lam=_ro(yt[k_idx]),
        refresh=_ro(np.minimum(g, gamma)),
        horizon=pair.horizon,
        dropped_x=(int(l_idx[0]), int(xt.size - 1 - g_idx[-1])),
        dropped_y=(int(k_idx[0]), int(yt.size - 1 - c_idx[-1])),
    )


# ---------------------------------------------------------------------------
# case classification

UNCLASSIFIED = 0


@dataclass(frozen=True)
class CaseLabels:
    """Case labels 1-4 per synchronized index ``j = 1..N``.

    Entry ``k`` of each array belongs to ``j = k + 1``. Indices whose
    predicates need a tick beyond the end of a scheme carry ``0``.
    """

    for_x: np.ndarray
    for_y: np.ndarray

    def counts(self, process: str = "y") -> dict[int, int]:
        arr = self.for_y if process == "y" else self.for_x
        return {c: int(np.count_nonzero(arr == c)) for c in range(5)}


def _cases(own: np.ndarray, own_idx: np.ndarray, own_times: np.ndarray,
           other: np.ndarray, other_idx: np.ndarray, other_times: np.ndarray) -> np.ndarray:
    """Labels for the process whose right ends are ``own`` (e.g. gamma)."""
    out = np.zeros(own.size - 1, dtype=np.int8)
    n_own, n_other = own_times.size, other_times.size
    for k in range(1, own.size):
        a, b = own[k], other[k]
        if a <= b:
            out[k - 1] = 1
            continue
        nb = other_idx[k] + 1
        if nb >= n_other:
            continue
        b_plus = other_times[nb]
        if a >= b_plus:
            out[k - 1] = 2
            continue
        na = own_idx[k] + 1
        if na >= n_own:
            continue
        out[k - 1] = 3 if own_times[na] > b_plus else 4
    return out


def classify(sync: SyncResult, pair: ObservationPair) -> CaseLabels:
    """Allocate each synchronized index to one of four mutually exclusive cases.

    For Y (X is symmetric), with ``g+`` the X tick after ``g_j``:
    1 if ``gamma_j <= g_j``; 2 if ``gamma_j >= g+``; otherwise 3 when the Y
    tick after ``gamma_j`` lies beyond ``g+`` and 4 when it does not.
    """
    fy = _cases(sync.gamma, sync.gamma_idx, pair.y.times, sync.g, sync.g_idx, pair.x.times)
    fx = _cases(sync.g, sync.g_idx, pair.x.times, sync.gamma, sync.gamma_idx, pair.y.times)
    fx.setflags(write=False)
    fy.setflags(write=False)
    return CaseLabels(for_x=fx, for_y=fy)


# ---------------------------------------------------------------------------
# step functions and time functionals


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous non-decreasing step function.

    ``f(t) = values[k]`` where ``k`` is the last breakpoint ``<= t``;
    ``f(t) = 0`` before the first breakpoint.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    horizon: float = 1.0

    def __call__(self, t):
        k = np.searchsorted(self.breakpoints, t, side="right") - 1
        vals = np.where(k >= 0, self.values[np.maximum(k, 0)], 0.0)
        return float(vals) if np.ndim(vals) == 0 else vals

    @property
    def total(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    @classmethod
    def from_increments(cls, at: np.ndarray, incs: np.ndarray, horizon: float) -> "StepFunction":
        return cls(_ro(at), _ro(np.cumsum(incs)), horizon)


@dataclass(frozen=True)
class TimeFunctionals:
    """Quadratic (co-)variations of time and the asynchronicity counts.

    ``sampled`` holds the five functions evaluated on ``grid`` when a grid
    was supplied.
    """

    G: StepFunction
    F: StepFunction
    H: StepFunction
    IX: StepFunction
    IY: StepFunction
    n_sync: int
    horizon: float
    grid: np.ndarray | None = None
    sampled: dict = field(default_factory=dict)

    @property
    def G_T(self) -> float:
        return self.G.total

    @property
    def IX_T(self) -> float:
        return self.IX.total

    @property
    def IY_T(self) -> float:
        return self.IY.total


def time_functionals(sync: SyncResult, grid=None) -> TimeFunctionals:
    """Build ``G^N, F^N, H^N, I_X^N, I_Y^N`` from a synchronization.

    ``G^N(t) = (N/T) sum_{T_i <= t} (dT_i)^2``. ``F^N`` and ``H^N`` sum over
    ``i = 0..N-1`` with ``T_{i+1} <= t``; ``I_X^N(t)`` is the fraction of
    ``j >= 1`` with ``g_j <= t`` and ``g_j = g_{j-1}``.
    """
    N = sync.n_sync
    T = sync.horizon
    Tk = sync.refresh
    g, gam, l, lam = sync.g, sync.gamma, sync.l, sync.lam
    scale = N / T
    dT = np.diff(Tk)
    Gf = StepFunction.from_increments(Tk[1:], scale * dT * dT, T)
    # i = 0..N-1; l, lambda at i+1
    T0, T1 = Tk[:-1], Tk[1:]
    g0, c0, l0, k0 = g[:-1], gam[:-1], l[:-1], lam[:-1]
    l1, k1 = l[1:], lam[1:]
    dT1 = T1 - T0
    f_inc = (T0 - k0) * (g0 - T0) + (T0 - l0) * (c0 - T0) + dT1 * (T0 - l1) + dT1 * (T0 - k1)
    h_inc = (T0 - l1) * (g0 - T0) + (T0 - k1) * (c0 - T0)
    Ff = StepFunction.from_increments(T1, scale * f_inc, T)
    Hf = StepFunction.from_increments(T1, scale * h_inc, T)
    IXf = StepFunction.from_increments(g[1:], (g[1:] == g[:-1]) / N, T)
    IYf = StepFunction.from_increments(gam[1:], (gam[1:] == gam[:-1]) / N, T)
    sampled = {}
    grid_arr = None
    if grid is not None:
        grid_arr = _ro(np.asarray(grid, dtype=float).copy())
        sampled = {name: f(grid_arr) for name, f in
                   (("G", Gf), ("F", Ff), ("H", Hf), ("IX", IXf), ("IY", IYf))}
    return TimeFunctionals(Gf, Ff, Hf, IXf, IYf, N, T, grid_arr, sampled)


def empirical_derivative(f, t: float, window: float, horizon: float | None = None) -> float:
    """Forward difference quotient ``(f(t + window) - f(t)) / window``.

    ``f`` is any callable of time; ``horizon`` defaults to ``f.horizon``.
    """
    if horizon is None:
        horizon = getattr(f, "horizon", None)
        if horizon is None:
            raise ValueError("horizon is required for plain callables")
    if not window > 0:
        raise ValueError(f"window must be positive, got {window!r}")
    if t < 0 or t + window > horizon * (1 + 1e-12):
        raise ValueError(f"[{t!r}, {t + window!r}] leaves [0, {horizon!r}]")
    return (f(t + window) - f(t)) / window


def retained_pair(pair: ObservationPair, sync: SyncResult) -> ObservationPair:
    """The pair restricted to the ticks the synchronization used.

    Ticks after ``g_N`` (for X) and ``gamma_N`` (for Y) are dropped; on the
    result the synchronized and the overlap form of Hayashi-Yoshida agree.
    """
    gx, gy = int(sync.g_idx[-1]) + 1, int(sync.gamma_idx[-1]) + 1
    return ObservationPair(
        TickSeries(pair.x.times[:gx], pair.x.values[:gx], pair.x.label),
        TickSeries(pair.y.times[:gy], pair.y.values[:gy], pair.y.label),
        pair.horizon,
    )
