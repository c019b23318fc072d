"""Point estimators of integrated (co-)variance.

All bivariate estimators work on the index maps of a :class:`SyncResult` and
therefore on the observed (noisy) values, never on interpolated prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ObservationPair, TickSeries
from .sync import SyncResult

KINDS = ("hy", "rc", "one_scale", "tsrv", "multiscale", "msrv")


def fsum(a) -> float:
    """Exactly rounded sum of an array."""
    return math.fsum(np.asarray(a, dtype=float).ravel().tolist())


@dataclass(frozen=True)
class WeightVector:
    """Multiscale weights ``alpha_1..alpha_M``.

    Construction checks ``sum(alpha) = 1`` and ``sum(alpha_i / i) = 0``.
    """

    m_scale: int
    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        if self.m_scale < 2 or a.size != self.m_scale:
            raise ValueError(f"need M >= 2 weights matching m_scale, got M={self.m_scale}, len={a.size}")
        c1, c2 = self.conditions()
        if abs(c1 - 1.0) > 1e-10 or abs(c2) > 1e-10:
            raise ValueError(f"weights violate sum=1 / sum(alpha/i)=0: {c1!r}, {c2!r}")

    def conditions(self) -> tuple[float, float]:
        i = np.arange(1, self.m_scale + 1)
        return fsum(self.alpha), fsum(self.alpha / i)


def optimal_weights(M: int) -> WeightVector:
    """Noise-optimal weights ``12 i^2/(M^3-M) - 6 i/(M^2-1) - 6 i/(M^3-M)``.

    Parameters
    ----------
    M : int
        Number of scales, at least 2.
    """
    M = int(M)
    if M < 2:
        raise ValueError(f"optimal weights need M >= 2, got {M}")
    i = np.arange(1, M + 1, dtype=float)
    m3 = float(M) ** 3 - M
    alpha = 12 * i * i / m3 - 6 * i / (float(M) ** 2 - 1) - 6 * i / m3
    return WeightVector(M, alpha)


@dataclass(frozen=True)
class EstimateValue:
    value: float
    estimator_kind: str
    frequency: int
    n_sync: int

    def __post_init__(self):
        if self.estimator_kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")
        if not 1 <= self.frequency <= max(self.n_sync, 1):
            raise ValueError(f"frequency {self.frequency} outside [1, {self.n_sync}]")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class SyncedValues:
    """Observed values at the four synchronized index maps."""

    xg: np.ndarray
    xl: np.ndarray
    yg: np.ndarray
    yl: np.ndarray

    @classmethod
    def of(cls, pair: ObservationPair, sync: SyncResult) -> "SyncedValues":
        xv, yv = pair.x.values, pair.y.values
        return cls(xv[sync.g_idx], xv[sync.l_idx], yv[sync.gamma_idx], yv[sync.lambda_idx])

    @property
    def n_sync(self) -> int:
        return self.xg.size - 1


def lag_sum(sv: SyncedValues, i: int, lo: int = 1, hi: int | None = None) -> float:
    """``sum_{j=lo+i-1}^{hi} (X_{g_j} - X_{l_{j-i+1}})(Y_{gamma_j} - Y_{lambda_{j-i+1}})``.

    With the defaults this is the full lag-``i`` sum over ``j = i..N``.
    """
    if hi is None:
        hi = sv.n_sync
    if hi - lo + 1 < i:
        return 0.0
    dx = sv.xg[lo + i - 1:hi + 1] - sv.xl[lo:hi - i + 2]
    dy = sv.yg[lo + i - 1:hi + 1] - sv.yl[lo:hi - i + 2]
    return fsum(dx * dy)


def weighted_lag_sum(sv: SyncedValues, alpha: np.ndarray, lo: int = 1, hi: int | None = None) -> float:
    """``sum_i (alpha_i / i) * lag_sum(i)`` on the sync index range ``[lo, hi]``."""
    terms = [a / i * lag_sum(sv, i, lo, hi) for i, a in enumerate(alpha, start=1)]
    return math.fsum(terms)


def hayashi_yoshida(pair: ObservationPair, sync: SyncResult) -> EstimateValue:
    """Hayashi-Yoshida estimator in its synchronized single-sum form."""
    sv = SyncedValues.of(pair, sync)
    return EstimateValue(lag_sum(sv, 1), "hy", 1, sv.n_sync)


def hayashi_yoshida_overlap(pair: ObservationPair) -> float:
    """Hayashi-Yoshida estimator as a sum over all overlapping increment pairs.

    Sweeps both schemes once; used as a cross-check of the synchronized form.
    """
    tx, ty = pair.x.times, pair.y.times
    dx, dy = np.diff(pair.x.values), np.diff(pair.y.values)
    terms = []
    j = 0
    m = dy.size
    for i in range(dx.size):
        a, b = tx[i], tx[i + 1]
        # first Y interval with right end > a
        while j < m and ty[j + 1] <= a:
            j += 1
        k = j
        while k < m and ty[k] < b:
            terms.append(dx[i] * dy[k])
            k += 1
    return math.fsum(terms)


def realized_covolatility(pair: ObservationPair) -> EstimateValue:
    """Sum of products of increments on identical observation grids."""
    if pair.x.times.shape != pair.y.times.shape or np.any(pair.x.times != pair.y.times):
        raise ValueError("realized covolatility needs identical observation times")
    v = fsum(np.diff(pair.x.values) * np.diff(pair.y.values))
    return EstimateValue(v, "rc", 1, pair.x.n)


def one_scale(pair: ObservationPair, sync: SyncResult, i: int) -> EstimateValue:
    """Lag-``i`` subsampling estimator on the synchronized groups, divided by ``i``."""
    N = sync.n_sync
    if not 1 <= i <= N:
        raise ValueError(f"lag {i} outside [1, N={N}]")
    sv = SyncedValues.of(pair, sync)
    return EstimateValue(lag_sum(sv, i) / i, "one_scale", int(i), N)


def multiscale(pair: ObservationPair, sync: SyncResult, M: int,
               weights: WeightVector | None = None) -> EstimateValue:
    """Generalized multiscale estimator ``sum_i alpha_i * one_scale(i)``.

    ``weights`` defaults to :func:`optimal_weights` of ``M``.
    """
    N = sync.n_sync
    if weights is None:
        weights = optimal_weights(M)
    if weights.m_scale != M:
        raise ValueError(f"weights have M={weights.m_scale}, expected {M}")
    if M > N:
        raise ValueError(f"M={M} exceeds N={N}")
    sv = SyncedValues.of(pair, sync)
    return EstimateValue(weighted_lag_sum(sv, weights.alpha), "multiscale", int(M), N)


# univariate -----------------------------------------------------------------


def _lag_sq_sum(v: np.ndarray, i: int, lo: int = 1, hi: int | None = None) -> float:
    """``sum_{j=lo+i-1}^{hi} (v_j - v_{j-i})^2``."""
    if hi is None:
        hi = v.size - 1
    if hi - lo + 1 < i:
        return 0.0
    d = v[lo + i - 1:hi + 1] - v[lo - 1:hi - i + 1]
    return fsum(d * d)


def msrv_values(v: np.ndarray, alpha: np.ndarray, lo: int = 1, hi: int | None = None) -> float:
    return math.fsum(a / i * _lag_sq_sum(v, i, lo, hi) for i, a in enumerate(alpha, start=1))


def tsrv_univariate(series: TickSeries, i: int) -> EstimateValue:
    """Two-scales realized volatility.

    The lag-``i`` average is corrected by ``(nbar/n) * RV`` with
    ``nbar = (n - i + 1)/i``, i.e. by ``2 * nbar`` times the noise-variance
    estimate ``RV/(2n)``.
    """
    v = series.values
    n = series.n
    if not 2 <= i <= n:
        raise ValueError(f"lag {i} outside [2, n={n}]")
    avg = _lag_sq_sum(v, i) / i
    rv = _lag_sq_sum(v, 1)
    nbar = (n - i + 1) / i
    return EstimateValue(avg - nbar / n * rv, "tsrv", int(i), n)


def msrv_univariate(series: TickSeries, M: int, weights: WeightVector | None = None) -> EstimateValue:
    """Multiscale realized volatility of one series."""
    if weights is None:
        weights = optimal_weights(M)
    if weights.m_scale != M:
        raise ValueError(f"weights have M={weights.m_scale}, expected {M}")
    if M > series.n:
        raise ValueError(f"M={M} exceeds n={series.n}")
    return EstimateValue(msrv_values(series.values, weights.alpha), "msrv", int(M), series.n)
