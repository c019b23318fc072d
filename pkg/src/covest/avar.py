"""Noise variances, histogram integral estimators and asymptotic variances.

The asymptotic variance of the multiscale estimator with ``M = c sqrt(N)`` has
the shape ``A c^-3 + B c^-1 + D c``; :class:`AvarReport` keeps the three
coefficient groups separately so the tuning step can minimize over ``c``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DegenerateError, ObservationPair
from .estimators import SyncedValues, msrv_values, optimal_weights, weighted_lag_sum
from .sync import SyncResult, TimeFunctionals

DRIVERS = ("G", "IX", "IY")


@dataclass(frozen=True)
class NoiseVariances:
    eta2_x: float
    eta2_y: float


def _noise_var(values: np.ndarray, nonzero_only: bool) -> float:
    d = np.diff(values)
    rv = math.fsum((d * d).tolist())
    count = int(np.count_nonzero(d)) if nonzero_only else d.size
    return rv / (2 * count) if count else 0.0


def noise_variances(pair: ObservationPair, nonzero_only: bool = False) -> NoiseVariances:
    """Realized variance over twice the number of returns, per series.

    With ``nonzero_only`` the divisor counts only non-zero returns, which
    suits tick data with many repeated prices.
    """
    return NoiseVariances(_noise_var(pair.x.values, nonzero_only), _noise_var(pair.y.values, nonzero_only))


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class BinPartition:
    """Bins ``(b_{j-1}, b_j]`` chosen so each carries an equal share of a driver.

    Attributes
    ----------
    boundaries : ndarray
        ``b_0 = 0 <= b_1 <= ... <= b_K = T`` after any merging.
    multiplicity : ndarray of int
        Number of original (equal-share) bins each bin represents.
    sync_ranges : list of (int, int)
        Inclusive ranges of synchronized indices ``k >= 1`` with ``T_k`` in the bin.
    x_ranges, y_ranges : list of (int, int)
        Inclusive ranges of tick indices inside the bin (empty if no pair given).
    """

    driver: str
    K: int
    total: float
    boundaries: np.ndarray
    multiplicity: np.ndarray
    sync_ranges: list
    x_ranges: list = field(default_factory=list)
    y_ranges: list = field(default_factory=list)

    @property
    def merges(self) -> int:
        return self.K - (self.boundaries.size - 1)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)


def _driver(functionals: TimeFunctionals, driver: str):
    if driver not in DRIVERS:
        raise ValueError(f"driver must be one of {DRIVERS}, got {driver!r}")
    return getattr(functionals, driver)


def _ranges(times: np.ndarray, bounds: np.ndarray, first: int) -> list:
    hi = np.searchsorted(times, bounds[1:], side="right") - 1
    lo = np.searchsorted(times, bounds[:-1], side="right")
    lo = np.maximum(lo, first)
    return [(int(a), int(b)) for a, b in zip(lo, hi)]


def partition(sync: SyncResult, functionals: TimeFunctionals, driver: str, K: int,
              pair: ObservationPair | None = None, min_sync: int = 0) -> BinPartition:
    """Split ``(0, T]`` into ``K`` bins of equal driver increase.

    Boundary ``b_j`` is the first time the driver reaches ``j/K`` of its total
    (``b_K`` is the horizon). Bins holding fewer than ``min_sync`` synchronized
    points are merged into the next bin (the last one into its predecessor).

    Raises
    ------
    DegenerateError
        If the driver total is zero.
    """
    K = int(K)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    f = _driver(functionals, driver)
    total = f.total
    if not total > 0:
        raise DegenerateError("partition", f"degenerate driver {driver}: total increase is 0")
    T = sync.horizon
    targets = total * np.arange(1, K) / K
    pos = np.searchsorted(f.values, targets - 1e-12 * total, side="left")
    bounds = np.concatenate(([0.0], f.breakpoints[pos], [T]))
    mult = np.ones(K, dtype=np.int64)

    if min_sync > 0 and K > 1:
        counts = [b - a + 1 for a, b in _ranges(sync.refresh, bounds, 1)]
        keep_b = [0.0]
        keep_m: list[int] = []
        acc_c = acc_m = 0
        for j in range(K):
            acc_c += counts[j]
            acc_m += 1
            if acc_c >= min_sync:
                keep_b.append(bounds[j + 1])
                keep_m.append(acc_m)
                acc_c = acc_m = 0
        if acc_m:
            if keep_m:
                keep_m[-1] += acc_m
                keep_b[-1] = bounds[-1]
            else:
                keep_b.append(bounds[-1])
                keep_m.append(acc_m)
        bounds = np.asarray(keep_b)
        mult = np.asarray(keep_m, dtype=np.int64)

    bounds.setflags(write=False)
    mult.setflags(write=False)
    xr = _ranges(pair.x.times, bounds, 1) if pair is not None else []
    yr = _ranges(pair.y.times, bounds, 1) if pair is not None else []
    return BinPartition(driver, K, total, bounds, mult, _ranges(sync.refresh, bounds, 1), xr, yr)


# ---------------------------------------------------------------------------
# histogram integrals


@dataclass(frozen=True)
class HistogramIntegrals:
    """Estimates of the four integrals entering the asymptotic variance.

    ``i1``: int G'(rho sx sy)^2, ``i2``: int G'(sx sy)^2,
    ``i3``: int I_Y' sx^2, ``i4``: int I_X' sy^2.
    """

    i1: float
    i2: float
    i3: float
    i4: float
    K: int
    M_bin: int
    merges: dict = field(default_factory=dict)
    flags: tuple = ()

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.i1, self.i2, self.i3, self.i4


def _bin_M(size: int, M_bin: int) -> int:
    return max(2, min(M_bin, size // 3))


def _univariate_bins(values: np.ndarray, ranges: list, M_bin: int, flags: list, name: str) -> np.ndarray:
    out = np.zeros(len(ranges))
    for b, (lo, hi) in enumerate(ranges):
        size = hi - lo + 1
        if size < 2:
            flags.append(f"{name}: bin {b} has {size} ticks")
            continue
        M = _bin_M(size, M_bin)
        v = msrv_values(values, optimal_weights(M).alpha, lo, hi)
        if v < 0:
            flags.append(f"{name}: negative estimate in bin {b} clamped to 0")
            v = 0.0
        out[b] = v
    return out


def histogram_integrals(pair: ObservationPair, sync: SyncResult, functionals: TimeFunctionals,
                        K: int, M_bin: int) -> HistogramIntegrals:
    """Time-adjusted histogram estimators built from binwise multiscale estimates.

    Covariation and variances on ``G``-bins give ``i1`` and ``i2``; variances
    on ``I_Y``- and ``I_X``-bins give ``i3`` and ``i4``. A driver with zero
    total makes the matching integral 0 and adds a flag. Bins with fewer than
    ``3 * M_bin`` synchronized points are merged.
    """
    if K < 1 or M_bin < 2:
        raise ValueError(f"need K >= 1 and M_bin >= 2, got K={K}, M_bin={M_bin}")
    flags: list[str] = []
    merges: dict[str, int] = {}
    min_sync = 3 * M_bin
    sv = SyncedValues.of(pair, sync)

    pg = partition(sync, functionals, "G", K, pair, min_sync)
    merges["G"] = pg.merges
    share = functionals.G_T / K * pg.multiplicity
    w = pg.widths
    cov = np.zeros(w.size)
    for b, (lo, hi) in enumerate(pg.sync_ranges):
        size = hi - lo + 1
        if size < 2:
            flags.append(f"G: bin {b} has {size} synchronized points")
            continue
        cov[b] = weighted_lag_sum(sv, optimal_weights(_bin_M(size, M_bin)).alpha, lo, hi)
    vx = _univariate_bins(pair.x.values, pg.x_ranges, M_bin, flags, "G/X")
    vy = _univariate_bins(pair.y.values, pg.y_ranges, M_bin, flags, "G/Y")
    ok = w > 0
    i1 = math.fsum(((cov[ok] / w[ok]) ** 2 * share[ok]).tolist())
    i2 = math.fsum((vx[ok] * vy[ok] / w[ok] ** 2 * share[ok]).tolist())

    def cross(driver: str, values: np.ndarray, ranges_attr: str, total: float) -> float:
        if not total > 0:
            flags.append(f"{driver}: degenerate driver, integral set to 0")
            merges[driver] = 0
            return 0.0
        p = partition(sync, functionals, driver, K, pair, min_sync)
        merges[driver] = p.merges
        v = _univariate_bins(values, getattr(p, ranges_attr), M_bin, flags, f"{driver}")
        ww = p.widths
        okk = ww > 0
        return math.fsum((v[okk] / ww[okk] * (total / K) * p.multiplicity[okk]).tolist())

    i3 = cross("IY", pair.x.values, "x_ranges", functionals.IY_T)
    i4 = cross("IX", pair.y.values, "y_ranges", functionals.IX_T)
    return HistogramIntegrals(i1, i2, i3, i4, int(K), int(M_bin), merges, tuple(flags))


# ---------------------------------------------------------------------------
# assembled asymptotic variances


@dataclass(frozen=True)
class AvarInputs:
    """Plug-in quantities for the estimated asymptotic variance.

    ``qv_x``/``qv_y`` replace the unit constant multiplying the noise
    variances in the cross term when given (see :func:`avar_multiscale`).
    """

    eta2_x: float
    eta2_y: float
    i1: float = 0.0
    i2: float = 0.0
    i3: float = 0.0
    i4: float = 0.0
    ix_T: float = 0.0
    iy_T: float = 0.0
    T: float = 1.0
    qv_x: float | None = None
    qv_y: float | None = None

    @classmethod
    def build(cls, noise: NoiseVariances, integrals: HistogramIntegrals,
              functionals: TimeFunctionals, **kw) -> "AvarInputs":
        return cls(noise.eta2_x, noise.eta2_y, *integrals.as_tuple(),
                   functionals.IX_T, functionals.IY_T, functionals.horizon, **kw)


@dataclass(frozen=True)
class AvarReport:
    """Asymptotic variance split into components.

    Components are coefficients; ``total`` applies the powers of ``c``:
    ``c^-3 noise + c^-1 (end + cross) + c dis`` for the multiscale kind and
    ``c^-2 noise + c dis`` for the one-scale kind.
    """

    kind: str
    c: float
    avar_noise: float
    avar_end: float
    avar_cross: float
    avar_dis: float
    total: float
    i1: float = 0.0
    i2: float = 0.0
    i3: float = 0.0
    i4: float = 0.0

    def at(self, c: float) -> float:
        """Total re-evaluated at another constant ``c``."""
        if self.kind == "multiscale":
            return c ** -3 * self.avar_noise + (self.avar_end + self.avar_cross) / c + c * self.avar_dis
        return c ** -2 * self.avar_noise + c * self.avar_dis

    def to_dict(self) -> dict:
        return asdict(self)


def multiscale_coefficients(inp: AvarInputs, i_endpoint_over_T: bool = True) -> tuple[float, float, float, float]:
    """Return ``(noise, end, cross, dis)`` coefficients of the multiscale AVAR."""
    ee = inp.eta2_x * inp.eta2_y
    isum = inp.ix_T + inp.iy_T
    if i_endpoint_over_T:
        isum /= inp.T
    noise = (24.0 + 12.0 * isum) * ee
    end = 12.0 / 5.0 * ee
    qx = 1.0 if inp.qv_x is None else inp.qv_x
    qy = 1.0 if inp.qv_y is None else inp.qv_y
    cross = 12.0 / 5.0 * (inp.eta2_y * (qx + inp.i3) + inp.eta2_x * (qy + inp.i4))
    dis = 26.0 / 35.0 * inp.T * (inp.i1 + inp.i2)
    return noise, end, cross, dis


def avar_multiscale(inp: AvarInputs, c_multi: float, i_endpoint_over_T: bool = True) -> AvarReport:
    """Estimated asymptotic variance of the multiscale estimator with ``M = c sqrt(N)``.

    ``(c^-3 (24 + 12 (I_X(T) + I_Y(T))/T) + (12/5) c^-1) eta_x eta_y
    + c (26/35) T (i1 + i2) + c^-1 (12/5)(eta_y (1 + i3) + eta_x (1 + i4))``
    where ``eta`` denote noise variances. The division by ``T`` in the first
    term can be switched off.
    """
    if not c_multi > 0:
        raise ValueError(f"c must be positive, got {c_multi!r}")
    noise, end, cross, dis = multiscale_coefficients(inp, i_endpoint_over_T)
    total = c_multi ** -3 * noise + (end + cross) / c_multi + c_multi * dis
    return AvarReport("multiscale", float(c_multi), noise, end, cross, dis, total,
                      inp.i1, inp.i2, inp.i3, inp.i4)


def avar_one_scale(inp: AvarInputs, c_sub: float) -> AvarReport:
    """``c^-2 4 eta_x eta_y + c (2/3)(i1 + i2)`` for the one-scale estimator with ``i = c N^(2/3)``."""
    if not c_sub > 0:
        raise ValueError(f"c must be positive, got {c_sub!r}")
    noise = 4.0 * inp.eta2_x * inp.eta2_y
    dis = 2.0 / 3.0 * (inp.i1 + inp.i2)
    total = c_sub ** -2 * noise + c_sub * dis
    return AvarReport("one_scale", float(c_sub), noise, 0.0, 0.0, dis, total,
                      inp.i1, inp.i2, inp.i3, inp.i4)


# ---------------------------------------------------------------------------
# closed forms


def synchronous_avar_closed_form(sigma_x: float, sigma_y: float, rho: float, eta2_x: float,
                                 eta2_y: float, c: float, T: float = 1.0, kind: str = "multiscale",
                                 g_prime: float = 1.0) -> float:
    """Asymptotic variance under synchronous sampling with constant coefficients.

    ``g_prime`` is the (constant) derivative of the quadratic variation of time.
    """
    ee = eta2_x * eta2_y
    integral = g_prime * (rho * rho + 1) * (sigma_x * sigma_y) ** 2 * T
    if kind == "multiscale":
        return (c ** -3 * 24 * ee + c * 26 / 35 * T * integral
                + 12 / 5 / c * (ee + eta2_x * sigma_y ** 2 * T + eta2_y * sigma_x ** 2 * T))
    if kind == "one_scale":
        return c ** -2 * 4 * ee + c * 2 / 3 * T * integral
    raise ValueError(f"unknown kind {kind!r}")


def poisson_discretization_factor(theta1: float, theta2: float) -> float:
    """Limit of ``G'`` under independent Poisson sampling."""
    a = theta1 * theta1 * theta2 * theta2
    return 2.0 * (1.0 - 2.0 * a / (a + (theta1 ** 2 + theta2 ** 2) * (theta1 + theta2) ** 2))


def poisson_i_limit(theta1: float, theta2: float) -> float:
    """Limit of ``I_X^N(T)/T`` (and of ``I_Y^N(T)/T``) under Poisson sampling."""
    return theta1 * theta2 / (theta1 + theta2) ** 2


def poisson_coefficients(theta1, theta2, sigma_x, sigma_y, rho, eta2_x, eta2_y, T=1.0,
                         kind="multiscale") -> tuple[float, float, float]:
    """Coefficients ``(A, B, D)`` of ``c^-3``/``c^-2``, ``c^-1`` and ``c``."""
    for name, v in (("theta1", theta1), ("theta2", theta2), ("T", T)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")
    ee = eta2_x * eta2_y
    g = poisson_discretization_factor(theta1, theta2)
    integral = g * (sigma_x * sigma_y) ** 2 * (1 + rho * rho) * T
    if kind == "one_scale":
        return 4 * ee, 0.0, 2 / 3 * integral
    if kind != "multiscale":
        raise ValueError(f"unknown kind {kind!r}")
    il = poisson_i_limit(theta1, theta2)
    A = (24 + 12 * 2 * il) * ee
    B = 12 / 5 * ee + 12 / 5 * (eta2_y * (1 + il) * sigma_x ** 2 * T + eta2_x * (1 + il) * sigma_y ** 2 * T)
    D = 26 / 35 * integral
    return A, B, D


def poisson_avar_closed_form(theta1: float, theta2: float, sigma_x: float, sigma_y: float,
                             rho: float, eta2_x: float, eta2_y: float, c: float, T: float = 1.0,
                             kind: str = "multiscale") -> float:
    """Asymptotic variance under independent homogeneous Poisson sampling.

    Constant coefficients; the integrals over ``[0, T]`` become products with
    ``T``. The cross term uses the asynchronicity limit
    ``theta1 theta2 / (theta1 + theta2)^2``, the same value that enters the
    noise term.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c!r}")
    A, B, D = poisson_coefficients(theta1, theta2, sigma_x, sigma_y, rho, eta2_x, eta2_y, T, kind)
    if kind == "one_scale":
        return A * c ** -2 + D * c
    return A * c ** -3 + B / c + D * c
