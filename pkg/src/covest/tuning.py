"""Data-driven choice of the number of scales and the end-to-end pipeline."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from .avar import (AvarInputs, AvarReport, HistogramIntegrals, NoiseVariances, avar_multiscale,
                   avar_one_scale, histogram_integrals, multiscale_coefficients, noise_variances)
from .core import DegenerateError, ObservationPair, validate
from .estimators import SyncedValues, fsum, lag_sum, optimal_weights, weighted_lag_sum
from .sync import SyncResult, TimeFunctionals, synchronize, time_functionals


@dataclass(frozen=True)
class TuningConfig:
    """Options for :func:`estimate_full`.

    The ``c_multi``, ``c_sub``, ``K``, ``M_bin``, ``M`` and ``i_sub`` fields
    override the data-driven choices when set. ``cross_uses_qv`` multiplies the
    noise variances in the cross term by pilot quadratic variations instead of
    the unit constant.
    """

    pilot_L: int = 30
    confidence_level: float = 0.95
    c_multi: float | None = None
    c_sub: float | None = None
    K: int | None = None
    M_bin: int | None = None
    M: int | None = None
    i_sub: int | None = None
    i_endpoint_over_T: bool = True
    nonzero_only: bool = False
    cross_uses_qv: bool = False

    def __post_init__(self):
        if self.pilot_L < 2:
            raise ValueError(f"pilot_L must be >= 2, got {self.pilot_L}")
        if not 0 < self.confidence_level < 1:
            raise ValueError(f"confidence level must lie in (0, 1), got {self.confidence_level}")
        if self.M is not None and self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.i_sub is not None and self.i_sub < 1:
            raise ValueError(f"i_sub must be >= 1, got {self.i_sub}")


# ---------------------------------------------------------------------------
# optimal constants


def c_multi_opt(avar_noise_c3: float, avar_c1: float, avar_dis: float) -> float:
    """Minimizer of ``A c^-3 + B c^-1 + D c`` over ``c > 0``.

    ``[(-B + sqrt(B^2 + 12 D A)) / (6 A)]^(-1/2)``, the positive root of
    ``D c^4 - B c^2 - 3 A = 0``.
    """
    A, B, D = avar_noise_c3, avar_c1, avar_dis
    if not (A > 0 and D > 0):
        raise ValueError(f"need A > 0 and D > 0, got A={A!r}, D={D!r}")
    if B < 0:
        raise ValueError(f"need B >= 0, got {B!r}")
    # (sqrt(B^2 + 12AD) - B)/(6A) rewritten without cancellation
    u = 2 * D / (B + math.sqrt(B * B + 12 * D * A))
    return u ** -0.5


def c_sub_opt(avar_noise_sub: float, avar_dis_sub: float) -> float:
    """Minimizer ``(2A/D)^(1/3)`` of ``A c^-2 + D c``."""
    if not (avar_noise_sub > 0 and avar_dis_sub > 0):
        raise ValueError(f"need positive inputs, got {avar_noise_sub!r}, {avar_dis_sub!r}")
    return (2 * avar_noise_sub / avar_dis_sub) ** (1 / 3)


# ---------------------------------------------------------------------------
# pilots


@dataclass(frozen=True)
class PilotComponents:
    """Sparse-sampling pilot estimates.

    ``dis`` estimates the discretization integral per unit of the
    ``26/35`` (multiscale) or ``2/3`` (one-scale) constant.
    """

    L: int
    dis: float
    qv_x: float
    qv_y: float
    avar_noise: float
    avar_c1: float
    avar_dis: float
    avar_noise_sub: float
    avar_dis_sub: float


def _sparse_rv(v: np.ndarray, L: int) -> float:
    d = v[L::L] - v[0:-L:L][: v[L::L].size]
    return fsum(d * d)


def pilot_dis(sv: SyncedValues, L: int) -> float:
    """Sparse block statistic for the discretization integral.

    Sums ``((X_{g_kL} - X_{l_(k-1)L+1})^2 + (X_{g_kL+2} - X_{l_(k-1)L+3})^2)
    (Y_{gamma_kL} - Y_{lambda_(k-1)L+1})^2`` over the blocks for which every
    index exists and scales by ``N / (2L)``.
    """
    N = sv.n_sync
    k = np.arange(1, N // L + 1)
    k = k[k * L + 2 <= N]
    a = k * L
    b = (k - 1) * L + 1
    dx1 = sv.xg[a] - sv.xl[b]
    dx2 = sv.xg[a + 2] - sv.xl[b + 2]
    dy = sv.yg[a] - sv.yl[b]
    return N / (2 * L) * fsum((dx1 * dx1 + dx2 * dx2) * dy * dy)


def pilot_avars(pair: ObservationPair, sync: SyncResult, L: int,
                noise: NoiseVariances | None = None,
                functionals: TimeFunctionals | None = None,
                i_endpoint_over_T: bool = True) -> PilotComponents:
    """Pilot asymptotic-variance coefficients from lag-``L`` sparse sampling.

    Raises
    ------
    ValueError
        If ``N < 4L``.
    """
    N = sync.n_sync
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    if N < 4 * L:
        raise ValueError(f"N={N} < 4L={4 * L}: choose a smaller pilot lag L (at most {N // 4})")
    if noise is None:
        noise = noise_variances(pair)
    if functionals is None:
        functionals = time_functionals(sync)
    T = sync.horizon
    sv = SyncedValues.of(pair, sync)
    dis = pilot_dis(sv, L)
    qx = _sparse_rv(pair.x.values, L)
    qy = _sparse_rv(pair.y.values, L)
    ex, ey = noise.eta2_x, noise.eta2_y
    inp = AvarInputs(ex, ey, ix_T=functionals.IX_T, iy_T=functionals.IY_T, T=T)
    A, end, _, _ = multiscale_coefficients(inp, i_endpoint_over_T)
    cross = 12 / 5 * (ey * (1 + functionals.IY_T / T) * qx + ex * (1 + functionals.IX_T / T) * qy)
    return PilotComponents(
        L=int(L), dis=dis, qv_x=qx, qv_y=qy,
        avar_noise=A, avar_c1=end + cross, avar_dis=26 / 35 * T * dis,
        avar_noise_sub=4 * ex * ey, avar_dis_sub=2 / 3 * dis,
    )


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class EstimateReport:
    """Result of :func:`estimate_full`.

    ``ci_low``/``ci_high`` are ``point -/+ z sqrt(avar.total) / N^(1/4)``;
    the ``*_sub`` fields hold the one-scale analogue with rate ``N^(1/6)``.
    """

    point: float
    M_used: int
    c_multi: float
    c_multi_used: float
    avar: AvarReport
    ci_low: float
    ci_high: float
    level: float
    rate_scale: float
    n_sync: int
    point_sub: float
    i_used: int
    c_sub: float
    avar_sub: AvarReport
    ci_low_sub: float
    ci_high_sub: float
    noise: NoiseVariances
    integrals: HistogramIntegrals
    pilot: PilotComponents
    c_multi_pilot: float
    c_sub_pilot: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-12))


def estimate_full(pair: ObservationPair, config: TuningConfig | None = None) -> EstimateReport:
    """Estimate ``[X, Y]_T`` with a data-driven number of scales and a confidence interval.

    Steps: synchronize, pilot constants from sparse sampling, histogram
    integrals with ``K = ceil(sqrt(c_p) N^(1/5))`` bins and
    ``M_bin = ceil(c_p^(5/4) N^(3/5))`` scales per bin, estimated asymptotic
    variance, ``M = ceil(c sqrt(N))`` clamped to ``[2, N/3]`` and the
    multiscale estimate. The one-scale estimate with ``i = ceil(c_sub N^(2/3))``
    is computed alongside.

    Raises
    ------
    DegenerateError
        Naming the stage that could not proceed.
    """
    config = config or TuningConfig()
    mesh = validate(pair)
    sync = synchronize(pair)
    N = sync.n_sync
    functionals = time_functionals(sync)
    noise = noise_variances(pair, config.nonzero_only)
    pilot = pilot_avars(pair, sync, config.pilot_L, noise, functionals, config.i_endpoint_over_T)

    if not (pilot.avar_noise > 0 and pilot.avar_dis > 0):
        raise DegenerateError("pilot", "degenerate pilot: zero noise or zero signal estimate")
    c_p = c_multi_opt(pilot.avar_noise, pilot.avar_c1, pilot.avar_dis)
    c_p_sub = c_sub_opt(pilot.avar_noise_sub, pilot.avar_dis_sub)

    K = config.K or max(1, _ceil(math.sqrt(c_p) * N ** 0.2))
    M_bin = config.M_bin or max(2, _ceil(c_p ** 1.25 * N ** 0.6))
    integrals = histogram_integrals(pair, sync, functionals, K, M_bin)
    qv = {"qv_x": pilot.qv_x, "qv_y": pilot.qv_y} if config.cross_uses_qv else {}
    inputs = AvarInputs.build(noise, integrals, functionals, **qv)
    A, end, cross, D = multiscale_coefficients(inputs, config.i_endpoint_over_T)
    if not D > 0:
        raise DegenerateError("avar", "estimated discretization variance is zero")
    c_hat = config.c_multi or c_multi_opt(A, end + cross, D)

    flags = list(integrals.flags)
    if config.M is not None:
        M = min(int(config.M), N)
    else:
        M = min(max(2, _ceil(c_hat * math.sqrt(N))), max(2, N // 3))
    sv = SyncedValues.of(pair, sync)
    if M == 1:
        point = lag_sum(sv, 1)
        flags.append("M=1: Hayashi-Yoshida estimate; variance formula assumes M >= 2")
    else:
        point = weighted_lag_sum(sv, optimal_weights(M).alpha)
    c_used = M / math.sqrt(N)
    avar = avar_multiscale(inputs, c_used, config.i_endpoint_over_T)
    z = NormalDist().inv_cdf(0.5 + config.confidence_level / 2)
    rate = N ** 0.25
    half = z * math.sqrt(avar.total) / rate

    sub_dis = 2 / 3 * (inputs.i1 + inputs.i2)
    if config.c_sub is not None:
        c_sub = config.c_sub
    elif sub_dis > 0 and pilot.avar_noise_sub > 0:
        c_sub = c_sub_opt(pilot.avar_noise_sub, sub_dis)
    else:
        c_sub = c_p_sub
    i_sub = config.i_sub or min(max(1, _ceil(c_sub * N ** (2 / 3))), N)
    i_sub = min(i_sub, N)
    point_sub = lag_sum(sv, i_sub) / i_sub
    avar_sub = avar_one_scale(inputs, i_sub / N ** (2 / 3))
    half_sub = z * math.sqrt(avar_sub.total) / N ** (1 / 6)

    diagnostics = {
        **sync.diagnostics(),
        "n": mesh.n, "m": mesh.m, "delta_x": mesh.delta_x, "delta_y": mesh.delta_y,
        "K": K, "M_bin": M_bin, "merges": dict(integrals.merges),
        "G_T": functionals.G_T, "IX_T": functionals.IX_T, "IY_T": functionals.IY_T,
        "flags": flags + list(mesh.warnings),
    }
    return EstimateReport(
        point=point, M_used=M, c_multi=c_hat, c_multi_used=c_used, avar=avar,
        ci_low=point - half, ci_high=point + half, level=config.confidence_level,
        rate_scale=rate, n_sync=N,
        point_sub=point_sub, i_used=i_sub, c_sub=c_sub, avar_sub=avar_sub,
        ci_low_sub=point_sub - half_sub, ci_high_sub=point_sub + half_sub,
        noise=noise, integrals=integrals, pilot=pilot,
        c_multi_pilot=c_p, c_sub_pilot=c_p_sub, diagnostics=diagnostics,
    )
