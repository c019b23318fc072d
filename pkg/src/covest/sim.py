"""Simulation of noisy asynchronously observed Brownian-type paths and Monte Carlo summaries."""

from __future__ import annotations

import configparser
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .avar import poisson_coefficients
from .core import CovestError, ObservationPair, TickSeries
from .estimators import hayashi_yoshida, multiscale
from .sync import synchronize
from .tuning import TuningConfig, c_multi_opt, c_sub_opt, estimate_full

SAMPLINGS = ("equidistant", "intermeshed", "poisson")
NOISE_LAWS = ("gaussian", "two_point")

Coef = float | tuple  # constant, or (knots, values) piecewise constant on [knot_k, knot_{k+1})


def _piecewise(c: Coef, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a coefficient to ``(knots, values)`` with ``knots[0] = 0``."""
    if np.isscalar(c):
        return np.array([0.0]), np.array([float(c)])
    knots, vals = (np.asarray(a, dtype=float) for a in c)
    if knots.shape != vals.shape or knots.size == 0 or knots[0] != 0 or np.any(np.diff(knots) <= 0):
        raise ValueError("piecewise coefficient needs increasing knots starting at 0 and matching values")
    return knots, vals


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo scenario.

    ``sigma_x``, ``sigma_y`` and ``rho`` are constants or ``(knots, values)``
    pairs describing right-continuous piecewise-constant paths. The noise
    variance is ``eta2 * N^(-decay_alpha)`` with ``N`` proxied by ``n``.
    ``sampling`` is one of ``equidistant``, ``intermeshed`` (Y shifted by
    half a step) or ``poisson`` (mean gaps ``theta/n``).
    """

    T: float = 1.0
    sigma_x: Coef = 1.0
    sigma_y: Coef = 1.0
    rho: Coef = 0.5
    mu_x: float = 0.0
    mu_y: float = 0.0
    eta2_x: float = 0.001
    eta2_y: float = 0.001
    decay_alpha: float = 0.0
    sampling: str = "poisson"
    n: int = 30000
    theta1: float = 1.0
    theta2: float = 1.0
    noise_law: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T!r}")
        for name in ("sigma_x", "sigma_y"):
            _, v = _piecewise(getattr(self, name), self.T)
            if np.any(v < 0):
                raise ValueError(f"{name} must be non-negative")
        _, r = _piecewise(self.rho, self.T)
        if np.any(np.abs(r) > 1):
            raise ValueError(f"|rho| must be <= 1, got {self.rho!r}")
        if self.eta2_x < 0 or self.eta2_y < 0:
            raise ValueError("noise variances must be non-negative")
        if not 0 <= self.decay_alpha < 1:
            raise ValueError(f"decay_alpha must lie in [0, 1), got {self.decay_alpha!r}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}")
        if self.noise_law not in NOISE_LAWS:
            raise ValueError(f"noise_law must be one of {NOISE_LAWS}, got {self.noise_law!r}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not (self.theta1 > 0 and self.theta2 > 0):
            raise ValueError("theta1 and theta2 must be positive")

    @property
    def is_constant(self) -> bool:
        return all(np.isscalar(c) for c in (self.sigma_x, self.sigma_y, self.rho))

    def integrated(self, f) -> float:
        """``int_0^T f(sigma_x, sigma_y, rho) dt`` for the piecewise coefficients."""
        knots = np.unique(np.concatenate([_piecewise(c, self.T)[0] for c in
                                          (self.sigma_x, self.sigma_y, self.rho)]))
        knots = knots[knots < self.T]
        widths = np.diff(np.append(knots, self.T))
        sx, sy, r = (_eval(c, knots, self.T) for c in (self.sigma_x, self.sigma_y, self.rho))
        return math.fsum((f(sx, sy, r) * widths).tolist())

    @property
    def true_covariation(self) -> float:
        return self.integrated(lambda sx, sy, r: r * sx * sy)


def _eval(c: Coef, t: np.ndarray, T: float) -> np.ndarray:
    knots, vals = _piecewise(c, T)
    return vals[np.searchsorted(knots, t, side="right") - 1]


def load_config(path: str | Path, **overrides) -> SimConfig:
    """Read a flat ``key = value`` file (``#`` comments) into a :class:`SimConfig`."""
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise CovestError(f"{path}: cannot parse config: {exc}") from None
    types = {f: t for f, t in SimConfig.__annotations__.items()}
    kw: dict = {}
    for key, raw in cp["scenario"].items():
        if key not in types:
            raise CovestError(f"{path}: unknown config key {key!r}")
        try:
            if key in ("sampling", "noise_law"):
                kw[key] = raw.strip()
            elif key in ("n", "seed"):
                kw[key] = int(raw)
            else:
                kw[key] = float(raw)
        except ValueError:
            raise CovestError(f"{path}: bad value for {key}: {raw!r}") from None
    kw.update(overrides)
    try:
        return SimConfig(**kw)
    except ValueError as exc:
        raise CovestError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# generators


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_paths(config: SimConfig, at_times_x, at_times_y, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Efficient log-prices at the given times, started at 0.

    Increments are drawn exactly on the union of both grids and the
    coefficient knots: on each piece ``dX = mu_x dt + sx sqrt(dt) Z1`` and
    ``dY = mu_y dt + sy sqrt(dt) (rho Z1 + sqrt(1 - rho^2) Z2)``.
    """
    rng = _rng(seed)
    tx = np.asarray(at_times_x, dtype=float)
    ty = np.asarray(at_times_y, dtype=float)
    T = config.T
    for t in (tx, ty):
        if t.size and (np.any(np.diff(t) < 0) or t[0] < 0 or t[-1] > T):
            raise ValueError("times must be sorted within [0, T]")
    knots = np.concatenate([_piecewise(c, T)[0] for c in (config.sigma_x, config.sigma_y, config.rho)])
    grid = np.unique(np.concatenate(([0.0], knots[knots < T], tx, ty)))
    left = grid[:-1]
    dt = np.diff(grid)
    sx, sy, r = (_eval(c, left, T) for c in (config.sigma_x, config.sigma_y, config.rho))
    z = rng.standard_normal((2, dt.size))
    sq = np.sqrt(dt)
    dx = config.mu_x * dt + sx * sq * z[0]
    dy = config.mu_y * dt + sy * sq * (r * z[0] + np.sqrt(1.0 - r * r) * z[1])
    X = np.concatenate(([0.0], np.cumsum(dx)))
    Y = np.concatenate(([0.0], np.cumsum(dy)))
    return X[np.searchsorted(grid, tx)], Y[np.searchsorted(grid, ty)]


def sample_poisson_scheme(theta: float, n_expected: float, T: float = 1.0, seed=None) -> np.ndarray:
    """Arrival times in ``(0, T]`` with exponential gaps of mean ``theta / n_expected``."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    rng = _rng(seed)
    mean_gap = theta / n_expected
    lam = T / mean_gap
    chunk = int(lam + 6 * math.sqrt(lam) + 16)
    t = np.cumsum(rng.exponential(mean_gap, chunk))
    while t[-1] <= T:
        t = np.concatenate((t, t[-1] + np.cumsum(rng.exponential(mean_gap, chunk))))
    return t[t <= T]


def add_noise(values, eta2: float, N_for_decay: float = 1.0, alpha: float = 0.0, seed=None,
              law: str = "gaussian") -> np.ndarray:
    """Add i.i.d. centred noise with variance ``eta2 * N_for_decay^(-alpha)``."""
    if eta2 < 0:
        raise ValueError(f"eta2 must be non-negative, got {eta2!r}")
    v = np.asarray(values, dtype=float)
    var = eta2 * float(N_for_decay) ** (-alpha)
    if var == 0:
        return v.copy()
    rng = _rng(seed)
    sd = math.sqrt(var)
    if law == "gaussian":
        return v + sd * rng.standard_normal(v.size)
    if law == "two_point":
        return v + sd * (2.0 * rng.integers(0, 2, v.size) - 1.0)
    raise ValueError(f"unknown noise law {law!r}")


def sample_times(config: SimConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    n, T = config.n, config.T
    if config.sampling == "equidistant":
        t = T * np.arange(n + 1) / n
        return t, t.copy()
    if config.sampling == "intermeshed":
        t = T * np.arange(n + 1) / n
        return t, T * (np.arange(n) + 0.5) / n
    return (sample_poisson_scheme(config.theta1, n, T, rng),
            sample_poisson_scheme(config.theta2, n, T, rng))


def simulate_pair(config: SimConfig, seed=None) -> ObservationPair:
    """Draw schemes, efficient paths and noise for one replication."""
    rng = _rng(seed)
    tx, ty = sample_times(config, rng)
    X, Y = simulate_paths(config, tx, ty, rng)
    Xn = add_noise(X, config.eta2_x, config.n, config.decay_alpha, rng, config.noise_law)
    Yn = add_noise(Y, config.eta2_y, config.n, config.decay_alpha, rng, config.noise_law)
    return ObservationPair(TickSeries(tx, Xn, "x"), TickSeries(ty, Yn, "y"), config.T)


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """PCG64 stream for replication ``rep`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(rep),))))


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class RepResult:
    rep: int
    ok: bool
    error: str = ""
    point: float = math.nan
    point_sub: float = math.nan
    avar: float = math.nan
    avar_sub: float = math.nan
    n_sync: int = 0
    M: int = 0
    i_sub: int = 0
    c_multi: float = math.nan
    c_pilot: float = math.nan
    i1: float = math.nan
    i2: float = math.nan
    i3: float = math.nan
    i4: float = math.nan
    eta2_x: float = math.nan
    eta2_y: float = math.nan


def _fixed_m_point(pair: ObservationPair, M: int) -> tuple[float, int]:
    sync = synchronize(pair)
    M = min(M, sync.n_sync)
    if M == 1:
        return hayashi_yoshida(pair, sync).value, sync.n_sync
    return multiscale(pair, sync, M).value, sync.n_sync


def run_rep(config: SimConfig, tuning: TuningConfig, seed: int, rep: int, point_only: bool = False) -> RepResult:
    """One replication. With ``point_only`` and a fixed ``tuning.M`` only the
    point estimate is computed, which also works for noise-free data."""
    try:
        pair = simulate_pair(config, rep_rng(seed, rep))
        if point_only and tuning.M is not None:
            point, N = _fixed_m_point(pair, tuning.M)
            return RepResult(rep, True, "", point, n_sync=N, M=min(tuning.M, N))
        r = estimate_full(pair, tuning)
    except (CovestError, ValueError) as exc:
        return RepResult(rep, False, f"{type(exc).__name__}: {exc}")
    return RepResult(
        rep, True, "", r.point, r.point_sub, r.avar.total, r.avar_sub.total, r.n_sync, r.M_used,
        r.i_used, r.c_multi, r.c_multi_pilot, *r.integrals.as_tuple(), r.noise.eta2_x, r.noise.eta2_y,
    )


def _run_chunk(args) -> list[RepResult]:
    config, tuning, seed, reps, point_only = args
    return [run_rep(config, tuning, seed, k, point_only) for k in reps]


def run_reps(config: SimConfig, reps: int, tuning: TuningConfig | None = None, seed: int | None = None,
             threads: int = 1, point_only: bool = False) -> list[RepResult]:
    """Run ``reps`` replications; results are ordered by replication index."""
    tuning = tuning or TuningConfig()
    seed = config.seed if seed is None else seed
    idx = list(range(reps))
    if threads <= 1 or reps < 2:
        return _run_chunk((config, tuning, seed, idx, point_only))
    chunks = [idx[k::threads] for k in range(threads)]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(_run_chunk, [(config, tuning, seed, c, point_only) for c in chunks]))
    out = [r for p in parts for r in p]
    return sorted(out, key=lambda r: r.rep)


def _mean(a) -> float:
    return math.fsum(a) / len(a) if len(a) else math.nan


def _std(a) -> float:
    if len(a) < 2:
        return math.nan
    m = _mean(a)
    return math.sqrt(math.fsum((x - m) ** 2 for x in a) / (len(a) - 1))


@dataclass(frozen=True)
class McSummary:
    """Aggregate of a Monte Carlo run, arranged like a results table.

    ``theory_*`` are closed-form asymptotic variances at their own optimal
    constants (NaN when no closed form applies). Studentized errors are
    ``N^(1/4) (estimate - truth) / sqrt(avar)``.
    """

    reps: int
    failures: int
    truth: float
    mean_multi: float
    std_multi: float
    mean_sub: float
    std_sub: float
    mean_avar_multi: float
    std_avar_multi: float
    mean_avar_sub: float
    std_avar_sub: float
    theory_avar_multi: float
    theory_avar_sub: float
    theory_c_multi: float
    theory_c_sub: float
    mean_i: tuple
    std_i: tuple
    coverage_multi: float
    coverage_sub: float
    q025: float
    q975: float
    mean_n_sync: float
    mean_M: float
    mean_c_ratio: float
    errors: tuple = field(default=())

    def rows(self) -> list[tuple[str, float, float]]:
        """``(name, value, spread)`` rows for tabular output."""
        nan = math.nan
        rows = [(f"I{k + 1}", self.mean_i[k], self.std_i[k]) for k in range(4)]
        rows += [
            ("avar_multi_hat", self.mean_avar_multi, self.std_avar_multi),
            ("avar_multi_theory", self.theory_avar_multi, nan),
            ("avar_sub_hat", self.mean_avar_sub, self.std_avar_sub),
            ("avar_sub_theory", self.theory_avar_sub, nan),
            ("estimate_multi", self.mean_multi, self.std_multi),
            ("estimate_sub", self.mean_sub, self.std_sub),
            ("truth", self.truth, nan),
            ("coverage_multi", self.coverage_multi, nan),
            ("coverage_sub", self.coverage_sub, nan),
            ("studentized_q025", self.q025, nan),
            ("studentized_q975", self.q975, nan),
            ("mean_n_sync", self.mean_n_sync, nan),
            ("mean_M", self.mean_M, nan),
            ("pilot_to_final_c_ratio", self.mean_c_ratio, nan),
            ("reps", float(self.reps), nan),
            ("failures", float(self.failures), nan),
        ]
        return rows


def theoretical_avars(config: SimConfig) -> tuple[float, float, float, float]:
    """Closed-form ``(avar_multi, avar_sub, c_multi, c_sub)`` at the optimal constants."""
    nan = (math.nan,) * 4
    if not config.is_constant:
        return nan
    decay = float(config.n) ** (-config.decay_alpha)
    ex, ey = config.eta2_x * decay, config.eta2_y * decay
    sx, sy, r = float(config.sigma_x), float(config.sigma_y), float(config.rho)
    if ex * ey == 0:
        return nan
    if config.sampling == "poisson":
        args = (config.theta1, config.theta2, sx, sy, r, ex, ey, config.T)
        A, B, D = poisson_coefficients(*args, kind="multiscale")
        As, _, Ds = poisson_coefficients(*args, kind="one_scale")
    else:
        T = config.T
        A = 24 * ex * ey
        B = 12 / 5 * (ex * ey + ex * sy * sy * T + ey * sx * sx * T)
        D = 26 / 35 * T * (r * r + 1) * (sx * sy) ** 2 * T
        As, Ds = 4 * ex * ey, 2 / 3 * T * (r * r + 1) * (sx * sy) ** 2 * T
    c = c_multi_opt(A, B, D)
    cs = c_sub_opt(As, Ds)
    return A * c ** -3 + B / c + D * c, As * cs ** -2 + Ds * cs, c, cs


def summarize(config: SimConfig, results: Sequence[RepResult], level: float = 0.95) -> McSummary:
    from statistics import NormalDist

    ok = [r for r in results if r.ok]
    truth = config.true_covariation
    z = NormalDist().inv_cdf(0.5 + level / 2)
    stud, cov_m, cov_s = [], [], []
    for r in ok:
        s = r.n_sync ** 0.25 * (r.point - truth) / math.sqrt(r.avar)
        stud.append(s)
        cov_m.append(abs(s) <= z)
        cov_s.append(abs(r.n_sync ** (1 / 6) * (r.point_sub - truth)) <= z * math.sqrt(r.avar_sub))
    th = theoretical_avars(config)
    st = np.sort(stud) if stud else np.array([math.nan])
    return McSummary(
        reps=len(results), failures=len(results) - len(ok), truth=truth,
        mean_multi=_mean([r.point for r in ok]), std_multi=_std([r.point for r in ok]),
        mean_sub=_mean([r.point_sub for r in ok]), std_sub=_std([r.point_sub for r in ok]),
        mean_avar_multi=_mean([r.avar for r in ok]), std_avar_multi=_std([r.avar for r in ok]),
        mean_avar_sub=_mean([r.avar_sub for r in ok]), std_avar_sub=_std([r.avar_sub for r in ok]),
        theory_avar_multi=th[0], theory_avar_sub=th[1], theory_c_multi=th[2], theory_c_sub=th[3],
        mean_i=tuple(_mean([getattr(r, f"i{k}") for r in ok]) for k in range(1, 5)),
        std_i=tuple(_std([getattr(r, f"i{k}") for r in ok]) for k in range(1, 5)),
        coverage_multi=_mean(cov_m), coverage_sub=_mean(cov_s),
        q025=float(np.quantile(st, 0.025)), q975=float(np.quantile(st, 0.975)),
        mean_n_sync=_mean([r.n_sync for r in ok]), mean_M=_mean([r.M for r in ok]),
        mean_c_ratio=_mean([r.c_pilot / r.c_multi for r in ok]),
        errors=tuple(sorted({r.error for r in results if not r.ok})),
    )


def run_monte_carlo(config: SimConfig, reps: int, tuning: TuningConfig | None = None,
                    seed: int | None = None, threads: int = 1) -> McSummary:
    """Replicate simulate-then-estimate ``reps`` times and summarize.

    Replication ``k`` draws from its own stream derived from ``(seed, k)``, so
    the summary does not depend on ``threads``.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    tuning = tuning or TuningConfig()
    return summarize(config, run_reps(config, reps, tuning, seed, threads), tuning.confidence_level)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    n_sync: tuple
    rmse: tuple


def rate_check(configs: Sequence[SimConfig], reps: int, tuning: TuningConfig | None = None,
               seed: int = 0, threads: int = 1) -> RateFit:
    """Least-squares slope of ``log RMSE`` against ``log N`` across scenarios.

    Only point estimates are needed, so a fixed ``tuning.M`` bypasses the
    pilot stage (which is degenerate for noise-free data).

    Raises
    ------
    ValueError
        With fewer than three scenarios or ``n`` spanning less than a decade.
    """
    ns = [c.n for c in configs]
    if len(configs) < 3 or max(ns) < 10 * min(ns):
        raise ValueError("rate check needs >= 3 values of n spanning at least a decade")
    logn, logr, nbar, rmse = [], [], [], []
    for k, cfg in enumerate(configs):
        res = [r for r in run_reps(cfg, reps, tuning, seed + k, threads, point_only=True) if r.ok]
        if len(res) < 2:
            raise CovestError(f"too few successful replications at n={cfg.n}")
        truth = cfg.true_covariation
        e = math.sqrt(_mean([(r.point - truth) ** 2 for r in res]))
        N = _mean([r.n_sync for r in res])
        logn.append(math.log(N))
        logr.append(math.log(e))
        nbar.append(N)
        rmse.append(e)
    slope, intercept = np.polyfit(logn, logr, 1)
    return RateFit(float(slope), float(intercept), tuple(nbar), tuple(rmse))


def default_threads() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def with_n(config: SimConfig, n: int) -> SimConfig:
    return replace(config, n=int(n))
