"""Command-line interface: ``covest {estimate,simulate,mc,weights,sync-dump}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import CovestError, ObservationPair, ParseError, TickSeries, normalize_times, read_ticks, write_ticks
from .estimators import optimal_weights
from .sim import default_threads, load_config, run_monte_carlo, simulate_pair
from .sync import classify, synchronize
from .tuning import TuningConfig, estimate_full


class CliError(Exception):
    def __init__(self, kind: str, message: str, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, usage=self.format_usage().strip())


def fmt(x) -> str:
    """Full-precision text for a number (integers stay integral)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _load_pair(x: str, y: str, normalize: bool, collapse: bool) -> ObservationPair:
    tx, vx = read_ticks(x, collapse)
    ty, vy = read_ticks(y, collapse)
    for path, t in ((x, tx), (y, ty)):
        if t.size < 2:
            raise CliError("input", f"{path}: need at least 2 ticks, got {t.size}", path=path)
    if normalize:
        tx, ty = normalize_times(tx, ty)
        horizon = 1.0
    else:
        horizon = max(tx[-1], ty[-1])
    return ObservationPair(TickSeries(tx, vx, Path(x).name), TickSeries(ty, vy, Path(y).name), horizon)


def _write_sync(path: str | None, pair: ObservationPair, out) -> None:
    sync = synchronize(pair)
    cases = classify(sync, pair)
    fh = open(path, "w", encoding="utf-8", newline="") if path else out
    try:
        fh.write("k,l,g,lambda,gamma,T,case_x,case_y\n")
        for k in range(sync.n_sync + 1):
            cx = int(cases.for_x[k - 1]) if k else 0
            cy = int(cases.for_y[k - 1]) if k else 0
            fh.write(",".join([str(k), fmt(sync.l[k]), fmt(sync.g[k]), fmt(sync.lam[k]),
                               fmt(sync.gamma[k]), fmt(sync.refresh[k]), str(cx), str(cy)]) + "\n")
    finally:
        if path:
            fh.close()


def _add_pair_args(p) -> None:
    p.add_argument("--x", required=True, help="CSV with time,value ticks of the first asset")
    p.add_argument("--y", required=True, help="CSV with time,value ticks of the second asset")
    p.add_argument("--no-normalize", action="store_true", help="keep raw timestamps instead of mapping to [0, 1]")
    p.add_argument("--collapse-duplicates", action="store_true",
                   help="keep the last value among ticks sharing a timestamp")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="covest", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate the covariation of two tick series")
    _add_pair_args(p)
    p.add_argument("--pilot-L", type=int, default=30)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--M", type=int, default=None, help="force the number of scales (1 gives Hayashi-Yoshida)")
    p.add_argument("--i-sub", type=int, default=None, help="force the one-scale lag")
    p.add_argument("--nonzero-noise", action="store_true",
                   help="noise variance over non-zero returns only")
    p.add_argument("--out", default=None, help="JSON report path (default stdout)")
    p.add_argument("--dump-sync", default=None, help="also write the synchronization table to this CSV")

    p = sub.add_parser("simulate", help="simulate one noisy observation pair")
    p.add_argument("--config", required=True)
    p.add_argument("--out-x", required=True)
    p.add_argument("--out-y", required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("mc", help="Monte Carlo study of one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="summary CSV path (default stdout)")

    p = sub.add_parser("weights", help="print the optimal multiscale weights")
    p.add_argument("--M", type=int, required=True)

    p = sub.add_parser("sync-dump", help="write the synchronization table")
    _add_pair_args(p)
    p.add_argument("--out", default=None)
    return ap


def _cmd_estimate(a, out) -> None:
    pair = _load_pair(a.x, a.y, not a.no_normalize, a.collapse_duplicates)
    cfg = TuningConfig(pilot_L=a.pilot_L, confidence_level=a.level, M=a.M, i_sub=a.i_sub,
                       nonzero_only=a.nonzero_noise)
    rep = estimate_full(pair, cfg)
    text = json.dumps(_jsonable(rep.to_dict()), indent=2)
    if a.out:
        Path(a.out).write_text(text + "\n", encoding="utf-8")
    else:
        out.write(text + "\n")
    if a.dump_sync:
        _write_sync(a.dump_sync, pair, out)


def _cmd_simulate(a, out) -> None:
    cfg = load_config(a.config, seed=a.seed)
    pair = simulate_pair(cfg, np.random.default_rng(a.seed))
    write_ticks(a.out_x, pair.x.times, pair.x.values)
    write_ticks(a.out_y, pair.y.times, pair.y.values)


def _cmd_mc(a, out) -> None:
    if a.reps < 1:
        raise CliError("usage", f"--reps must be >= 1, got {a.reps}")
    cfg = load_config(a.config, seed=a.seed)
    threads = a.threads if a.threads is not None else default_threads()
    s = run_monte_carlo(cfg, a.reps, seed=a.seed, threads=max(1, threads))
    lines = ["quantity,value,std"]
    lines += [f"{name},{fmt(v)},{fmt(sd)}" for name, v, sd in s.rows()]
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def _cmd_weights(a, out) -> None:
    w = optimal_weights(a.M)
    out.write("\n".join(f"{i},{fmt(x)}" for i, x in enumerate(w.alpha, start=1)) + "\n")


def _cmd_sync_dump(a, out) -> None:
    pair = _load_pair(a.x, a.y, not a.no_normalize, a.collapse_duplicates)
    _write_sync(a.out, pair, out)


COMMANDS = {"estimate": _cmd_estimate, "simulate": _cmd_simulate, "mc": _cmd_mc,
            "weights": _cmd_weights, "sync-dump": _cmd_sync_dump}


def main(argv=None, out=None, err=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit status.

    Failures print a single JSON object line prefixed with ``error:`` to
    ``err`` and return a nonzero status.
    """
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except CliError as exc:
        return _fail(err, exc.kind, str(exc), 2, **exc.extra)
    except ParseError as exc:
        return _fail(err, "parse", str(exc), 3, path=exc.path, line=exc.line)
    except OSError as exc:
        return _fail(err, "io", str(exc), 3, path=getattr(exc, "filename", None))
    except (CovestError, ValueError) as exc:
        return _fail(err, type(exc).__name__, str(exc), 4, stage=getattr(exc, "stage", None),
                     index=getattr(exc, "index", None))
    return 0


def _fail(err, kind: str, message: str, status: int, **extra) -> int:
    payload = {"error": kind, "message": message, **{k: v for k, v in extra.items() if v is not None}}
    err.write("error: " + json.dumps(payload) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
