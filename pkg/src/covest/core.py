"""Observation containers, sampling-regularity checks and tick CSV ingestion."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class CovestError(Exception):
    """Base class for all library errors."""


class ValidationError(CovestError, ValueError):
    """Raised when observation data violate the sampling assumptions.

    Attributes
    ----------
    index : int or None
        Position of the first offending element, when there is one.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ParseError(CovestError, ValueError):
    """Malformed tick CSV; ``line`` is 1-based."""

    def __init__(self, message: str, path: str, line: int):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class InsufficientOverlapError(CovestError):
    """The two observation schemes do not produce two synchronized groups."""


class DegenerateError(CovestError):
    """A pipeline stage received data it cannot work with.

    Attributes
    ----------
    stage : str
        Name of the stage that aborted.
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _check_times(times: np.ndarray, label: str) -> None:
    if times.size == 0:
        raise ValidationError(f"series {label!r} is empty", index=None)
    if not np.all(np.isfinite(times)):
        bad = int(np.flatnonzero(~np.isfinite(times))[0])
        raise ValidationError(f"series {label!r} has a non-finite time at index {bad}", index=bad)
    steps = np.diff(times)
    if steps.size and np.any(steps <= 0):
        bad = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise ValidationError(
            f"series {label!r}: times not strictly increasing at index {bad}", index=bad
        )


@dataclass(frozen=True)
class TickSeries:
    """Timestamped noisy observations of one asset.

    Parameters
    ----------
    times : array_like
        Strictly increasing observation times.
    values : array_like
        Observed prices, same length as ``times``.
    label : str
        Free-form identifier used in messages.
    """

    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = _frozen(self.times).ravel()
        v = _frozen(self.values).ravel()
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        _check_times(t, self.label)
        if t.shape != v.shape:
            raise ValidationError(
                f"series {self.label!r}: {t.size} times but {v.size} values", index=min(t.size, v.size)
            )
        if t.size < 2:
            raise ValidationError(f"series {self.label!r} needs at least 2 ticks", index=t.size)
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValidationError(f"series {self.label!r} has a non-finite value at index {bad}", index=bad)

    @property
    def n(self) -> int:
        """Number of increments (ticks minus one)."""
        return self.times.size - 1

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class ObservationPair:
    """Two tick series observed on a common horizon ``[0, horizon]``."""

    x: TickSeries
    y: TickSeries
    horizon: float = 1.0

    def __post_init__(self):
        T = float(self.horizon)
        if not (T > 0 and math.isfinite(T)):
            raise ValidationError(f"horizon must be positive, got {self.horizon!r}")
        object.__setattr__(self, "horizon", T)
        for s in (self.x, self.y):
            if s.times[0] < 0:
                raise ValidationError(f"series {s.label!r}: time before 0 at index 0", index=0)
            if s.times[-1] > T:
                bad = int(np.flatnonzero(s.times > T)[0])
                raise ValidationError(
                    f"series {s.label!r}: time {s.times[bad]!r} beyond horizon {T!r}", index=bad
                )

    def scaled(self, s: float) -> "ObservationPair":
        """Copy with both value series multiplied by ``s``."""
        return ObservationPair(
            TickSeries(self.x.times, s * self.x.values, self.x.label),
            TickSeries(self.y.times, s * self.y.values, self.y.label),
            self.horizon,
        )

    def swapped(self) -> "ObservationPair":
        return ObservationPair(self.y, self.x, self.horizon)


@dataclass(frozen=True)
class MeshReport:
    """Mesh widths and tick counts of an observation pair.

    ``delta_x`` is the largest of the first time, all consecutive gaps and the
    distance from the last time to the horizon. ``n`` and ``m`` count increments.
    """

    delta_x: float
    delta_y: float
    n: int
    m: int
    warnings: tuple[str, ...] = field(default=())


def mesh_width(times: np.ndarray, horizon: float) -> float:
    gaps = np.diff(times)
    cands = [times[0] - 0.0, horizon - times[-1]]
    if gaps.size:
        cands.append(float(gaps.max()))
    return float(max(cands))


def validate(pair: ObservationPair) -> MeshReport:
    """Check a pair against the sampling assumptions and report its mesh.

    Ordering and horizon violations raise :class:`ValidationError` (they are
    re-checked here so hand-built objects cannot slip through). Very unequal
    tick counts only produce a warning.
    """
    for s in (pair.x, pair.y):
        _check_times(np.asarray(s.times), s.label)
        if s.times.size < 2:
            raise ValidationError(f"series {s.label!r} needs at least 2 ticks", index=s.times.size)
    msgs = []
    n, m = pair.x.n, pair.y.n
    if max(n, m) > 10 * min(n, m):
        msgs.append(f"tick counts differ by more than a factor 10 (n={n}, m={m})")
        warnings.warn(msgs[-1], stacklevel=2)
    return MeshReport(
        delta_x=mesh_width(pair.x.times, pair.horizon),
        delta_y=mesh_width(pair.y.times, pair.horizon),
        n=n,
        m=m,
        warnings=tuple(msgs),
    )


# ---------------------------------------------------------------------------
# CSV ingestion


def read_ticks(path: str | Path, collapse_duplicates: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``time,value`` CSV file.

    A first row that does not parse as two numbers is taken as a header.
    Numbers use a decimal point; parsing never consults the locale.

    Parameters
    ----------
    path : str or Path
    collapse_duplicates : bool
        Keep only the last value of runs of equal timestamps instead of
        leaving them to be rejected by :class:`TickSeries`.

    Returns
    -------
    times, values : ndarray
    """
    path = str(path)
    times: list[float] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                if lineno == 1 and not times:
                    continue
                raise ParseError(f"expected 2 columns, got {len(row)}", path, lineno)
            try:
                t, v = float(row[0].strip()), float(row[1].strip())
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"cannot parse {','.join(row)!r} as numbers", path, lineno) from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ParseError("non-finite number", path, lineno)
            times.append(t)
            values.append(v)
    t_arr = np.asarray(times, dtype=float)
    v_arr = np.asarray(values, dtype=float)
    if collapse_duplicates and t_arr.size:
        last = np.append(t_arr[1:] != t_arr[:-1], True)
        t_arr, v_arr = t_arr[last], v_arr[last]
    return t_arr, v_arr


def write_ticks(path: str | Path, times: Sequence[float], values: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time,value\n")
        for t, v in zip(times, values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")


def normalize_times(tx: np.ndarray, ty: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Affinely map both time arrays jointly onto [0, 1]."""
    lo = min(tx[0], ty[0])
    hi = max(tx[-1], ty[-1])
    if not hi > lo:
        raise ValidationError("cannot normalize: all timestamps coincide")
    span = hi - lo
    return (tx - lo) / span, (ty - lo) / span
