"""Breath-by-breath extrema detection and instantaneous cycle parameters.

Extrema are traced against a centered moving average: every run of samples
above the average contributes its maximum, every run below contributes its
minimum.  Adjacent extrema closer than a prominence floor (relative to the
epoch's standard deviation) are then merged so that noise-born crossings near
the average do not produce false breaths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import UnusableEpochError

DEFAULT_MA_WINDOW_S = 1.5
DEFAULT_PROMINENCE = 0.2

PARAMETERS = ("BR", "PP", "IN", "EX", "IBI", "IER", "IEPP")


@dataclass(frozen=True)
class ExtremaSet:
    maxima: tuple  # ((index, value), ...)
    minima: tuple

    def merged(self) -> list:
        """All extrema as ``(index, value, is_max)`` in index order."""
        out = [(i, v, True) for i, v in self.maxima] + [(i, v, False) for i, v in self.minima]
        return sorted(out)


@dataclass(frozen=True)
class CycleParams:
    br: float
    pp: float
    in_s: float
    ex_s: float
    ibi_s: float
    ier: float
    iepp: float
    start: int  # sample index of the opening minimum
    peak: int
    end: int  # sample index of the closing minimum

    def as_tuple(self) -> tuple:
        return (self.br, self.pp, self.in_s, self.ex_s, self.ibi_s, self.ier, self.iepp)


def _runs(sign: np.ndarray):
    """Yield ``(start, stop, value)`` for each run of equal values."""
    edges = np.flatnonzero(np.diff(sign.astype(np.int8))) + 1
    bounds = np.concatenate(([0], edges, [sign.size]))
    for a, b in zip(bounds[:-1], bounds[1:]):
        yield int(a), int(b), bool(sign[a])


def _trace(x: np.ndarray, window: int, floor: float) -> list:
    avg = uniform_filter1d(x, size=window, mode="reflect")
    above = x > avg
    n = x.size
    found = []
    for a, b, is_high in _runs(above):
        seg = x[a:b]
        # argmax/argmin return the first sample of a plateau
        k = a + int(np.argmax(seg) if is_high else np.argmin(seg))
        if a == 0 or b == n:
            # A run cut by the epoch edge only counts if the signal turns
            # back from its extremum by at least the floor before the edge.
            if k == 0 or k == n - 1:
                continue
            tail = x[k:] if b == n else x[: k + 1]
            retreat = x[k] - tail.min() if is_high else tail.max() - x[k]
            if retreat <= 0 or retreat < floor:
                continue
        found.append([k, float(x[k]), is_high])
    return found


def _more_extreme(a, b):
    if a[2]:
        return b if b[1] > a[1] else a
    return b if b[1] < a[1] else a


def _merge_small(ext: list, floor: float) -> list:
    # Repeatedly drop the adjacent max/min pair with the smallest excursion.
    # Each neighbor of the dropped pair absorbs the more extreme of itself and
    # the dropped point of the same type; picking the global minimum keeps
    # indices ordered.
    ext = [list(e) for e in ext]
    while len(ext) >= 2:
        diffs = np.abs(np.diff([e[1] for e in ext]))
        j = int(np.argmin(diffs))
        if diffs[j] >= floor:
            break
        left = ext[j - 1] if j >= 1 else None
        right = ext[j + 2] if j + 2 < len(ext) else None
        if left is not None:
            ext[j - 1] = _more_extreme(left, ext[j + 1])
        if right is not None:
            ext[j + 2] = _more_extreme(ext[j], right)
        del ext[j : j + 2]
    return ext


def detect_extrema(
    epoch,
    ma_window_s: float = DEFAULT_MA_WINDOW_S,
    prominence: float = DEFAULT_PROMINENCE,
    rate_hz: float = None,
) -> ExtremaSet:
    """Locate breath maxima and minima in a normalized epoch.

    Parameters
    ----------
    epoch : Epoch or array_like
        Normalized waveform.  A bare array needs ``rate_hz``.
    ma_window_s : float
        Length of the centered moving average the signal is traced against.
    prominence : float
        Minimum vertical distance between a reported maximum and an adjacent
        minimum, in units of the epoch's sample standard deviation (plain
        normalized units for a normalized epoch).  Scaling the input by any
        positive factor therefore leaves the detected indices unchanged.

    Raises
    ------
    UnusableEpochError
        If fewer than two maxima or two minima survive.
    """
    if ma_window_s <= 0:
        raise ValueError("ma_window_s must be positive")
    if rate_hz is None:
        rate_hz = epoch.rate_hz
    x = np.asarray(getattr(epoch, "samples", epoch), dtype=float)
    window = max(1, int(round(ma_window_s * rate_hz)))
    window += 1 - window % 2
    ext = []
    if x.size >= 3:
        floor = prominence * float(np.std(x, ddof=1))
        ext = _merge_small(_trace(x, window, floor), floor)
    maxima = tuple((int(i), v) for i, v, hi in ext if hi)
    minima = tuple((int(i), v) for i, v, hi in ext if not hi)
    if len(maxima) < 2 or len(minima) < 2:
        raise UnusableEpochError(
            "few_extrema", f"found {len(maxima)} maxima / {len(minima)} minima"
        )
    return ExtremaSet(maxima=maxima, minima=minima)


def extract_cycles(ex: ExtremaSet, rate_hz: float) -> list:
    """One set of instantaneous parameters per min -> max -> min triple.

    IBI is the spacing from a cycle's maximum to the next detected maximum,
    or to the previous one for the final cycle.  PP is the rise from the
    opening minimum to the maximum; IEPP is rise over fall.
    """
    seq = ex.merged()
    max_idx = [i for i, _, hi in seq if hi]
    cycles = []
    for a, b, c in zip(seq, seq[1:], seq[2:]):
        if a[2] or not b[2] or c[2]:
            continue
        (i0, v0, _), (i1, v1, _), (i2, v2, _) = a, b, c
        k = max_idx.index(i1)
        if k + 1 < len(max_idx):
            ibi = (max_idx[k + 1] - i1) / rate_hz
        elif k > 0:
            ibi = (i1 - max_idx[k - 1]) / rate_hz
        else:
            continue
        in_s = (i1 - i0) / rate_hz
        ex_s = (i2 - i1) / rate_hz
        rise = v1 - v0
        fall = v1 - v2
        cycles.append(
            CycleParams(
                br=60.0 / ((i2 - i0) / rate_hz),
                pp=rise,
                in_s=in_s,
                ex_s=ex_s,
                ibi_s=ibi,
                ier=in_s / ex_s,
                iepp=rise / fall,
                start=i0,
                peak=i1,
                end=i2,
            )
        )
    return cycles
