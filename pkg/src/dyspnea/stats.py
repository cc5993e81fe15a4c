"""Dataset-level comparisons: Gaussian KDE, KL divergence, Welch's t-test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats as sps

from .errors import DataError

GRID_POINTS = 2048
GRID_PAD_BW = 5.0
KL_FLOOR = 1e-12

# The eight features of the published per-feature KL comparison.
KL_FEATURES = ("mu_BR", "sigma_BR", "cov_BR", "cov_IBI", "R_BR", "R_PP", "zeta_IBI", "zeta_IER")

_SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class Density1D:
    """Equal-weight Gaussian mixture with a default evaluation grid."""

    centers: np.ndarray = field(repr=False)
    bandwidth: float
    grid: tuple  # (lo, hi, n_points)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        h = self.bandwidth
        # chunked so 10^4 centers x 2048 points stays small in memory
        step = max(1, 2_000_000 // max(1, self.centers.size))
        for s in range(0, x.size, step):
            u = (x[s : s + step, None] - self.centers[None, :]) / h
            out[s : s + step] = np.exp(-0.5 * u * u).sum(axis=1)
        return out / (self.centers.size * h * _SQRT_2PI)

    def grid_points(self) -> np.ndarray:
        lo, hi, n = self.grid
        return np.linspace(lo, hi, n)

    def mass(self) -> float:
        x = self.grid_points()
        return float(np.trapezoid(self(x), x))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def kde(samples, bandwidth: Union[float, str] = "auto", n_points: int = GRID_POINTS) -> Density1D:
    """Gaussian kernel density estimate.

    ``bandwidth="auto"`` applies Silverman's rule of thumb.  The grid spans the
    data range padded by five bandwidths on each side.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < 1:
        raise DataError("KDE needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise DataError("KDE samples must be finite")
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        if x.size < 2:
            raise DataError("automatic bandwidth needs at least two samples")
        h = silverman_bandwidth(x)
        if not h > 0:
            raise DataError("all samples identical: pass an explicit bandwidth")
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
    x.setflags(write=False)
    pad = GRID_PAD_BW * h
    return Density1D(centers=x, bandwidth=h, grid=(float(x[0] - pad), float(x[-1] + pad), n_points))


def kl_divergence(p: Density1D, q: Density1D, n_points: int = GRID_POINTS, floor: float = KL_FLOOR) -> float:
    """Numerical KL(p || q) on a grid covering both densities.

    Both densities are renormalized on the grid (trapezoid weights) before
    integrating ``p * log(p / max(q, floor))``.  The floor keeps the value
    finite when q's support misses p's.
    """
    lo = min(p.grid[0], q.grid[0])
    hi = max(p.grid[1], q.grid[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise DataError("cannot build a common grid for the two densities")
    x = np.linspace(lo, hi, n_points)
    w = np.full(n_points, x[1] - x[0])
    w[0] = w[-1] = w[0] / 2
    pv = p(x)
    qv = q(x) if q is not p else pv
    pv = pv / np.dot(w, pv)
    qv = qv / np.dot(w, qv) if q is not p else pv
    qv = np.maximum(qv, floor)
    nz = pv > 0
    # difference of logs: the ratio itself can underflow for subnormal p
    value = float(np.dot(w[nz], pv[nz] * (np.log(pv[nz]) - np.log(qv[nz]))))
    if value < -1e-6:
        raise ArithmeticError(f"KL integration failed (value {value})")
    return max(value, 0.0)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float

    def __iter__(self):
        return iter((self.t, self.p))


def welch_ttest(a, b) -> TTestResult:
    """Two-sided Welch unequal-variance t-test; ``t > 0`` when ``mean(a) > mean(b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DataError("each group needs at least two samples")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        raise DataError("both groups have zero variance")
    diff = a.mean() - b.mean()
    t = diff / math.sqrt(se2)
    # Welch-Satterthwaite on variances rescaled by their max, so tiny
    # variances cannot underflow when squared
    m = max(va, vb)
    ra, rb = va / m, vb / m
    df = (ra + rb) ** 2 / (ra**2 / (a.size - 1) + rb**2 / (b.size - 1))
    p = 2 * sps.t.sf(abs(t), df)
    return TTestResult(t=float(t), p=float(min(p, 1.0)), df=float(df))


def _column(data, name: str) -> np.ndarray:
    if isinstance(data, Mapping):
        if name not in data:
            raise DataError(f"feature {name!r} missing")
        return np.asarray(data[name], dtype=float)
    names = getattr(data, "names", None)
    if names is None or name not in names:
        raise DataError(f"feature {name!r} missing")
    return np.asarray(data.column(name), dtype=float)


def compare_datasets(
    features_a, features_b, feature_names: Sequence[str] = KL_FEATURES, bandwidth="auto"
) -> dict:
    """Per-feature KL(A || B) from marginal KDEs plus an unweighted ``Avg`` entry.

    ``features_a`` / ``features_b`` are mappings of feature name to samples
    (or objects exposing ``names`` and ``column(name)``).
    """
    table = {}
    for name in feature_names:
        xa, xb = _column(features_a, name), _column(features_b, name)
        pa = kde(xa, _bandwidth_for(xa, bandwidth))
        pb = kde(xb, _bandwidth_for(xb, bandwidth))
        table[name] = kl_divergence(pa, pb)
    table["Avg"] = float(np.mean([table[n] for n in feature_names])) if feature_names else float("nan")
    return table


def _bandwidth_for(x: np.ndarray, bandwidth) -> Union[float, str]:
    # A feature that is constant within a dataset (e.g. R = 1 for perfectly
    # regular breathing) still needs a density; give it a narrow kernel.
    if bandwidth == "auto" and x.size >= 2 and silverman_bandwidth(x) <= 0:
        return max(1e-3, 1e-3 * abs(float(x[0])))
    return bandwidth


def format_kl_table(columns: Mapping[str, Mapping[str, float]], precision: int = 2) -> str:
    """Plain-text table: one row per feature, one column per dataset pair."""
    pairs = list(columns)
    rows = list(next(iter(columns.values()))) if columns else []
    width = max([len(r) for r in rows] + [8])
    colw = max([len(p) for p in pairs] + [8])
    out = [" " * width + "".join(f"  {p:>{colw}}" for p in pairs)]
    for r in rows:
        out.append(f"{r:<{width}}" + "".join(f"  {columns[p][r]:>{colw}.{precision}f}" for p in pairs))
    return "\n".join(out) + "\n"
