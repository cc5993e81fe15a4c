"""Per-epoch respiratory features: 37 time-domain and 14 spectral values."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .breath import PARAMETERS
from .errors import ConfigError, UnusableEpochError

COV_PARAMETERS = ("BR", "PP", "IN", "EX", "IBI")

TIME_FEATURE_NAMES = (
    [f"mu_{p}" for p in PARAMETERS]
    + [f"sigma_{p}" for p in PARAMETERS]
    + [f"cov_{p}" for p in COV_PARAMETERS]
    + [f"R_{p}" for p in PARAMETERS]
    + [f"zeta_{p}" for p in PARAMETERS]
    + ["mu_skew", "mu_kurt", "entropy", "cycle"]
)
FREQ_FEATURE_NAMES = (
    [f"eta_f{i}" for i in range(1, 6)]
    + [f"p_f{i}" for i in range(1, 6)]
    + ["f_BR", "f_HR", "snr_BR", "snr_HR"]
)
FEATURE_NAMES = tuple(TIME_FEATURE_NAMES + FREQ_FEATURE_NAMES)
COV_FEATURES = tuple(f"cov_{p}" for p in COV_PARAMETERS)

ENTROPY_BINS = 20
_TINY = 1e-30

assert len(TIME_FEATURE_NAMES) == 37 and len(FREQ_FEATURE_NAMES) == 14


@dataclass(frozen=True)
class SpectralConfig:
    f1: tuple = (0.0, 0.4)
    f2: tuple = (0.4, 1.0)
    f3: tuple = (1.0, 2.0)
    half_width: float = 0.15
    hr_search: tuple = (0.7, 2.0)
    br_search: tuple = (0.05, 0.4)
    prior_br_hz: Optional[float] = None
    prior_hr_hz: Optional[float] = None
    segment_s: float = 20.0
    overlap: float = 0.5

    def validate(self) -> "SpectralConfig":
        bands = [self.f1, self.f2, self.f3]
        for lo, hi in bands + [self.hr_search, self.br_search]:
            if not 0 <= lo < hi:
                raise ConfigError(f"degenerate band ({lo}, {hi})")
        for (_, hi), (lo, _) in zip(bands, bands[1:]):
            if lo < hi:
                raise ConfigError("bands f1..f3 must be ordered and non-overlapping")
        if self.half_width <= 0:
            raise ConfigError("half_width must be positive")
        if self.segment_s <= 0 or not 0 <= self.overlap < 1:
            raise ConfigError("bad PSD segmentation")
        return self


def coeff_variation(values: Sequence[float], squared: bool = True) -> float:
    """Coefficient of variation ``(sigma / mu) ** 2`` (sample sigma).

    ``squared=False`` gives the conventional ``sigma / mu`` instead.
    """
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two values")
    mu = x.mean()
    if mu == 0:
        raise ValueError("coefficient of variation undefined for zero mean")
    ratio = x.std(ddof=1) / mu
    return float(ratio**2) if squared else float(ratio)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if denom == 0:
        raise ValueError("zero variance")
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def autocorr_lag1(values: Sequence[float]) -> float:
    """Pearson correlation between the series and itself shifted by one cycle."""
    x = np.asarray(values, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three values")
    return _pearson(x[:-1], x[1:])


def successive_diff(values: Sequence[float]) -> float:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two values")
    return float(np.mean(np.abs(np.diff(x))))


def _series_autocorr(x: np.ndarray) -> float:
    # Perfectly regular series count as fully self-similar.  A series that
    # varies but has a constant lag window carries no linear successive
    # dependence that Pearson can measure.
    if np.all(x == x[0]):
        return 1.0
    try:
        return _pearson(x[:-1], x[1:])
    except ValueError:
        return 0.0


def amplitude_entropy(samples: np.ndarray, bins: int = ENTROPY_BINS) -> float:
    """Shannon entropy (nats) of the amplitude histogram over the sample range."""
    counts, _ = np.histogram(samples, bins=bins)
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def shape_moments(seg: np.ndarray):
    """Bias-corrected sample skewness and excess kurtosis of one cycle.

    Same estimators as ``scipy.stats.skew(bias=False)`` and
    ``scipy.stats.kurtosis(bias=False)``; computed inline because the scipy
    wrappers cost about a millisecond per call and run once per cycle.
    """
    n = seg.size
    if n < 4:
        raise UnusableEpochError("short_cycle", f"cycle of {n} samples")
    d = seg - seg.mean()
    d2 = d * d
    m2 = d2.mean()
    if m2 == 0:
        return math.nan, math.nan
    m3 = np.dot(d2, d) / n
    m4 = np.dot(d2, d2) / n
    g1 = m3 / m2**1.5
    g2 = m4 / (m2 * m2) - 3.0
    skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
    kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    return float(skew), float(kurt)


def time_features(cycles: list, epoch, squared_cov: bool = True) -> np.ndarray:
    """The 37 time-domain features in ``TIME_FEATURE_NAMES`` order."""
    if len(cycles) < 2:
        raise UnusableEpochError("few_cycles", f"{len(cycles)} complete cycle(s)")
    x = np.asarray(getattr(epoch, "samples", epoch), dtype=float)
    table = np.array([c.as_tuple() for c in cycles], dtype=float)  # cycles x 7

    mu = table.mean(axis=0)
    sigma = table.std(axis=0, ddof=1)
    ratio = sigma[:5] / mu[:5]
    cov = ratio**2 if squared_cov else ratio
    autocorr = [_series_autocorr(table[:, j]) for j in range(table.shape[1])]
    zeta = np.mean(np.abs(np.diff(table, axis=0)), axis=0)

    shape = np.array([shape_moments(x[c.start : c.end + 1]) for c in cycles])
    skews, kurts = shape[:, 0], shape[:, 1]

    return np.concatenate(
        [
            mu,
            sigma,
            cov,
            autocorr,
            zeta,
            [np.mean(skews), np.mean(kurts), amplitude_entropy(x), float(len(cycles))],
        ]
    )


def psd(samples: np.ndarray, rate_hz: float, cfg: SpectralConfig = SpectralConfig()):
    """Averaged Hann-tapered periodogram (density scaling)."""
    x = np.asarray(samples, dtype=float)
    nperseg = min(x.size, int(round(cfg.segment_s * rate_hz)))
    noverlap = int(round(nperseg * cfg.overlap))
    return signal.welch(
        x, fs=rate_hz, window="hann", nperseg=nperseg, noverlap=noverlap, detrend=False, scaling="density"
    )


def _peak_freq(freqs, pxx, lo, hi) -> float:
    mask = (freqs >= lo - 1e-9) & (freqs <= hi + 1e-9) & (freqs > 0)
    if not mask.any():
        raise UnusableEpochError("degenerate_spectrum", f"no PSD bins in ({lo}, {hi}) Hz")
    idx = np.flatnonzero(mask)
    return float(freqs[idx[int(np.argmax(pxx[idx]))]])


def freq_features(epoch, cfg: SpectralConfig = SpectralConfig(), rate_hz: float = None) -> np.ndarray:
    """The 14 spectral features in ``FREQ_FEATURE_NAMES`` order.

    Band fractions use half-open bands ``(lo, hi]`` over positive frequencies
    only, so the DC bin never counts towards total power.  The two peak bands
    are ``f +/- half_width`` clipped to ``(0, Nyquist]``.  SNR compares the
    peak-band power with the median PSD outside both peak bands, scaled to the
    same bandwidth.
    """
    if rate_hz is None:
        rate_hz = epoch.rate_hz
    x = np.asarray(getattr(epoch, "samples", epoch), dtype=float)
    freqs, pxx = psd(x, rate_hz, cfg)
    df = freqs[1] - freqs[0]
    pos = freqs > 0
    total = float(np.sum(pxx[pos]) * df)
    if not total > 0:
        raise UnusableEpochError("degenerate_spectrum", "all-zero spectrum")

    def search(prior, window):
        if prior is not None:
            return _peak_freq(freqs, pxx, prior - cfg.half_width, prior + cfg.half_width)
        return _peak_freq(freqs, pxx, *window)

    f_br = search(cfg.prior_br_hz, cfg.br_search)
    f_hr = search(cfg.prior_hr_hz, cfg.hr_search)
    nyq = rate_hz / 2
    tol = 1e-9 * nyq

    masks, widths = [], []
    for lo, hi in (cfg.f1, cfg.f2, cfg.f3):
        masks.append(pos & (freqs > lo + tol) & (freqs <= hi + tol))
        widths.append(min(hi, nyq) - lo)
    peak_masks = []
    for f in (f_br, f_hr):
        lo, hi = max(0.0, f - cfg.half_width), min(nyq, f + cfg.half_width)
        m = pos & (freqs >= lo - tol) & (freqs <= hi + tol)
        peak_masks.append(m)
        masks.append(m)
        widths.append(hi - lo)

    powers = np.array([np.sum(pxx[m]) * df for m in masks])
    eta = powers / total
    p_db = 10 * np.log10(np.maximum(powers, _TINY) / np.array(widths))

    outside = pos & ~peak_masks[0] & ~peak_masks[1]
    noise_density = float(np.median(pxx[outside])) if outside.any() else 0.0
    snr = [
        10 * np.log10(max(powers[3 + k], _TINY) / max(noise_density * widths[3 + k], _TINY))
        for k in range(2)
    ]
    return np.concatenate([eta, p_db, [f_br, f_hr], snr])


def epoch_features(epoch, cycles: list, spectral: SpectralConfig = SpectralConfig(), squared_cov=True):
    return np.concatenate([time_features(cycles, epoch, squared_cov), freq_features(epoch, spectral)])
