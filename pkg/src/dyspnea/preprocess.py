"""Resampling, filtering, epoch segmentation and per-epoch normalization."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.interpolate import Akima1DInterpolator

from .errors import ConfigError, DataError, UnusableEpochError
from .ingest import Channel

# Butterworth order handed to scipy; the band-pass realization has twice as many poles.
BANDPASS_ORDER = 4
_ZERO_VAR_RTOL = 1e-12
PAD_S = 10.0


@dataclass(frozen=True)
class PreprocessConfig:
    target_rate_hz: float = 20.0
    band_lo_hz: float = 0.05
    band_hi_hz: float = 2.0
    sg_order: int = 4
    sg_window_samples: int = 21
    epoch_s: float = 60.0
    slide_s: float = 30.0

    def validate(self) -> "PreprocessConfig":
        if not 0 < self.band_lo_hz < self.band_hi_hz < self.target_rate_hz / 2:
            raise ConfigError(
                "need 0 < band_lo_hz < band_hi_hz < target_rate_hz/2, got "
                f"{self.band_lo_hz}, {self.band_hi_hz}, {self.target_rate_hz}"
            )
        if self.sg_window_samples % 2 != 1 or self.sg_window_samples <= self.sg_order:
            raise ConfigError("sg_window_samples must be odd and larger than sg_order")
        if self.sg_order < 0:
            raise ConfigError("sg_order must be >= 0")
        if not 0 < self.slide_s <= self.epoch_s:
            raise ConfigError("need 0 < slide_s <= epoch_s")
        return self

    @property
    def epoch_samples(self) -> int:
        return int(round(self.epoch_s * self.target_rate_hz))


@dataclass(frozen=True)
class Epoch:
    samples: np.ndarray = field(repr=False)
    channel_name: str
    start_s: float
    index: int
    normalized: bool = False
    rate_hz: float = 20.0


def resample(channel: Channel, target_rate_hz: float) -> Channel:
    """Down-sample ``channel`` to ``target_rate_hz``.

    Integer ratios go through a polyphase FIR (anti-alias filter plus
    decimation).  Other ratios are low-pass filtered at 0.4 x the target rate
    and then interpolated with a local (Akima) cubic.  Equal rates return the
    channel untouched.
    """
    rate = channel.rate_hz
    if target_rate_hz <= 0:
        raise ConfigError("target rate must be positive")
    if rate < target_rate_hz:
        raise DataError(f"upsampling {rate} Hz -> {target_rate_hz} Hz is not supported")
    x = channel.samples
    if x.size == 0:
        raise DataError("empty channel")
    if rate == target_rate_hz:
        return channel

    ratio = rate / target_rate_hz
    down = int(round(ratio))
    if abs(ratio - down) < 1e-9:
        y = signal.resample_poly(x, 1, down, padtype="line")
        return channel.with_samples(y, rate_hz=target_rate_hz)

    sos = signal.butter(8, 0.4 * target_rate_hz, btype="lowpass", fs=rate, output="sos")
    padlen = min(x.size - 1, 3 * (2 * len(sos) + 1))
    smooth = signal.sosfiltfilt(sos, x, padlen=padlen) if x.size > 1 else x
    n_out = int(np.floor(x.size * target_rate_hz / rate))
    if n_out < 1:
        raise DataError("channel too short to resample")
    t_in = np.arange(x.size) / rate
    t_out = np.arange(n_out) / target_rate_hz
    if x.size < 3:
        y = np.interp(t_out, t_in, smooth)
    else:
        y = Akima1DInterpolator(t_in, smooth)(t_out)
    return channel.with_samples(y, rate_hz=target_rate_hz)


def _bandpass_sos(lo_hz: float, hi_hz: float, rate_hz: float) -> np.ndarray:
    if not 0 < lo_hz < hi_hz < rate_hz / 2:
        raise ConfigError(f"invalid passband ({lo_hz}, {hi_hz}) Hz at {rate_hz} Hz")
    return signal.butter(BANDPASS_ORDER, [lo_hz, hi_hz], btype="bandpass", fs=rate_hz, output="sos")


def bandpass(channel: Channel, lo_hz: float, hi_hz: float) -> Channel:
    """Zero-phase Butterworth band-pass (forward-backward second-order sections).

    The signal is extended by even reflection (up to ``PAD_S`` seconds) before
    filtering; odd reflection injects a step of ``2 * x[0]`` that rings through
    the sub-Hz high-pass corner.
    """
    sos = _bandpass_sos(lo_hz, hi_hz, channel.rate_hz)
    warmup = 3 * (2 * len(sos) + 1)
    n = channel.samples.size
    if n <= warmup:
        raise DataError(f"channel {channel.name!r} has {n} samples; band-pass needs more than {warmup}")
    padlen = min(n - 1, max(warmup, int(round(PAD_S * channel.rate_hz))))
    y = signal.sosfiltfilt(sos, channel.samples, padtype="even", padlen=padlen)
    return channel.with_samples(y)


def bandpass_response(lo_hz: float, hi_hz: float, rate_hz: float, freqs) -> np.ndarray:
    """Magnitude response of the forward-backward band-pass at ``freqs`` (Hz)."""
    sos = _bandpass_sos(lo_hz, hi_hz, rate_hz)
    _, h = signal.sosfreqz(sos, worN=np.asarray(freqs, dtype=float), fs=rate_hz)
    return np.abs(h) ** 2


def smooth_savgol(channel: Channel, order: int = 4, window_samples: int = 21) -> Channel:
    """Savitzky-Golay smoothing.

    Edges are handled by fitting the polynomial to the outermost window
    (``mode="interp"``), so any polynomial of degree <= ``order`` passes
    through unchanged, edges included.
    """
    if window_samples % 2 != 1 or window_samples <= order or order < 0:
        raise ConfigError(f"invalid Savitzky-Golay window {window_samples} / order {order}")
    if channel.samples.size < window_samples:
        raise DataError(f"channel shorter than the smoothing window ({window_samples})")
    y = signal.savgol_filter(channel.samples, window_samples, order, mode="interp")
    return channel.with_samples(y)


def segment_epochs(channel: Channel, epoch_s: float = 60.0, slide_s: float = 30.0) -> list:
    if not 0 < slide_s <= epoch_s:
        raise ConfigError("need 0 < slide_s <= epoch_s")
    rate = channel.rate_hz
    length = int(round(epoch_s * rate))
    step = int(round(slide_s * rate))
    x = channel.samples
    if x.size < length:
        raise DataError(
            f"channel {channel.name!r} lasts {x.size / rate:.3f} s, shorter than one {epoch_s} s epoch"
        )
    count = (x.size - length) // step + 1
    return [
        Epoch(
            samples=x[i * step : i * step + length],
            channel_name=channel.name,
            start_s=i * step / rate,
            index=i,
            rate_hz=rate,
        )
        for i in range(count)
    ]


def is_degenerate(samples: np.ndarray) -> bool:
    """True when ``samples`` has no variance worth normalizing."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        return True
    scale = float(np.max(np.abs(x)))
    return scale == 0.0 or float(np.std(x, ddof=1)) <= _ZERO_VAR_RTOL * scale


def normalize_epoch(epoch: Epoch) -> Epoch:
    """Center to mean 0 and scale to unit sample (n-1) standard deviation."""
    x = np.asarray(epoch.samples, dtype=float)
    if is_degenerate(x):
        raise UnusableEpochError("zero_variance", f"epoch {epoch.index} of {epoch.channel_name!r} is constant")
    z = (x - x.mean()) / x.std(ddof=1)
    return Epoch(
        samples=z,
        channel_name=epoch.channel_name,
        start_s=epoch.start_s,
        index=epoch.index,
        normalized=True,
        rate_hz=epoch.rate_hz,
    )


def preprocess_channel(channel: Channel, cfg: PreprocessConfig = PreprocessConfig()):
    """Run resample -> band-pass -> smoothing on a whole channel.

    Returns ``(filtered, resampled)``; the unfiltered resampled channel is kept
    so callers can recognise spans that were constant before filtering.
    """
    cfg.validate()
    resampled = resample(channel, cfg.target_rate_hz)
    filtered = bandpass(resampled, cfg.band_lo_hz, cfg.band_hi_hz)
    filtered = smooth_savgol(filtered, cfg.sg_order, cfg.sg_window_samples)
    return filtered, resampled
