"""Synthetic breathing recordings with known ground truth.

Each breath is one period of a raised cosine ``A/2 * (1 - cos(phi))`` whose
phase ``phi`` is a Moebius map of the unit circle applied to the uniform
phase ``theta``.  The map is smooth and strictly increasing for any
inhale/exhale ratio, fixes the trough at ``theta = 0`` and sends the peak to
``theta = 2*pi*ier/(1+ier)``.  Unlike two glued half-cosines the shape has no
curvature jump at its extrema, so filtering leaves extremum times in place.

Cycle lengths and amplitudes wander as AR(1) processes around their means
(``jitter_corr`` sets the persistence), which lets presets control both the
spread and the breath-to-breath correlation.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .ingest import CHANNEL_KINDS, Channel, Recording


@dataclass(frozen=True)
class BreathSpec:
    mean_br: float = 15.0
    br_jitter: float = 0.0
    amplitude: float = 1.0
    amp_jitter: float = 0.0
    ier: float = 1.0
    noise_snr_db: Optional[float] = None  # None: no noise
    drift_hz: float = 0.0
    drift_amp: float = 0.0  # relative to amplitude
    duration_s: float = 300.0
    rate_hz: float = 20.0
    seed: int = 0
    jitter_corr: float = 0.0
    subject_id: str = "synth"
    dataset_tag: str = "other"
    channel_kind: str = "ncs_amplitude"
    # extra IMU-like channels: same breathing, weaker gain, lower SNR
    imu_channels: tuple = ()
    imu_snr_penalty_db: float = 10.0

    def validate(self) -> "BreathSpec":
        if not 4 <= self.mean_br <= 60:
            raise ConfigError("mean_br must lie in [4, 60] breaths/min")
        if self.ier <= 0:
            raise ConfigError("ier must be positive")
        if self.duration_s < 60:
            raise ConfigError("duration must be at least 60 s")
        if self.rate_hz <= 0 or self.amplitude <= 0:
            raise ConfigError("rate_hz and amplitude must be positive")
        if self.br_jitter < 0 or self.amp_jitter < 0 or not 0 <= self.jitter_corr < 1:
            raise ConfigError("jitters must be >= 0 and 0 <= jitter_corr < 1")
        for kind in (self.channel_kind,) + tuple(self.imu_channels):
            if kind not in CHANNEL_KINDS:
                raise ConfigError(f"unknown channel kind {kind!r}")
        return self


PRESETS = {
    # relaxed breathing: slow, irregular, weak breath-to-breath memory
    "normal": dict(mean_br=12.0, br_jitter=0.15, amp_jitter=0.2, ier=0.7, jitter_corr=0.0,
                   noise_snr_db=25.0, drift_hz=0.02, drift_amp=0.3, dataset_tag="healthy_normal"),
    # post-exertion: fast, regular, persistent rhythm
    "exertion": dict(mean_br=30.0, br_jitter=0.02, amp_jitter=0.05, ier=0.8, jitter_corr=0.9,
                     noise_snr_db=25.0, drift_hz=0.02, drift_amp=0.3, dataset_tag="healthy_exertion"),
    # patient breathing resembling exertion: high rate, low variability
    "covid-like": dict(mean_br=27.0, br_jitter=0.025, amp_jitter=0.05, ier=0.8, jitter_corr=0.9,
                       noise_snr_db=22.0, drift_hz=0.02, drift_amp=0.3, dataset_tag="covid"),
}


def preset(name: str, **overrides) -> BreathSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return BreathSpec(**{**PRESETS[name], **overrides}).validate()


@dataclass(frozen=True)
class GroundTruth:
    starts: np.ndarray  # trough times (s) opening each cycle
    peaks: np.ndarray
    ends: np.ndarray
    amplitudes: np.ndarray

    @property
    def in_s(self):
        return self.peaks - self.starts

    @property
    def ex_s(self):
        return self.ends - self.peaks

    @property
    def br(self):
        return 60.0 / (self.ends - self.starts)

    def cycles_within(self, t0: float, t1: float) -> int:
        return int(np.sum((self.starts >= t0) & (self.ends < t1)))


def _ar1(rng, n, corr):
    e = rng.standard_normal(n)
    if corr == 0:
        return e
    out = np.empty(n)
    out[0] = e[0]
    innov = np.sqrt(1 - corr * corr)
    for i in range(1, n):
        out[i] = corr * out[i - 1] + innov * e[i]
    return out


def warped_cos(theta, ier: float):
    """``cos(phi(theta))`` for the circle map with phi(0) = 0 and phi(peak) = pi.

    The phase speed of a Moebius map is a Poisson kernel centred on its pole;
    placing the pole on the bisector of the inhale arc with
    ``(1+r)/(1-r) = cot(peak/4)`` gives the inhale arc exactly half a turn.
    """
    peak = 2 * np.pi * ier / (1 + ier)
    c = 1 / np.tan(peak / 4)
    pole = (c - 1) / (c + 1) * np.exp(0.5j * peak)

    def f(w):
        return (w - pole) / (1 - np.conj(pole) * w)

    return np.real(f(np.exp(1j * np.asarray(theta))) * np.conj(f(1.0 + 0j)))


def synthesize(spec: BreathSpec):
    """Return ``(Recording, GroundTruth)`` for ``spec``; bit-identical for a given seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.rate_hz))
    t = np.arange(n) / spec.rate_hz
    period = 60.0 / spec.mean_br

    n_cycles = int(np.ceil(spec.duration_s / (period * 0.5))) + 2
    lengths = period * (1 + spec.br_jitter * _ar1(rng, n_cycles, spec.jitter_corr))
    lengths = np.maximum(lengths, 0.3 * period)
    amps = spec.amplitude * (1 + spec.amp_jitter * _ar1(rng, n_cycles, spec.jitter_corr))
    amps = np.maximum(amps, 0.1 * spec.amplitude)
    ends = np.cumsum(lengths)
    starts = ends - lengths
    keep = starts < spec.duration_s
    starts, ends, lengths, amps = starts[keep], ends[keep], lengths[keep], amps[keep]
    inhale = lengths * spec.ier / (1 + spec.ier)
    peaks = starts + inhale

    k = np.searchsorted(ends, t, side="right")
    k = np.minimum(k, starts.size - 1)
    theta = 2 * np.pi * (t - starts[k]) / lengths[k]
    clean = 0.5 * amps[k] * (1 - warped_cos(theta, spec.ier))

    drift_phase = rng.uniform(0, 2 * np.pi)
    drift = spec.drift_amp * spec.amplitude * np.sin(2 * np.pi * spec.drift_hz * t + drift_phase)
    power = float(np.var(clean))

    def noisy(gain, snr_db):
        x = gain * (clean + drift)
        if snr_db is not None:
            x = x + gain * np.sqrt(power * 10 ** (-snr_db / 10)) * rng.standard_normal(n)
        return x

    channels = [Channel("resp", spec.channel_kind, spec.rate_hz, noisy(1.0, spec.noise_snr_db))]
    for j, kind in enumerate(spec.imu_channels):
        snr = None if spec.noise_snr_db is None else spec.noise_snr_db - spec.imu_snr_penalty_db * (j + 1)
        channels.append(Channel(kind, kind, spec.rate_hz, noisy(0.01 * (j + 2), snr)))

    complete = ends <= spec.duration_s
    truth = GroundTruth(starts[complete], peaks[complete], ends[complete], amps[complete])
    rec = Recording(tuple(channels), subject_id=spec.subject_id, dataset_tag=spec.dataset_tag)
    return rec, truth


def generate(spec: BreathSpec) -> Recording:
    return synthesize(spec)[0]


def write_truth(truth: GroundTruth, path, spec: Optional[BreathSpec] = None) -> None:
    """Ground-truth sidecar: one row per complete cycle with its exact parameters."""
    lines = []
    if spec is not None:
        lines += [f"# {f.name}={getattr(spec, f.name)}" for f in dataclasses.fields(spec)]
    lines.append("start_s,peak_s,end_s,amplitude,br,in_s,ex_s,ier")
    for s, p, e, a in zip(truth.starts, truth.peaks, truth.ends, truth.amplitudes):
        lines.append(",".join(repr(float(v)) for v in (s, p, e, a, 60 / (e - s), p - s, e - p, (p - s) / (e - p))))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_truth(path) -> GroundTruth:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, 8)
    return GroundTruth(body[:, 0], body[:, 1], body[:, 2], body[:, 3])
