"""Recording -> feature rows, plus the config bundle and feature-matrix files."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .breath import DEFAULT_MA_WINDOW_S, DEFAULT_PROMINENCE, detect_extrema, extract_cycles
from .errors import ConfigError, DataError, UnusableEpochError
from .features import FEATURE_NAMES, SpectralConfig, freq_features, time_features
from .ingest import Recording
from .preprocess import PreprocessConfig, is_degenerate, normalize_epoch, preprocess_channel, segment_epochs
from .select import QualityConfig, channel_scores, filter_epochs, select_channel

log = logging.getLogger(__name__)

META_COLUMNS = ("subject_id", "dataset_tag", "channel", "epoch_index", "start_s")


@dataclass(frozen=True)
class DetectConfig:
    ma_window_s: float = DEFAULT_MA_WINDOW_S
    prominence: float = DEFAULT_PROMINENCE
    squared_cov: bool = True

    def validate(self) -> "DetectConfig":
        if self.ma_window_s <= 0 or self.prominence < 0:
            raise ConfigError("ma_window_s must be > 0 and prominence >= 0")
        return self


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: PreprocessConfig = PreprocessConfig()
    detect: DetectConfig = DetectConfig()
    spectral: SpectralConfig = SpectralConfig()
    quality: QualityConfig = QualityConfig()

    def validate(self) -> "PipelineConfig":
        self.preprocess.validate()
        self.detect.validate()
        self.spectral.validate()
        self.quality.validate()
        return self

    def to_text(self) -> str:
        """``section.key=value`` lines, one per field."""
        lines = []
        for section in ("preprocess", "detect", "spectral", "quality"):
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                value = getattr(obj, f.name)
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                lines.append(f"{section}.{f.name}={value}")
        return "\n".join(lines) + "\n"

    def updated(self, overrides: dict) -> "PipelineConfig":
        """Apply ``{"section.key": "text value"}`` overrides with type checking."""
        sections = {s: {} for s in ("preprocess", "detect", "spectral", "quality")}
        for dotted, raw in overrides.items():
            section, _, key = dotted.partition(".")
            if section not in sections:
                raise ConfigError(f"unknown config section in {dotted!r}")
            obj = getattr(self, section)
            fmap = {f.name: f for f in dataclasses.fields(obj)}
            if key not in fmap:
                raise ConfigError(f"unknown config key {dotted!r}")
            sections[section][key] = _coerce(getattr(obj, key), raw, dotted)
        new = PipelineConfig(
            **{s: dataclasses.replace(getattr(self, s), **kv) for s, kv in sections.items()}
        )
        return new.validate()


def _coerce(current, raw, name):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if current and isinstance(current[0], str):
                return tuple(parts)
            return tuple(float(p) for p in parts)
        if current is None:
            return None if raw.lower() in ("", "none") else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_config(path, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    return base.updated(parse_config_text(Path(path).read_text(encoding="utf-8")))


# -- feature rows ------------------------------------------------------------


@dataclass(frozen=True)
class FeatureRow:
    subject_id: str
    dataset_tag: str
    channel: str
    epoch_index: int
    start_s: float
    values: np.ndarray = field(repr=False)

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])


@dataclass(frozen=True)
class DroppedEpoch:
    channel: str
    epoch_index: int
    start_s: float
    reason: str


@dataclass
class FeatureResult:
    rows: list
    dropped: list

    def by_channel(self) -> dict:
        out = {}
        for r in self.rows:
            out.setdefault(r.channel, []).append(r)
        return out


def _epoch_row(epoch, raw_epoch, cfg: PipelineConfig) -> np.ndarray:
    if is_degenerate(raw_epoch.samples):
        raise UnusableEpochError("zero_variance", "constant before filtering")
    z = normalize_epoch(epoch)
    ex = detect_extrema(z, cfg.detect.ma_window_s, cfg.detect.prominence)
    cycles = extract_cycles(ex, z.rate_hz)
    tf = time_features(cycles, z, cfg.detect.squared_cov)
    ff = freq_features(z, cfg.spectral)
    return np.concatenate([tf, ff])


def featurize(
    recording: Recording, cfg: PipelineConfig = PipelineConfig(), channels: Optional[Sequence[str]] = None
) -> FeatureResult:
    """Run every epoch of every (selected) channel through the full chain.

    Rows come out ordered by channel (recording order) then epoch index.
    Epochs that cannot yield features are left out and logged with a reason
    code in ``FeatureResult.dropped``.
    """
    cfg.validate()
    names = recording.channel_names if channels is None else list(channels)
    rows, dropped = [], []
    pp = cfg.preprocess
    for name in names:
        channel = recording.channel(name)
        try:
            filtered, resampled = preprocess_channel(channel, pp)
            epochs = segment_epochs(filtered, pp.epoch_s, pp.slide_s)
            raw_epochs = segment_epochs(resampled, pp.epoch_s, pp.slide_s)
        except DataError as exc:
            log.warning("channel %s of %s unusable: %s", name, recording.subject_id, exc)
            dropped.append(DroppedEpoch(name, -1, 0.0, "channel_" + type(exc).__name__))
            continue
        for ep, raw in zip(epochs, raw_epochs):
            try:
                values = _epoch_row(ep, raw, cfg)
            except UnusableEpochError as exc:
                log.info("drop %s/%s epoch %d: %s", recording.subject_id, name, ep.index, exc.reason)
                dropped.append(DroppedEpoch(name, ep.index, ep.start_s, exc.reason))
                continue
            rows.append(
                FeatureRow(
                    subject_id=recording.subject_id,
                    dataset_tag=recording.dataset_tag,
                    channel=name,
                    epoch_index=ep.index,
                    start_s=ep.start_s + recording.start_time,
                    values=values,
                )
            )
    return FeatureResult(rows=rows, dropped=dropped)


@dataclass
class Selection:
    channel: str
    scores: dict
    retained: list
    total: int

    @property
    def ratio(self) -> Optional[float]:
        return len(self.retained) / self.total if self.total else None


def select_and_gate(result_or_rows, cfg: PipelineConfig = PipelineConfig(), channel: Optional[str] = None) -> Selection:
    """Pick the optimal channel (unless ``channel`` is forced) and gate its epochs."""
    rows = getattr(result_or_rows, "rows", result_or_rows)
    per_channel = {}
    for r in rows:
        per_channel.setdefault(r.channel, []).append(r)
    scores = channel_scores(per_channel)
    chosen = channel if channel is not None else select_channel(per_channel)
    candidates = per_channel.get(chosen, [])
    kept, _ = filter_epochs(candidates, cfg.quality)
    return Selection(channel=chosen, scores=scores, retained=kept, total=len(candidates))


# -- feature matrix files ------------------------------------------------------


class FeatureMatrix:
    """Rows of a feature-matrix file, with column access by feature name."""

    def __init__(self, rows: Sequence[FeatureRow]):
        self.rows = list(rows)
        self.names = FEATURE_NAMES

    def __len__(self):
        return len(self.rows)

    @property
    def values(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(FEATURE_NAMES)))
        return np.vstack([r.values for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, FEATURE_NAMES.index(name)]


def write_feature_matrix(rows: Iterable[FeatureRow], path, comments: Iterable[str] = ()) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(META_COLUMNS + FEATURE_NAMES))
    for r in rows:
        meta = [r.subject_id, r.dataset_tag, r.channel, str(r.epoch_index), repr(float(r.start_s))]
        lines.append(",".join(meta + [repr(float(v)) for v in r.values]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_feature_matrix(path) -> FeatureMatrix:
    rows = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if header is None:
                header = tuple(parts)
                if header != META_COLUMNS + FEATURE_NAMES:
                    raise DataError(f"{path}: unexpected feature-matrix header")
                continue
            if len(parts) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                values = np.array([float(v) for v in parts[5:]])
                rows.append(FeatureRow(parts[0], parts[1], parts[2], int(parts[3]), float(parts[4]), values))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed number") from None
    if header is None:
        raise DataError(f"{path}: empty feature matrix")
    return FeatureMatrix(rows)
