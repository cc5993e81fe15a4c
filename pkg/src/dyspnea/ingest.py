"""Recording and label file I/O.

Recording files are plain UTF-8 text::

    # free comment
    rate_hz=20
    channels=chest:ncs_amplitude,gy:gyro_y
    subject_id=s01            (optional)
    dataset_tag=covid         (optional)
    start_time=0              (optional, seconds)
    time_column=1             (optional, first column is a timestamp)
    0.125,0.5
    0.130,0.49
    ...

Samples may be separated by commas and/or whitespace.  In the ``iq_csv``
format a channel declared with kind ``iq`` consumes two columns (I then Q)
and is turned into a single ``ncs_amplitude`` channel.

Label files hold one ``subject_id,epoch_index|*,class|-,borg|-`` row per line.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError

CHANNEL_KINDS = ("ncs_amplitude", "acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")
DATASET_TAGS = ("covid", "healthy_normal", "healthy_exertion", "other")
WILDCARD = "*"

_SPLIT = re.compile(r"[,\s]+")


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Channel:
    name: str
    kind: str
    rate_hz: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise DataError(f"unknown channel kind {self.kind!r}")
        if not self.rate_hz > 0:
            raise DataError(f"channel {self.name!r}: rate_hz must be > 0")
        samples = _frozen_array(self.samples)
        if samples.ndim != 1 or samples.size < 1:
            raise DataError(f"channel {self.name!r}: need a non-empty 1-D sample vector")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"channel {self.name!r}: non-finite sample")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz

    def with_samples(self, samples, rate_hz: Optional[float] = None) -> "Channel":
        return Channel(self.name, self.kind, self.rate_hz if rate_hz is None else rate_hz, samples)


@dataclass(frozen=True)
class Recording:
    channels: tuple
    subject_id: str = "unknown"
    dataset_tag: str = "other"
    start_time: float = 0.0

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise DataError("recording has no channels")
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate channel names: {names}")
        rates = {c.rate_hz for c in channels}
        counts = {c.samples.size for c in channels}
        if len(rates) != 1 or len(counts) != 1:
            raise DataError("all channels must share one sample rate and sample count")
        if self.dataset_tag not in DATASET_TAGS:
            raise DataError(f"unknown dataset tag {self.dataset_tag!r}")
        object.__setattr__(self, "channels", channels)

    @property
    def rate_hz(self) -> float:
        return self.channels[0].rate_hz

    @property
    def n_samples(self) -> int:
        return self.channels[0].samples.size

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.rate_hz

    def channel(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def channel_names(self) -> list:
        return [c.name for c in self.channels]


@dataclass(frozen=True)
class LabelRecord:
    subject_id: str
    epoch_index: object  # int >= 0, or WILDCARD
    dyspnea_class: Optional[int] = None
    borg_score: Optional[float] = None

    def __post_init__(self):
        if self.dyspnea_class is None and self.borg_score is None:
            raise DataError(f"label for {self.subject_id!r} has neither class nor borg score")
        if self.dyspnea_class is not None and self.dyspnea_class not in (0, 1):
            raise DataError(f"dyspnea class must be 0 or 1, got {self.dyspnea_class!r}")
        if self.borg_score is not None and not 0.0 <= self.borg_score <= 10.0:
            raise DataError(f"borg score {self.borg_score} outside [0, 10]")
        if self.epoch_index != WILDCARD and (
            not isinstance(self.epoch_index, int) or self.epoch_index < 0
        ):
            raise DataError(f"bad epoch index {self.epoch_index!r}")

    def matches(self, subject_id: str, epoch_index: int) -> bool:
        return self.subject_id == subject_id and self.epoch_index in (WILDCARD, epoch_index)


def iq_magnitude(i: Sequence[float], q: Sequence[float]) -> np.ndarray:
    """Element-wise ``sqrt(i**2 + q**2)`` of an I/Q sample pair."""
    i = np.asarray(i, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if i.shape != q.shape or i.ndim != 1:
        raise DataError(f"I/Q length mismatch: {i.shape} vs {q.shape}")
    if i.size < 1:
        raise DataError("empty I/Q input")
    return np.hypot(i, q)


def _parse_channel_decl(value: str, fmt: str) -> list:
    decls = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, kind = item.partition(":")
        if not sep or not name:
            raise DataError(f"malformed channel declaration {item!r}")
        name, kind = name.strip(), kind.strip()
        allowed = CHANNEL_KINDS + (("iq",) if fmt == "iq_csv" else ())
        if kind not in allowed:
            raise DataError(f"unknown channel kind {kind!r}")
        decls.append((name, kind))
    if not decls:
        raise DataError("no channels declared")
    return decls


def _parse_float(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"line {lineno}: not a number: {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {lineno}: non-finite sample {token!r}")
    return value


def load_recording(path, format: str = "csv") -> Recording:
    """Read a recording file; see the module docstring for the layout.

    Nothing is returned unless every row parses and every channel is
    complete, so a bad file never yields a partial recording.
    """
    if format not in ("csv", "iq_csv"):
        raise DataError(f"unknown recording format {format!r}")
    header = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and not rows:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
                continue
            tokens = [t for t in _SPLIT.split(line) if t]
            rows.append([_parse_float(t, lineno) for t in tokens])

    if "rate_hz" not in header or "channels" not in header:
        raise DataError(f"{path}: header must declare rate_hz and channels")
    try:
        rate = float(header["rate_hz"])
    except ValueError:
        raise DataError(f"{path}: bad rate_hz {header['rate_hz']!r}") from None
    if not (math.isfinite(rate) and rate > 0):
        raise DataError(f"{path}: rate_hz must be a positive number")
    decls = _parse_channel_decl(header["channels"], format)
    has_time = header.get("time_column", "0").lower() in ("1", "true", "yes")

    width = sum(2 if kind == "iq" else 1 for _, kind in decls) + int(has_time)
    if not rows:
        raise DataError(f"{path}: no samples")
    for n, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: sample row {n} has {len(row)} columns, expected {width}")
    data = np.array(rows, dtype=np.float64)
    col = int(has_time)
    channels = []
    for name, kind in decls:
        if kind == "iq":
            samples = iq_magnitude(data[:, col], data[:, col + 1])
            kind = "ncs_amplitude"
            col += 2
        else:
            samples = data[:, col]
            col += 1
        channels.append(Channel(name, kind, rate, samples))
    try:
        start = float(header.get("start_time", 0.0))
    except ValueError:
        raise DataError(f"{path}: bad start_time") from None
    return Recording(
        channels=tuple(channels),
        subject_id=header.get("subject_id", Path(path).stem),
        dataset_tag=header.get("dataset_tag", "other"),
        start_time=start,
    )


def write_recording(recording: Recording, path, comments: Iterable[str] = ()) -> None:
    """Write ``recording`` in the ``csv`` layout; floats use ``repr`` so reloading is exact."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"rate_hz={recording.rate_hz!r}")
    lines.append("channels=" + ",".join(f"{c.name}:{c.kind}" for c in recording.channels))
    lines.append(f"subject_id={recording.subject_id}")
    lines.append(f"dataset_tag={recording.dataset_tag}")
    lines.append(f"start_time={recording.start_time!r}")
    cols = np.column_stack([c.samples for c in recording.channels])
    lines.extend(",".join(repr(float(v)) for v in row) for row in cols)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_label_field(token: str, lineno: int, kind: type):
    token = token.strip()
    if token in ("", "-", "−"):
        return None
    try:
        return kind(token)
    except ValueError:
        raise DataError(f"labels line {lineno}: bad value {token!r}") from None


def load_labels(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0] == "subject_id":
                continue
            if len(parts) != 4:
                raise DataError(f"labels line {lineno}: expected 4 fields, got {len(parts)}")
            subject, epoch, cls, borg = parts
            if epoch != WILDCARD:
                epoch = _parse_label_field(epoch, lineno, int)
            records.append(
                LabelRecord(
                    subject_id=subject,
                    epoch_index=epoch,
                    dyspnea_class=_parse_label_field(cls, lineno, int),
                    borg_score=_parse_label_field(borg, lineno, float),
                )
            )
    return records


def write_labels(records: Iterable[LabelRecord], path) -> None:
    lines = ["subject_id,epoch_index,class,borg"]
    for r in records:
        cls = "-" if r.dyspnea_class is None else str(r.dyspnea_class)
        borg = "-" if r.borg_score is None else repr(float(r.borg_score))
        lines.append(f"{r.subject_id},{r.epoch_index},{cls},{borg}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_label(records: Sequence[LabelRecord], subject_id: str, epoch_index: int):
    """Return ``(class, borg)`` for one epoch.

    An exact epoch-index row beats a wildcard row; later rows beat earlier
    ones of the same specificity.  Missing labels come back as ``None``.
    """
    cls = borg = None
    for specific in (False, True):
        for r in records:
            if not r.matches(subject_id, epoch_index):
                continue
            if (r.epoch_index != WILDCARD) != specific:
                continue
            if r.dyspnea_class is not None:
                cls = r.dyspnea_class
            if r.borg_score is not None:
                borg = r.borg_score
    return cls, borg
