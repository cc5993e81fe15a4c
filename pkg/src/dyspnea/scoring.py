"""Per-recording dyspnea scoring: D_obj per retained epoch, hourly means, dyspnea fraction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .ingest import Recording
from .model import TrainedModel, knn_classify, knn_regress
from .pipeline import PipelineConfig, featurize, select_and_gate

HOUR_S = 3600.0


@dataclass(frozen=True)
class EpochScore:
    start_s: float
    epoch_index: int
    d_obj: float
    dyspnea_class: Optional[int] = None
    vote_fraction: Optional[float] = None


@dataclass(frozen=True)
class HourBin:
    hour: int
    mean: float  # nan for an hour with no retained epochs
    n: int


@dataclass(frozen=True)
class ScoreReport:
    subject_id: str
    dataset_tag: str
    channel: str
    epochs: tuple
    total_epochs: int

    @property
    def scores(self) -> np.ndarray:
        return np.array([e.d_obj for e in self.epochs])

    @property
    def overall(self) -> float:
        return float(np.mean(self.scores))

    @property
    def dyspnea_fraction(self) -> Optional[float]:
        classes = [e.dyspnea_class for e in self.epochs]
        if any(c is None for c in classes):
            return None
        return sum(classes) / len(classes)

    @property
    def hourly(self) -> list:
        return hourly_bins([e.start_s for e in self.epochs], self.scores)


def hourly_bins(starts: Sequence[float], scores: Sequence[float]) -> list:
    """Bin scores by ``floor(start / 3600)``; every hour between the first and last is listed."""
    starts = np.asarray(starts, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if starts.size == 0:
        return []
    hours = np.floor(starts / HOUR_S).astype(np.int64)
    out = []
    for h in range(int(hours.min()), int(hours.max()) + 1):
        sel = scores[hours == h]
        out.append(HourBin(h, float(np.mean(sel)) if sel.size else math.nan, int(sel.size)))
    return out


def score_rows(model: TrainedModel, rows: Sequence) -> list:
    out = []
    for r in rows:
        cls, frac = knn_classify(model, r.values) if model.labels is not None else (None, None)
        out.append(EpochScore(float(r.start_s), int(r.epoch_index), knn_regress(model, r.values), cls, frac))
    return out


def score_recording(
    model: TrainedModel,
    recording: Recording,
    cfg: PipelineConfig = PipelineConfig(),
    channel: Optional[str] = None,
) -> ScoreReport:
    """Featurize, pick a channel, gate its epochs and score each survivor."""
    if model.scores is None:
        raise DataError("scoring needs a model trained with Borg scores")
    selection = select_and_gate(featurize(recording, cfg), cfg, channel)
    if not selection.retained:
        raise DataError(
            f"{recording.subject_id}: no epoch of channel {selection.channel!r} passed the quality gate"
        )
    return ScoreReport(
        subject_id=recording.subject_id,
        dataset_tag=recording.dataset_tag,
        channel=selection.channel,
        epochs=tuple(score_rows(model, selection.retained)),
        total_epochs=selection.total,
    )


# -- report files ---------------------------------------------------------------


def _num(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def format_summary(report: ScoreReport) -> str:
    frac = report.dyspnea_fraction
    lines = [
        f"subject_id={report.subject_id}",
        f"dataset_tag={report.dataset_tag}",
        f"channel={report.channel}",
        f"retained_epochs={len(report.epochs)}",
        f"total_epochs={report.total_epochs}",
        f"overall_d_obj={report.overall!r}",
        f"dyspnea_fraction={_num(frac)}",
        f"hours={len(report.hourly)}",
    ]
    return "\n".join(lines) + "\n"


def format_hourly(report: ScoreReport) -> str:
    lines = ["hour,mean_d_obj,n_epochs"]
    lines += [f"{b.hour},{_num(b.mean)},{b.n}" for b in report.hourly]
    return "\n".join(lines) + "\n"


EPOCH_SCORE_HEADER = "subject_id,dataset_tag,epoch_index,start_s,d_obj,class,vote_fraction"


def format_epochs(report: ScoreReport) -> str:
    lines = [EPOCH_SCORE_HEADER]
    for e in report.epochs:
        cls = "-" if e.dyspnea_class is None else str(e.dyspnea_class)
        lines.append(
            f"{report.subject_id},{report.dataset_tag},{e.epoch_index},{e.start_s!r},"
            f"{e.d_obj!r},{cls},{_num(e.vote_fraction)}"
        )
    return "\n".join(lines) + "\n"


def read_epoch_scores(path) -> list:
    """Parse a file written by :func:`format_epochs` into ``(subject, tag, EpochScore)`` tuples."""
    out = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != EPOCH_SCORE_HEADER:
                    raise DataError(f"{path}: not an epoch-score file")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 columns")
            try:
                frac = float(parts[6])
                score = EpochScore(
                    start_s=float(parts[3]),
                    epoch_index=int(parts[2]),
                    d_obj=float(parts[4]),
                    dyspnea_class=None if parts[5] == "-" else int(parts[5]),
                    vote_fraction=None if math.isnan(frac) else frac,
                )
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed value") from None
            out.append((parts[0], parts[1], score))
    if not header_seen:
        raise DataError(f"{path}: empty epoch-score file")
    return out
