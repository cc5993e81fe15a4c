"""Optimal-channel choice and CoV-based epoch quality gating."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .features import COV_FEATURES, FEATURE_NAMES

_COV_COLS = [FEATURE_NAMES.index(n) for n in COV_FEATURES]


@dataclass(frozen=True)
class QualityConfig:
    cov_threshold: float = 0.4
    cov_feature_set: tuple = COV_FEATURES

    def validate(self) -> "QualityConfig":
        if not self.cov_threshold > 0:
            raise ConfigError("cov_threshold must be positive")
        unknown = set(self.cov_feature_set) - set(FEATURE_NAMES)
        if unknown:
            raise ConfigError(f"unknown CoV features {sorted(unknown)}")
        return self


def _values(row) -> np.ndarray:
    return np.asarray(getattr(row, "values", row), dtype=float)


def mean_cov(row, features: Sequence[str] = COV_FEATURES) -> float:
    """Mean of the CoV features of one feature row (object with ``.values`` or a 51-vector)."""
    cols = _COV_COLS if tuple(features) == COV_FEATURES else [FEATURE_NAMES.index(f) for f in features]
    return float(np.mean(_values(row)[cols]))


def channel_scores(per_channel: Mapping[str, Sequence]) -> dict:
    """Mean over epochs of each epoch's mean CoV; channels without epochs are skipped."""
    scores = {}
    for name, rows in per_channel.items():
        if len(rows):
            # sorted so the result does not depend on epoch order
            scores[name] = float(np.mean(sorted(mean_cov(r) for r in rows)))
    return scores


def select_channel(per_channel: Mapping[str, Sequence]) -> str:
    """Channel with the smallest mean CoV; ties go to the lexicographically first name."""
    scores = channel_scores(per_channel)
    if not scores:
        raise DataError("no channel has any usable epoch")
    return min(sorted(scores), key=lambda name: scores[name])


def filter_epochs(rows: Sequence, cfg: QualityConfig = QualityConfig()):
    """Keep rows whose mean CoV is strictly below the threshold.

    Returns ``(retained, ratio)``; ``ratio`` is ``None`` for empty input.
    """
    cfg.validate()
    kept = [r for r in rows if mean_cov(r, cfg.cov_feature_set) < cfg.cov_threshold]
    ratio: Optional[float] = len(kept) / len(rows) if len(rows) else None
    return kept, ratio


def format_selection_report(
    subject_id: str, chosen: str, scores: Mapping[str, float], retained: int, total: int
) -> str:
    lines = [
        f"subject_id={subject_id}",
        f"chosen_channel={chosen}",
        f"retained={retained}",
        f"total={total}",
        "ratio_pct=" + (f"{100.0 * retained / total:.1f}" if total else "nan"),
        "channel,mean_cov",
    ]
    lines += [f"{name},{scores[name]!r}" for name in sorted(scores)]
    return "\n".join(lines) + "\n"
