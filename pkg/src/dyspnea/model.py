"""Standard scaling, kNN dyspnea classification / Borg regression, and scoring.

Neighbor order is total and independent of training-row order: rows are
ranked by squared Euclidean distance in scaled feature space, then by class
label (dyspnea first), then by Borg score (higher first).  Rows that agree on
all three are interchangeable as far as any output is concerned.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, ModelFormatError
from .features import FEATURE_NAMES

log = logging.getLogger(__name__)

MODEL_VERSION = "dyspnea-knn/1"
METRIC = "sqeuclidean"
DEFAULT_K = 40
SCORE_RANGE = (0.0, 10.0)


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray
    constant: tuple = ()  # indices of zero-variance columns (scale forced to 1)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


def fit_scaler(matrix) -> Scaler:
    """Column means and sample standard deviations; zero-variance columns get scale 1."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("cannot fit a scaler on an empty matrix")
    if x.shape[0] < 2:
        raise DataError("scaler needs at least two rows")
    mean = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1)
    constant = tuple(int(j) for j in np.flatnonzero(~(scale > 0)))
    if constant:
        names = [FEATURE_NAMES[j] if x.shape[1] == len(FEATURE_NAMES) else str(j) for j in constant]
        warnings.warn(f"zero-variance feature columns given unit scale: {names}", stacklevel=2)
        scale = scale.copy()
        scale[list(constant)] = 1.0
    return Scaler(mean=mean, scale=scale, constant=constant)


@dataclass(frozen=True)
class TrainedModel:
    scaler: Scaler
    train_matrix: np.ndarray = field(repr=False)  # already scaled
    labels: Optional[np.ndarray] = field(default=None, repr=False)
    scores: Optional[np.ndarray] = field(default=None, repr=False)
    k: int = DEFAULT_K
    k_regress: int = DEFAULT_K
    metric: str = METRIC
    version: str = MODEL_VERSION

    def __post_init__(self):
        n = self.train_matrix.shape[0]
        if self.labels is None and self.scores is None:
            raise DataError("model needs class labels and/or Borg scores")
        for arr in (self.labels, self.scores):
            if arr is not None and arr.shape != (n,):
                raise DataError("target vector length must match the training matrix")
        if self.scores is not None and (
            np.any(self.scores < SCORE_RANGE[0]) or np.any(self.scores > SCORE_RANGE[1])
        ):
            raise DataError("Borg scores must lie in [0, 10]")
        if self.labels is not None and not np.all(np.isin(self.labels, (0, 1))):
            raise DataError("class labels must be 0 or 1")

    @property
    def n_train(self) -> int:
        return self.train_matrix.shape[0]

    def _tie_keys(self):
        n = self.n_train
        lab = self.labels if self.labels is not None else np.zeros(n)
        sco = self.scores if self.scores is not None else np.zeros(n)
        return -lab.astype(float), -sco.astype(float)


def fit_model(matrix, labels=None, scores=None, k: int = DEFAULT_K, k_regress: Optional[int] = None) -> TrainedModel:
    """Fit the scaler on ``matrix`` and store the scaled rows with their targets."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2:
        raise DataError("training matrix must be 2-D")
    scaler = fit_scaler(x)
    k_regress = k if k_regress is None else k_regress
    for kk in (k, k_regress):
        if not 1 <= kk <= x.shape[0]:
            raise DataError(f"k={kk} needs 1 <= k <= n_train={x.shape[0]}")
    return TrainedModel(
        scaler=scaler,
        train_matrix=scaler.transform(x),
        labels=None if labels is None else np.asarray(labels, dtype=np.int64),
        scores=None if scores is None else np.asarray(scores, dtype=float),
        k=int(k),
        k_regress=int(k_regress),
    )


def neighbors(model: TrainedModel, query, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest training rows, nearest first."""
    n = model.n_train
    if k > n:
        raise DataError(f"k={k} exceeds the {n} training rows")
    q = model.scaler.transform(query)
    d = np.sum((model.train_matrix - q) ** 2, axis=1)
    kth = np.partition(d, k - 1)[k - 1]
    cand = np.flatnonzero(d <= kth)
    neg_lab, neg_sco = model._tie_keys()
    order = np.lexsort((neg_sco[cand], neg_lab[cand], d[cand]))
    return cand[order[:k]]


def knn_classify(model: TrainedModel, query, k: Optional[int] = None):
    """Majority vote of the ``k`` nearest rows.

    Returns ``(class, dyspnea_vote_fraction)``.  An even split goes to class 1.
    """
    if model.labels is None:
        raise DataError("model has no class labels")
    k = model.k if k is None else k
    idx = neighbors(model, query, k)
    ones = int(np.sum(model.labels[idx]))
    frac = ones / k
    return (1 if 2 * ones >= k else 0), frac


def knn_regress(model: TrainedModel, query, k: Optional[int] = None) -> float:
    """Unweighted mean Borg score of the ``k`` nearest rows, clamped to [0, 10]."""
    if model.scores is None:
        raise DataError("model has no Borg scores")
    k = model.k_regress if k is None else k
    idx = neighbors(model, query, k)
    return float(np.clip(np.mean(model.scores[idx]), *SCORE_RANGE))


# -- persistence -------------------------------------------------------------


def _floats(a) -> Optional[list]:
    return None if a is None else [float(v) for v in np.asarray(a).ravel()]


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "version": model.version,
        "metric": model.metric,
        "k": model.k,
        "k_regress": model.k_regress,
        "feature_names": list(FEATURE_NAMES) if model.train_matrix.shape[1] == len(FEATURE_NAMES) else None,
        "n_train": model.n_train,
        "n_features": int(model.train_matrix.shape[1]),
        "scaler_mean": _floats(model.scaler.mean),
        "scaler_scale": _floats(model.scaler.scale),
        "scaler_constant": list(model.scaler.constant),
        "train_matrix": _floats(model.train_matrix),
        "labels": None if model.labels is None else [int(v) for v in model.labels],
        "scores": _floats(model.scores),
    }


def save_model(model: TrainedModel, path) -> None:
    """Write the model as a self-describing JSON document (exact float round-trip)."""
    text = json.dumps(model_to_dict(model), separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: unreadable model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("version") != MODEL_VERSION:
        found = doc.get("version") if isinstance(doc, dict) else None
        raise ModelFormatError(f"{path}: model version {found!r}, expected {MODEL_VERSION!r}")
    if doc.get("metric") != METRIC:
        raise ModelFormatError(f"{path}: unsupported metric {doc.get('metric')!r}")
    try:
        n, m = int(doc["n_train"]), int(doc["n_features"])
        matrix = np.array(doc["train_matrix"], dtype=float).reshape(n, m)
        scaler = Scaler(
            mean=np.array(doc["scaler_mean"], dtype=float).reshape(m),
            scale=np.array(doc["scaler_scale"], dtype=float).reshape(m),
            constant=tuple(doc["scaler_constant"]),
        )
        labels = None if doc["labels"] is None else np.array(doc["labels"], dtype=np.int64).reshape(n)
        scores = None if doc["scores"] is None else np.array(doc["scores"], dtype=float).reshape(n)
        return TrainedModel(
            scaler=scaler, train_matrix=matrix, labels=labels, scores=scores,
            k=int(doc["k"]), k_regress=int(doc["k_regress"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model ({exc})") from None
