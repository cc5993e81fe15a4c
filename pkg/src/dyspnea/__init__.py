"""Objective dyspnea scoring from respiratory waveforms."""
from .errors import ConfigError, DataError, DyspneaError, ModelFormatError, UnusableEpochError
from .features import FEATURE_NAMES
from .ingest import Channel, LabelRecord, Recording, load_labels, load_recording, write_recording
from .model import TrainedModel, fit_model, knn_classify, knn_regress, load_model, save_model
from .pipeline import PipelineConfig, featurize, select_and_gate
from .scoring import ScoreReport, score_recording
from .stats import compare_datasets, kde, kl_divergence, welch_ttest
from .synth import BreathSpec, generate, preset, synthesize

__version__ = "0.1.0"
