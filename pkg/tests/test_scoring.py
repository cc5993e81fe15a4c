import math

import numpy as np
import pytest

from dyspnea.errors import DataError
from dyspnea.model import fit_model
from dyspnea.pipeline import PipelineConfig, featurize, select_and_gate
from dyspnea.scoring import (
    EpochScore,
    ScoreReport,
    format_epochs,
    format_hourly,
    format_summary,
    hourly_bins,
    read_epoch_scores,
    score_recording,
)
from dyspnea.select import QualityConfig
from dyspnea.synth import BreathSpec, synthesize


def report_of(starts, scores, classes=None):
    classes = classes or [None] * len(starts)
    eps = tuple(EpochScore(s, i, d, c, None if c is None else float(c)) for i, (s, d, c) in enumerate(zip(starts, scores, classes)))
    return ScoreReport("s1", "covid", "resp", eps, len(eps))


def test_single_hour_mean():
    r = report_of([0.0, 30.0, 60.0], [4.0, 5.0, 4.0], [1, 1, 0])
    assert [(b.hour, b.n) for b in r.hourly] == [(0, 3)]
    assert r.hourly[0].mean == pytest.approx(13 / 3)
    assert r.overall == pytest.approx(13 / 3)
    assert r.dyspnea_fraction == pytest.approx(2 / 3)


def test_two_hour_bins():
    bins = hourly_bins([1800.0, 5400.0], [2.0, 6.0])
    assert [(b.hour, b.mean, b.n) for b in bins] == [(0, 2.0, 1), (1, 6.0, 1)]


def test_empty_hours_are_listed():
    bins = hourly_bins([100.0, 7300.0], [1.0, 3.0])
    assert [b.hour for b in bins] == [0, 1, 2]
    assert bins[1].n == 0 and math.isnan(bins[1].mean)


def test_epoch_spanning_boundary_belongs_to_start_hour():
    assert [b.hour for b in hourly_bins([3599.0], [1.0])] == [0]


def _regime(br, seed, duration_s=600.0):
    return synthesize(BreathSpec(mean_br=br, br_jitter=0.02, amp_jitter=0.05, noise_snr_db=30,
                                 duration_s=duration_s, seed=seed, subject_id=f"br{br}-{seed}"))[0]


@pytest.fixture(scope="module")
def two_regime_model():
    cfg = PipelineConfig()
    slow = select_and_gate(featurize(_regime(10, 1)), cfg).retained
    fast = select_and_gate(featurize(_regime(32, 2)), cfg).retained
    x = np.vstack([r.values for r in slow + fast])
    labels = [0] * len(slow) + [1] * len(fast)
    scores = [1.0] * len(slow) + [7.0] * len(fast)
    return fit_model(x, labels, scores, k=15)


def test_fast_regime_scores_higher(two_regime_model):
    fast = score_recording(two_regime_model, _regime(31, 5, 420.0))
    slow = score_recording(two_regime_model, _regime(11, 6, 420.0))
    assert fast.overall > slow.overall
    assert fast.dyspnea_fraction == 1.0 and slow.dyspnea_fraction == 0.0
    for rep in (fast, slow):
        assert all(0.0 <= e.d_obj <= 10.0 for e in rep.epochs)
        assert rep.overall == pytest.approx(np.mean([e.d_obj for e in rep.epochs]))


def test_no_retained_epochs(two_regime_model):
    cfg = PipelineConfig(quality=QualityConfig(cov_threshold=1e-15))
    with pytest.raises(DataError, match="quality gate"):
        score_recording(two_regime_model, _regime(20, 7, 120.0), cfg)


def test_needs_borg_scores():
    x = np.random.default_rng(0).standard_normal((10, 51))
    with pytest.raises(DataError):
        score_recording(fit_model(x, labels=[0, 1] * 5, k=3), _regime(15, 8, 120.0))


def test_report_files_round_trip(tmp_path):
    r = report_of([0.0, 30.0, 3600.0], [4.0, 5.5, 2.25], [1, 1, 0])
    p = tmp_path / "e.csv"
    p.write_text("# generated: now\n" + format_epochs(r))
    back = read_epoch_scores(p)
    assert [(s, t) for s, t, _ in back] == [("s1", "covid")] * 3
    assert [e for _, _, e in back] == list(r.epochs)
    assert format_hourly(r).splitlines() == ["hour,mean_d_obj,n_epochs", "0,4.75,2", "1,2.25,1"]
    assert "dyspnea_fraction=0.6666666666666666" in format_summary(r)
    with pytest.raises(DataError):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        read_epoch_scores(bad)
