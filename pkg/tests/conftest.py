import numpy as np
import pytest

from dyspnea.ingest import Channel, Recording
from dyspnea.pipeline import PipelineConfig, featurize, select_and_gate
from dyspnea.preprocess import Epoch
from dyspnea.synth import preset, synthesize

RATE = 20.0


def tone(freq_hz, duration_s=60.0, rate_hz=RATE, amp=1.0, phase=0.0):
    t = np.arange(int(round(duration_s * rate_hz))) / rate_hz
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)


def as_epoch(samples, rate_hz=RATE, index=0, normalized=True):
    return Epoch(samples=np.asarray(samples, dtype=float), channel_name="resp", start_s=0.0,
                 index=index, normalized=normalized, rate_hz=rate_hz)


def single_channel(samples, rate_hz=RATE, name="resp", subject_id="s1", tag="other"):
    return Recording((Channel(name, "ncs_amplitude", rate_hz, samples),), subject_id=subject_id, dataset_tag=tag)


def regime_rows(name, seeds, duration_s=900.0, cfg=PipelineConfig()):
    rows = []
    for s in seeds:
        rec, _ = synthesize(preset(name, seed=s, duration_s=duration_s, subject_id=f"{name}-{s}"))
        rows += select_and_gate(featurize(rec, cfg), cfg).retained
    return rows


@pytest.fixture(scope="session")
def regimes():
    """Gated feature rows of the three synthetic regimes (shared, computed once)."""
    return {
        "normal": regime_rows("normal", (1, 2)),
        "exertion": regime_rows("exertion", (11, 12)),
        "covid-like": regime_rows("covid-like", (21, 22)),
    }


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
