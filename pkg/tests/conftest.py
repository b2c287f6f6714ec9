import numpy as np
import pytest

from sdmvsum.corpus_io import Corpus, GroundTruth, ScriptRecord, TimedTranscript, VideoRecord

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_corpus():
    """One video (N=4, D=8), one script (M=2), one ground truth, one transcript."""
    r = np.random.default_rng(7)
    video = VideoRecord(
        "vid", r.standard_normal((4, 8)).astype(np.float32), [(0, 1), (2, 3)], "train",
        [TimedTranscript(r.standard_normal(8).astype(np.float32), 0.5, 2.0)],
    )
    script = ScriptRecord("scr", "vid", r.standard_normal((2, 8)).astype(np.float32))
    gt = GroundTruth("scr", np.array([1, 0, 0, 0], dtype=np.int8),
                     np.array([0.9, 0.1, 0.2, 0.3], dtype=np.float32))
    return Corpus(8, {"vid": video}, {"scr": script}, {"scr": gt})
