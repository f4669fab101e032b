import os

import numpy as np
import pytest

from epq.corpus import load_corpus


@pytest.fixture(scope="session")
def corpus():
    """Grayscale corpus (``EPQ_CORPUS`` directory or the scikit-image samples)."""
    if not os.environ.get("EPQ_CORPUS"):
        pytest.importorskip("skimage")
    return load_corpus()


@pytest.fixture(scope="session")
def small_images(corpus):
    """Five corpus images cropped to 128x128 for fast codec checks."""
    return [im[:128, :128].copy() for im in corpus[:5]]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion
_OUTCOMES = {}
_NOTES = {}


@pytest.fixture
def note(request):
    """Attach a short measurement to the acceptance summary line."""
    lines = _NOTES.setdefault(request.node.nodeid, [])
    return lines.append


def pytest_runtest_logreport(report):
    if "test_criterion_" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        _OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_OUTCOMES, key=lambda n: int(n.split("test_criterion_")[1].split("_")[0])):
        name = nodeid.split("test_criterion_")[1]
        num, _, title = name.partition("_")
        verdict = "PASS" if _OUTCOMES[nodeid] == "passed" else "FAIL"
        detail = "; ".join(_NOTES.get(nodeid, []))
        terminalreporter.write_line(f"criterion {int(num):2d} {verdict}  {title.replace('_', ' ')}"
                                    + (f"  [{detail}]" if detail else ""))
