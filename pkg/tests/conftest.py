import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from inkrnn.ink import InkSequence

settings.register_profile("default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_character(rng, n_strokes=None, max_points=12):
    """Random multi-stroke scribble with jittered, non-degenerate extent."""
    n_strokes = n_strokes or int(rng.integers(1, 4))
    pts = []
    for s in range(n_strokes):
        k = int(rng.integers(2, max_points))
        start = rng.uniform(-5, 5, 2)
        steps = rng.normal(0, 1, (k - 1, 2))
        xy = np.vstack([start, start + np.cumsum(steps, axis=0)])
        pts += [(x, y, s) for x, y in xy]
    return InkSequence.from_points(pts, label=0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
