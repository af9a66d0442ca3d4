import numpy as np
import pytest
from hypothesis import settings, strategies as st

from riskcp.core import LabelSpace, DiscreteDistribution, medical_lambda0, medical_lambda1, validate_loss_table

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

SKEWED = (0.7, 0.1, 0.1, 0.1)


@pytest.fixture
def lam0():
    return medical_lambda0()


@pytest.fixture
def lam1():
    return medical_lambda1()


@pytest.fixture
def skewed():
    return DiscreteDistribution(SKEWED)


def random_table(rng, m=None, k=None, integer=True):
    m = m or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, 6))
    vals = rng.integers(0, 10, size=(m, k)).astype(float) if integer else rng.uniform(0, 10, size=(m, k))
    return validate_loss_table(vals, [f"a{i}" for i in range(m)], [f"y{j}" for j in range(k)])


@st.composite
def tables(draw, max_actions=4, max_labels=5, min_labels=1):
    m = draw(st.integers(1, max_actions))
    k = draw(st.integers(min_labels, max_labels))
    cells = draw(st.lists(st.integers(0, 12), min_size=m * k, max_size=m * k))
    vals = np.array(cells, dtype=float).reshape(m, k)
    return validate_loss_table(vals, [f"a{i}" for i in range(m)], [f"y{j}" for j in range(k)])


@st.composite
def dists(draw, k):
    w = draw(st.lists(st.integers(0, 20), min_size=k, max_size=k).filter(lambda v: sum(v) > 0))
    return DiscreteDistribution(np.array(w, dtype=float) / sum(w))


def labels(k):
    return LabelSpace(tuple(f"y{j}" for j in range(k)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
