import logging
import warnings

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from sowsched.core import InstanceParams, JointDist, SignalModel, StatementOfWork, ValueFunction
from sowsched.errors import PreconditionWarning

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet():
    # small test capacities trip the capacity precondition on purpose
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreconditionWarning)
        logging.getLogger("sowsched").setLevel(logging.ERROR)
        yield


def small_params(**kw) -> InstanceParams:
    base = dict(capacity=4, horizon=12, max_demand=2, max_duration=2, max_latency=4, max_value=4.0)
    base.update(kw)
    return InstanceParams(**base)


@st.composite
def sows(draw, params: InstanceParams, birth: int = 1, max_support: int = 4):
    """Valid statements of work born at ``birth`` under ``params``."""
    S, D, H = params.max_latency, params.max_duration, params.max_value
    last = draw(st.integers(birth, birth + S))
    top = draw(st.floats(1.0, H))
    steps = [(last, top)]
    if last > birth and draw(st.booleans()):
        mid = draw(st.integers(birth, last - 1))
        low = draw(st.floats(1.0, top))
        steps = [(mid, top), (last, low)]
    cells = draw(
        st.lists(
            st.tuples(st.integers(birth, birth + S), st.integers(1, D)),
            min_size=1, max_size=max_support, unique=True,
        )
    )
    w = draw(st.lists(st.integers(1, 8), min_size=len(cells), max_size=len(cells)))
    probs = [x / sum(w) for x in w]
    probs[-1] = 1.0 - sum(probs[:-1])
    c = draw(st.integers(1, params.max_demand))
    dist = JointDist(tuple((a, d, p) for (a, d), p in zip(cells, probs)))
    return StatementOfWork(ValueFunction(birth, tuple(steps)), c, dist)


@st.composite
def param_sets(draw, signal=None):
    D = draw(st.integers(1, 3))
    S = draw(st.integers(D, 8))
    cmax = draw(st.integers(1, 3))
    sm = draw(st.sampled_from(list(SignalModel))) if signal is None else signal
    return InstanceParams(
        capacity=draw(st.integers(cmax, 8)), horizon=20, max_demand=cmax, max_duration=D,
        max_latency=S, max_value=float(draw(st.integers(1, 8))), signal_model=sm,
    )


_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(n, title, ok, detail)`` prints one PASS/FAIL line and asserts ``ok``."""
    lines = request.config.stash.setdefault(_RESULTS, [])

    def report(n: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        lines.append(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
