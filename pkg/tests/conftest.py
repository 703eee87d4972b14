import numpy as np
import pytest
from hypothesis import strategies as st

from multidlo.dlo_model import NodeChain, build_state


def random_chain(rng, n, object_id=0, step=0.05, origin=None):
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    steps = rng.normal(size=(n - 1, 3))
    steps *= step / np.linalg.norm(steps, axis=1, keepdims=True)
    steps *= rng.uniform(0.5, 1.5, size=(n - 1, 1))
    nodes = origin + np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
    return NodeChain(object_id, nodes)


def random_state(rng, sizes, step=0.05, spread=0.3):
    return build_state([
        random_chain(rng, n, k, step, rng.uniform(-spread, spread, 3)) for k, n in enumerate(sizes)
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def multi_states(draw, max_objects=4, max_nodes=9):
    seed = draw(st.integers(0, 2**32 - 1))
    sizes = draw(st.lists(st.integers(2, max_nodes), min_size=1, max_size=max_objects))
    return random_state(np.random.default_rng(seed), sizes)


# acceptance criteria report, printed after the run
_CRITERIA: list[str] = []


@pytest.fixture
def report():
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
