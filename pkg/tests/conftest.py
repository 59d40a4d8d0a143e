import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from bmfkit.binmat import BinMatrix


def bits(n, d, seed=0, p=0.5):
    rng = np.random.default_rng(seed)
    return BinMatrix.from_dense((rng.random((n, d)) < p).astype(np.uint8))


@st.composite
def binary_arrays(draw, max_rows=8, max_cols=8, min_rows=1, min_cols=1):
    n = draw(st.integers(min_rows, max_rows))
    d = draw(st.integers(min_cols, max_cols))
    flat = draw(st.lists(st.integers(0, 1), min_size=n * d, max_size=n * d))
    return np.array(flat, dtype=np.uint8).reshape(n, d)


def all_binary(rows, cols):
    """Every rows x cols 0/1 matrix, in a fixed order."""
    for flat in itertools.product((0, 1), repeat=rows * cols):
        yield np.array(flat, dtype=np.int64).reshape(rows, cols)


def naive_product(U, V, semiring):
    U, V = np.asarray(U), np.asarray(V)
    out = np.zeros((U.shape[0], V.shape[1]), dtype=np.int64)
    for i in range(U.shape[0]):
        for j in range(V.shape[1]):
            acc = 0
            for t in range(U.shape[1]):
                term = int(U[i, t]) * int(V[t, j])
                if semiring == "integer":
                    acc += term
                elif semiring == "boolean":
                    acc = acc or term
                else:
                    acc ^= term
            out[i, j] = acc
    return out


def naive_loss(A, M, kind, p=2):
    total = 0
    for a, m in zip(np.ravel(A), np.ravel(M)):
        diff = abs(int(a) - int(m))
        if kind == "l0":
            total += diff != 0
        elif kind == "frobenius":
            total += diff**2
        else:
            total += diff**p
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA[number] = (verdict, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, title = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")
