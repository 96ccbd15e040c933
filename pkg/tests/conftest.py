import numpy as np
import pytest

from fairdice.momdp import MOMDP


def random_momdp(rng, n_states=None, n_actions=None, n_objectives=None, gamma=None,
                 sparse=False) -> MOMDP:
    """Small random MOMDP with positive rewards (so NSW is finite everywhere)."""
    S = n_states or int(rng.integers(2, 11))
    A = n_actions or int(rng.integers(2, 4))
    I = n_objectives or int(rng.integers(2, 4))
    T = rng.random((S, A, S))
    if sparse:
        T *= rng.random((S, A, S)) < 0.5
        T[np.arange(S), :, rng.integers(0, S, size=S)] += 0.1
    T /= T.sum(axis=2, keepdims=True)
    R = rng.random((S, A, I))
    p0 = rng.random(S)
    p0 /= p0.sum()
    g = float(rng.uniform(0.5, 0.95)) if gamma is None else gamma
    return MOMDP(T, R, p0, g)


def random_policy(rng, shape):
    pi = rng.random(shape) + 1e-3
    return pi / pi.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_momdp(rng):
    return random_momdp(rng, 5, 3, 2, 0.9)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one '[PASS]/[FAIL] criterion N: detail' line for the terminal summary."""
    def add(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
