import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from commitkit.mdp import from_stationary  # noqa: E402
from commitkit.provider import ProviderModel  # noqa: E402
from commitkit.recipient import RecipientModel  # noqa: E402


def small_provider(seed, n_states=4, n_actions=2, horizon=4, sparse_rows=False):
    """Random provider whose last state is an absorbing plus state."""
    rng = np.random.default_rng(seed)
    P = rng.random((n_states, n_actions, n_states))
    if sparse_rows:
        P *= rng.random(P.shape) < 0.6
        P[..., 0] += 1e-3
    P /= P.sum(axis=2, keepdims=True)
    plus = n_states - 1
    P[plus] = 0.0
    P[plus, :, plus] = 1.0
    R = rng.random((n_states, n_actions))
    R[plus] = 0.0
    s0 = int(rng.integers(0, n_states - 1))
    mdp, index = from_stationary(P, R, horizon, s0, prune=False)
    return ProviderModel(mdp, {0: [ids == plus for ids in index]})


def small_recipient(seed, n_local=3, n_actions=2, horizon=4):
    """Random recipient where u plus adds a rewarding option (plus-dominance holds)."""
    rng = np.random.default_rng(seed)
    P = rng.random((n_local, n_actions, n_local))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((n_local, n_actions)) - 0.5
    Pu = np.stack([P, P])
    Ru = np.stack([R, R + rng.random((n_local, n_actions))])
    return RecipientModel(Pu, Ru, horizon, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` prints one PASS/FAIL line for acceptance criterion ``n``."""
    term = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_REPORT_KEY].append((n, line))
        if term is not None:
            term.write_line("")
            term.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
