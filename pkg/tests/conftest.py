import numpy as np
import pytest

from dlngeom.linalg import haar_orthogonal_batch
from dlngeom.manifold import FrameTuple, assemble_network


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_balanced(lam, depth, seed):
    """Balanced network with depth roots ``lam`` and Haar-random frames."""
    return assemble_network(lam, FrameTuple.random(depth, len(lam), seed))


def random_full_rank(rng, d, lo=0.5, hi=3.0, min_gap=0.0):
    """Q diag(s) R^T with descending s in (lo, hi) and consecutive gaps above ``min_gap``."""
    while True:
        s = np.sort(rng.uniform(lo, hi, d))[::-1]
        if d == 1 or np.min(-np.diff(s)) > min_gap:
            break
    Q = haar_orthogonal_batch(d, 2, int(rng.integers(1 << 31)))
    return (Q[0] * s) @ Q[1].T, s


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
