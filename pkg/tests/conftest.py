import numpy as np
import pytest

from rebindkit import tolerances as tol


@pytest.fixture(autouse=True)
def _restore_tolerances():
    # CLI config files may override tolerances process-wide
    saved = tol.as_dict()
    yield
    tol.apply_overrides(saved)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_generator(rng, m, density=1.0, low=0.05, high=1.0):
    """Dense (or sparse-ish but irreducible) random rate matrix."""
    Q = rng.uniform(low, high, size=(m, m))
    if density < 1.0:
        Q *= rng.random((m, m)) < density
        ring = np.roll(np.eye(m), 1, axis=1)  # keep it irreducible
        Q = np.maximum(Q, low * ring)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def random_reversible_generator(rng, m):
    pi = rng.uniform(0.5, 2.0, m)
    pi /= pi.sum()
    K = rng.uniform(0.1, 1.0, size=(m, m))
    K = K + K.T
    Q = K / pi[:, None]  # pi_i q_ij = K_ij is symmetric
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q, pi


def metastable_generator(rng, sizes, inner=1.0, outer=0.01):
    """Block-structured generator with fast mixing inside blocks and slow exchange."""
    m = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    same = labels[:, None] == labels[None, :]
    Q = np.where(same, inner, outer) * rng.uniform(0.5, 1.5, size=(m, m))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q, labels


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
