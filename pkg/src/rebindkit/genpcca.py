"""Membership functions ``chi = X A`` built from a dominant Schur basis.

The transformation ``A`` is feasible when ``chi`` is non-negative and every
row of ``chi`` sums to one. Since the first Schur vector is constant, the row
sums are one exactly when ``A @ 1 = e_1``.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from . import tolerances as tol
from .errors import DegenerateVertices, Infeasible, SamplingExhausted

__all__ = [
    "inner_simplex_init",
    "vertex_indices",
    "feasibilize",
    "is_feasible",
    "crispness",
    "optimize_crispness",
    "random_feasible_A",
    "check_transformation",
    "check_membership",
]


def _basis(X):
    return np.asarray(getattr(X, "X", X), dtype=float)


def vertex_indices(X) -> list[int]:
    """Greedy inner-simplex vertex search over the rows of ``X``."""
    X = _basis(X)
    n = X.shape[1]
    first = int(np.argmax(np.linalg.norm(X[:, 1:], axis=1)))
    idx = [first]
    ortho = X - X[first]
    for _ in range(1, n):
        last = ortho[idx[-1]]
        nrm = np.linalg.norm(last)
        if nrm > 0:
            t = last / nrm
            ortho = ortho - np.outer(ortho @ t, t)
        dist = np.linalg.norm(ortho, axis=1)
        dist[idx] = -1.0
        idx.append(int(np.argmax(dist)))
    return idx


def inner_simplex_init(X) -> np.ndarray:
    """``A = inv(X[vertices])``; vertex states get crisp memberships."""
    X = _basis(X)
    V = X[vertex_indices(X)]
    if abs(np.linalg.det(V)) < tol.SINGULAR_DET:
        raise DegenerateVertices("selected vertex rows are linearly dependent")
    A = np.linalg.inv(V)
    # A @ 1 = e_1 holds because V @ e_1 = 1; clean the roundoff
    A[1:, 0] = -A[1:, 1:].sum(axis=1)
    return A


def is_feasible(A, X, atol=None) -> bool:
    A = np.asarray(A, dtype=float)
    X = _basis(X)
    atol = tol.FEASIBILITY if atol is None else atol
    row_sum = A.sum(axis=1) - np.eye(A.shape[0])[0]
    if np.abs(row_sum).max() > tol.PARTITION_OF_UNITY:
        return False
    return bool((X @ A).min() >= -atol and A[0].min() > 0)


def feasibilize(A, X) -> np.ndarray:
    """Project ``A`` onto the feasible set by the standard fill.

    Rows 2..n keep their shape; the first column is set so those rows sum to
    zero, the first row lifts every membership column to a minimum of zero,
    and a final scaling restores the partition of unity.
    """
    A = np.array(A, dtype=float)
    X = _basis(X)
    if is_feasible(A, X):
        return A
    A[1:, 0] = -A[1:, 1:].sum(axis=1)
    A[0, :] = -(X[:, 1:] @ A[1:, :]).min(axis=0)
    total = A[0].sum()
    if not total > 0:
        raise Infeasible("no scaling of this basis gives non-negative memberships", violation=-total)
    A /= total
    if A[0].min() <= 0:
        raise Infeasible(
            f"statistical weight {A[0].min():.3e} is not positive", violation=float(-A[0].min())
        )
    return A


def crispness(A) -> float:
    """``trace(D^{-1} A^T A)`` with ``D = diag(A[0])``; equals ``trace(S)``."""
    A = np.asarray(A, dtype=float)
    return float(np.sum(np.sum(A * A, axis=0) / A[0]))


def optimize_crispness(X, maxiter: int = 2000, history: list | None = None):
    """Maximize ``trace(S)`` over feasible ``A`` with Nelder-Mead.

    The free parameters are rows 2..n, columns 2..n of ``A``; every trial point
    is passed through :func:`feasibilize`. If ``history`` is a list, the best
    objective after each iteration is appended to it.

    Returns ``(A, chi)``.
    """
    Xb = _basis(X)
    n = Xb.shape[1]
    A0 = feasibilize(inner_simplex_init(Xb), Xb)
    if n < 2:
        return A0, Xb @ A0
    best = {"value": crispness(A0), "A": A0}

    def build(theta):
        A = np.zeros((n, n))
        A[1:, 1:] = theta.reshape(n - 1, n - 1)
        return feasibilize(A, Xb)

    def objective(theta):
        try:
            A = build(theta)
        except Infeasible:
            return 0.0
        if abs(np.linalg.det(A)) < tol.SINGULAR_DET:
            return 0.0
        val = crispness(A)
        if val > best["value"]:
            best["value"], best["A"] = val, A
        return -val

    def record(_):
        if history is not None:
            history.append(best["value"])

    if history is not None:
        history.append(best["value"])
    minimize(
        objective,
        A0[1:, 1:].ravel(),
        method="Nelder-Mead",
        callback=record,
        options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-12},
    )
    A = best["A"]
    return A, Xb @ A


def random_feasible_A(X, seed, amplitude: float = 0.5, max_attempts: int = 1000) -> np.ndarray:
    """Random feasible transformation around the inner-simplex vertices.

    Vertex coordinates in columns 2..n get uniform noise of half-width
    ``amplitude`` times the spread of the respective Schur vector.
    """
    Xb = _basis(X)
    rng = np.random.default_rng(seed)
    V0 = Xb[vertex_indices(Xb)]
    if amplitude == 0:
        return feasibilize(inner_simplex_init(Xb), Xb)
    spread = np.ptp(Xb[:, 1:], axis=0)
    n = Xb.shape[1]
    for _ in range(max_attempts):
        V = V0.copy()
        V[:, 1:] += rng.uniform(-1.0, 1.0, size=(n, n - 1)) * amplitude * spread
        if abs(np.linalg.det(V)) < tol.SINGULAR_DET:
            continue
        try:
            return feasibilize(np.linalg.inv(V), Xb)
        except Infeasible:
            continue
    raise SamplingExhausted(f"no feasible transformation after {max_attempts} attempts")


def check_transformation(A):
    """Raise ``ValueError`` unless ``A`` satisfies the transformation invariants."""
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) < tol.SINGULAR_DET:
        raise ValueError("transformation is singular")
    e1 = np.eye(A.shape[0])[0]
    if np.abs(A.sum(axis=1) - e1).max() > tol.PARTITION_OF_UNITY:
        raise ValueError("A @ 1 != e_1")
    if A[0].min() <= 0:
        raise ValueError("statistical weights (first row) must be positive")


def check_membership(chi):
    chi = np.asarray(chi, dtype=float)
    if chi.min() < -tol.FEASIBILITY or chi.max() > 1 + tol.FEASIBILITY:
        raise ValueError("memberships outside [0, 1]")
    if np.abs(chi.sum(axis=1) - 1).max() > tol.PARTITION_OF_UNITY:
        raise ValueError("memberships do not form a partition of unity")
    if chi.sum(axis=0).min() <= 0:
        raise ValueError("empty membership column")
