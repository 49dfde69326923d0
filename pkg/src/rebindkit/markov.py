"""Finite Markov chains: validated matrix types, stationary vectors, reversibility."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .errors import (
    MatrixOverflow,
    NonPositive,
    NonUniqueStationary,
    NotGeneratorLike,
    ValidationError,
)
from .matfuncs import check_principal_log, expm, logm

logger = logging.getLogger(__name__)

__all__ = [
    "TransitionMatrix",
    "RateMatrix",
    "StationaryDistribution",
    "RenormalizationWarning",
    "stationary_distribution",
    "nonreversibility",
    "relative_nonreversibility",
    "detailed_balance_part",
    "rate_to_transition",
    "transition_to_rate",
    "weighted_inner",
    "weighted_gram",
]


class RenormalizationWarning(RuntimeWarning):
    pass


def _frozen_square(entries, name):
    arr = np.array(entries, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has NaN or Inf entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix ``P(tau)``."""

    entries: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        P = _frozen_square(self.entries, "TransitionMatrix")
        if P.shape[0] < 2:
            raise ValidationError("TransitionMatrix needs at least 2 states")
        if P.min() < 0:
            raise ValidationError(f"TransitionMatrix has negative entry {P.min():.3e}")
        dev = np.abs(P.sum(axis=1) - 1.0).max()
        if dev > tol.STOCHASTIC_ROW_SUM:
            raise ValidationError(f"TransitionMatrix rows deviate from 1 by {dev:.3e}")
        if not self.tau > 0:
            raise ValidationError("lag time tau must be positive")
        object.__setattr__(self, "entries", P)

    @property
    def m(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class RateMatrix:
    """Generator ``Q``: non-negative off-diagonal rates, zero row sums."""

    entries: np.ndarray

    def __post_init__(self):
        Q = _frozen_square(self.entries, "RateMatrix")
        off = Q - np.diag(np.diag(Q))
        if off.min() < 0:
            raise ValidationError(f"RateMatrix has negative off-diagonal rate {off.min():.3e}")
        scale = max(np.abs(Q).max(), np.finfo(float).tiny)
        dev = np.abs(Q.sum(axis=1)).max()
        if dev > tol.GENERATOR_ROW_SUM * scale:
            raise ValidationError(f"RateMatrix rows deviate from 0 by {dev:.3e}")
        object.__setattr__(self, "entries", Q)

    @property
    def m(self):
        return self.entries.shape[0]

    @classmethod
    def with_repaired_diagonal(cls, entries):
        """Rebuild the diagonal from the off-diagonal rates (for rounded, printed data).

        Returns the matrix and the largest diagonal adjustment that was made.
        """
        Q = np.array(entries, dtype=float)
        old = np.diag(Q).copy()
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return cls(Q), float(np.abs(np.diag(Q) - old).max())


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray = field()

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float).ravel()
        if not np.all(np.isfinite(pi)):
            raise ValidationError("stationary vector has non-finite entries")
        if pi.min() <= 0:
            raise NonPositive(f"stationary vector has non-positive entry {pi.min():.3e}")
        if abs(pi.sum() - 1.0) > tol.STATIONARY_SUM:
            raise ValidationError(f"stationary vector sums to {pi.sum()!r}")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def D(self):
        return np.diag(self.pi)

    def __len__(self):
        return self.pi.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.pi, dtype=dtype)


def _matrix_and_kind(M):
    if isinstance(M, TransitionMatrix):
        return M.entries, "transition"
    if isinstance(M, RateMatrix):
        return M.entries, "rate"
    A = np.asarray(M, dtype=float)
    rows = A.sum(axis=1)
    kind = "rate" if np.abs(rows).max() < np.abs(rows - 1.0).max() else "transition"
    return A, kind


def _pi_vector(pi):
    return np.asarray(getattr(pi, "pi", pi), dtype=float)


def stationary_distribution(M) -> StationaryDistribution:
    """Left fixed vector of a transition matrix or left null vector of a generator.

    Dense SVD of ``P^T - I`` (or ``Q^T``); the smallest singular vector is the
    answer, provided the second smallest singular value shows a clear gap.
    """
    A, kind = _matrix_and_kind(M)
    K = A.T - np.eye(A.shape[0]) if kind == "transition" else A.T
    _, s, vt = np.linalg.svd(K)
    if s[0] == 0.0 or s[-2] <= tol.STATIONARY_GAP * s[0]:
        raise NonUniqueStationary(
            f"null space has dimension > 1 (sigma_-2 / sigma_1 = {s[-2] / s[0] if s[0] else 0.0:.3e})"
        )
    v = vt[-1]
    pi = v / v.sum()
    if pi.min() <= tol.STATIONARY_MIN:
        raise NonPositive(f"stationary vector has entry {pi.min():.3e}")
    return StationaryDistribution(pi / pi.sum())


def nonreversibility(M, pi) -> float:
    """Entrywise 1-norm of ``D M - M^T D``; zero exactly under detailed balance."""
    A, _ = _matrix_and_kind(M)
    p = _pi_vector(pi)
    if p.shape[0] != A.shape[0]:
        raise ValidationError("dimension mismatch between matrix and stationary vector")
    DM = p[:, None] * A
    return float(np.abs(DM - DM.T).sum())


def relative_nonreversibility(M, pi) -> float:
    """:func:`nonreversibility` divided by the entrywise 1-norm of ``D M``."""
    A, _ = _matrix_and_kind(M)
    p = _pi_vector(pi)
    scale = float(np.abs(p[:, None] * A).sum())
    return nonreversibility(M, pi) / scale if scale > 0 else 0.0


def detailed_balance_part(M, pi) -> np.ndarray:
    """``(M + D^{-1} M^T D) / 2``: the reversible part of ``M`` with respect to ``pi``.

    Keeps ``pi`` stationary and the row sums of ``M``.
    """
    A, _ = _matrix_and_kind(M)
    p = _pi_vector(pi)
    return 0.5 * (A + A.T * p[None, :] / p[:, None])


def rate_to_transition(Q, tau: float) -> TransitionMatrix:
    """``P = exp(tau Q)``."""
    A = Q.entries if isinstance(Q, RateMatrix) else np.asarray(Q, dtype=float)
    if not tau > 0:
        raise ValidationError("lag time tau must be positive")
    if np.linalg.norm(tau * A, 1) > tol.EXPM_MAX_NORM:
        raise MatrixOverflow(f"||tau Q||_1 = {np.linalg.norm(tau * A, 1):.3e} is too large")
    P = expm(tau * A)
    P[(P < 0) & (P > -1e-14)] = 0.0
    drift = np.abs(P.sum(axis=1) - 1.0).max()
    if drift > tol.RENORMALIZE_DRIFT:
        warnings.warn(f"rows of exp(tau Q) drifted by {drift:.3e}; renormalized", RenormalizationWarning)
        P = P / P.sum(axis=1, keepdims=True)
    return TransitionMatrix(P, tau)


def transition_to_rate(P, tau: float | None = None) -> RateMatrix:
    """``Q = log(P) / tau`` with the principal real logarithm.

    Tiny negative off-diagonal rates (above ``-LOG_NEGATIVE_HARD``) produced by
    rounding are clamped to zero with a warning; larger ones raise
    ``NotGeneratorLike``.
    """
    if isinstance(P, TransitionMatrix):
        A, tau = P.entries, P.tau if tau is None else tau
    else:
        A = np.asarray(P, dtype=float)
        tau = 1.0 if tau is None else tau
    check_principal_log(np.linalg.eigvals(A), np.abs(A).max())
    L = logm(A) / tau
    rows = L.sum(axis=1)
    scale = max(np.abs(L).max(), 1.0)
    if np.abs(rows).max() > tol.LOG_ROW_SUM * scale:
        raise NotGeneratorLike(f"log(P) rows sum to {np.abs(rows).max():.3e}, not zero")
    off = L - np.diag(np.diag(L))
    worst = off.min()
    if worst < -tol.LOG_NEGATIVE_HARD * scale:
        raise NotGeneratorLike(f"log(P) has negative off-diagonal rate {worst:.3e}")
    if worst < 0:
        warnings.warn(f"clamped negative off-diagonal rates down to {worst:.3e}", RenormalizationWarning)
        off = np.maximum(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return RateMatrix(off)


def weighted_inner(u, v, pi) -> float:
    """pi-weighted scalar product ``sum_i pi_i u_i v_i``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    p = _pi_vector(pi)
    if not (u.shape == v.shape == p.shape):
        raise ValidationError("vectors and weights must have equal length")
    return float(np.sum(p * u * v))


def weighted_gram(U, V, pi) -> np.ndarray:
    """Matrix of pi-weighted products between the columns of ``U`` and ``V``."""
    p = _pi_vector(pi)
    return np.asarray(U, dtype=float).T @ (p[:, None] * np.asarray(V, dtype=float))
