"""Real Schur forms: decomposition, block reordering and dominant Schur bases.

The reordering swaps adjacent diagonal blocks directly (Bai & Demmel style):
for blocks ``A11`` (p x p) and ``A22`` (q x q) the Sylvester equation
``A11 X - X A22 = -A12`` gives a basis ``[X; I]`` of the invariant subspace
belonging to ``A22``, and an orthogonal factor of that basis moves the block
to the front.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import tolerances as tol
from .errors import BlockSplit, GapTooSmall, NoConvergence, NumericalError, SwapIllConditioned

__all__ = [
    "BlockDescriptor",
    "RealSchurForm",
    "DominantBasis",
    "quasi_blocks",
    "real_schur",
    "sort_schur",
    "dominant_basis",
]


@dataclass(frozen=True)
class BlockDescriptor:
    start_index: int
    size: int
    eigenvalues: tuple

    @property
    def stop(self):
        return self.start_index + self.size


@dataclass(frozen=True)
class RealSchurForm:
    """``M = basis @ factor @ basis.T`` with quasi-upper-triangular ``factor``."""

    basis: np.ndarray
    factor: np.ndarray
    blocks: tuple

    def eigenvalues(self) -> np.ndarray:
        return np.array([ev for b in self.blocks for ev in b.eigenvalues], dtype=complex)

    def residual(self, M) -> float:
        """Relative Frobenius residual ``||M - U R U^T|| / ||M||``."""
        M = np.asarray(M, dtype=float)
        nrm = np.linalg.norm(M)
        err = np.linalg.norm(M - self.basis @ self.factor @ self.basis.T)
        return float(err / nrm) if nrm > 0 else float(err)


@dataclass(frozen=True)
class DominantBasis:
    """Leading Schur vectors ``X`` (m x n), pi-orthonormal, first column all ones.

    ``block`` is the leading n x n Schur factor, so ``M @ X = X @ block``.
    """

    X: np.ndarray
    pi: np.ndarray
    n: int
    block: np.ndarray
    eigenvalues: np.ndarray

    def gram(self) -> np.ndarray:
        return self.X.T @ (self.pi[:, None] * self.X)


def _block_eigenvalues(B):
    if B.shape == (1, 1):
        return (float(B[0, 0]),)
    a, b, c, d = B[0, 0], B[0, 1], B[1, 0], B[1, 1]
    mean = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if disc >= 0:
        r = np.sqrt(disc)
        return (float(mean + r), float(mean - r))
    r = np.sqrt(-disc)
    return (complex(mean, r), complex(mean, -r))


def quasi_blocks(R, atol=0.0) -> tuple:
    """Split a quasi-upper-triangular matrix into its 1x1 / 2x2 diagonal blocks."""
    R = np.asarray(R)
    m = R.shape[0]
    blocks = []
    i = 0
    while i < m:
        if i + 1 < m and abs(R[i + 1, i]) > atol:
            if i + 2 < m and abs(R[i + 2, i + 1]) > atol:
                raise NumericalError(f"factor is not quasi-triangular near index {i}")
            size = 2
        else:
            size = 1
        blocks.append(BlockDescriptor(i, size, _block_eigenvalues(R[i:i + size, i:i + size])))
        i += size
    return tuple(blocks)


def _largest_positive(U, R, cols=None):
    # flip Schur vectors so their largest-magnitude entry is positive
    m = U.shape[1]
    cols = range(m) if cols is None else cols
    s = np.ones(m)
    for j in cols:
        k = np.argmax(np.abs(U[:, j]))
        if U[k, j] < 0:
            s[j] = -1.0
    return U * s, R * np.outer(s, s)


def real_schur(M) -> RealSchurForm:
    """Real Schur decomposition (LAPACK Hessenberg QR) with block descriptors."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("real_schur needs a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    try:
        R, U = scipy.linalg.schur(M, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NoConvergence(str(exc)) from exc
    R = np.triu(R, -1)
    U, R = _largest_positive(U, R)
    return RealSchurForm(U, R, quasi_blocks(R))


def _dominance(criterion) -> Callable:
    if callable(criterion):
        return criterion
    if criterion in ("modulus", "abs", "transition"):
        return lambda ev: abs(ev[0])
    if criterion in ("real", "rate"):
        return lambda ev: float(np.real(ev[0]))
    raise ValueError(f"unknown dominance criterion {criterion!r}")


def _swap(U, R, k, p, q):
    """Swap the adjacent blocks of sizes p, q starting at index k (in place)."""
    s = p + q
    A11 = R[k:k + p, k:k + p]
    A12 = R[k:k + p, k + p:k + s]
    A22 = R[k + p:k + s, k + p:k + s]
    ev1 = np.linalg.eigvals(A11)
    ev2 = np.linalg.eigvals(A22)
    scale = max(np.abs(R[k:k + s, k:k + s]).max(), 1.0)
    sep = np.min(np.abs(ev1[:, None] - ev2[None, :]))
    if sep < tol.SWAP_SEPARATION * scale:
        raise SwapIllConditioned(
            f"blocks at {k} and {k + p} have eigenvalue separation {sep:.3e}",
            pair=(tuple(ev1), tuple(ev2)),
        )
    # column-major vec: (I_q kron A11 - A22^T kron I_p) vec(X) = -vec(A12)
    K = np.kron(np.eye(q), A11) - np.kron(A22.T, np.eye(p))
    X = np.linalg.solve(K, -A12.reshape(-1, order="F")).reshape((p, q), order="F")
    V = np.vstack([X, np.eye(q)])
    Qs, _ = np.linalg.qr(V, mode="complete")
    R[k:k + s, :] = Qs.T @ R[k:k + s, :]
    R[:, k:k + s] = R[:, k:k + s] @ Qs
    U[:, k:k + s] = U[:, k:k + s] @ Qs
    lower = R[k + q:k + s, k:k + q]
    if np.abs(lower).max() > 1e3 * np.finfo(float).eps * scale * s:
        raise SwapIllConditioned(
            f"swap at {k} left a residual of {np.abs(lower).max():.3e}",
            pair=(tuple(ev1), tuple(ev2)),
        )
    lower[...] = 0.0
    if q == 2:
        _restore_pair(R, k)
    if p == 2:
        _restore_pair(R, k + q)


def _restore_pair(R, i):
    # a swapped 2x2 block keeps its complex pair; roundoff must not zero the subdiagonal
    if R[i + 1, i] == 0.0:
        raise SwapIllConditioned(f"complex pair at {i} collapsed during swap")


def sort_schur(form: RealSchurForm, criterion="modulus", count: int | None = None) -> RealSchurForm:
    """Reorder the diagonal blocks so dominance is non-increasing.

    Parameters
    ----------
    form
        A real Schur form.
    criterion
        ``"modulus"`` (``|lambda|``, for transition matrices), ``"real"``
        (``Re lambda``, for rate matrices) or a callable taking the block's
        eigenvalue tuple.
    count
        Stop once the leading blocks hold at least ``count`` eigenvalues.
        ``None`` sorts everything.
    """
    key = _dominance(criterion)
    U = form.basis.copy()
    R = form.factor.copy()
    sizes = [b.size for b in form.blocks]
    evs = [b.eigenvalues for b in form.blocks]
    m = R.shape[0]
    limit = m if count is None else min(count, m)
    done = 0
    j = 0
    while done < limit and j < len(sizes):
        dom = [key(e) for e in evs[j:]]
        best = j + int(np.argmax(dom))
        for t in range(best, j, -1):
            start = sum(sizes[:t - 1])
            _swap(U, R, start, sizes[t - 1], sizes[t])
            sizes[t - 1], sizes[t] = sizes[t], sizes[t - 1]
            evs[t - 1], evs[t] = evs[t], evs[t - 1]
        done += sizes[j]
        j += 1
    U, R = _largest_positive(U, R)
    starts = np.cumsum([0] + sizes[:-1])
    blocks = tuple(
        BlockDescriptor(int(st), sz, _block_eigenvalues(R[st:st + sz, st:st + sz]))
        for st, sz in zip(starts, sizes)
    )
    return RealSchurForm(U, R, blocks)


def _entries(M):
    arr = getattr(M, "entries", M)
    return np.asarray(arr, dtype=float)


def _is_rate(M, entries):
    kind = type(M).__name__
    if kind == "RateMatrix":
        return True
    if kind == "TransitionMatrix":
        return False
    return bool(np.abs(entries.sum(axis=1)).max() < np.abs(entries.sum(axis=1) - 1).max())


def dominant_basis(M, pi, n: int, criterion=None) -> DominantBasis:
    """Leading ``n`` Schur vectors of ``M``, orthonormal in the pi-weighted product.

    The Schur form is taken of ``D^{1/2} M D^{-1/2}`` (``D = diag(pi)``); its
    leading vectors are mapped back by ``D^{-1/2}`` so that the first column is
    the constant vector.
    """
    A = _entries(M)
    pi = np.asarray(getattr(pi, "pi", pi), dtype=float)
    m = A.shape[0]
    if not 1 <= n <= m:
        raise ValueError(f"n must lie in [1, {m}]")
    if criterion is None:
        criterion = "real" if _is_rate(M, A) else "modulus"
    d = np.sqrt(pi)
    sym = d[:, None] * A / d[None, :]
    form = sort_schur(real_schur(sym), criterion, count=n)
    sizes = np.cumsum([b.size for b in form.blocks])
    if n not in sizes:
        raise BlockSplit(f"n={n} cuts through a 2x2 block; use n-1 or n+1")
    key = _dominance(criterion)
    nblk = int(np.searchsorted(sizes, n)) + 1
    if nblk < len(form.blocks):
        gap = abs(key(form.blocks[nblk - 1].eigenvalues) - key(form.blocks[nblk].eigenvalues))
        if gap < tol.SPECTRAL_GAP:
            raise GapTooSmall(f"no spectral gap after {n} eigenvalues (gap {gap:.2e})")
    U = form.basis[:, :n].copy()
    R = form.factor[:n, :n].copy()
    if np.abs(np.abs(U[:, 0]) - d).max() > 1e-6:
        raise NumericalError("leading Schur vector is not the stationary direction")
    # pin the first vector to exactly sqrt(pi) with a positive sign
    sgn = np.sign(U[:, 0] @ d)
    U[:, 0] = d
    R[0, 1:] *= sgn
    R[1:, 0] *= sgn
    X = U / d[:, None]
    X[:, 0] = 1.0
    eigs = np.array([ev for b in form.blocks[:nblk] for ev in b.eigenvalues], dtype=complex)
    return DominantBasis(X, pi, n, R, eigs)
