"""Matrix exponential and principal logarithm.

``expm`` delegates to SciPy (scaling-and-squaring with a diagonal Padé
approximant). ``logm`` is implemented here on the real Schur form: repeated
square roots of the quasi-triangular factor bring it near the identity, a
Gauss-Legendre (partial fraction Padé) rule evaluates ``log(I + X)``, and the
result is scaled back by ``2**s``. Everything stays in real arithmetic, so
non-diagonalizable inputs are handled without eigenvectors.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NoPrincipalLog
from .schur import quasi_blocks, real_schur

_PADE_DEGREE = 8
_SQRT_TARGET = 0.25
_MAX_SQRTS = 64


def expm(M) -> np.ndarray:
    return scipy.linalg.expm(np.asarray(M, dtype=float))


def _sqrt_block(B):
    if B.shape == (1, 1):
        return np.sqrt(B)
    # principal square root of a 2x2 block via Cayley-Hamilton
    sdet = np.sqrt(np.linalg.det(B))
    t = np.sqrt(np.trace(B) + 2.0 * sdet)
    return (B + sdet * np.eye(2)) / t


def sqrtm_quasi(T) -> np.ndarray:
    """Principal square root of a quasi-upper-triangular matrix (block recurrence)."""
    T = np.asarray(T, dtype=float)
    blocks = [(b.start_index, b.stop) for b in quasi_blocks(T)]
    R = np.zeros_like(T)
    for j, (j0, j1) in enumerate(blocks):
        R[j0:j1, j0:j1] = _sqrt_block(T[j0:j1, j0:j1])
        Rjj = R[j0:j1, j0:j1]
        for i in range(j - 1, -1, -1):
            i0, i1 = blocks[i]
            C = T[i0:i1, j0:j1] - R[i0:i1, i1:j0] @ R[i1:j0, j0:j1]
            Rii = R[i0:i1, i0:i1]
            p, q = i1 - i0, j1 - j0
            K = np.kron(np.eye(q), Rii) + np.kron(Rjj.T, np.eye(p))
            R[i0:i1, j0:j1] = np.linalg.solve(K, C.reshape(-1, order="F")).reshape((p, q), order="F")
    return R


def _log_pade(X):
    nodes, weights = np.polynomial.legendre.leggauss(_PADE_DEGREE)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    eye = np.eye(X.shape[0])
    out = np.zeros_like(X)
    for t, w in zip(nodes, weights):
        out += w * np.linalg.solve(eye + t * X, X)
    return out


def check_principal_log(eigenvalues, scale=1.0):
    """Raise ``NoPrincipalLog`` when a spectrum touches the closed negative real axis."""
    ev = np.asarray(eigenvalues, dtype=complex)
    atol = 1e-12 * max(scale, 1.0)
    bad = (np.abs(ev.imag) <= atol) & (ev.real <= atol)
    if np.any(bad):
        raise NoPrincipalLog(f"eigenvalue {ev[bad][0]} lies on (-inf, 0]; no real principal logarithm")


def logm(M) -> np.ndarray:
    """Real principal matrix logarithm by inverse scaling and squaring."""
    M = np.asarray(M, dtype=float)
    form = real_schur(M)
    check_principal_log(form.eigenvalues(), np.abs(M).max())
    T = form.factor
    eye = np.eye(M.shape[0])
    s = 0
    while np.linalg.norm(T - eye, 1) > _SQRT_TARGET:
        if s >= _MAX_SQRTS:
            raise NoPrincipalLog("square-root iteration did not approach the identity")
        T = sqrtm_quasi(T)
        s += 1
    L = (2.0 ** s) * _log_pade(T - eye)
    U = form.basis
    return U @ L @ U.T
