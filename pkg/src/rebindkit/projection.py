"""Galerkin projection onto membership functions and the derived diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import tolerances as tol
from .errors import NoPrincipalLog, NonPositiveDeterminant, SingularOverlap, ValidationError
from .markov import TransitionMatrix, _matrix_and_kind, _pi_vector, rate_to_transition
from .matfuncs import expm, logm

__all__ = [
    "ProjectedModel",
    "project",
    "from_transformation",
    "rebinding_measures",
    "stability",
    "metastability_report",
    "write_metastability_csv",
]

REPORT_HEADER = ("cluster", "weight", "metastability_T", "metastability_Pc")


@dataclass(frozen=True)
class ProjectedModel:
    """Markov state model ``S Pc = T`` with weights ``w``."""

    S: np.ndarray
    T: np.ndarray
    Pc: np.ndarray
    w: np.ndarray
    tau: float
    Qc: np.ndarray | None = None
    galerkin_defect: float | None = None

    @property
    def n(self):
        return self.S.shape[0]

    def to_dict(self):
        out = {
            "tau": self.tau,
            "w": self.w.tolist(),
            "S": self.S.tolist(),
            "T": self.T.tolist(),
            "Pc": self.Pc.tolist(),
            "Qc": None if self.Qc is None else self.Qc.tolist(),
        }
        if self.galerkin_defect is not None:
            out["galerkin_defect"] = self.galerkin_defect
        return out


def _principal_log_or_none(Pc, tau):
    try:
        return logm(Pc) / tau
    except NoPrincipalLog:
        return None


def project(M, chi, pi, tau: float | None = None) -> ProjectedModel:
    """Project a transition or rate matrix onto the memberships ``chi``.

    For a generator the projected rates are ``<chi,chi>^{-1} <chi, Q chi>``; the
    transition quantities use ``P = exp(tau Q)`` of the full process and the
    difference between ``Pc`` and ``exp(tau Qc)`` is kept as ``galerkin_defect``
    (zero when ``chi`` spans an invariant subspace).
    """
    A, kind = _matrix_and_kind(M)
    chi = np.asarray(chi, dtype=float)
    p = _pi_vector(pi)
    if chi.shape[0] != A.shape[0] or p.shape[0] != A.shape[0]:
        raise ValidationError("chi, pi and the matrix disagree in size")
    if tau is None:
        tau = M.tau if isinstance(M, TransitionMatrix) else 1.0
    Dchi = p[:, None] * chi
    G = chi.T @ Dchi
    if np.linalg.det(G) < tol.OVERLAP_DET:
        raise SingularOverlap("membership functions are (numerically) linearly dependent")
    w = Dchi.sum(axis=0)
    S = G / w[:, None]
    if kind == "transition":
        K = Dchi.T @ (A @ chi)
        T = K / w[:, None]
        Pc = np.linalg.solve(G, K)
        return ProjectedModel(S, T, Pc, w, float(tau), _principal_log_or_none(Pc, tau))
    Qc = np.linalg.solve(G, Dchi.T @ (A @ chi))
    P = rate_to_transition(A, tau).entries
    T = Dchi.T @ (P @ chi) / w[:, None]
    Pc = np.linalg.solve(S, T)
    defect = float(np.abs(Pc - expm(tau * Qc)).max())
    return ProjectedModel(S, T, Pc, w, float(tau), Qc, defect)


def from_transformation(A, schur_block, tau: float = 1.0, kind: str = "rate") -> ProjectedModel:
    """Projected model from ``A`` and the dominant Schur block alone.

    With a pi-orthonormal Schur basis, ``<chi,chi> = A^T A`` and
    ``<chi, M chi> = A^T Lambda A``, so no micro-scale data is needed.
    ``kind`` says whether ``schur_block`` is a rate block (``Xi``) or a
    transition block (``Lambda``).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(schur_block, dtype=float)
    Ainv = np.linalg.inv(A)
    w = A[0].copy()
    G = A.T @ A
    S = G / w[:, None]
    if kind == "rate":
        Qc = Ainv @ B @ A
        E = expm(tau * B)
        T = A.T @ E @ A / w[:, None]
        Pc = Ainv @ E @ A
    elif kind == "transition":
        T = A.T @ B @ A / w[:, None]
        Pc = Ainv @ B @ A
        Qc = _principal_log_or_none(Pc, tau)
    else:
        raise ValueError("kind must be 'rate' or 'transition'")
    return ProjectedModel(S, T, Pc, w, float(tau), Qc)


def rebinding_measures(model: ProjectedModel):
    """``(trace(S), det(S))``: n and 1 for a crisp clustering, smaller with overlap."""
    return float(np.trace(model.S)), float(np.linalg.det(model.S))


def stability(model: ProjectedModel):
    """Stability ``F = -trace(Qc)`` and its split ``(log det S - log det T) / tau``."""
    if model.Qc is None:
        raise ValidationError("model has no projected generator")
    dS = np.linalg.det(model.S)
    dT = np.linalg.det(model.T)
    if dS <= 0 or dT <= 0:
        raise NonPositiveDeterminant(f"det(S)={dS:.3e}, det(T)={dT:.3e}; log-determinant undefined")
    F = -float(np.trace(model.Qc))
    F_dec = float((np.log(dS) - np.log(dT)) / model.tau)
    return F, F_dec


def metastability_report(model: ProjectedModel) -> list[dict]:
    """Per-cluster weight and diagonal of ``T`` and ``Pc``."""
    return [
        {
            "cluster": i + 1,
            "weight": float(model.w[i]),
            "metastability_T": float(model.T[i, i]),
            "metastability_Pc": float(model.Pc[i, i]),
        }
        for i in range(model.n)
    ]


def write_metastability_csv(rows, path=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
