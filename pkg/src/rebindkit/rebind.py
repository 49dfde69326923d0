"""Minimal rebinding bound for a clustered generator ``Q_c``.

For a transformation ``A`` the membership functions ``chi = X A`` give
``S = diag(w)^{-1} A^T A`` with ``w = A[0]``, and a projected generator ``Q_c = A^{-1} Xi A`` where ``Xi`` is the Schur block of the
micro process. Given only ``Q_c`` the Schur block is unknown apart from its
pattern, so the bound is the largest ``det(S)`` over all ``A`` for which
``A Q_c A^{-1}`` has that pattern, the first column of ``A^{-1}`` is all ones
and ``A^T A`` is non-negative.

Search variables are the columns 2..n of ``A^{-1}`` written in a reference
basis (eigenvectors of ``Q_c`` under the reversible pattern, pi-orthonormal
Schur vectors otherwise); the constraints enter as a quadratic penalty with a
growing weight. In the reference basis the linear part of the pattern says
that the coefficient matrix is diagonal (reversible) or upper triangular
(non-reversible), so by default only those coefficients are searched.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import tolerances as tol
from .errors import ComplexUnderReversible, Infeasible, NoFeasibleStart, ValidationError
from .markov import (
    detailed_balance_part,
    relative_nonreversibility,
    stationary_distribution,
)
from .schur import dominant_basis

__all__ = [
    "SchurPattern",
    "MultiStartConfig",
    "RebindBound",
    "RebindObjective",
    "normalize_assumption",
    "resolve_assumption",
    "build_pattern",
    "assemble_objective",
    "structural_mask",
    "reference_basis",
    "minimize_rebinding",
    "reversible_closed_form_check",
]

REVERSIBLE = "reversible"
NON_REVERSIBLE = "non-reversible"
_ALIASES = {
    "rev": REVERSIBLE,
    "reversible": REVERSIBLE,
    "nonrev": NON_REVERSIBLE,
    "non-reversible": NON_REVERSIBLE,
    "nonreversible": NON_REVERSIBLE,
    "non_reversible": NON_REVERSIBLE,
}
SINGULAR_PENALTY = 1e6
SIGN_WEIGHT = 30.0


def normalize_assumption(assumption) -> str:
    key = str(assumption).strip().lower()
    if key not in _ALIASES:
        raise ValidationError(f"unknown assumption {assumption!r}; use rev or nonrev")
    return _ALIASES[key]


def _generator(Qc) -> np.ndarray:
    Q = np.array(getattr(Qc, "entries", Qc), dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValidationError(f"Q_c must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValidationError("Q_c has NaN or Inf entries")
    if Q.shape[0] < 2:
        raise ValidationError("Q_c needs at least 2 macro states")
    scale = max(np.abs(Q).max(), np.finfo(float).tiny)
    dev = np.abs(Q.sum(axis=1)).max()
    if dev > tol.LOG_ROW_SUM * scale:
        raise ValidationError(f"rows of Q_c sum to {dev:.3e}, not zero")
    return Q


def resolve_assumption(Qc, assumption="auto") -> str:
    """Map ``auto`` to a concrete assumption by the relative nonreversibility of ``Q_c``."""
    if str(assumption).lower() != "auto":
        return normalize_assumption(assumption)
    Q = _generator(Qc)
    rho = relative_nonreversibility(Q, stationary_distribution(Q))
    return REVERSIBLE if rho <= tol.REVERSIBLE_ROUNDING else NON_REVERSIBLE


@dataclass(frozen=True)
class SchurPattern:
    """Allowed shape of ``Xi = A Q_c A^{-1}``.

    ``diagonal`` holds the fixed diagonal (0 followed by the real parts of the
    remaining eigenvalues, largest first); ``free`` marks the entries that may
    take any value. Every other entry must vanish.
    """

    n: int
    blocks: tuple
    diagonal: np.ndarray
    free: np.ndarray
    assumption: str
    eigenvalues: np.ndarray

    @property
    def target(self) -> np.ndarray:
        return np.diag(self.diagonal)

    @property
    def fixed(self) -> np.ndarray:
        return ~self.free

    def free_slots(self) -> list:
        return [tuple(int(v) for v in ij) for ij in np.argwhere(self.free)]

    def off_pattern(self, Xi) -> float:
        """Largest deviation of ``Xi`` from the pattern on the fixed entries."""
        dev = np.abs(np.asarray(Xi) - self.target)[self.fixed]
        return float(dev.max()) if dev.size else 0.0


def build_pattern(Qc, assumption) -> SchurPattern:
    assumption = normalize_assumption(assumption)
    Q = _generator(Qc)
    n = Q.shape[0]
    ev = np.linalg.eigvals(Q)
    scale = max(np.abs(ev).max(), np.abs(Q).max())
    order = np.argsort(np.abs(ev))
    zero_tol = 1e-8 * scale
    if abs(ev[order[0]]) > zero_tol or abs(ev[order[1]]) <= zero_tol:
        raise ValidationError("Q_c must have a simple zero eigenvalue")
    rest = ev[order[1:]]
    imag_tol = tol.COMPLEX_IMAG * scale
    items = [(float(z.real), 0.0) for z in rest if abs(z.imag) <= imag_tol]
    items += [(float(z.real), float(z.imag)) for z in rest if z.imag > imag_tol]
    if len(items) + sum(1 for _, im in items if im) != n - 1:
        raise ValidationError("could not pair the complex eigenvalues of Q_c")
    if assumption == REVERSIBLE and any(im for _, im in items):
        raise ComplexUnderReversible("Q_c has complex eigenvalues; a reversible pattern is impossible")
    items.sort(key=lambda t: -t[0])
    diagonal = [0.0]
    blocks = []
    eigs = [0.0 + 0.0j]
    for re, im in items:
        size = 2 if im else 1
        blocks.append((len(diagonal), size))
        diagonal.extend([re] * size)
        eigs.extend([complex(re, im), complex(re, -im)] if im else [complex(re, 0.0)])
    free = np.zeros((n, n), dtype=bool)
    if assumption == NON_REVERSIBLE:
        free[1:, 1:] = np.triu(np.ones((n - 1, n - 1), dtype=bool), 1)
        for start, size in blocks:
            if size == 2:
                free[start + 1, start] = True
    return SchurPattern(n, tuple(blocks), np.array(diagonal), free, assumption, np.array(eigs))


def _pairs_standardized(U, R, blocks):
    # rotate each 2x2 block so both diagonal entries equal the real part
    U = U.copy()
    R = R.copy()
    for start, size in blocks:
        if size != 2:
            continue
        i, j = start, start + 1
        a, b, c, d = R[i, i], R[i, j], R[j, i], R[j, j]
        phi = 0.5 * np.arctan2(a - d, -(b + c)) if (a - d) or (b + c) else 0.0
        cs, sn = np.cos(phi), np.sin(phi)
        G = np.array([[cs, -sn], [sn, cs]])
        R[:, [i, j]] = R[:, [i, j]] @ G
        R[[i, j], :] = G.T @ R[[i, j], :]
        U[:, [i, j]] = U[:, [i, j]] @ G
    return U, R


def reference_basis(Qc, pattern: SchurPattern, pi=None) -> np.ndarray:
    """Columns with first column all ones that put ``Q_c`` into its pattern.

    Reversible pattern: eigenvectors sorted like ``pattern.diagonal``, scaled to
    unit pi-norm. Non-reversible pattern: pi-orthonormal Schur vectors, with
    complex-pair blocks rotated to equal diagonals.
    """
    Q = _generator(Qc)
    n = Q.shape[0]
    p = np.asarray(getattr(pi, "pi", pi), dtype=float) if pi is not None else stationary_distribution(Q).pi
    if pattern.assumption == REVERSIBLE:
        ev, V = np.linalg.eig(Q)
        ev = ev.real
        V = V.real
        B = np.ones((n, n))
        used = [int(np.argmin(np.abs(ev)))]
        for k in range(1, n):
            cand = [i for i in np.argsort(np.abs(ev - pattern.diagonal[k])) if i not in used]
            used.append(int(cand[0]))
            v = V[:, cand[0]]
            v = v / np.sqrt(np.sum(p * v * v))
            B[:, k] = v if v[np.argmax(np.abs(v))] > 0 else -v
        return B
    basis = dominant_basis(Q, p, n, criterion="real")
    d = np.sqrt(p)
    U, _ = _pairs_standardized(basis.X * d[:, None], basis.block, pattern.blocks)
    B = U / d[:, None]
    B[:, 0] = 1.0
    return B


class RebindObjective:
    """Penalized objective ``|det S - 1| + mu * penalty`` over ``theta``.

    ``theta`` holds the columns 2..n of ``A^{-1}`` in the coordinates of
    ``coords`` (``A^{-1} = [1 | coords @ C]`` with ``C = theta.reshape(n, n-1)``).
    With ``coords`` the identity, ``theta`` is just those entries of ``A^{-1}``.

    The penalty sums squared deviations of ``A Q_c A^{-1}`` from the pattern on
    fixed entries (relative to the spectral scale when that is below one), and
    squared negative parts of ``A^T A`` and ``w``, both multiplied by
    ``SIGN_WEIGHT * n``.
    """

    def __init__(self, Qc, pattern: SchurPattern, coords=None):
        self.Q = _generator(Qc)
        self.pattern = pattern
        self.n = n = self.Q.shape[0]
        self.coords = np.eye(n) if coords is None else np.asarray(coords, dtype=float)
        self.target = pattern.target
        self.fixed = pattern.fixed
        spectral = float(np.abs(pattern.eigenvalues).max())
        self.xi_scale = min(1.0, spectral) if spectral > 0 else 1.0
        # sign constraints sit at the optimum; a heavy weight keeps S >= -1e-8 at the last stage
        self.sign_weight = SIGN_WEIGHT * n

    @property
    def size(self):
        return self.n * (self.n - 1)

    def inverse_of(self, theta) -> np.ndarray:
        C = np.asarray(theta, dtype=float).reshape(self.n, self.n - 1)
        Ainv = np.empty((self.n, self.n))
        Ainv[:, 0] = 1.0
        Ainv[:, 1:] = self.coords @ C
        return Ainv

    def theta_of(self, Ainv) -> np.ndarray:
        Ainv = np.asarray(Ainv, dtype=float)
        return np.linalg.solve(self.coords, Ainv[:, 1:]).ravel()

    def terms(self, theta):
        """All intermediate quantities for ``theta``, or ``None`` when singular."""
        Ainv = self.inverse_of(theta)
        det_inv = np.linalg.det(Ainv)
        if not abs(det_inv) >= tol.SINGULAR_DET:
            return None
        A = np.linalg.inv(Ainv)
        w = A[0]
        G = A.T @ A
        Xi = A @ self.Q @ Ainv
        off = ((Xi - self.target) / self.xi_scale)[self.fixed]
        negG = np.minimum(G, 0.0) * self.sign_weight
        negw = np.minimum(w, 0.0) * self.sign_weight
        penalty = float(off @ off + np.sum(negG * negG) + negw @ negw)
        prod_w = np.prod(w)
        det_S = 1.0 / (det_inv * det_inv * prod_w) if prod_w > 0 else -np.inf
        return {"A": A, "Ainv": Ainv, "w": w, "G": G, "Xi": Xi, "penalty": penalty, "det_S": det_S}

    def __call__(self, theta, mu: float = 1.0) -> float:
        t = self.terms(theta)
        if t is None:
            return SINGULAR_PENALTY
        if not np.isfinite(t["det_S"]):
            return SINGULAR_PENALTY * 0.5 + mu * t["penalty"]
        return abs(t["det_S"] - 1.0) + mu * t["penalty"]

    def residual(self, theta) -> float:
        t = self.terms(theta)
        return np.inf if t is None else float(np.sqrt(t["penalty"]))


def structural_mask(pattern: SchurPattern) -> np.ndarray:
    """Entries of ``C`` (``n x (n-1)``) left free once the linear pattern constraints hold.

    With ``M = [e_1 | C]`` and ``Xi = M^{-1} Lambda M`` for the reference block
    ``Lambda``, a zero first row of ``Xi`` forces the first row of ``M`` to be
    ``e_1``; the remaining block must be diagonal (reversible) or upper
    (block-)triangular (non-reversible) to keep the eigenvalue order.
    """
    n = pattern.n
    M = np.zeros((n, n), dtype=bool)
    if pattern.assumption == REVERSIBLE:
        M[np.arange(1, n), np.arange(1, n)] = True
    else:
        M[1:, 1:] = np.triu(np.ones((n - 1, n - 1), dtype=bool))
        for start, size in pattern.blocks:
            if size == 2:
                M[start + 1, start] = True
    return M[:, 1:].copy()


def assemble_objective(Qc, pattern: SchurPattern, coords=None) -> RebindObjective:
    return RebindObjective(Qc, pattern, coords)


@dataclass(frozen=True)
class MultiStartConfig:
    starts: int = 50
    seed: int = 0
    mu_schedule: tuple = (1e1, 1e3, 1e5, 1e7)
    amplitude: float = 0.3  # additive noise on the reference columns
    scale_spread: float = 1.0  # log-normal spread of the column scales
    maxfev: int | None = None  # per penalty stage; default 200 * dim
    feasibility: float | None = None  # default tol.CONSTRAINT_RESIDUAL
    search: str = "structured"  # or "full": structured search, then a polish over every entry
    workers: int = 1

    def __post_init__(self):
        if self.starts < 1:
            raise ValidationError("starts must be at least 1")
        if not self.mu_schedule or min(self.mu_schedule) <= 0:
            raise ValidationError("mu_schedule must hold positive weights")
        if self.amplitude < 0 or self.scale_spread < 0:
            raise ValidationError("amplitude and scale_spread must be non-negative")
        if self.search not in ("structured", "full"):
            raise ValidationError("search must be 'structured' or 'full'")


@dataclass
class RebindBound:
    det_S_opt: float
    A_opt: np.ndarray
    Xi_realized: np.ndarray
    constraint_residual: float
    starts_report: list
    assumption: str
    pattern: SchurPattern
    seed: int
    starts: int
    spade: list = field(default_factory=list)
    symmetrized: float | None = None  # relative nonreversibility removed before the search

    @property
    def S_opt(self) -> np.ndarray:
        return self.A_opt.T @ self.A_opt / self.A_opt[0][:, None]

    def to_dict(self) -> dict:
        return {
            "det_S_opt": float(self.det_S_opt),
            "A_opt": self.A_opt.tolist(),
            "Xi_realized": self.Xi_realized.tolist(),
            "spade": [float(v) for v in self.spade],
            "residual": float(self.constraint_residual),
            "assumption": self.assumption,
            "seed": int(self.seed),
            "starts": int(self.starts),
            "symmetrized": self.symmetrized,
            "per_start": self.starts_report,
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _start_theta(obj: RebindObjective, rng, config: MultiStartConfig, mask, index=1) -> np.ndarray:
    n = obj.n
    if index == 0:
        # the reference itself: eigenvectors or Schur vectors at unit pi-norm
        return np.eye(n)[:, 1:].ravel()
    scales = np.exp(config.scale_spread * rng.standard_normal(n - 1))
    signs = rng.choice([-1.0, 1.0], size=n - 1)
    C = np.eye(n)[:, 1:] * (signs * scales)
    C = C + config.amplitude * rng.standard_normal((n, n - 1)) * scales
    C[~mask] = 0.0
    return C.ravel()


def _local_search(obj: RebindObjective, theta0, config: MultiStartConfig, mask, schedule=None):
    free = mask.ravel()
    base = np.zeros(obj.size)

    def f(z, mu):
        base[free] = z
        return obj(base, mu)

    z = np.asarray(theta0, dtype=float)[free]
    maxfev = config.maxfev or 200 * z.size
    nfev = 0
    schedule = config.mu_schedule if schedule is None else schedule
    last = len(schedule) - 1
    for stage, mu in enumerate(schedule):
        # early stages only need to land in the right basin
        xatol, fatol = (1e-13, 1e-16) if stage == last else (1e-7, 1e-10)
        res = minimize(
            f,
            z,
            args=(mu,),
            method="Nelder-Mead",
            options={"maxfev": maxfev, "xatol": xatol, "fatol": fatol, "adaptive": z.size > 6},
        )
        if res.fun <= f(z, mu):
            z = res.x
        nfev += int(res.nfev)
    theta = np.zeros(obj.size)
    theta[free] = z
    return theta, nfev


def _run_start(payload):
    obj, theta0, config, mask, index = payload
    mu = config.mu_schedule[-1]
    theta, nfev = _local_search(obj, theta0, config, structural_mask(obj.pattern))
    if config.search == "full":
        # polish in every coordinate at the final weight; keep only improvements
        polished, extra = _local_search(obj, theta, config, mask, schedule=(mu,))
        nfev += extra
        if obj(polished, mu) < obj(theta, mu):
            theta = polished
    t = obj.terms(theta)
    if t is None:
        det_S, residual = float("nan"), float("inf")
    else:
        det_S, residual = float(t["det_S"]), float(np.sqrt(t["penalty"]))
    return theta, {
        "start": index,
        "objective": float(obj(theta, config.mu_schedule[-1])),
        "det_S": det_S,
        "residual": residual,
        "converged": bool(residual <= (config.feasibility or tol.CONSTRAINT_RESIDUAL)),
        "nfev": nfev,
    }


def _canonical_signs(A, Ainv, Xi, pattern: SchurPattern):
    # row/column sign flips leave S unchanged; fix them so reports are comparable
    n = A.shape[0]
    d = np.ones(n)
    for k in range(1, n):
        col = Ainv[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            d[k] = -1.0
    for k in range(1, n - 1):
        if pattern.free[k, k + 1] and Xi[k, k + 1] * d[k] * d[k + 1] < 0:
            d[k + 1:] *= -1.0
    return d[:, None] * A, Ainv * d[None, :], Xi * np.outer(d, d)


def _prepare(Qc, assumption):
    Q = _generator(Qc)
    pi = stationary_distribution(Q)
    if pi.pi.min() <= 0:
        raise Infeasible("stationary vector of Q_c is not positive; no feasible weights exist")
    symmetrized = None
    if assumption == REVERSIBLE:
        rho = relative_nonreversibility(Q, pi)
        if 0.0 < rho <= tol.REVERSIBLE_ROUNDING:
            # rounding-level violation of detailed balance: use the reversible part
            Q = detailed_balance_part(Q, pi)
            symmetrized = float(rho)
    return Q, pi, symmetrized


def minimize_rebinding(Qc, assumption="nonrev", config: MultiStartConfig | None = None) -> RebindBound:
    """Largest ``det(S)`` compatible with ``Q_c`` by multi-start penalized Nelder-Mead.

    Under the reversible assumption a ``Q_c`` whose relative nonreversibility
    is below ``tol.REVERSIBLE_ROUNDING`` is replaced by its detailed-balance part
    first (the removed amount is reported as ``symmetrized``).
    """
    config = config or MultiStartConfig()
    assumption = resolve_assumption(Qc, assumption)
    Q, pi, symmetrized = _prepare(Qc, assumption)
    pattern = build_pattern(Q, assumption)
    coords = reference_basis(Q, pattern, pi)
    obj = RebindObjective(Q, pattern, coords)
    feas = config.feasibility or tol.CONSTRAINT_RESIDUAL
    if config.search == "structured":
        mask = structural_mask(pattern)
    else:
        mask = np.ones((obj.n, obj.n - 1), dtype=bool)

    # starts always respect the structure; "full" adds a polish over every entry
    start_mask = structural_mask(pattern)
    seeds = np.random.SeedSequence(config.seed).spawn(config.starts)
    payloads = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        payloads.append((obj, _start_theta(obj, rng, config, start_mask, i), config, mask, i))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_start, payloads))
    else:
        results = [_run_start(p) for p in payloads]

    report = [r for _, r in results]
    feasible = [(theta, r) for theta, r in results if r["converged"] and np.isfinite(r["det_S"])]
    if not feasible:
        best = min(r["residual"] for r in report)
        raise NoFeasibleStart(f"no start reached residual <= {feas:.1e} (best {best:.3e})", best_residual=best)

    def rank(item):
        theta, r = item
        raw = np.linalg.norm(obj.inverse_of(theta)[:, 1:])
        # det(S) above one only comes from constraint slack; treat it as a tie at one
        return (-min(r["det_S"], 1.0), r["residual"], raw)

    theta, r = min(feasible, key=rank)
    t = obj.terms(theta)
    A, Ainv, Xi = _canonical_signs(t["A"], t["Ainv"], t["Xi"], pattern)
    spade = [float(Xi[i, j]) for i, j in pattern.free_slots()]
    return RebindBound(
        det_S_opt=float(r["det_S"]),
        A_opt=A,
        Xi_realized=Xi,
        constraint_residual=float(r["residual"]),
        starts_report=report,
        assumption=assumption,
        pattern=pattern,
        seed=int(config.seed),
        starts=int(config.starts),
        spade=spade,
        symmetrized=symmetrized,
    )


def _reversible_gamma_problem(Q, pi):
    # A = [pi; L_k / alpha_k]; A^T A = pi pi^T + sum gamma_k l_k l_k^T with gamma = alpha^-2
    n = Q.shape[0]
    pattern = build_pattern(Q, REVERSIBLE)
    B = reference_basis(Q, pattern, pi)
    L = np.linalg.inv(B)
    iu = np.triu_indices(n)
    base = np.outer(L[0], L[0])[iu]
    cols = np.stack([np.outer(L[k], L[k])[iu] for k in range(1, n)], axis=1)
    const = np.linalg.det(L) ** 2 / np.prod(L[0])
    return B, L, base, cols, const


def reversible_closed_form_check(Qc, grid: int = 41, threshold: float = 1e-6):
    """Witness ``A`` with ``det(S) >= 1 - threshold`` for a reversible ``Q_c``, or ``None``.

    ``A^{-1}`` is restricted to scaled eigenvectors ``[1 | alpha_k v_k]``; the
    scales are searched on a log grid and the best feasible point polished by
    SLSQP on ``log(alpha^-2)``. Refuses (``ValidationError``) inputs whose
    relative nonreversibility exceeds ``tol.REVERSIBLE_ROUNDING``; rounding-level
    violations are removed by symmetrization first.
    """
    Q = _generator(Qc)
    pi = stationary_distribution(Q)
    rho = relative_nonreversibility(Q, pi)
    if rho > tol.REVERSIBLE_ROUNDING:
        raise ValidationError(f"Q_c is not reversible (relative nonreversibility {rho:.3e})")
    if rho > 0:
        Q = detailed_balance_part(Q, pi)
    n = Q.shape[0]
    B, L, base, cols, const = _reversible_gamma_problem(Q, pi.pi)
    if n == 2:
        g = np.log(base[1] / -cols[1, 0]) if cols[1, 0] < 0 else 0.0
        start = np.array([g])
    else:
        axis = np.linspace(-8.0, 4.0, grid)
        k = n - 1
        if grid ** k <= 200_000:
            mesh = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
        else:
            mesh = np.random.default_rng(0).uniform(-8.0, 4.0, size=(200_000, k))
        ok = (base[None, :] + np.exp(mesh) @ cols.T).min(axis=1) >= 0
        if not ok.any():
            return None
        start = mesh[ok][np.argmax(mesh[ok].sum(axis=1))]
    cons = {
        "type": "ineq",
        "fun": lambda g: base + cols @ np.exp(g),
        "jac": lambda g: cols * np.exp(g),
    }
    res = minimize(
        lambda g: -g.sum(),
        start,
        jac=lambda g: -np.ones_like(g),
        constraints=[cons],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    g = res.x if (base + cols @ np.exp(res.x)).min() >= -1e-12 else start
    alpha = np.exp(-0.5 * g)
    Ainv = B.copy()
    Ainv[:, 1:] *= alpha[None, :]
    A = np.linalg.inv(Ainv)
    det_S = np.linalg.det(A.T @ A / A[0][:, None])
    return A if det_S >= 1.0 - threshold else None
