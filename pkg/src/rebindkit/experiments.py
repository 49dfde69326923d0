"""Experiment drivers used by the command-line interface.

Each ``run_*`` function returns plain Python data (rows, dictionaries and
arrays); :func:`write_outputs` turns named outputs into files and
:class:`RunManifest` records what was written.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from . import tolerances as tol
from .errors import ComplexUnderReversible, NoPrincipalLog, RebindError, ValidationError
from .genpcca import optimize_crispness, random_feasible_A
from .markov import (
    nonreversibility,
    relative_nonreversibility,
    stationary_distribution,
)
from .matfuncs import expm
from .projection import project, rebinding_measures
from .rebind import MultiStartConfig, minimize_rebinding, resolve_assumption, reversible_closed_form_check
from .schur import dominant_basis
from .sqra import GridSpec, TiltSpec, gaussian_ring_density, sqra_rates, tilt

logger = logging.getLogger(__name__)

ARTIFICIAL_COLUMNS = ("sample", "nonrev", "det_S_real", "det_S_opt", "status")
ROUNDING_REPAIR = 1e-3  # largest row-sum defect (relative) repaired as printing noise


def load_fixture(name: str) -> np.ndarray:
    """Printed example matrices shipped with the package (``electron_qc``, ``sqra_qc``)."""
    text = resources.files("rebindkit.data").joinpath(f"{name}.csv").read_text()
    return np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2)


def as_generator(M) -> tuple[np.ndarray, float]:
    """Generator from rounded data: rebuild the diagonal if rows miss zero slightly.

    Returns the matrix and the largest diagonal change. Off-diagonal entries may
    be negative (projected generators need not be rate matrices).
    """
    Q = np.array(getattr(M, "entries", M), dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValidationError("matrix has NaN or Inf entries")
    scale = max(np.abs(Q).max(), np.finfo(float).tiny)
    dev = np.abs(Q.sum(axis=1)).max()
    if dev > ROUNDING_REPAIR * scale:
        raise ValidationError(f"rows sum to {dev:.3e}; not a generator")
    if dev <= tol.GENERATOR_ROW_SUM * scale:
        return Q, 0.0
    old = np.diag(Q).copy()
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    adj = float(np.abs(np.diag(Q) - old).max())
    logger.info("rebuilt the diagonal from off-diagonal rates (max change %.3e)", adj)
    return Q, adj


# ---------------------------------------------------------------- artificial


@dataclass(frozen=True)
class ArtificialConfig:
    epsilon: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    samples: int = 200
    seed: int = 0
    tau: float = 1.0
    basis_seed: int = 7
    amplitude: float = 0.5
    starts: int = 50
    assumption: str = "rev"

    def __post_init__(self):
        if min(self.epsilon, self.gamma, self.delta) < 0:
            raise ValidationError("epsilon, gamma and delta must be non-negative")
        if self.samples < 1 or self.starts < 1:
            raise ValidationError("samples and starts must be at least 1")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")


def artificial_schur_matrix(epsilon=0.0, gamma=0.0, delta=0.0) -> np.ndarray:
    L = np.diag([1.0, 0.99, 0.98 + delta, 0.005, 0.001])
    L[1, 2] = epsilon
    L[2, 1] = -gamma
    return L


def artificial_basis(seed: int, m: int = 5) -> np.ndarray:
    """Random orthogonal completion of the constant vector, scaled to unit uniform-pi norm."""
    rng = np.random.default_rng(seed)
    Z = np.column_stack([np.ones(m), rng.standard_normal((m, m - 1))])
    U, _ = np.linalg.qr(Z)
    U *= np.sign(U[0, 0])
    X = U * np.sqrt(m)
    X[:, 0] = 1.0
    return X


def artificial_system(cfg: ArtificialConfig):
    """``(P, X, Lambda, pi)`` with ``P = X Lambda X^{-1}`` and uniform ``pi``.

    ``P`` may have negative entries for an arbitrary basis; it is only ever
    used through its Schur structure, so it is kept as a plain array.
    """
    L = artificial_schur_matrix(cfg.epsilon, cfg.gamma, cfg.delta)
    X = artificial_basis(cfg.basis_seed, L.shape[0])
    P = X @ L @ np.linalg.inv(X)
    pi = np.full(L.shape[0], 1.0 / L.shape[0])
    return P, X, L, pi


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def artificial_sample(P, X3, pi, A, cfg: ArtificialConfig, seed: int) -> dict:
    chi = X3 @ A
    model = project(P, chi, pi, tau=cfg.tau)
    if model.Qc is None:
        raise NoPrincipalLog("projected transition matrix has no real principal logarithm")
    # D from <chi, 1>_pi and from the first row of A must agree (debug cross-check)
    assert np.allclose(model.w, A[0], atol=1e-10), "weights disagree between the two routes"
    det_real = rebinding_measures(model)[1]
    Qc = model.Qc
    nonrev = nonreversibility(Qc, model.w)
    bound = minimize_rebinding(Qc, cfg.assumption, MultiStartConfig(starts=cfg.starts, seed=seed))
    return {"nonrev": nonrev, "det_S_real": det_real, "det_S_opt": bound.det_S_opt}


def run_artificial(cfg: ArtificialConfig, progress=None):
    """Sweep ``cfg.samples`` random feasible clusterings; returns ``(rows, summary)``.

    Samples that fail keep their row with empty numbers and the error class name
    in ``status``.
    """
    P, X, _, pi = artificial_system(cfg)
    X3 = X[:, :3]
    rows = []
    for i, ss in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.samples)):
        a_seed, opt_seed = ss.spawn(2)
        row = {"sample": i, "nonrev": None, "det_S_real": None, "det_S_opt": None, "status": "ok"}
        try:
            A = random_feasible_A(X3, a_seed, amplitude=cfg.amplitude)
            row.update(artificial_sample(P, X3, pi, A, cfg, _seed_int(opt_seed)))
        except RebindError as exc:
            row["status"] = type(exc).__name__
            logger.info("sample %d failed: %s", i, exc)
        rows.append(row)
        if progress is not None:
            progress(i, row)
    return rows, summarize_artificial(rows, cfg)


def summarize_artificial(rows, cfg: ArtificialConfig | None = None) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    failures = {}
    for r in rows:
        if r["status"] != "ok":
            failures[r["status"]] = failures.get(r["status"], 0) + 1
    out = {
        "samples": len(rows),
        "ok": len(ok),
        "failed": len(rows) - len(ok),
        "failures": failures,
        "spearman": None,
        "ordering_violations": None,
        "max_ordering_excess": None,
    }
    if cfg is not None:
        out["config"] = asdict(cfg)
    if ok:
        nonrev = np.array([r["nonrev"] for r in ok])
        real = np.array([r["det_S_real"] for r in ok])
        opt = np.array([r["det_S_opt"] for r in ok])
        excess = real - opt
        out["ordering_violations"] = int(np.sum(excess > 1e-6))
        out["max_ordering_excess"] = float(excess.max())
        out["nonrev_range"] = [float(nonrev.min()), float(nonrev.max())]
        out["det_S_opt_range"] = [float(opt.min()), float(opt.max())]
        if len(ok) > 2 and np.ptp(nonrev) > 0 and np.ptp(opt) > 0:
            out["spearman"] = float(spearmanr(nonrev, 1.0 - opt).statistic)
    return out


def artificial_csv(rows, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ARTIFICIAL_COLUMNS)
    for r in rows:
        writer.writerow(
            [r["sample"]]
            + ["" if r[k] is None else repr(float(r[k])) for k in ("nonrev", "det_S_real", "det_S_opt")]
            + [r["status"]]
        )
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_artificial_csv(path) -> list[dict]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(
            {
                "sample": int(r["sample"]),
                **{k: (float(r[k]) if r[k] else None) for k in ("nonrev", "det_S_real", "det_S_opt")},
                "status": r["status"],
            }
        )
    return out


# ---------------------------------------------------------------- minimal bound


def bound_summary(bound) -> dict:
    return {
        "det_S_opt": bound.det_S_opt,
        "spade": bound.spade,
        "residual": bound.constraint_residual,
        "symmetrized": bound.symmetrized,
        "converged_starts": sum(1 for r in bound.starts_report if r["converged"]),
    }


def run_minbound(Qc, assumption="auto", starts=50, seed=0):
    """``(bound, info)``: the bound for one generator and how its input was read."""
    Q, adj = as_generator(Qc)
    resolved = resolve_assumption(Q, assumption)
    pi = stationary_distribution(Q)
    bound = minimize_rebinding(Q, resolved, MultiStartConfig(starts=starts, seed=seed))
    info = {
        "requested_assumption": str(assumption),
        "assumption": resolved,
        "diagonal_repair": adj,
        "pi": pi.pi.tolist(),
        "nonreversibility": nonreversibility(Q, pi),
        "relative_nonreversibility": relative_nonreversibility(Q, pi),
    }
    return bound, info


# ---------------------------------------------------------------- electron


def run_electron(Qc=None, starts=50, seed=0, chi=None, pi=None, taus=(0.2, 0.001)) -> dict:
    """Bounds under both assumptions for a 4-state generator (printed example by default).

    With memberships ``chi`` and micro weights ``pi`` the real overlap ``S`` is
    known, and ``T(tau) = S exp(tau Q_c)`` gives the metastability table.
    """
    Q, adj = as_generator(load_fixture("electron_qc") if Qc is None else Qc)
    p = stationary_distribution(Q)
    report = {
        "Qc": Q.tolist(),
        "diagonal_repair": adj,
        "pi": p.pi.tolist(),
        "nonreversibility": nonreversibility(Q, p),
        "relative_nonreversibility": relative_nonreversibility(Q, p),
        "bounds": {},
    }
    for assumption in ("reversible", "non-reversible"):
        b = minimize_rebinding(Q, assumption, MultiStartConfig(starts=starts, seed=seed))
        report["bounds"][assumption] = bound_summary(b)
    try:
        witness = reversible_closed_form_check(Q)
        report["reversible_witness"] = None if witness is None else np.asarray(witness).tolist()
    except ValidationError as exc:
        report["reversible_witness"] = None
        report["reversible_witness_refused"] = str(exc)
    if chi is not None:
        if pi is None:
            raise ValidationError("memberships need the micro stationary vector as well")
        chi = np.asarray(chi, dtype=float)
        w_micro = np.asarray(pi, dtype=float)
        Dchi = w_micro[:, None] * chi
        w = Dchi.sum(axis=0)
        S = chi.T @ Dchi / w[:, None]
        report["det_S_real"] = float(np.linalg.det(S))
        report["weights"] = w.tolist()
        tables = {}
        coupling = {}
        for t in taus:
            Pc = expm(t * Q)
            T = S @ Pc
            coupling[repr(float(t))] = {"T": T.tolist(), "Pc": Pc.tolist()}
            tables[repr(float(t))] = [
                {"cluster": i + 1, "weight": float(w[i]), "metastability_T": float(T[i, i]),
                 "metastability_Pc": float(Pc[i, i])}
                for i in range(Q.shape[0])
            ]
        report["metastability"] = tables
        report["coupling"] = coupling
    return report


# ---------------------------------------------------------------- SQRA


@dataclass(frozen=True)
class SqraConfig:
    nx: int = 30
    ny: int = 30
    k: int = 6
    radius: float = 0.3
    sigma: float = 0.08
    floor: float = 1e-8
    tilt: float = 1.2
    ordering: str = "serpentine"
    n: int = 3
    tau: float = 1.0
    starts: int = 50
    seed: int = 0


@dataclass
class SqraResult:
    grid: GridSpec
    density: np.ndarray
    tilted_pi: np.ndarray
    Q: np.ndarray
    chi: np.ndarray
    A: np.ndarray
    report: dict = field(default_factory=dict)


def run_sqra(cfg: SqraConfig) -> SqraResult:
    grid = GridSpec(cfg.nx, cfg.ny, ordering=cfg.ordering)
    density = gaussian_ring_density(cfg.k, radius=cfg.radius * grid.width, sigma=cfg.sigma * grid.width,
                                    grid=grid, floor=cfg.floor)
    Q0 = sqra_rates(density)
    Q = tilt(Q0, TiltSpec(cfg.tilt))
    p = stationary_distribution(Q)
    basis = dominant_basis(Q, p, cfg.n, criterion="real")
    A, chi = optimize_crispness(basis.X)
    model = project(Q, chi, p, tau=cfg.tau)
    assert np.allclose(model.w, A[0], atol=1e-10), "weights disagree between the two routes"
    trace_S, det_S = rebinding_measures(model)
    ms = MultiStartConfig(starts=cfg.starts, seed=cfg.seed)
    report = {
        "config": asdict(cfg),
        "micro": {
            "m": grid.m,
            "detailed_balance_before_tilt": float(np.abs(density.pi[:, None] * Q0.entries
                                                  - (density.pi[:, None] * Q0.entries).T).max()),
            "nonreversibility_after_tilt": nonreversibility(Q, p),
            "dominant_eigenvalues": [complex(z).real for z in basis.eigenvalues],
        },
        "regenerated": {
            "Qc": model.Qc.tolist(),
            "w": model.w.tolist(),
            "trace_S_real": trace_S,
            "det_S_real": det_S,
            "galerkin_defect": model.galerkin_defect,
            "nonreversibility_Qc": nonreversibility(model.Qc, model.w),
            "bounds": {},
        },
        "printed": {"Qc": load_fixture("sqra_qc").tolist(), "bounds": {}},
    }
    for key, Qc in (("regenerated", model.Qc), ("printed", load_fixture("sqra_qc"))):
        for assumption in ("reversible", "non-reversible"):
            try:
                b = minimize_rebinding(as_generator(Qc)[0], assumption, ms)
            except ComplexUnderReversible as exc:
                # a coarse grid can leave a complex pair in Q_c; report the refusal
                report[key]["bounds"][assumption] = {"det_S_opt": None, "refused": str(exc)}
                continue
            report[key]["bounds"][assumption] = bound_summary(b)
    return SqraResult(grid, density.pi, p.pi, Q.entries, chi, A, report)


# ---------------------------------------------------------------- manifest and files


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=tol.as_dict)

    def add(self, path: Path):
        self.outputs[Path(path).name] = sha256_bytes(Path(path).read_bytes())

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        return path


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def write_outputs(out_dir, files: dict, manifest: RunManifest | None = None) -> list[Path]:
    """Write ``{name: text}`` into ``out_dir``; register each file in the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        written.append(path)
        if manifest is not None:
            manifest.add(path)
    return written


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_from_mapping(cls, mapping: dict):
    """Instantiate a config dataclass from string values, coercing by field default type."""
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ValidationError(f"unknown config key {key!r} for {cls.__name__}")
        default = known[key].default
        try:
            if isinstance(default, bool):
                kwargs[key] = str(raw).lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        except ValueError as exc:
            raise ValidationError(f"config key {key!r}: {exc}") from exc
    return cls(**kwargs)
