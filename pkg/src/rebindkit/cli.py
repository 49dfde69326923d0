"""``rebindkit`` command line.

Options are resolved as defaults < ``--config`` file < command-line flags.
Config files hold flat ``key = value`` lines; keys named ``tol.NAME`` override
numerical tolerances. Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import asdict, dataclass
from functools import wraps
from pathlib import Path

import click
import numpy as np

from . import tolerances as tol
from .errors import NumericalError, ValidationError
from .experiments import (
    ArtificialConfig,
    RunManifest,
    SqraConfig,
    Timer,
    artificial_csv,
    config_from_mapping,
    dumps,
    run_artificial,
    run_electron,
    run_minbound,
    run_sqra,
    write_outputs,
)
from .genpcca import optimize_crispness
from .io import read_config, read_matrix, read_vector, write_matrix_csv, write_matrix_json
from .markov import _matrix_and_kind, stationary_distribution
from .projection import metastability_report, project, rebinding_measures, write_metastability_csv
from .schur import dominant_basis
from .sqra import write_grid_csv, write_sparse_csv

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class ElectronOptions:
    input: str = ""
    chi: str = ""
    pi: str = ""
    starts: int = 50
    seed: int = 0


@dataclass(frozen=True)
class MinboundOptions:
    input: str = ""
    assumption: str = "auto"
    starts: int = 50
    seed: int = 0


@dataclass(frozen=True)
class SchurOptions:
    input: str = ""
    n: int = 3
    criterion: str = "auto"
    seed: int = 0


@dataclass(frozen=True)
class ProjectOptions:
    input: str = ""
    n: int = 3
    chi: str = ""
    pi: str = ""
    tau: float = 1.0
    seed: int = 0


def _settings(cls, config_path, flags: dict):
    mapping = {}
    if config_path:
        for key, value in read_config(config_path).items():
            if key.startswith("tol."):
                try:
                    tol.apply_overrides({key[4:]: value})
                except (KeyError, ValueError) as exc:
                    raise ValidationError(f"bad tolerance override {key}: {exc}") from exc
            else:
                mapping[key] = value
    mapping.update({k: v for k, v in flags.items() if v is not None})
    return config_from_mapping(cls, mapping)


def _emit(pairs):
    for key, value in pairs:
        click.echo(f"{key}\t{value}")


def _handled(func):
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except NumericalError as exc:
            click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def common(func):
    func = click.option("--no-plots", is_flag=True, help="Skip the PNG figures.")(func)
    func = click.option("--out", "out_dir", type=click.Path(file_okay=False), default="rebindkit-out",
                        show_default=True, help="Output directory.")(func)
    func = click.option("--seed", type=int, default=None, help="Random seed.")(func)
    func = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                        default=None, help="Flat key=value config file.")(func)
    return func


@click.group()
@click.version_option(package_name="rebindkit")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Schur-vector clustering, projections and minimal rebinding bounds."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@common
@click.option("--epsilon", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--starts", type=int, default=None)
@click.option("--assumption", type=click.Choice(["rev", "nonrev"]), default=None)
@_handled
def artificial(config_path, seed, out_dir, no_plots, **flags):
    """Random clusterings of the five-state example: real vs minimal rebinding."""
    cfg = _settings(ArtificialConfig, config_path, {**flags, "seed": seed})
    manifest = RunManifest("artificial", asdict(cfg), cfg.seed)
    with Timer() as t:
        rows, summary = run_artificial(cfg)
    files = {"artificial.csv": artificial_csv(rows), "summary.json": dumps(summary)}
    write_outputs(out_dir, files, manifest)
    if not no_plots:
        from .plotting import artificial_figure

        title = f"eps={cfg.epsilon:g} gamma={cfg.gamma:g} delta={cfg.delta:g}"
        manifest.add(artificial_figure(rows, Path(out_dir) / "artificial.png", title))
    manifest.wall_time = t.elapsed
    manifest.write(out_dir)
    _emit([("samples", summary["samples"]), ("failed", summary["failed"]),
           ("spearman", summary["spearman"]), ("ordering_violations", summary["ordering_violations"])])


@main.command()
@common
@click.option("--input", "input_", type=click.Path(exists=True, dir_okay=False), default=None,
              help="4x4 generator (default: the bundled printed matrix).")
@click.option("--chi", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--pi", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--starts", type=int, default=None)
@_handled
def electron(config_path, seed, out_dir, no_plots, input_, **flags):
    """Bounds for the four-state electron-density generator."""
    opts = _settings(ElectronOptions, config_path, {**flags, "input": input_, "seed": seed})
    Qc = read_matrix(opts.input) if opts.input else None
    chi = read_matrix(opts.chi) if opts.chi else None
    pi = read_vector(opts.pi) if opts.pi else None
    manifest = RunManifest("electron", asdict(opts), opts.seed)
    with Timer() as t:
        report = run_electron(Qc, starts=opts.starts, seed=opts.seed, chi=chi, pi=pi)
    files = {"electron.json": dumps(report)}
    for tau, rows in report.get("metastability", {}).items():
        files[f"metastability_tau{tau}.csv"] = write_metastability_csv(rows)
    write_outputs(out_dir, files, manifest)
    if not no_plots and "coupling" in report:
        from .plotting import metastability_figure

        for tau, mats in report["coupling"].items():
            path = Path(out_dir) / f"metastability_tau{tau}.png"
            manifest.add(metastability_figure(np.array(mats["T"]), np.array(mats["Pc"]), path, f"tau = {tau}"))
    manifest.wall_time = t.elapsed
    manifest.write(out_dir)
    b = report["bounds"]
    _emit([("nonreversibility", report["nonreversibility"]),
           ("det_S_opt_reversible", b["reversible"]["det_S_opt"]),
           ("det_S_opt_non_reversible", b["non-reversible"]["det_S_opt"])])


@main.command()
@common
@_handled
def sqra(config_path, seed, out_dir, no_plots):
    """Tilted six-well SQRA process: projection, real and minimal rebinding."""
    cfg = _settings(SqraConfig, config_path, {"seed": seed})
    manifest = RunManifest("sqra", asdict(cfg), cfg.seed)
    with Timer() as t:
        res = run_sqra(cfg)
    grid = res.grid
    files = {
        "sqra_report.json": dumps(res.report),
        "density.csv": write_grid_csv(res.density, grid),
        "free_energy.csv": write_grid_csv(-np.log(res.density), grid),
        "free_energy_tilted.csv": write_grid_csv(-np.log(res.tilted_pi), grid),
        "rates.csv": write_sparse_csv(res.Q),
        "memberships.csv": write_matrix_csv(res.chi),
        "qc.json": write_matrix_json(np.array(res.report["regenerated"]["Qc"]), tau=cfg.tau),
    }
    write_outputs(out_dir, files, manifest)
    if not no_plots:
        from .plotting import grid_field_figure, membership_figure

        out = Path(out_dir)
        manifest.add(grid_field_figure(grid.to_grid(-np.log(res.density)), out / "free_energy.png",
                                       "input density", "-log pi"))
        manifest.add(grid_field_figure(grid.to_grid(-np.log(res.tilted_pi)), out / "free_energy_tilted.png",
                                       "tilted process", "-log pi"))
        chi_grids = [grid.to_grid(res.chi[:, j]) for j in range(res.chi.shape[1])]
        manifest.add(membership_figure(chi_grids, out / "memberships.png"))
    manifest.wall_time = t.elapsed
    manifest.write(out_dir)
    r = res.report
    _emit([("det_S_real", r["regenerated"]["det_S_real"]),
           ("regenerated_det_S_opt_reversible", r["regenerated"]["bounds"]["reversible"]["det_S_opt"]),
           ("regenerated_det_S_opt_non_reversible", r["regenerated"]["bounds"]["non-reversible"]["det_S_opt"]),
           ("printed_det_S_opt_reversible", r["printed"]["bounds"]["reversible"]["det_S_opt"]),
           ("printed_det_S_opt_non_reversible", r["printed"]["bounds"]["non-reversible"]["det_S_opt"])])


@main.command()
@common
@click.option("--input", "input_", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--assumption", type=click.Choice(["rev", "nonrev", "auto"]), default=None)
@click.option("--starts", type=int, default=None)
@_handled
def minbound(config_path, seed, out_dir, no_plots, input_, **flags):
    """Minimal rebinding bound det(S_opt) of a clustered generator."""
    opts = _settings(MinboundOptions, config_path, {**flags, "input": input_, "seed": seed})
    if not opts.input:
        raise ValidationError("minbound needs --input")
    Qc = read_matrix(opts.input)
    manifest = RunManifest("minbound", asdict(opts), opts.seed)
    with Timer() as t:
        bound, info = run_minbound(Qc, opts.assumption, opts.starts, opts.seed)
    payload = bound.to_dict()
    payload["input"] = info
    write_outputs(out_dir, {"bound.json": dumps(payload)}, manifest)
    manifest.wall_time = t.elapsed
    manifest.write(out_dir)
    _emit([("assumption", bound.assumption), ("det_S_opt", bound.det_S_opt),
           ("spade", ",".join(f"{v:.6g}" for v in bound.spade)), ("residual", bound.constraint_residual),
           ("nonreversibility", info["nonreversibility"])])


@main.command()
@common
@click.option("--input", "input_", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--n", type=int, default=None)
@click.option("--criterion", type=click.Choice(["auto", "modulus", "real"]), default=None)
@_handled
def schur(config_path, seed, out_dir, no_plots, input_, **flags):
    """Dominant pi-orthonormal Schur vectors of a transition or rate matrix."""
    opts = _settings(SchurOptions, config_path, {**flags, "input": input_, "seed": seed})
    if not opts.input:
        raise ValidationError("schur needs --input")
    M = read_matrix(opts.input)
    manifest = RunManifest("schur", asdict(opts), opts.seed)
    with Timer() as t:
        pi = stationary_distribution(M)
        basis = dominant_basis(M, pi, opts.n, None if opts.criterion == "auto" else opts.criterion)
    info = {
        "n": opts.n,
        "pi": pi.pi.tolist(),
        "eigenvalues_real": [float(z.real) for z in basis.eigenvalues],
        "eigenvalues_imag": [float(z.imag) for z in basis.eigenvalues],
        "gram_defect": float(np.abs(basis.gram() - np.eye(opts.n)).max()),
    }
    files = {
        "schur_vectors.csv": write_matrix_csv(basis.X),
        "schur_block.csv": write_matrix_csv(basis.block),
        "schur.json": dumps(info),
    }
    write_outputs(out_dir, files, manifest)
    manifest.wall_time = t.elapsed
    manifest.write(out_dir)
    _emit([("n", opts.n), ("eigenvalues", ",".join(f"{z:.6g}" for z in info["eigenvalues_real"])),
           ("gram_defect", info["gram_defect"])])


@main.command(name="project")
@common
@click.option("--input", "input_", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--n", type=int, default=None)
@click.option("--chi", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--pi", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--tau", type=float, default=None)
@_handled
def project_cmd(config_path, seed, out_dir, no_plots, input_, **flags):
    """Project a micro process onto optimized (or given) memberships."""
    opts = _settings(ProjectOptions, config_path, {**flags, "input": input_, "seed": seed})
    if not opts.input:
        raise ValidationError("project needs --input")
    M, tau_file = read_matrix(opts.input, with_tau=True)
    _, kind = _matrix_and_kind(M)
    tau = float(tau_file) if (tau_file is not None and kind == "transition") else opts.tau
    manifest = RunManifest("project", asdict(opts), opts.seed)
    with Timer() as t:
        pi = read_vector(opts.pi) if opts.pi else stationary_distribution(M).pi
        if opts.chi:
            chi = read_matrix(opts.chi)
        else:
            basis = dominant_basis(M, pi, opts.n)
            _, chi = optimize_crispness(basis.X)
        model = project(M, chi, pi, tau=tau)
    trace_S, det_S = rebinding_measures(model)
    summary = model.to_dict()
    summary.update({"kind": kind, "trace_S": trace_S, "det_S": det_S})
    files = {
        "model.json": dumps(summary),
        "metastability.csv": write_metastability_csv(metastability_report(model)),
        "memberships.csv": write_matrix_csv(chi),
    }
    write_outputs(out_dir, files, manifest)
    if not no_plots:
        from .plotting import metastability_figure

        manifest.add(metastability_figure(model.T, model.Pc, Path(out_dir) / "metastability.png",
                                          f"tau = {tau:g}"))
    manifest.wall_time = t.elapsed
    manifest.write(out_dir)
    _emit([("kind", kind), ("trace_S", trace_S), ("det_S", det_S)])


if __name__ == "__main__":
    main()
