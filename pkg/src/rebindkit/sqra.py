"""Square-root approximation (SQRA) of a rate matrix on a 2-D box grid.

Boxes are numbered row by row with row 0 at the top of the domain. With the
default ``"serpentine"`` ordering even rows run left to right and odd rows right
to left; ``"row-major"`` runs every row left to right. The ordering matters for
:func:`tilt`: under plain row-major numbering with a 4-neighbourhood, scaling
all rates towards higher indices by the same factor multiplies the density by
``factor**(r + c)`` and keeps detailed balance exactly, whereas the serpentine
numbering yields a genuinely non-reversible process.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import tolerances as tol
from .errors import ValidationError
from .markov import RateMatrix

__all__ = [
    "GridSpec",
    "GridDensity",
    "TiltSpec",
    "gaussian_ring_density",
    "free_energy",
    "sqra_rates",
    "tilt",
    "density_from_vector",
    "write_grid_csv",
    "write_sparse_csv",
    "read_sparse_csv",
]


@dataclass(frozen=True)
class GridSpec:
    nx: int = 30
    ny: int = 30
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))  # (xmin, xmax), (ymin, ymax)
    ordering: str = "serpentine"

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("grid needs at least one box per direction")
        if self.ordering not in ("serpentine", "row-major"):
            raise ValidationError("ordering must be 'serpentine' or 'row-major'")
        (x0, x1), (y0, y1) = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValidationError("domain bounds must be increasing")

    @property
    def m(self):
        return self.nx * self.ny

    @property
    def width(self):
        return self.domain[0][1] - self.domain[0][0]

    def index_grid(self) -> np.ndarray:
        """Box index at each (row, column) position, row 0 at the top."""
        idx = np.arange(self.m).reshape(self.ny, self.nx)
        if self.ordering == "serpentine":
            idx[1::2] = idx[1::2, ::-1]
        return idx

    def centers(self) -> np.ndarray:
        """Box centers in box order."""
        (x0, x1), (y0, y1) = self.domain
        dx = (x1 - x0) / self.nx
        dy = (y1 - y0) / self.ny
        xs = x0 + (np.arange(self.nx) + 0.5) * dx
        ys = y1 - (np.arange(self.ny) + 0.5) * dy
        X, Y = np.meshgrid(xs, ys)  # rows of the mesh are grid rows
        out = np.empty((self.m, 2))
        out[self.index_grid().ravel()] = np.column_stack([X.ravel(), Y.ravel()])
        return out

    def to_grid(self, values) -> np.ndarray:
        """Spatial ``ny x nx`` layout of a per-box vector."""
        return np.asarray(values)[self.index_grid()]


@dataclass(frozen=True)
class GridDensity:
    grid: GridSpec
    pi: np.ndarray
    centers: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float).ravel()
        if pi.shape[0] != self.grid.m:
            raise ValidationError(f"density has {pi.shape[0]} entries for {self.grid.m} boxes")
        if not np.all(np.isfinite(pi)) or pi.min() <= 0:
            raise ValidationError("density must be finite and positive")
        if abs(pi.sum() - 1.0) > tol.STATIONARY_SUM:
            raise ValidationError(f"density sums to {pi.sum()!r}")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def nx(self):
        return self.grid.nx

    @property
    def ny(self):
        return self.grid.ny

    def as_grid(self, values=None) -> np.ndarray:
        return self.grid.to_grid(self.pi if values is None else values)


@dataclass(frozen=True)
class TiltSpec:
    """Multiply every rate from a lower to a higher box index by ``factor``."""

    factor: float = 1.2

    def __post_init__(self):
        if not self.factor > 0:
            raise ValidationError("tilt factor must be positive")


def density_from_vector(pi, grid: GridSpec) -> GridDensity:
    p = np.asarray(getattr(pi, "pi", pi), dtype=float)
    return GridDensity(grid, p / p.sum(), grid.centers())


def gaussian_ring_density(
    k: int = 6,
    center=None,
    radius: float | None = None,
    sigma: float | None = None,
    grid: GridSpec | None = None,
    floor: float = 1e-8,
) -> GridDensity:
    """Mixture of ``k`` equal Gaussians on a circle, evaluated at the box centers.

    ``radius`` and ``sigma`` default to 0.3 and 0.08 times the domain width;
    ``floor`` is added before normalization so the density stays positive.
    """
    grid = grid or GridSpec()
    if k < 1:
        raise ValidationError("k must be at least 1")
    (x0, x1), (y0, y1) = grid.domain
    c = np.array([(x0 + x1) / 2, (y0 + y1) / 2] if center is None else center, dtype=float)
    radius = 0.3 * grid.width if radius is None else float(radius)
    sigma = 0.08 * grid.width if sigma is None else float(sigma)
    if not sigma > 0 or radius < 0 or floor < 0:
        raise ValidationError("sigma must be positive, radius and floor non-negative")
    angles = 2 * np.pi * np.arange(1, k + 1) / k
    wells = c + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    p = grid.centers()
    d2 = ((p[:, None, :] - wells[None, :, :]) ** 2).sum(axis=2)
    dens = np.exp(-d2 / (2 * sigma**2)).sum(axis=1) + floor
    return GridDensity(grid, dens / dens.sum(), p)


def free_energy(density: GridDensity) -> np.ndarray:
    """``-log(pi)`` per box (flat, box order)."""
    return -np.log(density.pi)


def _neighbours(grid: GridSpec):
    # 4-neighbourhood pairs of box indices
    idx = grid.index_grid()
    right = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    down = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([right, down])


def sqra_rates(density: GridDensity) -> RateMatrix:
    """``q_ij = sqrt(pi_j / pi_i)`` between 4-neighbours, zero elsewhere."""
    pi = density.pi
    pairs = _neighbours(density.grid)
    i, j = pairs[:, 0], pairs[:, 1]
    Q = np.zeros((pi.shape[0], pi.shape[0]))
    Q[i, j] = np.sqrt(pi[j] / pi[i])
    Q[j, i] = np.sqrt(pi[i] / pi[j])
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return RateMatrix(Q)


def tilt(Q, spec: TiltSpec | float) -> RateMatrix:
    factor = spec.factor if isinstance(spec, TiltSpec) else float(spec)
    A = np.array(getattr(Q, "entries", Q), dtype=float)
    if factor == 1.0:
        return Q if isinstance(Q, RateMatrix) else RateMatrix(A)
    np.fill_diagonal(A, 0.0)
    A[np.triu_indices_from(A, 1)] *= factor
    np.fill_diagonal(A, -A.sum(axis=1))
    return RateMatrix(A)


def write_grid_csv(values, grid: GridSpec, path=None, fmt="{:.12g}") -> str:
    """Write a per-box field in its spatial layout: ``ny`` rows of ``nx`` values, top row first."""
    G = grid.to_grid(np.asarray(values, dtype=float).ravel())
    if not np.all(np.isfinite(G)):
        raise ValidationError("grid field has NaN or Inf")
    text = "\n".join(",".join(fmt.format(v) for v in row) for row in G) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def write_sparse_csv(Q, path=None) -> str:
    """Non-zero entries as ``i,j,q_ij`` rows (0-based indices)."""
    A = np.asarray(getattr(Q, "entries", Q), dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "q_ij"])
    for i, j in zip(*np.nonzero(A)):
        w.writerow([int(i), int(j), repr(float(A[i, j]))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def read_sparse_csv(path, m: int | None = None) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    ij = np.array([(int(r["i"]), int(r["j"])) for r in rows], dtype=int).reshape(-1, 2)
    vals = np.array([float(r["q_ij"]) for r in rows])
    size = m if m is not None else (int(ij.max()) + 1 if ij.size else 0)
    A = np.zeros((size, size))
    A[ij[:, 0], ij[:, 1]] = vals
    return A
