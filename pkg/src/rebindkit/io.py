"""Matrix files and flat ``key=value`` configuration files.

Matrices are read from CSV (comma or whitespace separated, ``#`` comments) or
from the JSON wrapper ``{"rows": m, "cols": n, "tau": t, "data": [[...], ...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = ["read_matrix", "write_matrix_csv", "write_matrix_json", "read_vector", "read_config"]


def _check(M, source):
    if M.ndim != 2 or M.size == 0:
        raise ValidationError(f"{source}: expected a non-empty 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{source}: NaN or Inf entries are not allowed")
    return M


def _parse_csv(text, source):
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in line.replace(",", " ").split()]
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{source}: no data")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{source}: rows have different lengths")
    return np.array(rows, dtype=float)


def _parse_json(text, source):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict) or "data" not in obj:
        raise ValidationError(f"{source}: JSON matrix needs a 'data' field")
    try:
        M = np.array(obj["data"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{source}: malformed data ({exc})") from exc
    if M.ndim == 2 and ("rows" in obj or "cols" in obj):
        if obj.get("rows", M.shape[0]) != M.shape[0] or obj.get("cols", M.shape[1]) != M.shape[1]:
            raise ValidationError(f"{source}: declared shape does not match data {M.shape}")
    return M, obj.get("tau")


def read_matrix(path, with_tau=False):
    """Load a matrix; with ``with_tau=True`` return ``(M, tau)`` (``tau`` may be None)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        M, tau = _parse_json(text, path)
    else:
        M, tau = _parse_csv(text, path), None
    _check(M, path)
    return (M, tau) if with_tau else M


def read_vector(path) -> np.ndarray:
    M = read_matrix(path)
    if 1 not in M.shape:
        raise ValidationError(f"{path}: expected a single row or column")
    return M.ravel()


def write_matrix_csv(M, path=None) -> str:
    M = _check(np.atleast_2d(np.asarray(M, dtype=float)), "matrix")
    text = "\n".join(",".join(repr(float(v)) for v in row) for row in M) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def write_matrix_json(M, path=None, tau=None) -> str:
    M = _check(np.atleast_2d(np.asarray(M, dtype=float)), "matrix")
    obj = {"rows": M.shape[0], "cols": M.shape[1], "tau": tau, "data": M.tolist()}
    text = json.dumps(obj, indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Values stay strings."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValidationError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ValidationError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out
