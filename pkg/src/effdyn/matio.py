"""Plain-text complex matrices.

Format: first line ``rows cols``, then one line per row holding ``cols``
pairs of ``re im`` separated by whitespace.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"{path}: header must be 'rows cols'") from exc
    if len(lines) - 1 != rows:
        raise ValueError(f"{path}: expected {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=complex)
    for i, line in enumerate(lines[1:]):
        try:
            vals = [float(t) for t in line.split()]
        except ValueError as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from exc
        if len(vals) != 2 * cols:
            raise ValueError(f"{path}: row {i} has {len(vals)} numbers, expected {2 * cols}")
        out[i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    return out


def format_matrix(a: np.ndarray) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    rows = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        rows.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    return "\n".join(rows) + "\n"


def write_matrix(path: str | Path, a: np.ndarray) -> None:
    Path(path).write_text(format_matrix(a))
