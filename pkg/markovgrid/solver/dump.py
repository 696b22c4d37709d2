"""
Plain-text COO dump of a ``ConvexProgram``.

One file, one section per matrix or vector::

    [Q] <rows> <cols> <nnz>
    <i> <j> <value>
    ...
    [c] <length>
    <i> <value>

Only nonzero vector entries are written; infinite bounds are written as
``inf`` / ``-inf``.  Indices are zero-based.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import InputValidationError
from .program import ConvexProgram

logger = logging.getLogger(__name__)

_MATRICES = ("Q", "A_eq", "A_in")
_VECTORS = ("c", "b_eq", "b_in", "lb", "ub")


def _write_matrix(lines: list[str], name: str, matrix: sp.spmatrix) -> None:
    coo = sp.coo_matrix(matrix)
    lines.append(f"[{name}] {coo.shape[0]} {coo.shape[1]} {coo.nnz}")
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        lines.append(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}")


def _write_vector(lines: list[str], name: str, vector: np.ndarray, default: float = 0.0) -> None:
    idx = np.flatnonzero(vector != default)
    lines.append(f"[{name}] {vector.shape[0]} {idx.size} {float(default)!r}")
    for k in idx:
        lines.append(f"{k} {float(vector[k])!r}")


def dump_program(program: ConvexProgram, path: str | Path) -> Path:
    """Write ``program`` to ``path`` and return the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# markovgrid convex program n={program.n} constant={float(program.constant)!r}"]
    for name in _MATRICES:
        _write_matrix(lines, name, getattr(program, name))
    _write_vector(lines, "c", program.c)
    _write_vector(lines, "b_eq", program.b_eq)
    _write_vector(lines, "b_in", program.b_in)
    _write_vector(lines, "lb", program.lb, -np.inf)
    _write_vector(lines, "ub", program.ub, np.inf)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Program dumped to %s", path)
    return path


def load_program(path: str | Path) -> ConvexProgram:
    """Read a file written by ``dump_program``."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("# markovgrid convex program"):
        raise InputValidationError(f"{path}: not a program dump.")
    constant = float(text[0].rsplit("constant=", 1)[1])
    sections: dict[str, object] = {}
    pos = 1
    while pos < len(text):
        header = text[pos].split()
        name = header[0].strip("[]")
        if name in _MATRICES:
            rows, cols, nnz = (int(v) for v in header[1:4])
            body = np.array([line.split() for line in text[pos + 1:pos + 1 + nnz]], dtype=float).reshape(-1, 3)
            sections[name] = sp.csr_matrix(
                (body[:, 2], (body[:, 0].astype(int), body[:, 1].astype(int))), shape=(rows, cols)
            )
        elif name in _VECTORS:
            length, nnz = int(header[1]), int(header[2])
            vector = np.full(length, float(header[3]))
            for line in text[pos + 1:pos + 1 + nnz]:
                k, value = line.split()
                vector[int(k)] = float(value)
            sections[name] = vector
        else:
            raise InputValidationError(f"{path}: unknown section [{name}].")
        pos += 1 + nnz
    return ConvexProgram(
        Q=sp.csc_matrix(sections["Q"]),
        c=sections["c"],
        A_eq=sections["A_eq"],
        b_eq=sections["b_eq"],
        A_in=sections["A_in"],
        b_in=sections["b_in"],
        lb=sections["lb"],
        ub=sections["ub"],
        constant=constant,
    )
