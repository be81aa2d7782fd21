"""MatrixMarket reader and writer (real coordinate/array formats).

Values are written with 17 significant digits so that a write/read round
trip reproduces every float64 exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr

_MAX_DIM = 2**31 - 1


class MatrixMarketError(ValueError):
    """Malformed MatrixMarket content; ``line`` is 1-based."""

    def __init__(self, message: str, line: int, path=None):
        where = f"{path}:" if path is not None else ""
        super().__init__(f"{where}line {line}: {message}")
        self.line = line
        self.path = path


def _content_lines(lines, start):
    for no, raw in enumerate(lines[start:], start + 1):
        s = raw.strip()
        if s and not s.startswith("%"):
            yield no, s


def _parse_header(first: str, path):
    parts = first.strip().lower().split()
    if len(parts) != 5 or parts[0] != "%%matrixmarket" or parts[1] != "matrix":
        raise MatrixMarketError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", 1, path)
    fmt, field, sym = parts[2:]
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1, path)
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"unsupported field {field!r}", 1, path)
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1, path)
    return fmt, sym


def _ints(tokens, no, path, count):
    if len(tokens) != count:
        raise MatrixMarketError(f"expected {count} integers, got {len(tokens)}", no, path)
    try:
        vals = [int(t) for t in tokens]
    except ValueError:
        raise MatrixMarketError("non-integer size field", no, path) from None
    if any(v < 0 or v > _MAX_DIM for v in vals):
        raise MatrixMarketError("dimension out of range", no, path)
    return vals


def _float(tok, no, path):
    try:
        return float(tok)
    except ValueError:
        raise MatrixMarketError(f"bad value {tok!r}", no, path) from None


def read_matrix_market_text(text: str, path=None):
    """Parse MatrixMarket text; returns a CSR matrix (coordinate) or a dense 2D array (array)."""
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1, path)
    fmt, sym = _parse_header(lines[0], path)
    body = _content_lines(lines, 1)
    try:
        no, size_line = next(body)
    except StopIteration:
        raise MatrixMarketError("missing size line", len(lines), path) from None
    if fmt == "coordinate":
        nr, nc, nnz = _ints(size_line.split(), no, path, 3)
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        k = 0
        for no, s in body:
            if k >= nnz:
                raise MatrixMarketError("more entries than declared", no, path)
            tok = s.split()
            if len(tok) != 3:
                raise MatrixMarketError("expected 'row col value'", no, path)
            i, j = _ints(tok[:2], no, path, 2)
            if not (1 <= i <= nr and 1 <= j <= nc):
                raise MatrixMarketError(f"index ({i}, {j}) outside {nr}x{nc}", no, path)
            rows[k], cols[k], vals[k] = i - 1, j - 1, _float(tok[2], no, path)
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"declared {nnz} entries, found {k}", len(lines), path)
        if sym == "symmetric":
            off = rows != cols
            rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                                np.concatenate([vals, vals[off]]))
        return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(nr, nc)))
    nr, nc = _ints(size_line.split(), no, path, 2)
    vals = []
    for no, s in body:
        vals.extend(_float(t, no, path) for t in s.split())
    if sym == "symmetric":
        if nr != nc or len(vals) != nr * (nr + 1) // 2:
            raise MatrixMarketError("wrong number of values for symmetric array", len(lines), path)
        out = np.zeros((nr, nc))
        k = 0
        for j in range(nc):
            for i in range(j, nr):
                out[i, j] = out[j, i] = vals[k]
                k += 1
        return out
    if len(vals) != nr * nc:
        raise MatrixMarketError(f"expected {nr * nc} values, found {len(vals)}", len(lines), path)
    return np.array(vals).reshape((nc, nr)).T  # column-major


def read_matrix_market(path):
    path = Path(path)
    return read_matrix_market_text(path.read_text(), path)


def read_sparse(path) -> sp.csr_matrix:
    M = read_matrix_market(path)
    return M if sp.issparse(M) else as_csr(M)


def read_vector(path) -> np.ndarray:
    M = read_matrix_market(path)
    M = M.toarray() if sp.issparse(M) else M
    if M.ndim != 2 or min(M.shape) != 1:
        raise ValueError(f"{path}: expected a single column or row, got shape {M.shape}")
    return np.asarray(M, dtype=np.float64).reshape(-1)


def write_matrix_market(K, path, comment: str | None = None):
    """Write a sparse matrix as coordinate/general, or a dense 1D/2D array as array/general."""
    path = Path(path)
    out = []
    if sp.issparse(K):
        C = as_csr(K).tocoo()
        out.append("%%MatrixMarket matrix coordinate real general")
        if comment:
            out.extend(f"% {c}" for c in comment.splitlines())
        out.append(f"{C.shape[0]} {C.shape[1]} {C.nnz}")
        out.extend(f"{i + 1} {j + 1} {v:.17g}" for i, j, v in zip(C.row, C.col, C.data))
    else:
        D = np.asarray(K, dtype=np.float64)
        if D.ndim == 1:
            D = D[:, None]
        out.append("%%MatrixMarket matrix array real general")
        if comment:
            out.extend(f"% {c}" for c in comment.splitlines())
        out.append(f"{D.shape[0]} {D.shape[1]}")
        out.extend(f"{v:.17g}" for v in D.T.reshape(-1))
    path.write_text("\n".join(out) + "\n")
