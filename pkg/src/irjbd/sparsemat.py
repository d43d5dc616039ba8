"""Compressed sparse row matrices with the few operations the solver needs.

The solver only ever multiplies by A and L (and their transposes), takes
1- and infinity-norms, and reads Matrix Market files, so this module stays
deliberately small instead of depending on a full sparse-matrix library.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SparseMatrix",
    "MatrixMarketError",
    "identity",
    "second_order_L",
    "read_matrix_market",
    "write_matrix_market",
]

_DENSE_GUARD = 2000


class MatrixMarketError(ValueError):
    """Raised when a Matrix Market file cannot be parsed."""


class SparseMatrix:
    """Immutable real matrix in canonical CSR form.

    ``row_offsets`` has length ``nrows + 1`` and is nondecreasing; within
    each row the column indices are strictly increasing.  All arrays are
    marked read-only after construction, so one matrix can be shared freely
    between concurrent solver runs.
    """

    __slots__ = ("nrows", "ncols", "row_offsets", "col_indices", "values", "_row_ids")

    def __init__(self, nrows, ncols, row_offsets, col_indices, values):
        nrows = int(nrows)
        ncols = int(ncols)
        row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)

        if nrows < 0 or ncols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if row_offsets.shape != (nrows + 1,):
            raise ValueError("row_offsets must have length nrows + 1")
        if row_offsets[0] != 0 or row_offsets[-1] != len(values):
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if len(col_indices) != len(values):
            raise ValueError("col_indices and values must have equal length")
        if len(col_indices) and (col_indices.min() < 0 or col_indices.max() >= ncols):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix values must be finite")

        row_ids = np.repeat(np.arange(nrows, dtype=np.int64), np.diff(row_offsets))
        if len(col_indices) > 1:
            same_row = row_ids[1:] == row_ids[:-1]
            if np.any(same_row & (np.diff(col_indices) <= 0)):
                raise ValueError("column indices must be strictly increasing within each row")

        self.nrows = nrows
        self.ncols = ncols
        self.row_offsets = row_offsets
        self.col_indices = col_indices
        self.values = values
        self._row_ids = row_ids
        for arr in (row_offsets, col_indices, values, row_ids):
            arr.setflags(write=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, values):
        """Build from coordinate triplets, summing duplicate coordinates.

        Explicit zeros are retained.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("rows, cols and values must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= nrows):
            raise ValueError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("column index out of range")

        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows):
            new_group = np.empty(len(rows), dtype=bool)
            new_group[0] = True
            new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new_group)
            values = np.add.reduceat(values, starts)
            rows = rows[starts]
            cols = cols[starts]
        counts = np.bincount(rows, minlength=nrows)
        offsets = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(nrows, ncols, offsets, cols, values)

    @classmethod
    def from_dense(cls, array, keep_zeros=False):
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError("expected a 2-d array")
        if keep_zeros:
            rows, cols = np.indices(array.shape)
            rows, cols = rows.ravel(), cols.ravel()
        else:
            rows, cols = np.nonzero(array)
        return cls.from_coo(array.shape[0], array.shape[1], rows, cols, array[rows, cols])

    def to_dense(self):
        """Dense copy, guarded to small sizes (oracle/test use only)."""
        if self.nrows > _DENSE_GUARD or self.ncols > _DENSE_GUARD:
            raise ValueError(
                f"refusing to densify a {self.nrows}x{self.ncols} matrix "
                f"(guard is {_DENSE_GUARD})"
            )
        out = np.zeros((self.nrows, self.ncols))
        out[self._row_ids, self.col_indices] = self.values
        return out

    # -- products and norms ------------------------------------------------

    @property
    def nnz(self):
        return len(self.values)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def matvec(self, x):
        """Return ``M @ x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ncols,):
            raise ValueError(f"matvec expects a vector of length {self.ncols}, got {x.shape}")
        if self.nnz == 0:
            return np.zeros(self.nrows)
        return np.bincount(self._row_ids, weights=self.values * x[self.col_indices],
                           minlength=self.nrows)

    def matvec_transpose(self, y):
        """Return ``M.T @ y``."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.nrows,):
            raise ValueError(f"matvec_transpose expects a vector of length {self.nrows}, "
                             f"got {y.shape}")
        if self.nnz == 0:
            return np.zeros(self.ncols)
        return np.bincount(self.col_indices, weights=self.values * y[self._row_ids],
                           minlength=self.ncols)

    def norm1(self):
        """Maximum absolute column sum."""
        if self.nnz == 0:
            return 0.0
        return float(np.bincount(self.col_indices, weights=np.abs(self.values),
                                 minlength=self.ncols).max())

    def norminf(self):
        """Maximum absolute row sum."""
        if self.nnz == 0:
            return 0.0
        return float(np.bincount(self._row_ids, weights=np.abs(self.values),
                                 minlength=self.nrows).max())

    def __repr__(self):
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


def identity(n):
    """n-by-n identity."""
    idx = np.arange(n, dtype=np.int64)
    return SparseMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))


def second_order_L(n):
    """Tridiagonal regularization matrix with diagonal 3 and off-diagonals 1.

    Well conditioned for every n: Gershgorin confines its eigenvalues
    to [1, 5].
    """
    if n < 2:
        raise ValueError("second_order_L requires n >= 2")
    rows = np.concatenate([np.arange(n), np.arange(n - 1), np.arange(1, n)])
    cols = np.concatenate([np.arange(n), np.arange(1, n), np.arange(n - 1)])
    vals = np.concatenate([np.full(n, 3.0), np.ones(n - 1), np.ones(n - 1)])
    return SparseMatrix.from_coo(n, n, rows, cols, vals)


# -- Matrix Market I/O -----------------------------------------------------

def _mm_fail(lineno, message):
    raise MatrixMarketError(f"line {lineno}: {message}")


def read_matrix_market(path):
    """Read a real coordinate or array Matrix Market file.

    Accepts ``general`` and ``symmetric`` symmetry (symmetric storage is
    expanded to the full matrix) and ``real``/``integer`` fields.  Duplicate
    coordinates are summed; explicit zeros are retained.  Parse failures
    report the offending line number.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.readlines()
    if not lines:
        _mm_fail(1, "empty file")

    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        _mm_fail(1, "expected '%%MatrixMarket object format field symmetry' header")
    _, obj, fmt, field, symmetry = (tok.lower() for tok in header)
    if obj != "matrix":
        _mm_fail(1, f"unsupported object {obj!r}")
    if fmt not in ("coordinate", "array"):
        _mm_fail(1, f"unsupported format {fmt!r}")
    if field not in ("real", "integer"):
        _mm_fail(1, f"unsupported field type {field!r} (real/integer only)")
    if symmetry not in ("general", "symmetric"):
        _mm_fail(1, f"unsupported symmetry {symmetry!r} (general/symmetric only)")

    # skip comments and blank lines
    i = 1
    while i < len(lines) and (lines[i].startswith("%") or not lines[i].strip()):
        i += 1
    if i == len(lines):
        _mm_fail(len(lines), "missing size line")

    size_tokens = lines[i].split()
    sizeline = i + 1
    if fmt == "coordinate":
        if len(size_tokens) != 3:
            _mm_fail(sizeline, "coordinate size line must be 'nrows ncols nnz'")
        try:
            nrows, ncols, nnz = (int(t) for t in size_tokens)
        except ValueError:
            _mm_fail(sizeline, "size line entries must be integers")
        if symmetry == "symmetric" and nrows != ncols:
            _mm_fail(sizeline, "symmetric storage requires a square matrix")
        rows, cols, vals = [], [], []
        count = 0
        for j in range(i + 1, len(lines)):
            raw = lines[j].strip()
            if not raw or raw.startswith("%"):
                continue
            toks = raw.split()
            if len(toks) != 3:
                _mm_fail(j + 1, "entry must be 'row col value'")
            try:
                r, c, v = int(toks[0]), int(toks[1]), float(toks[2])
            except ValueError:
                _mm_fail(j + 1, f"cannot parse entry {raw!r}")
            if not (1 <= r <= nrows and 1 <= c <= ncols):
                _mm_fail(j + 1, f"index ({r}, {c}) outside {nrows}x{ncols}")
            rows.append(r - 1)
            cols.append(c - 1)
            vals.append(v)
            count += 1
        if count != nnz:
            _mm_fail(len(lines), f"expected {nnz} entries, found {count}")
        if symmetry == "symmetric":
            for idx in range(nnz):
                if rows[idx] != cols[idx]:
                    rows.append(cols[idx])
                    cols.append(rows[idx])
                    vals.append(vals[idx])
        return SparseMatrix.from_coo(nrows, ncols, rows, cols, vals)

    # dense array format, column-major values
    if len(size_tokens) != 2:
        _mm_fail(sizeline, "array size line must be 'nrows ncols'")
    try:
        nrows, ncols = (int(t) for t in size_tokens)
    except ValueError:
        _mm_fail(sizeline, "size line entries must be integers")
    if symmetry == "symmetric" and nrows != ncols:
        _mm_fail(sizeline, "symmetric storage requires a square matrix")
    entries = []
    for j in range(i + 1, len(lines)):
        raw = lines[j].strip()
        if not raw or raw.startswith("%"):
            continue
        try:
            entries.append((float(raw.split()[0]), j + 1))
        except ValueError:
            _mm_fail(j + 1, f"cannot parse value {raw!r}")
    if symmetry == "general":
        if len(entries) != nrows * ncols:
            _mm_fail(len(lines), f"expected {nrows * ncols} values, found {len(entries)}")
        dense = np.array([v for v, _ in entries]).reshape((ncols, nrows)).T
    else:
        expected = sum(nrows - j for j in range(ncols))
        if len(entries) != expected:
            _mm_fail(len(lines), f"expected {expected} lower-triangle values, "
                                 f"found {len(entries)}")
        dense = np.zeros((nrows, ncols))
        pos = 0
        for c in range(ncols):
            for r in range(c, nrows):
                dense[r, c] = entries[pos][0]
                dense[c, r] = entries[pos][0]
                pos += 1
    return SparseMatrix.from_dense(dense, keep_zeros=True)


def write_matrix_market(matrix, path):
    """Write in coordinate/real/general form with round-trippable precision."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{matrix.nrows} {matrix.ncols} {matrix.nnz}\n")
        for r, c, v in zip(matrix._row_ids, matrix.col_indices, matrix.values):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")
