"""Compressed sparse matrix storage and reference operations.

Everything downstream (the dataflow references, the hashing kernels, the
metrics) works against the two container types defined here: CSR for row
oriented traversal and CSC for column oriented traversal.  Values are stored
as 64-bit floats and column/row indices as 32-bit ints, which is also the
element footprint the traffic accounting assumes (4 index bytes + 8 value
bytes).  Row pointer arrays are 64-bit so offsets never overflow.

The module also carries the small amount of I/O the tools need: MatrixMarket
coordinate files for interchange and a flat binary snapshot for fast reload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

INDEX_DTYPE = np.int32
VALUE_DTYPE = np.float64

# Bytes per stored element: one 32-bit index plus one 64-bit value.
ELEMENT_BYTES = 12

SNAPSHOT_MAGIC = b"SMSH1"


class Triplet(NamedTuple):
    row: int
    col: int
    value: float


class SparseFormatError(ValueError):
    """Raised for malformed files or structurally invalid matrices."""


class DimensionMismatchError(ValueError):
    """Raised when operand shapes are incompatible."""


def _check_dims(nrows, ncols):
    if nrows < 0 or ncols < 0:
        raise ValueError(f"negative matrix dimensions ({nrows} x {ncols})")


@dataclass
class CsrMatrix:
    """Compressed sparse row matrix.

    ``row_ptr`` has ``nrows + 1`` monotone entries, ``col_idx`` and ``values``
    run in parallel.  ``sorted_cols`` records whether every row is sorted by
    column with no duplicates; kernels that emit unsorted rows clear it.
    """

    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    sorted_cols: bool = True

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=INDEX_DTYPE)
        self.values = np.ascontiguousarray(self.values, dtype=VALUE_DTYPE)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def validate(self):
        """Check structural invariants, raising SparseFormatError on the first hit."""
        _check_dims(self.nrows, self.ncols)
        if self.row_ptr.shape != (self.nrows + 1,):
            raise SparseFormatError(
                f"row_ptr length {self.row_ptr.shape[0]} != nrows+1 ({self.nrows + 1})")
        if self.row_ptr[0] != 0:
            raise SparseFormatError("row_ptr must start at 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise SparseFormatError("row_ptr must be non-decreasing")
        if self.row_ptr[-1] != len(self.col_idx) or len(self.col_idx) != len(self.values):
            raise SparseFormatError("index/value array lengths disagree with row_ptr")
        if self.nnz and (self.col_idx.min() < 0 or self.col_idx.max() >= self.ncols):
            bad = int(self.col_idx[(self.col_idx < 0) | (self.col_idx >= self.ncols)][0])
            raise SparseFormatError(f"column index {bad} out of range [0, {self.ncols})")
        if self.sorted_cols:
            for i in range(self.nrows):
                lo, hi = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
                seg = self.col_idx[lo:hi]
                if seg.size > 1 and np.any(np.diff(seg) <= 0):
                    raise SparseFormatError(f"row {i} is not strictly sorted by column")
        return self

    def row(self, i):
        """Views of the column indices and values of row ``i``."""
        lo, hi = int(self.row_ptr[i]), int(self.row_ptr[i + 1])
        return self.col_idx[lo:hi], self.values[lo:hi]

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols), dtype=VALUE_DTYPE)
        rows = np.repeat(np.arange(self.nrows), self.row_nnz())
        # add.at handles duplicate coordinates in unsorted matrices
        np.add.at(out, (rows, self.col_idx), self.values)
        return out

    def to_csc(self) -> "CscMatrix":
        rows = np.repeat(np.arange(self.nrows, dtype=np.int64), self.row_nnz())
        order = np.lexsort((rows, self.col_idx))
        counts = np.bincount(self.col_idx, minlength=self.ncols)
        col_ptr = np.concatenate(([0], np.cumsum(counts)))
        return CscMatrix(self.nrows, self.ncols, col_ptr,
                         rows[order].astype(INDEX_DTYPE), self.values[order],
                         sorted_rows=True)

    def transpose(self) -> "CsrMatrix":
        c = self.to_csc()
        return CsrMatrix(self.ncols, self.nrows, c.col_ptr, c.row_idx, c.values,
                         sorted_cols=True)

    def prune(self) -> "CsrMatrix":
        """Drop entries whose stored value is exactly 0.0."""
        keep = self.values != 0.0
        if keep.all():
            return self
        rows = np.repeat(np.arange(self.nrows), self.row_nnz())[keep]
        counts = np.bincount(rows, minlength=self.nrows)
        row_ptr = np.concatenate(([0], np.cumsum(counts)))
        return CsrMatrix(self.nrows, self.ncols, row_ptr,
                         self.col_idx[keep], self.values[keep],
                         sorted_cols=self.sorted_cols)

    def canonicalize(self, drop_zeros: bool = True) -> "CsrMatrix":
        """Sorted, duplicate-merged (and optionally zero-pruned) copy.

        This is the form used for file output and for comparing kernel
        outputs that legitimately differ in within-row ordering.
        """
        m = csr_from_triplets_arrays(
            np.repeat(np.arange(self.nrows, dtype=np.int64), self.row_nnz()),
            self.col_idx.astype(np.int64), self.values, self.nrows, self.ncols)
        return m.prune() if drop_zeros else m

    def allclose(self, other: "CsrMatrix", rtol: float = 1e-9, atol: float = 0.0) -> bool:
        """Structural and numeric equality after canonicalization."""
        if self.shape != other.shape:
            return False
        a, b = self.canonicalize(), other.canonicalize()
        if a.nnz != b.nnz:
            return False
        return (np.array_equal(a.row_ptr, b.row_ptr)
                and np.array_equal(a.col_idx, b.col_idx)
                and np.allclose(a.values, b.values, rtol=rtol, atol=atol))


@dataclass
class CscMatrix:
    """Compressed sparse column matrix, the column-major mirror of CsrMatrix."""

    nrows: int
    ncols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray
    sorted_rows: bool = True

    def __post_init__(self):
        self.col_ptr = np.ascontiguousarray(self.col_ptr, dtype=np.int64)
        self.row_idx = np.ascontiguousarray(self.row_idx, dtype=INDEX_DTYPE)
        self.values = np.ascontiguousarray(self.values, dtype=VALUE_DTYPE)

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[-1])

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def col(self, j):
        lo, hi = int(self.col_ptr[j]), int(self.col_ptr[j + 1])
        return self.row_idx[lo:hi], self.values[lo:hi]

    def col_nnz(self) -> np.ndarray:
        return np.diff(self.col_ptr)

    def to_csr(self) -> CsrMatrix:
        cols = np.repeat(np.arange(self.ncols, dtype=np.int64), self.col_nnz())
        order = np.lexsort((cols, self.row_idx))
        counts = np.bincount(self.row_idx, minlength=self.nrows)
        row_ptr = np.concatenate(([0], np.cumsum(counts)))
        return CsrMatrix(self.nrows, self.ncols, row_ptr,
                         cols[order].astype(INDEX_DTYPE), self.values[order],
                         sorted_cols=True)

    def to_dense(self) -> np.ndarray:
        return self.to_csr().to_dense()


def csr_from_triplets(triplets: Iterable, nrows: int, ncols: int) -> CsrMatrix:
    """Build a CSR matrix from (row, col, value) triples.

    Duplicate coordinates are summed.  Out-of-range coordinates are rejected
    with the offending entry named in the error.
    """
    trip = list(triplets)
    if not trip:
        return CsrMatrix(nrows, ncols, np.zeros(nrows + 1, dtype=np.int64),
                         np.empty(0, dtype=INDEX_DTYPE), np.empty(0, dtype=VALUE_DTYPE))
    rows = np.asarray([t[0] for t in trip], dtype=np.int64)
    cols = np.asarray([t[1] for t in trip], dtype=np.int64)
    vals = np.asarray([t[2] for t in trip], dtype=VALUE_DTYPE)
    return csr_from_triplets_arrays(rows, cols, vals, nrows, ncols)


def csr_from_triplets_arrays(rows, cols, vals, nrows, ncols) -> CsrMatrix:
    """Array form of csr_from_triplets; sums duplicates, sorts rows by column."""
    _check_dims(nrows, ncols)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=VALUE_DTYPE)
    if not (len(rows) == len(cols) == len(vals)):
        raise ValueError("triplet arrays must have equal length")
    if len(rows) == 0:
        return CsrMatrix(nrows, ncols, np.zeros(nrows + 1, dtype=np.int64),
                         np.empty(0, dtype=INDEX_DTYPE), np.empty(0, dtype=VALUE_DTYPE))
    bad = np.nonzero((rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols))[0]
    if bad.size:
        k = int(bad[0])
        raise SparseFormatError(
            f"triplet {k} at ({int(rows[k])}, {int(cols[k])}) outside {nrows} x {ncols}")
    # sort by (row, col), then merge runs of equal coordinates
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows * ncols + cols if ncols > 0 else rows
    first = np.concatenate(([True], key[1:] != key[:-1]))
    starts = np.nonzero(first)[0]
    merged_vals = np.add.reduceat(vals, starts)
    merged_rows, merged_cols = rows[starts], cols[starts]
    counts = np.bincount(merged_rows, minlength=nrows)
    row_ptr = np.concatenate(([0], np.cumsum(counts)))
    return CsrMatrix(nrows, ncols, row_ptr, merged_cols.astype(INDEX_DTYPE),
                     merged_vals, sorted_cols=True)


def csr_from_dense(dense: np.ndarray) -> CsrMatrix:
    dense = np.asarray(dense, dtype=VALUE_DTYPE)
    if dense.ndim != 2:
        raise ValueError("expected a 2-d array")
    rows, cols = np.nonzero(dense)
    counts = np.bincount(rows, minlength=dense.shape[0])
    row_ptr = np.concatenate(([0], np.cumsum(counts)))
    return CsrMatrix(dense.shape[0], dense.shape[1], row_ptr,
                     cols.astype(INDEX_DTYPE), dense[rows, cols], sorted_cols=True)


def identity(n: int) -> CsrMatrix:
    return CsrMatrix(n, n, np.arange(n + 1, dtype=np.int64),
                     np.arange(n, dtype=INDEX_DTYPE), np.ones(n, dtype=VALUE_DTYPE))


# ---------------------------------------------------------------------------
# reference multiply and symbolic analysis

ORACLE_DIM_LIMIT = 2048


def dense_multiply_oracle(a: CsrMatrix, b: CsrMatrix,
                          max_dim: int = ORACLE_DIM_LIMIT) -> CsrMatrix:
    """Dense O(n^3) product used as the correctness reference.

    Refuses inputs with any dimension above ``max_dim`` (pass a larger value
    to force); the guard exists because callers reach for this on matrices
    where a dense temporary is not sensible.
    """
    if a.ncols != b.nrows:
        raise DimensionMismatchError(
            f"inner dimensions differ: {a.shape} x {b.shape}")
    span = max(a.nrows, a.ncols, b.nrows, b.ncols)
    if span > max_dim:
        raise ValueError(
            f"oracle refused: dimension {span} exceeds limit {max_dim}")
    return csr_from_dense(a.to_dense() @ b.to_dense())


def symbolic_row_flops(a: CsrMatrix, b: CsrMatrix) -> np.ndarray:
    """Multiplications required per output row: flops[i] = sum over A's row i
    of nnz(B row k).  This is the exact work count every dataflow performs."""
    if a.ncols != b.nrows:
        raise DimensionMismatchError(
            f"inner dimensions differ: {a.shape} x {b.shape}")
    bnnz = b.row_nnz()
    if a.nnz == 0:
        return np.zeros(a.nrows, dtype=np.int64)
    per_elem = bnnz[a.col_idx]
    csum = np.concatenate(([0], np.cumsum(per_elem)))
    return np.asarray(csum[a.row_ptr[1:]] - csum[a.row_ptr[:-1]], dtype=np.int64)


def multiply_products(a: CsrMatrix, b: CsrMatrix):
    """All (row, col) coordinates of the elementwise products of a row-wise
    multiply, as flat arrays.  Length equals sum(symbolic_row_flops).

    Used by planners and tests that need the product structure without
    running a kernel.  Rows are emitted in A traversal order.
    """
    if a.ncols != b.nrows:
        raise DimensionMismatchError(
            f"inner dimensions differ: {a.shape} x {b.shape}")
    bnnz = b.row_nnz()
    lengths = bnnz[a.col_idx]                      # products per A element
    total = int(lengths.sum())
    if total == 0:
        z = np.empty(0, dtype=np.int64)
        return z, z.copy()
    offs = b.row_ptr[a.col_idx]                    # B row start per A element
    # ragged gather: for A element e, take b.col_idx[offs[e] : offs[e]+len[e]]
    cum = np.concatenate(([0], np.cumsum(lengths)))
    pos = np.arange(total, dtype=np.int64) - np.repeat(cum[:-1], lengths)
    flat = np.repeat(offs, lengths) + pos
    out_cols = b.col_idx[flat].astype(np.int64)
    a_rows = np.repeat(np.arange(a.nrows, dtype=np.int64), a.row_nnz())
    out_rows = np.repeat(a_rows, lengths)
    return out_rows, out_cols


# ---------------------------------------------------------------------------
# MatrixMarket coordinate I/O

def mm_write(path, m: CsrMatrix, comment: str | None = None):
    """Write a MatrixMarket coordinate file (real, general, 1-based)."""
    m = m.canonicalize(drop_zeros=False) if not m.sorted_cols else m
    rows = np.repeat(np.arange(m.nrows), m.row_nnz())
    with open(path, "w") as f:
        f.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                f.write(f"% {line}\n")
        f.write(f"{m.nrows} {m.ncols} {m.nnz}\n")
        for r, c, v in zip(rows, m.col_idx, m.values):
            f.write(f"{r + 1} {c + 1} {float(v)!r}\n")


def mm_read(path) -> CsrMatrix:
    """Read a MatrixMarket coordinate file. Only the real/integer general
    flavor is supported; pattern and symmetric files are rejected."""
    with open(path) as f:
        header = f.readline()
        if not header.startswith("%%MatrixMarket"):
            raise SparseFormatError(f"{path}: missing MatrixMarket banner")
        fields = header.strip().lower().split()
        if len(fields) != 5 or fields[1] != "matrix" or fields[2] != "coordinate":
            raise SparseFormatError(f"{path}: unsupported header {header.strip()!r}")
        if fields[3] not in ("real", "integer"):
            raise SparseFormatError(f"{path}: unsupported field type {fields[3]!r}")
        if fields[4] != "general":
            raise SparseFormatError(f"{path}: only general symmetry is supported")
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        try:
            nrows, ncols, nnz = (int(t) for t in line.split())
        except ValueError:
            raise SparseFormatError(f"{path}: malformed size line {line.strip()!r}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=VALUE_DTYPE)
        k = 0
        for line in f:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            if k >= nnz:
                raise SparseFormatError(f"{path}: more entries than declared ({nnz})")
            parts = line.split()
            try:
                r, c = int(parts[0]), int(parts[1])
                v = float(parts[2]) if len(parts) > 2 else 1.0
            except (ValueError, IndexError):
                raise SparseFormatError(f"{path}: malformed entry {line!r}")
            if not (1 <= r <= nrows and 1 <= c <= ncols):
                raise SparseFormatError(
                    f"{path}: entry ({r}, {c}) outside declared {nrows} x {ncols}")
            rows[k], cols[k], vals[k] = r - 1, c - 1, v
            k += 1
        if k != nnz:
            raise SparseFormatError(f"{path}: {k} entries read, {nnz} declared")
    return csr_from_triplets_arrays(rows, cols, vals, nrows, ncols)


# ---------------------------------------------------------------------------
# binary snapshot

def snapshot_write(path, m: CsrMatrix):
    """Write the flat binary snapshot: magic, little-endian 64-bit
    nrows/ncols/nnz, then row_ptr (i64), col_idx (i32), values (f64)."""
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<qqq", m.nrows, m.ncols, m.nnz))
        f.write(np.ascontiguousarray(m.row_ptr, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(m.col_idx, dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(m.values, dtype="<f8").tobytes())


def snapshot_read(path) -> CsrMatrix:
    with open(path, "rb") as f:
        magic = f.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise SparseFormatError(f"{path}: bad magic {magic!r}")
        nrows, ncols, nnz = struct.unpack("<qqq", f.read(24))
        row_ptr = np.frombuffer(f.read(8 * (nrows + 1)), dtype="<i8")
        col_idx = np.frombuffer(f.read(4 * nnz), dtype="<i4")
        values = np.frombuffer(f.read(8 * nnz), dtype="<f8")
        if len(row_ptr) != nrows + 1 or len(col_idx) != nnz or len(values) != nnz:
            raise SparseFormatError(f"{path}: truncated snapshot")
    sorted_cols = True
    for i in range(nrows):
        seg = col_idx[row_ptr[i]:row_ptr[i + 1]]
        if seg.size > 1 and np.any(np.diff(seg) <= 0):
            sorted_cols = False
            break
    m = CsrMatrix(nrows, ncols, row_ptr.copy(), col_idx.copy(), values.copy(),
                  sorted_cols=sorted_cols)
    m.validate()
    return m
