"""Single-threaded reference implementations of the four SpGEMM dataflows.

All four compute the same product; what differs is the traversal order, and
with it how often inputs are re-read and how much partial-product state is
live at once.  Each function returns the product plus a DataflowStats record
counting element touches at the algorithm level (not cache lines), which
makes the qualitative trade-offs assertable:

  inner    c[i,j] as a dot product of A row i and B column j; tiny live
           state (one scalar), heavy redundant input reads because every
           probed (i,j) pair rescans its row and column.
  outer    rank-1 updates col_n(A) x row_n(B); each input element is read
           once, but every elementwise product is materialized before the
           merge, so live state peaks at the full flop count.
  row-wise C[i,:] accumulated row at a time; partials merge immediately in a
           per-row accumulator, so live state peaks at one output row.
  col-wise the mirror of row-wise over columns, consuming and producing CSC.

The expensive inner loops below are vectorized with the ragged-gather
machinery from the sparse module; the counters are computed in closed form
from the structure, which is exact because the traversals are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import (
    CscMatrix,
    CsrMatrix,
    DimensionMismatchError,
    csr_from_triplets_arrays,
    multiply_products,
    symbolic_row_flops,
)


@dataclass
class DataflowStats:
    """Element-touch counters for one dataflow run."""

    input_a_element_reads: int
    input_b_element_reads: int
    intermediate_partials_peak: int
    output_writes: int
    flops: int

    def validate(self):
        for name, v in vars(self).items():
            if v < 0:
                raise ValueError(f"negative counter {name} = {v}")
        return self


def _product(a: CsrMatrix, b: CsrMatrix):
    """Merged product of every (i,k,j) elementwise term; shared by all four."""
    rows, cols = multiply_products(a, b)
    lengths = b.row_nnz()[a.col_idx]
    cum = np.concatenate(([0], np.cumsum(lengths)))
    pos = np.arange(int(lengths.sum()), dtype=np.int64) - np.repeat(cum[:-1], lengths)
    flat = np.repeat(b.row_ptr[a.col_idx], lengths) + pos
    vals = np.repeat(a.values, lengths) * b.values[flat]
    c = csr_from_triplets_arrays(rows, cols, vals, a.nrows, b.ncols)
    return c, rows, cols


def _distinct_per_row(c: CsrMatrix):
    return c.row_nnz()


def spgemm_rowwise(a: CsrMatrix, b: CsrMatrix):
    """Row-wise dataflow: C[i,:] = sum_k A[i,k] * B[k,:]."""
    if a.ncols != b.nrows:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    c, rows, _ = _product(a, b)
    flops = int(symbolic_row_flops(a, b).sum())
    peak = int(_distinct_per_row(c).max()) if c.nrows else 0
    stats = DataflowStats(
        input_a_element_reads=a.nnz,        # each A element drives one row segment scan
        input_b_element_reads=flops,        # one B element read per elementwise product
        intermediate_partials_peak=peak,    # one live accumulator row at a time
        output_writes=c.nnz,
        flops=flops,
    ).validate()
    return c, stats


def spgemm_inner(a: CsrMatrix, b: CscMatrix):
    """Inner-product dataflow: c[i,j] = <A row i, B col j> by index intersection.

    Every nonempty (row, column) pair is probed; the merge walk runs both
    sorted sequences to exhaustion, so each probe touches the full row and
    column.  That redundancy is the point of this baseline, and it is what
    the read counters report.
    """
    if a.ncols != b.nrows:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    bcsr = b.to_csr()
    c, _, _ = _product(a, bcsr)
    flops = int(symbolic_row_flops(a, bcsr).sum())
    row_nnz = a.row_nnz()
    col_nnz = b.col_nnz()
    nonempty_rows = int(np.count_nonzero(row_nnz))
    nonempty_cols = int(np.count_nonzero(col_nnz))
    stats = DataflowStats(
        # row i is rescanned for every nonempty column probe, and vice versa
        input_a_element_reads=nonempty_cols * a.nnz,
        input_b_element_reads=nonempty_rows * b.nnz,
        intermediate_partials_peak=1 if flops else 0,
        output_writes=c.nnz,
        flops=flops,
    ).validate()
    return c, stats


def spgemm_outer(a: CscMatrix, b: CsrMatrix):
    """Outer-product dataflow: C = sum_n col_n(A) x row_n(B).

    All elementwise partials are materialized before a final merge, so the
    peak live state equals the flop count.
    """
    if a.ncols != b.nrows:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    acsr = a.to_csr()
    c, _, _ = _product(acsr, b)
    col_nnz = a.col_nnz()
    b_row_nnz = b.row_nnz()
    flops = int((col_nnz * b_row_nnz).sum())
    stats = DataflowStats(
        input_a_element_reads=a.nnz,   # each column read once
        input_b_element_reads=int(b_row_nnz[col_nnz > 0].sum()),
        intermediate_partials_peak=flops,
        output_writes=c.nnz,
        flops=flops,
    ).validate()
    return c, stats


def spgemm_colwise(a: CscMatrix, b: CscMatrix):
    """Column-wise dataflow: C[:,j] = sum_k A[:,k] * B[k,j], in CSC."""
    if a.ncols != b.nrows:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    # mirror of row-wise under transposition: run row-wise on (B^T, A^T)
    bt = CsrMatrix(b.ncols, b.nrows, b.col_ptr, b.row_idx, b.values,
                   sorted_cols=b.sorted_rows)
    at = CsrMatrix(a.ncols, a.nrows, a.col_ptr, a.row_idx, a.values,
                   sorted_cols=a.sorted_rows)
    ct, rows, _ = _product(bt, at)
    flops = int(symbolic_row_flops(bt, at).sum())
    peak = int(_distinct_per_row(ct).max()) if ct.nrows else 0
    c = CscMatrix(a.nrows, b.ncols, ct.row_ptr, ct.col_idx, ct.values,
                  sorted_rows=True)
    stats = DataflowStats(
        input_a_element_reads=flops,        # one A element read per product
        input_b_element_reads=b.nnz,        # each B element drives one column scan
        intermediate_partials_peak=peak,    # one live accumulator column
        output_writes=c.nnz,
        flops=flops,
    ).validate()
    return c, stats
