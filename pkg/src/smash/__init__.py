"""Row-wise sparse matrix multiply kernels on a deterministic model of a
multithreaded graph-accelerator block, plus the reference dataflows and
roofline-style metrics used to compare them."""

from .sparse import (
    CsrMatrix,
    CscMatrix,
    Triplet,
    csr_from_dense,
    csr_from_triplets,
    dense_multiply_oracle,
    identity,
    mm_read,
    mm_write,
    snapshot_read,
    snapshot_write,
    symbolic_row_flops,
)
from .rmat import RmatParams, edges_for_target_nnz, rmat_generate
from .kernels import (
    HashTable,
    KernelReport,
    ProbeStats,
    Window,
    WindowOverflowError,
    WindowPlan,
    hash_lower,
    hash_upper,
    plan_windows,
    probe_insert,
    smash_v1,
    smash_v2,
    smash_v3,
    tag_decode,
    tag_encode,
    writeback_compact,
)
from .metrics import (
    IntensityReport,
    UtilizationReport,
    aggregate_ipc,
    arithmetic_intensity,
    bandwidth_utilization,
    trace_summary,
    utilization_stats,
)

__all__ = [
    "CsrMatrix",
    "CscMatrix",
    "Triplet",
    "csr_from_dense",
    "csr_from_triplets",
    "dense_multiply_oracle",
    "identity",
    "mm_read",
    "mm_write",
    "snapshot_read",
    "snapshot_write",
    "symbolic_row_flops",
    "RmatParams",
    "edges_for_target_nnz",
    "rmat_generate",
    "HashTable",
    "KernelReport",
    "ProbeStats",
    "Window",
    "WindowOverflowError",
    "WindowPlan",
    "hash_lower",
    "hash_upper",
    "plan_windows",
    "probe_insert",
    "smash_v1",
    "smash_v2",
    "smash_v3",
    "tag_decode",
    "tag_encode",
    "writeback_compact",
    "IntensityReport",
    "UtilizationReport",
    "aggregate_ipc",
    "arithmetic_intensity",
    "bandwidth_utilization",
    "trace_summary",
    "utilization_stats",
]

__version__ = "0.1.0"
