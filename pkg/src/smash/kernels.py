"""Row-wise SpGEMM kernels over the simulated block machine.

Three variants of the same hash-based row-wise multiply, differing in how
work is distributed and where the accumulation table lives:

* ``smash_v1`` - rows statically round-robined over the worker threads, a
  scratchpad hashtable addressed by the upper tag bits, and a sorting
  writeback that emits each window in column order.
* ``smash_v2`` - dynamic work claiming (two half-row tokens per row plus
  fine-grained chunks of heavy rows), a scratchpad hashtable addressed by
  the lower tag bits, and an unsorted scan writeback.
* ``smash_v3`` - the V2 claiming scheme with the value table moved to DRAM
  behind no-reply native atomics, a scratchpad claim mirror, and a
  writeback that hands the bulk data movement to the DMA engine so it
  overlaps the next window.

All three run the same window plan: the output is processed in row windows
sized so that the worst-case number of distinct output columns fits the
scratchpad table at a configured occupancy.  Rows whose product count is
large enough to overwhelm the table (or whose column bound alone exceeds
the window budget) bypass the hashtable entirely and accumulate into a
per-row DRAM array; every version handles those rows the same way, so the
variants differ only on the hash path.

Each window runs three phases separated by barriers: setup (the service
core ships the window's slice of A and the referenced B index lists into
block-local storage), hashing, and writeback.  Phase labels in the trace
are ``w0000/setup``, ``w0000/hash``, ``w0000/write`` and so on, which is
what the per-phase balance checks key on.

The functional arithmetic is exact (plain Python floats accumulated in
process); the machine only accounts cost.  A kernel's output is therefore
bit-identical across scheduling perturbations, which is asserted in tests
by rerunning under a permuted thread priority.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .machine import (
    Machine,
    MachineConfig,
    op_atomic,
    op_barrier,
    op_dma,
    op_dma_wait,
    op_dram,
    op_exec,
    op_phase,
    op_spad,
)
from .sparse import (
    CsrMatrix,
    ELEMENT_BYTES,
    INDEX_DTYPE,
    VALUE_DTYPE,
    symbolic_row_flops,
)

EMPTY = -1
SLOT_BYTES = 16                 # an 8-byte tag plus an 8-byte value
RESERVED_SPAD_BYTES = 4096      # counters, cursors and other small state
DENSE_THRESHOLD_DEFAULT = 64    # products above this bypass the hashtable
OFFSET_THRESHOLD_DEFAULT = 64   # max linear-probe displacement before overflow
DENSE_CHUNK_FLOPS = 64          # claim granularity inside a dense row
V3_STAGE_ENTRIES = 1280         # per-thread staged entries per window parity
_STAGE_BYTES = 8                # packed (row, col, source slot) stage record

# 64-bit multiplicative mixing for the spread-hashed kernels: the raw
# modulo of a row-major tag aliases every (capacity / ncols)-th row onto
# the same slot band, so the kernels mix the tag before taking the home
# slot while the plain formulas stay available for analysis.
_MIX_MULT = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1

_PTR_BYTES = 8
_IDX_BYTES = 4
_VAL_BYTES = 8


class WindowOverflowError(RuntimeError):
    """A probe sequence exceeded its displacement bound or the table filled."""


# ---------------------------------------------------------------------------
# tags and hash functions

def tag_encode(row: int, col: int, ncols: int) -> int:
    """Flatten (row, col) into the scalar tag row * ncols + col.

    Tags must fit a signed 64-bit accumulator slot, so coordinate spaces
    beyond 2**63 are rejected rather than silently wrapped.
    """
    tag = row * ncols + col
    if tag >= 1 << 63 or tag < 0:
        raise OverflowError(
            f"tag {row} * {ncols} + {col} does not fit 63 bits")
    return tag


def tag_decode(tag: int, ncols: int) -> tuple:
    """Invert tag_encode; returns (row, col)."""
    return divmod(tag, ncols)


def _check_capacity(capacity: int):
    if capacity <= 0 or capacity & (capacity - 1):
        raise ValueError(f"table capacity {capacity} is not a power of two")


def hash_upper(tag: int, shift: int, capacity: int) -> int:
    """Home slot from the upper tag bits: (tag >> shift) % capacity.

    Monotone in the tag, so slot order follows tag order and a slot-order
    scan of the table yields sorted output; the price is that tags sharing
    their upper bits cluster onto one home slot.
    """
    _check_capacity(capacity)
    return (tag >> shift) % capacity


def hash_lower(tag: int, shift: int, capacity: int) -> int:
    """Home slot from the low tag bits: tag % capacity.

    Adjacent tags land in distinct slots, spreading row-local bursts
    evenly; slot order no longer says anything about tag order.  ``shift``
    is accepted for signature parity with hash_upper and ignored.
    """
    _check_capacity(capacity)
    return tag % capacity


# ---------------------------------------------------------------------------
# the probing hashtable

@dataclass
class ProbeStats:
    """Counters from probe_insert traffic.

    ``collisions`` counts probe steps that landed on an occupied slot with
    a different tag; ``max_probe_length`` is the largest displacement from
    the home slot at which an insert or merge finally landed.
    """

    insertions: int = 0
    merges: int = 0
    collisions: int = 0
    max_probe_length: int = 0

    def merge(self, other: "ProbeStats") -> "ProbeStats":
        self.insertions += other.insertions
        self.merges += other.merges
        self.collisions += other.collisions
        self.max_probe_length = max(self.max_probe_length, other.max_probe_length)
        return self

    def as_dict(self) -> dict:
        return {
            "insertions": int(self.insertions),
            "merges": int(self.merges),
            "collisions": int(self.collisions),
            "max_probe_length": int(self.max_probe_length),
        }


@dataclass
class HashTable:
    """An open-addressing accumulator table with linear probing.

    ``hash_kind`` picks the home-slot function ("upper" or "lower");
    ``offset_threshold`` bounds the displacement of any entry from its
    home slot (None disables the bound, leaving only the capacity limit).
    """

    capacity: int
    hash_kind: str = "lower"
    shift: int = 0
    offset_threshold: int | None = OFFSET_THRESHOLD_DEFAULT
    tags: list = field(default_factory=list)
    values: list = field(default_factory=list)
    stats: ProbeStats = field(default_factory=ProbeStats)

    def __post_init__(self):
        _check_capacity(self.capacity)
        if self.hash_kind not in ("upper", "lower"):
            raise ValueError(f"unknown hash kind {self.hash_kind!r}")
        if not self.tags:
            self.tags = [EMPTY] * self.capacity
            self.values = [0.0] * self.capacity

    def home(self, tag: int) -> int:
        if self.hash_kind == "upper":
            return hash_upper(tag, self.shift, self.capacity)
        return hash_lower(tag, self.shift, self.capacity)

    def occupied(self) -> int:
        return sum(1 for t in self.tags if t != EMPTY)


def probe_insert(table: HashTable, tag: int, value: float) -> int:
    """Insert or merge ``value`` under ``tag``; returns the landing slot.

    Walks slots linearly from the home slot, wrapping modulo capacity.
    A matching tag accumulates in place (a merge); an empty slot claims
    (an insertion); any other occupied slot is a collision and the walk
    advances.  The walk raises WindowOverflowError once the displacement
    exceeds the table's offset threshold or every slot was visited.
    """
    cap = table.capacity
    limit = cap if table.offset_threshold is None else min(cap, table.offset_threshold + 1)
    home = table.home(tag)
    tags = table.tags
    st = table.stats
    for d in range(limit):
        s = (home + d) % cap
        t = tags[s]
        if t == tag:
            table.values[s] += value
            st.merges += 1
            if d > st.max_probe_length:
                st.max_probe_length = d
            return s
        if t == EMPTY:
            tags[s] = tag
            table.values[s] = value
            st.insertions += 1
            if d > st.max_probe_length:
                st.max_probe_length = d
            return s
        st.collisions += 1
    raise WindowOverflowError(
        f"no slot for tag {tag} within {limit} probes of home {home} "
        f"(capacity {cap}): window overflow")


def writeback_compact(table: HashTable, section: int, n_sections: int = 64) -> list:
    """Drain one section of the table, returning [(tag, value), ...] sorted
    by tag and clearing the emitted slots.

    A section owns the home-slot range [section * S, (section + 1) * S).
    Because linear probing only ever displaces an entry forward, the scan
    covers that range plus offset_threshold extra slots (wrapping modulo
    capacity) and keeps exactly the entries whose home slot falls in the
    owned range, which makes the overlap scan complete: every live entry
    is emitted by precisely one section.
    """
    cap = table.capacity
    if not 0 <= section < n_sections:
        raise ValueError(f"section {section} outside 0..{n_sections - 1}")
    size = -(-cap // n_sections)
    lo = section * size
    hi = min(lo + size, cap)
    if lo >= cap:
        return []
    extra = cap if table.offset_threshold is None else table.offset_threshold
    span = min(hi + extra - lo, cap)
    keys: list = []
    ents: list = []
    for off in range(span):
        s = (lo + off) % cap
        t = table.tags[s]
        if t == EMPTY:
            continue
        if lo <= table.home(t) < hi:
            pos = bisect.bisect_left(keys, t)
            keys.insert(pos, t)
            ents.insert(pos, (t, table.values[s]))
            table.tags[s] = EMPTY
            table.values[s] = 0.0
    return ents


# ---------------------------------------------------------------------------
# window planning

def spad_table_capacity(spad_bytes: int) -> int:
    """Largest power-of-two slot count whose 16-byte slots fit the
    scratchpad after a small reservation for counters."""
    budget = (spad_bytes - RESERVED_SPAD_BYTES) // SLOT_BYTES
    if budget < 1:
        raise ValueError(f"scratchpad of {spad_bytes} bytes cannot hold a table")
    return 1 << (budget.bit_length() - 1)


@dataclass
class Window:
    """One contiguous row range processed as a unit.

    ``est_flops`` counts the products of every row in the range (dense
    rows included); ``est_occupancy`` sums the per-row distinct-column
    bounds of only the rows that use the hashtable.  ``row_class`` is True
    where the row takes the dense accumulator path.
    """

    row_range: tuple
    est_flops: int
    est_occupancy: int
    row_class: np.ndarray

    @property
    def nrows(self) -> int:
        return self.row_range[1] - self.row_range[0]


@dataclass
class WindowPlan:
    windows: list
    spad_bins: int
    hash_shift: int
    dense_threshold: int
    offset_threshold: int
    occupancy_limit: float

    def validate(self, nrows: int | None = None) -> "WindowPlan":
        _check_capacity(self.spad_bins)
        limit = int(self.occupancy_limit * self.spad_bins)
        expect = 0
        for w in self.windows:
            r0, r1 = w.row_range
            if r0 != expect or r1 <= r0:
                raise ValueError(f"window rows [{r0}, {r1}) break coverage at {expect}")
            if w.est_occupancy > limit:
                raise ValueError(
                    f"window [{r0}, {r1}) occupancy {w.est_occupancy} > {limit}")
            if len(w.row_class) != r1 - r0:
                raise ValueError("row_class length does not match the row range")
            expect = r1
        if nrows is not None and self.windows and expect != nrows:
            raise ValueError(f"windows cover {expect} rows, matrix has {nrows}")
        return self

    def total_est_flops(self) -> int:
        return sum(w.est_flops for w in self.windows)


def plan_windows(a: CsrMatrix, b: CsrMatrix, config: MachineConfig | None = None, *,
                 occupancy_limit: float = 0.5,
                 dense_threshold: int = DENSE_THRESHOLD_DEFAULT,
                 offset_threshold: int = OFFSET_THRESHOLD_DEFAULT) -> WindowPlan:
    """Partition the output rows of a @ b into scratchpad-sized windows.

    Greedy scan: each hashtable row contributes min(row_flops, ncols) to
    the running occupancy bound and a window closes just before the bound
    would exceed occupancy_limit * spad_bins.  Rows whose product count
    exceeds dense_threshold (or whose bound alone exceeds the window
    budget) are classed dense, take the accumulator path, and contribute
    nothing to occupancy, so a window can hold any number of them.

    A second close condition caps the number of hashed rows per window at
    spad_bins // (2 * max_bound): under the shifted upper hash each row
    owns a contiguous slot range of about spad_bins / rows slots, and the
    cap keeps that range at least twice the worst per-row bound so no row
    can flood its own range.  A third caps total window flops (hashed plus
    accumulator) at five times the occupancy budget, so writeback volume
    stays balanced across windows and overlaps the next window's work
    instead of piling onto one giant window.  The plan-wide hash shift is
    then sized for the window with the most hashed rows.
    """
    if a.ncols != b.nrows:
        raise DimensionMismatchError(f"inner dimensions differ: {a.ncols} vs {b.nrows}")
    if not 0.0 < occupancy_limit <= 1.0:
        raise ValueError(f"occupancy limit {occupancy_limit} outside (0, 1]")
    cfg = config if config is not None else MachineConfig()
    bins = spad_table_capacity(cfg.spad_bytes)
    if a.nrows and b.ncols:
        tag_encode(a.nrows - 1, b.ncols - 1, b.ncols)

    flops = symbolic_row_flops(a, b)
    bound = np.minimum(flops, b.ncols) if a.nrows else flops
    limit = int(occupancy_limit * bins)
    if limit < 1:
        raise ValueError("occupancy limit rounds to zero table slots")
    dense = (flops > dense_threshold) | (bound > limit)
    contrib = np.where(dense, 0, bound)
    max_bound = int(contrib.max()) if a.nrows else 0
    row_cap = bins // (2 * max_bound) if max_bound else 0

    flops_cap = 5 * limit
    spans = []
    start = 0
    occ = 0
    hashed = 0
    fl = 0
    for i in range(a.nrows):
        c = int(contrib[i])
        f = int(flops[i])
        if i > start and (f or c) and (occ + c > limit
                                       or (row_cap and c and hashed >= row_cap)
                                       or fl + f > flops_cap):
            spans.append((start, i, occ))
            start, occ, hashed, fl = i, 0, 0, 0
        occ += c
        fl += f
        hashed += bool(c)
    if a.nrows:
        spans.append((start, a.nrows, occ))

    # Rebalance a runt tail: split the last two windows at the row that
    # evens out their occupancy instead of leaving a nearly empty one.
    if len(spans) >= 2 and spans[-1][2] < limit // 4:
        (s0, _, _), (_, e1, _) = spans[-2], spans[-1]
        seg = contrib[s0:e1]
        pre = np.cumsum(seg)
        total = int(pre[-1])
        cut = int(np.argmin(np.abs(2 * pre - total))) + 1
        cut = min(max(cut, 1), e1 - s0 - 1)
        left = int(pre[cut - 1])
        halves = [(s0, s0 + cut, left), (s0 + cut, e1, total - left)]
        if all((not row_cap or np.count_nonzero(contrib[s:e]) <= row_cap)
               and int(flops[s:e].sum()) <= flops_cap for s, e, _ in halves):
            spans[-2:] = halves

    shift = 0
    windows = []
    for s, e, occ in spans:
        windows.append(Window(
            row_range=(s, e),
            est_flops=int(flops[s:e].sum()),
            est_occupancy=occ,
            row_class=dense[s:e].copy()))
        nsp = int(np.count_nonzero(contrib[s:e]))
        if b.ncols and nsp:
            q = -(-(nsp * b.ncols) // bins)
            shift = max(shift, (q - 1).bit_length())

    return WindowPlan(
        windows=windows,
        spad_bins=bins,
        hash_shift=shift,
        dense_threshold=dense_threshold,
        offset_threshold=offset_threshold,
        occupancy_limit=occupancy_limit,
    ).validate(a.nrows)


# ---------------------------------------------------------------------------
# kernel report

@dataclass
class KernelReport:
    """Everything one kernel run produced: the output matrix, the machine
    trace, the window plan it ran and the accumulation statistics.

    ``probe_stats`` aggregates hashtable and dense-accumulator traffic so
    that insertions + merges equals the product count; the table-only and
    accumulator-only views are kept alongside.
    """

    version: int
    output: CsrMatrix
    trace: object
    plan: WindowPlan
    probe_stats: ProbeStats
    table_stats: ProbeStats
    accumulator_touches: int
    accumulator_merges: int
    flops: int

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "windows": len(self.plan.windows),
            "flops": int(self.flops),
            "output_nnz": int(self.output.nnz),
            "output_shape": [self.output.nrows, self.output.ncols],
            "probe_stats": self.probe_stats.as_dict(),
            "table_stats": self.table_stats.as_dict(),
            "accumulator": {
                "touches": int(self.accumulator_touches),
                "merges": int(self.accumulator_merges),
            },
            "trace": json.loads(self.trace.to_json()),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# the shared kernel engine

class _WindowData:
    """Static per-window facts computed before simulation."""

    def __init__(self, run, wi, win):
        a, b = run.a, run.b
        self.win = win
        r0, r1 = win.row_range
        self.r0, self.r1 = r0, r1
        s0, s1 = int(a.row_ptr[r0]), int(a.row_ptr[r1])
        self.a_lo = s0
        self.nnz_a = s1 - s0
        refs = np.unique(a.col_idx[s0:s1]) if s1 > s0 else np.empty(0, dtype=np.int64)
        self.ship_a_bytes = (r1 - r0 + 1) * _PTR_BYTES + self.nnz_a * ELEMENT_BYTES
        ref_nnz = run.b_row_nnz[refs] if len(refs) else np.empty(0, dtype=np.int64)
        self.ship_idx_bytes = int(ref_nnz.sum()) * _IDX_BYTES
        offs = np.zeros(len(refs) + 1, dtype=np.int64)
        np.cumsum(ref_nnz, out=offs[1:])
        self.bidx_off = dict(zip(refs.tolist(), offs[:-1].tolist()))
        dense_rows = [r0 + i for i in np.nonzero(win.row_class)[0].tolist()]
        self.dense_rows = dense_rows
        self.dense_slot = {i: s for s, i in enumerate(dense_rows)}
        # hashed rows get compact ranks so the window tag space is dense:
        # dense and empty rows would otherwise waste slot ranges under the
        # shifted upper hash
        rf = run.row_flops[r0:r1]
        hashed = np.nonzero(~win.row_class & (rf > 0))[0].tolist()
        self.sparse_list = hashed
        self.srank = {li: s for s, li in enumerate(hashed)}
        chunks = []
        for i in dense_rows:
            lo, hi = int(a.row_ptr[i]), int(a.row_ptr[i + 1])
            p = lo
            while p < hi:
                fl = 0
                q = p
                while q < hi and fl < DENSE_CHUNK_FLOPS:
                    fl += int(run.b_row_nnz[a.col_idx[q]])
                    q += 1
                chunks.append((i, p, q))
                p = q
        self.chunks = chunks
        self.n_tokens = 2 * (r1 - r0)
        dense_bound = int(np.minimum(run.row_flops[win.row_class.nonzero()[0] + r0],
                                     b.ncols).sum()) if dense_rows else 0
        self.max_entries = win.est_occupancy + dense_bound
        # simulation-time state, created at window open
        self.tags = None
        self.vals = None
        self.acc = None
        self.acc_cursor = None
        self.flushed = None
        self.stash_used = 0
        self.max_disp = 0
        self.emit_parts = {}
        self.row_counts = None
        self.cols_out = None
        self.vals_out = None


class _Run:
    """State shared by the task generators of one kernel execution."""

    def __init__(self, version, a, b, machine, plan):
        if machine.config.blocks != 1:
            raise ValueError("the row-wise kernels model a single block")
        self.version = version
        self.a = a
        self.b = b
        self.m = machine
        self.plan = plan
        self.ncols = b.ncols
        self.bins = plan.spad_bins
        self.shift = plan.hash_shift
        self.thresh = plan.offset_threshold
        # Upper-bits hashing clusters row-local tags, so V1 probes without a
        # displacement bound and its writeback scans out to the observed
        # maximum displacement (published at the hashing barrier).  The
        # spread-out lower-bits versions keep the strict bound.
        self.probe_limit = self.bins if version == 1 else min(self.bins,
                                                              self.thresh + 1)
        self.mix_shift = 64 - (self.bins.bit_length() - 1)
        self.workers = machine.worker_ids(block=0)
        self.W = len(self.workers)
        self.stc = machine.stc_ids(block=0)[0]
        self.parties = self.W + 1
        self.row_flops = symbolic_row_flops(a, b)
        self.b_row_nnz = (b.row_ptr[1:] - b.row_ptr[:-1]).astype(np.int64)
        self.b_rows = [(b.col_idx[int(b.row_ptr[k]):int(b.row_ptr[k + 1])].tolist(),
                        b.values[int(b.row_ptr[k]):int(b.row_ptr[k + 1])].tolist())
                       for k in range(b.nrows)]
        # distinct 64-byte accumulator lines per b row: consecutive columns
        # share lines, so clustered rows cost less accumulator traffic
        self.b_row_nlines = [
            int(np.unique(b.col_idx[int(b.row_ptr[k]):int(b.row_ptr[k + 1])] >> 3).size)
            for k in range(b.nrows)]
        self.a_cols = a.col_idx.tolist()
        self.a_vals = a.values.tolist()
        self.table_stats = ProbeStats()
        self.acc_touches = 0
        self.acc_merges = 0
        self.flops_done = 0
        self.c_cursor = 0
        self.wdata = [_WindowData(self, wi, w) for wi, w in enumerate(plan.windows)]
        self.open_idx = -1
        self._alloc_regions()
        if version == 3:
            self.mirror = [None, None]
            self.v3vals = [None, None]
            self.stage = {t: ([], [], []) for t in range(self.W)}
            self.pending = {t: {0: [], 1: []} for t in range(self.W)}
            self.deferred = {t: [] for t in range(self.W)}
            self.flush_handle = {t: None for t in range(self.W)}

    # -- memory layout -------------------------------------------------------

    def _alloc_regions(self):
        m, a, b = self.m, self.a, self.b
        self.a_region = m.dgas_partition(
            (a.nrows + 1) * _PTR_BYTES + max(a.nnz, 1) * ELEMENT_BYTES, name="a-input")
        self.b_region = m.dgas_partition(
            (b.nrows + 1) * _PTR_BYTES + max(b.nnz, 1) * (_IDX_BYTES + _VAL_BYTES),
            name="b-input")
        self.b_idx_base = self.b_region.base + (b.nrows + 1) * _PTR_BYTES
        self.b_val_base = self.b_idx_base + b.nnz * _IDX_BYTES
        cap = int(np.minimum(self.row_flops, max(self.ncols, 1)).sum())
        self.out_cap = cap
        self.c_region = m.dgas_partition(max(cap, 1) * ELEMENT_BYTES, name="c-output")
        self.c_val_base = self.c_region.base + max(cap, 1) * _IDX_BYTES
        ship_bytes = max((wd.ship_a_bytes + wd.ship_idx_bytes for wd in self.wdata),
                        default=1)
        self.ship = m.dgas_partition(max(ship_bytes, 1), affinity=0, name="window-ship")
        max_dense = max((len(wd.dense_rows) for wd in self.wdata), default=0)
        self.acc_span = max(self.ncols, 1) * _VAL_BYTES
        if max_dense:
            self.acc_region = m.dgas_partition(max_dense * self.acc_span, name="row-acc")
            if self.version == 1:
                self.touch_region = m.dgas_partition(
                    max(wd.max_entries for wd in self.wdata) * _IDX_BYTES + 64,
                    name="touched-cols")
        bins = self.bins
        max_rows = max((wd.r1 - wd.r0 for wd in self.wdata), default=1)
        if self.version in (1, 2):
            self.tag_region = m.alloc_spad(0, bins * 8, "table-tags")
            self.val_region = m.alloc_spad(0, bins * 8, "table-values")
        if self.version in (2, 3):
            self.cnt_region = m.alloc_spad(0, 64, "claim-counters")
            self.cnt_view = self.cnt_region.view(np.int64)
            self.rowcnt_region = m.alloc_spad(0, max_rows * 8, "row-counts")
        if self.version == 3:
            self.mirror_region = m.alloc_spad(0, 2 * bins * 8, "claim-mirror")
            self.v3_table = m.dgas_partition(2 * bins * 8, name="v3-table")
            used = 2 * bins * 8 + 64 + max_rows * 8
            avail = self.m.config.spad_bytes - used - 256
            cap_e = min(V3_STAGE_ENTRIES, avail // (self.W * 2 * _STAGE_BYTES))
            self.stage_cap = max(int(cap_e), 16)
            self.stage_region = m.alloc_spad(
                0, self.W * 2 * self.stage_cap * _STAGE_BYTES, "stage-buffers")
            stash = max((wd.max_entries for wd in self.wdata), default=1)
            self.stash_region = m.dgas_partition(
                2 * max(stash, 1) * _STAGE_BYTES, name="flush-stash")

    def _stage_addr(self, t, parity):
        per = self.stage_cap * _STAGE_BYTES
        return self.stage_region.base + (t * 2 + parity) * per

    def b_val_addr(self, k):
        return self.b_val_base + int(self.b.row_ptr[k]) * _VAL_BYTES

    # -- per-window lifecycle ------------------------------------------------

    def _open_window(self, wi):
        if self.open_idx == wi:
            return self.wdata[wi]
        if self.open_idx >= 0:
            self._close_window(self.open_idx)
        self.open_idx = wi
        wd = self.wdata[wi]
        if self.version in (1, 2):
            wd.tags = [EMPTY] * self.bins
            wd.vals = [0.0] * self.bins
        else:
            p = wi % 2
            if self.mirror[p] is None:
                self.mirror[p] = [EMPTY] * self.bins
                self.v3vals[p] = [0.0] * self.bins
            wd.tags = self.mirror[p]
            wd.vals = self.v3vals[p]
            wd.flushed = {t: ([], [], []) for t in range(self.W)}
            wd.stash_used = 0
        wd.acc = {i: {} for i in wd.dense_rows}
        wd.acc_cursor = {i: 0 for i in wd.dense_rows}
        return wd

    def _close_window(self, wi):
        wd = self.wdata[wi]
        r0, r1 = wd.r0, wd.r1
        parts = [wd.emit_parts[k] for k in sorted(wd.emit_parts)]
        if parts:
            rows = np.concatenate([p[0] for p in parts])
            cols = np.concatenate([p[1] for p in parts])
            vals = np.concatenate([p[2] for p in parts])
            order = np.argsort(rows, kind="stable")
            rows = rows[order]
            wd.cols_out = cols[order]
            wd.vals_out = vals[order]
            wd.row_counts = np.bincount(rows - r0, minlength=r1 - r0)
        else:
            wd.cols_out = np.empty(0, dtype=INDEX_DTYPE)
            wd.vals_out = np.empty(0, dtype=VALUE_DTYPE)
            wd.row_counts = np.zeros(r1 - r0, dtype=np.int64)
        wd.tags = wd.vals = wd.acc = wd.acc_cursor = wd.flushed = None
        wd.emit_parts = {}

    def _finalize(self):
        a, ncols = self.a, self.ncols
        if self.open_idx >= 0:
            self._close_window(self.open_idx)
        counts = (np.concatenate([wd.row_counts for wd in self.wdata])
                  if self.wdata else np.zeros(a.nrows, dtype=np.int64))
        row_ptr = np.zeros(a.nrows + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        cols = (np.concatenate([wd.cols_out for wd in self.wdata])
                if self.wdata else np.empty(0, dtype=INDEX_DTYPE))
        vals = (np.concatenate([wd.vals_out for wd in self.wdata])
                if self.wdata else np.empty(0, dtype=VALUE_DTYPE))
        out = CsrMatrix(a.nrows, ncols, row_ptr,
                        cols.astype(INDEX_DTYPE), vals.astype(VALUE_DTYPE),
                        sorted_cols=(self.version == 1))
        return out.validate()

    # -- probing (functional + cost in one pass) -----------------------------

    def _home(self, rel):
        """Home slot of a window tag.

        The sorted-table version keeps contiguous slot ranges per row
        (shifted upper bits).  The spread versions multiply-mix the tag
        first: a plain modulo would alias every (bins / ncols)-th row onto
        one slot band because the row stride divides the capacity.
        """
        if self.version == 1:
            return (rel >> self.shift) % self.bins
        return (rel * _MIX_MULT & _MASK64) >> self.mix_shift

    def _probe_products(self, wd, i, bc, bv, av):
        """Hash one a-element's products into the window table.

        Returns (steps, new, stage_entries): total probe visits, fresh
        inserts, and for V3 the staged (rel_row, col, slot) triples.
        """
        tags, vals = wd.tags, wd.vals
        bins = self.bins
        home_of = self._home
        rel_row = wd.srank[i - wd.r0] * self.ncols
        limit = self.probe_limit
        st = self.table_stats
        steps = 0
        new = 0
        staged = []
        for j, x in zip(bc, bv):
            rel = rel_row + j
            home = home_of(rel)
            for d in range(limit):
                s = home + d
                if s >= bins:
                    s -= bins
                t = tags[s]
                if t == rel:
                    vals[s] += av * x
                    st.merges += 1
                    steps += d + 1
                    if d > st.max_probe_length:
                        st.max_probe_length = d
                    break
                if t == EMPTY:
                    tags[s] = rel
                    vals[s] = av * x
                    st.insertions += 1
                    new += 1
                    steps += d + 1
                    if d > st.max_probe_length:
                        st.max_probe_length = d
                    if d > wd.max_disp:
                        wd.max_disp = d
                    if self.version == 3:
                        staged.append((i - wd.r0, j, s))
                    break
                st.collisions += 1
            else:
                raise WindowOverflowError(
                    f"row {i}: no slot within {limit} probes (window overflow)")
        return steps, new, staged

    def _accumulate(self, wd, i, bc, bv, av):
        """Dense-row products into the per-row accumulator; returns the
        count of first touches (and stages them for V3)."""
        acc = wd.acc[i]
        new = 0
        staged = []
        slot = wd.dense_slot[i]
        for j, x in zip(bc, bv):
            if j in acc:
                acc[j] += av * x
                self.acc_merges += 1
            else:
                acc[j] = av * x
                self.acc_touches += 1
                new += 1
                if self.version == 3:
                    staged.append((i - wd.r0, j, -1 - slot))
        return new, staged

    def _acc_cycle_addr(self, wd, i, n_lines):
        """A rotating address window over the row's accumulator span that
        covers ``n_lines`` cache lines, so a batched update touches as many
        distinct lines as its real column footprint."""
        span = self.acc_span
        nbytes = min(max(n_lines, 1) * 64, span)
        base = self.acc_region.base + wd.dense_slot[i] * span
        off = wd.acc_cursor[i]
        if off + nbytes > span:
            off = 0
        wd.acc_cursor[i] = off + nbytes
        return base + off, nbytes

    # -- hashing phase bodies ------------------------------------------------

    def _ship_elem_addr(self, wd, pos):
        hdr = (wd.r1 - wd.r0 + 1) * _PTR_BYTES
        return self.ship.base + hdr + (pos - wd.a_lo) * ELEMENT_BYTES

    def _ship_bidx_addr(self, wd, k):
        return self.ship.base + wd.ship_a_bytes + wd.bidx_off[k] * _IDX_BYTES

    def _element_ops(self, wd, k, nk):
        # two packed 4-byte column indices per 8-byte load
        yield op_dram(self._ship_bidx_addr(wd, k), _IDX_BYTES * nk, n=(nk + 1) // 2)
        yield op_dram(self.b_val_addr(k), _VAL_BYTES * nk, n=nk)
        yield op_exec(2 * nk)

    def _hash_sparse_row(self, wd, i, p0, p1, t):
        """Probe the products of a-elements [p0, p1) of hashtable row i."""
        a = self.a
        yield op_dram(self._ship_elem_addr(wd, p0), ELEMENT_BYTES * (p1 - p0),
                      n=p1 - p0)
        for p in range(p0, p1):
            k = self.a_cols[p]
            bc, bv = self.b_rows[k]
            nk = len(bc)
            if not nk:
                continue
            yield from self._element_ops(wd, k, nk)
            steps, new, staged = self._probe_products(wd, i, bc, bv, self.a_vals[p])
            self.flops_done += nk
            if self.version == 3:
                yield op_atomic("spad", n=steps)
                yield op_atomic("dram", n=nk, native=True, nowait=True,
                                nbytes=_VAL_BYTES * nk)
                if new:
                    # packed one-word stage records; row counts fall out of
                    # the writeback cursor pass
                    yield op_spad(new, rw="write")
                    yield from self._stage_put(wd, t, staged)
            elif self.version == 2:
                yield op_atomic("spad", n=steps)
                yield op_atomic("spad", n=nk)
                if new:
                    yield op_atomic("spad", n=new)
            else:
                # exclusive owner: plain scratchpad traffic, no atomics
                yield op_spad(steps, rw="read")
                yield op_spad(nk, rw="write")

    def _hash_dense_range(self, wd, i, p0, p1, t):
        """Accumulate products of a-elements [p0, p1) of dense row i."""
        yield op_dram(self._ship_elem_addr(wd, p0), ELEMENT_BYTES * (p1 - p0),
                      n=p1 - p0)
        for p in range(p0, p1):
            k = self.a_cols[p]
            bc, bv = self.b_rows[k]
            nk = len(bc)
            if not nk:
                continue
            yield from self._element_ops(wd, k, nk)
            new, staged = self._accumulate(wd, i, bc, bv, self.a_vals[p])
            self.flops_done += nk
            addr, nbytes = self._acc_cycle_addr(wd, i, self.b_row_nlines[k])
            if self.version == 1:
                yield op_dram(addr, nbytes, n=nk, rw="read")
                yield op_dram(addr, nbytes, n=nk, rw="write")
                if new:
                    yield op_dram(self.touch_region.base, _IDX_BYTES * new,
                                  n=new, rw="write")
            elif self.version == 2:
                yield op_atomic("dram", n=nk, addr=addr, nbytes=nbytes)
                if new:
                    yield op_atomic("spad", n=new)
            else:
                yield op_atomic("dram", n=nk, native=True, nowait=True,
                                nbytes=_VAL_BYTES * nk)
                if new:
                    yield op_spad(new, rw="write")
                    yield from self._stage_put(wd, t, staged)

    def _stage_put(self, wd, t, staged):
        """Append claimed entries to the thread's stage buffer, flushing a
        full buffer to the DRAM stash through the DMA engine."""
        rows, cols, srcs = self.stage[t]
        rows.extend(e[0] for e in staged)
        cols.extend(e[1] for e in staged)
        srcs.extend(e[2] for e in staged)
        if len(rows) >= self.stage_cap:
            parity = self.open_idx % 2
            n = len(rows)
            fr, fc, fs = wd.flushed[t]
            fr.extend(rows)
            fc.extend(cols)
            fs.extend(srcs)
            rows.clear(); cols.clear(); srcs.clear()
            yield from self._pop_deferred(t)
            if self.flush_handle[t] is not None:
                # the previous flush must have left the buffer before reuse
                yield op_dma_wait(self.flush_handle[t])
            h = yield op_dma("copy", n * _STAGE_BYTES,
                            src=self._stage_addr(t, parity),
                            dst=self.stash_region.base + wd.stash_used,
                            src_space="spad", dst_space="dram")
            wd.stash_used += n * _STAGE_BYTES
            self.flush_handle[t] = h

    def _claimed_work(self, wd):
        """Yield claimed work items under the two-counter token scheme:
        dense chunks first (the large granules, so stragglers cannot pick
        one up late), then the two half-row tokens per row."""
        m = self.m
        a = self.a
        c0 = self.cnt_region.base
        c1 = self.cnt_region.base + 8
        while True:
            ck = m.atomic_fetch_add(c1, 1)
            yield ("claim", None)
            if ck >= len(wd.chunks):
                break
            yield ("dense", wd.chunks[ck])
        while True:
            tok = m.atomic_fetch_add(c0, 1)
            yield ("claim", None)
            if tok >= wd.n_tokens:
                break
            li, half = divmod(tok, 2)
            i = wd.r0 + li
            if wd.win.row_class[li]:
                continue
            s, e = int(a.row_ptr[i]), int(a.row_ptr[i + 1])
            if s == e:
                continue
            mid = s + (e - s + 1) // 2
            p0, p1 = (s, mid) if half == 0 else (mid, e)
            if p0 < p1:
                yield ("sparse", (i, p0, p1))

    # -- writeback helpers ---------------------------------------------------

    def _scan_section(self, wd, t, span, overlap):
        """Occupied entries of section t of the live table under the
        overlap-extended bracket.  Returns (n_scanned, rels, slots) with
        the section's home-owned entries in slot-scan order."""
        bins = self.bins
        size = -(-span // self.W)
        lo = t * size
        hi = min(lo + size, span)
        if lo >= span:
            return 0, [], []
        n_scan = min(hi + overlap - lo, bins)
        rels = []
        slots = []
        tags = wd.tags
        home_of = self._home
        for off in range(n_scan):
            s = lo + off
            if s >= bins:
                s -= bins
            rel = tags[s]
            if rel == EMPTY:
                continue
            home = home_of(rel)
            if lo <= home < hi:
                rels.append(rel)
                slots.append(s)
        return n_scan, rels, slots

    def _emit(self, wd, key, rows, cols, vals):
        wd.emit_parts[key] = (np.asarray(rows, dtype=np.int64),
                              np.asarray(cols, dtype=np.int64),
                              np.asarray(vals, dtype=np.float64))

    def _c_write_ops(self, n):
        # stream through the output block rather than rewriting one spot,
        # so the cache sees the real fresh-line write pattern
        cap = max(self.out_cap, 1)
        cur = self.c_cursor
        if cur + n > cap:
            cur = 0
        self.c_cursor = cur + n
        yield op_dram(self.c_region.base + cur * _IDX_BYTES,
                      _IDX_BYTES * n, n=n, rw="write")
        yield op_dram(self.c_val_base + cur * _VAL_BYTES,
                      _VAL_BYTES * n, n=n, rw="write")

    def _dense_rows_of(self, wd, t):
        return [i for i in wd.dense_rows if wd.dense_slot[i] % self.W == t]

    def _write_v1(self, wd, t):
        ncols = self.ncols
        nsp = len(wd.sparse_list)
        span = (nsp * ncols - 1 >> self.shift) + 1 if ncols and nsp else 0
        span = min(span, self.bins)
        n_scan, rels, slots = self._scan_section(wd, t, span, wd.max_disp)
        if n_scan:
            yield op_spad(n_scan, rw="read")
        ents = []
        keys = []
        shifts = 0
        for rel, s in zip(rels, slots):
            pos = bisect.bisect_left(keys, rel)
            shifts += len(keys) - pos
            keys.insert(pos, rel)
            ents.insert(pos, (rel, wd.vals[s]))
            wd.tags[s] = EMPTY
        n = len(ents)
        # publish the section count, read the others, prefix locally
        yield op_spad(1, rw="write")
        yield op_spad(self.W, rw="read")
        yield op_exec(self.W)
        if n:
            yield op_exec(n + shifts)
            yield op_spad(n, rw="read")
            yield from self._c_write_ops(n)
            rows = [wd.r0 + wd.sparse_list[rel // ncols] for rel in keys]
            cols = [rel % ncols for rel in keys]
            self._emit(wd, (0, t), rows, cols, [e[1] for e in ents])
        for i in self._dense_rows_of(wd, t):
            acc = wd.acc[i]
            m_t = len(acc)
            if not m_t:
                continue
            cols = np.sort(np.fromiter(acc.keys(), dtype=np.int64, count=m_t))
            yield op_exec(m_t * max(int(math.log2(m_t)) if m_t > 1 else 1, 1))
            addr, nbytes = self._acc_cycle_addr(wd, i, np.unique(cols >> 3).size)
            yield op_dram(addr, nbytes, n=m_t, rw="read")
            yield op_dram(addr, nbytes, n=m_t, rw="write")   # zero for reuse
            yield from self._c_write_ops(m_t)
            self._emit(wd, (1, i), [i] * m_t, cols,
                       [acc[int(j)] for j in cols])

    def _write_common_prefix(self, wd, t):
        if t == 0:
            rows = wd.r1 - wd.r0
            self.cnt_view[0:2] = 0
            yield op_spad(2, rw="write")
            yield op_spad(rows, rw="read")
            yield op_exec(rows)

    def _write_v2(self, wd, t):
        yield from self._write_common_prefix(wd, t)
        n_scan, rels, slots = self._scan_section(wd, t, self.bins, self.thresh)
        if n_scan:
            yield op_spad(n_scan, rw="read")
        n = len(rels)
        if n:
            yield op_exec(n)                      # decode the tags
            yield op_atomic("spad", n=n)          # row write cursors
            yield op_spad(n, rw="read")           # value loads
            yield op_spad(n, rw="write")          # slot resets
            yield from self._c_write_ops(n)
            ncols = self.ncols
            rows = [wd.r0 + wd.sparse_list[rel // ncols] for rel in rels]
            cols = [rel % ncols for rel in rels]
            self._emit(wd, (0, t), rows, cols, [wd.vals[s] for s in slots])
            for s in slots:
                wd.tags[s] = EMPTY
        for i in self._dense_rows_of(wd, t):
            acc = wd.acc[i]
            m_t = len(acc)
            if not m_t:
                continue
            n_lines = len({c >> 3 for c in acc})
            addr, nbytes = self._acc_cycle_addr(wd, i, n_lines)
            yield op_dram(addr, nbytes, n=m_t, rw="read")
            yield op_dram(addr, nbytes, n=m_t, rw="write")   # zero for reuse
            yield from self._c_write_ops(m_t)
            self._emit(wd, (1, i), [i] * m_t, list(acc.keys()),
                       list(acc.values()))

    def _write_v3(self, wd, t):
        yield from self._write_common_prefix(wd, t)
        parity = self.open_idx % 2
        yield from self._pop_deferred(t, len(self.deferred[t]))
        if self.flush_handle[t] is not None:
            yield op_dma_wait(self.flush_handle[t])
            self.flush_handle[t] = None
        fr, fc, fs = wd.flushed[t]
        rows, cols, srcs = self.stage[t]
        nf, ns = len(fr), len(rows)
        n = nf + ns
        if nf:
            yield op_dram(self.stash_region.base, _STAGE_BYTES * nf, n=nf)
        if ns:
            yield op_spad(ns, rw="read")
        if n:
            yield op_atomic("spad", n=n)          # row write cursors
            yield op_spad(n, rw="write")          # scatter offset lists
            all_rows = fr + rows
            all_cols = fc + cols
            all_srcs = fs + srcs
            vals = [wd.vals[s] if s >= 0
                    else wd.acc[wd.r0 + r][c]
                    for r, c, s in zip(all_rows, all_cols, all_srcs)]
            self._emit(wd, (0, t), [wd.r0 + r for r in all_rows], all_cols, vals)
            # build the transfers now, hand them to the engine piecemeal
            # during the next window: the engine is a FIFO, so launching the
            # whole batch at once would park later traffic behind it
            defer = self.deferred[t]
            defer.append((parity, "scatter", _IDX_BYTES * n,
                          self._stage_addr(t, parity),
                          self.c_region.base, n, "spad", "dram"))
            defer.append((parity, "gather", _VAL_BYTES * n,
                          self.v3_table.base + parity * self.bins * 8,
                          self.c_val_base, n, "dram", "dram"))
            tslots = [s for s in all_srcs if s >= 0]
            if tslots:
                defer.append((parity, "scatter", _VAL_BYTES * len(tslots), -1,
                              self.v3_table.base + parity * self.bins * 8,
                              len(tslots), "spad", "dram"))
                defer.append((parity, "scatter", _VAL_BYTES * len(tslots), -1,
                              self.mirror_region.base + parity * self.bins * 8,
                              len(tslots), "spad", "spad"))
                for s in tslots:
                    wd.tags[s] = EMPTY
                    wd.vals[s] = 0.0
            dslots = n - len(tslots)
            if dslots:
                # zero the accumulator by cache line, one line per distinct
                # touched line
                lines = len({(r, c >> 3) for r, c, s
                             in zip(all_rows, all_cols, all_srcs) if s < 0})
                defer.append((parity, "scatter", 64 * lines, -1,
                              self.acc_region.base, dslots, "spad", "dram"))
            rows.clear(); cols.clear(); srcs.clear()

    def _pop_deferred(self, t, k=1):
        """Launch up to k of the previous window's writeback transfers;
        their handles are waited one parity turn later."""
        defer = self.deferred[t]
        for _ in range(min(k, len(defer))):
            parity, kind, nbytes, src, dst, n_elems, ssp, dsp = defer.pop(0)
            h = yield op_dma(kind, nbytes, src=src, dst=dst, n_elems=n_elems,
                             src_space=ssp, dst_space=dsp)
            self.pending[t][parity].append(h)

    # -- task generators -----------------------------------------------------

    def _worker_task(self, t):
        v = self.version
        for wi in range(len(self.wdata)):
            wd = self._open_window(wi)
            yield op_phase(f"w{wi:04d}/setup")
            yield op_barrier(f"w{wi}s", self.parties)
            yield op_phase(f"w{wi:04d}/hash")
            if v == 3:
                for h in self.pending[t][wi % 2]:
                    yield op_dma_wait(h)
                self.pending[t][wi % 2].clear()
            if v == 1:
                for li in range(t, wd.r1 - wd.r0, self.W):
                    i = wd.r0 + li
                    s, e = int(self.a.row_ptr[i]), int(self.a.row_ptr[i + 1])
                    if s == e:
                        continue
                    if wd.win.row_class[li]:
                        yield from self._hash_dense_range(wd, i, s, e, t)
                    else:
                        yield from self._hash_sparse_row(wd, i, s, e, t)
            else:
                for kind, item in self._claimed_work(wd):
                    if kind == "claim":
                        yield op_atomic("spad", n=1)
                    elif kind == "sparse":
                        yield from self._hash_sparse_row(wd, *item, t)
                    else:
                        yield from self._hash_dense_range(wd, *item, t)
            yield op_barrier(f"w{wi}h", self.parties)
            yield op_phase(f"w{wi:04d}/write")
            if v == 1:
                yield from self._write_v1(wd, t)
            elif v == 2:
                yield from self._write_v2(wd, t)
            else:
                yield from self._write_v3(wd, t)
            yield op_barrier(f"w{wi}w", self.parties)
        if v == 3 and self.wdata:
            # drain: launch the final window's transfers and wait everything
            yield from self._pop_deferred(t, len(self.deferred[t]))
            for par in (0, 1):
                for h in self.pending[t][par]:
                    yield op_dma_wait(h)
                self.pending[t][par].clear()

    def _stc_task(self):
        a = self.a
        for wi, wd in enumerate(self.wdata):
            yield op_phase(f"w{wi:04d}/setup")
            handles = []
            if wd.r1 > wd.r0:
                h = yield op_dma("copy", (wd.r1 - wd.r0 + 1) * _PTR_BYTES,
                                src=self.a_region.base + wd.r0 * _PTR_BYTES,
                                dst=self.ship.base,
                                src_space="dram", dst_space="dram")
                handles.append(h)
            if wd.nnz_a:
                h = yield op_dma("copy", wd.nnz_a * ELEMENT_BYTES,
                                src=self.a_region.base + (a.nrows + 1) * _PTR_BYTES
                                    + wd.a_lo * ELEMENT_BYTES,
                                dst=self.ship.base + (wd.r1 - wd.r0 + 1) * _PTR_BYTES,
                                src_space="dram", dst_space="dram")
                handles.append(h)
            if wd.ship_idx_bytes:
                h = yield op_dma("gather", wd.ship_idx_bytes,
                                src=self.b_idx_base,
                                dst=self.ship.base + wd.ship_a_bytes,
                                n_elems=wd.ship_idx_bytes // _IDX_BYTES,
                                src_space="dram", dst_space="dram")
                handles.append(h)
            for h in handles:
                yield op_dma_wait(h)
            yield op_barrier(f"w{wi}s", self.parties)
            yield op_phase(f"w{wi:04d}/hash")
            yield op_barrier(f"w{wi}h", self.parties)
            yield op_phase(f"w{wi:04d}/write")
            yield op_barrier(f"w{wi}w", self.parties)

    # -- entry point ---------------------------------------------------------

    def execute(self, utilization_interval, priority):
        tasks = {self.workers[t]: self._worker_task(t) for t in range(self.W)}
        tasks[self.stc] = self._stc_task()
        trace = self.m.run(tasks, utilization_interval=utilization_interval,
                           priority=priority)
        output = self._finalize()
        agg = ProbeStats(
            insertions=self.table_stats.insertions + self.acc_touches,
            merges=self.table_stats.merges + self.acc_merges,
            collisions=self.table_stats.collisions,
            max_probe_length=self.table_stats.max_probe_length)
        return KernelReport(
            version=self.version,
            output=output,
            trace=trace,
            plan=self.plan,
            probe_stats=agg,
            table_stats=self.table_stats,
            accumulator_touches=self.acc_touches,
            accumulator_merges=self.acc_merges,
            flops=self.flops_done)


def _run_kernel(version, a, b, machine, plan, utilization_interval, priority):
    if machine is None:
        machine = Machine(MachineConfig(native_8byte=(version == 3)))
    if plan is None:
        plan = plan_windows(a, b, machine.config)
    run = _Run(version, a, b, machine, plan)
    return run.execute(utilization_interval, priority)


def smash_v1(a: CsrMatrix, b: CsrMatrix, machine: Machine | None = None,
             plan: WindowPlan | None = None, *, utilization_interval: int = 8192,
             priority: list | None = None) -> KernelReport:
    """Static row distribution, upper-bits hashing, sorting writeback.

    Output columns are sorted within each row.  Allocates its regions on
    the given machine, so reuse a machine across runs only deliberately.
    """
    return _run_kernel(1, a, b, machine, plan, utilization_interval, priority)


def smash_v2(a: CsrMatrix, b: CsrMatrix, machine: Machine | None = None,
             plan: WindowPlan | None = None, *, utilization_interval: int = 8192,
             priority: list | None = None) -> KernelReport:
    """Token-claimed half rows, lower-bits hashing, unsorted writeback."""
    return _run_kernel(2, a, b, machine, plan, utilization_interval, priority)


def smash_v3(a: CsrMatrix, b: CsrMatrix, machine: Machine | None = None,
             plan: WindowPlan | None = None, *, utilization_interval: int = 8192,
             priority: list | None = None) -> KernelReport:
    """V2's claiming with a DRAM value table updated by no-reply native
    atomics and a DMA-driven writeback overlapped with the next window.

    The default machine enables native 8-byte DRAM atomics; on a machine
    without them the kernel still runs, it just pays line traffic.
    """
    return _run_kernel(3, a, b, machine, plan, utilization_interval, priority)
