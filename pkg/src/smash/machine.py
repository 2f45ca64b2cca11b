"""Deterministic discrete-event model of a multithreaded accelerator block.

The modeled building block is a graph-oriented compute tile: a handful of
multi-threaded cores (MTCs) that each hold 16 thread contexts and issue one
instruction per cycle round-robin among ready threads, a couple of
single-threaded service cores (STCs), a software-managed scratchpad, a small
non-coherent per-block cache in front of DRAM, a DMA offload engine, remote
atomics, and a collective engine providing barriers.  Several such blocks
share one global address space (DGAS) in which scratchpads and DRAM occupy
disjoint ranges and DRAM allocations can carry a block affinity.

Kernels run as cooperative generator tasks that yield cost descriptors
(``Op`` records built by the ``op_*`` helpers).  The scheduler is not a
cycle-by-cycle pipeline model: each yielded descriptor covers a batch of
instructions, the issue slots are charged against the owning core's issue
horizon, and memory/DMA/barrier delays extend the thread's own ready time.
Round-robin latency hiding falls out of this naturally: while one thread
sits in its stall tail, the core's issue port serves the other contexts.

Everything is integer-cycle and tie-broken by thread id, so a given
(config, program) pair produces the same ExecutionTrace byte for byte on
every run.  Wall-clock and host state never enter the model.
"""

from __future__ import annotations

import bisect
import csv
import heapq
import io
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

SPAD_BASE = 0x1000_0000
DRAM_BASE = 0x10_0000_0000


class UnmappedAddressError(KeyError):
    """Access to an address outside every allocated region."""


class DeadlockError(RuntimeError):
    """No runnable thread and no pending event; carries blocked-thread info."""


class AllocationError(RuntimeError):
    """Region request exceeds the configured capacity."""


@dataclass
class CostTable:
    """Latency and bandwidth knobs.  The architecture reference gives no
    microarchitectural numbers, so these are model parameters; the kernel
    comparisons are designed around relative, not absolute, costs."""

    spad_access_cycles: int = 2
    dram_access_cycles: int = 100
    dram_peak_bytes_per_cycle: int = 64
    dma_setup_cycles: int = 50
    dma_bytes_per_cycle: int = 64
    barrier_cycles: int = 10
    remote_extra_cycles: int = 30
    issue_width_per_mtc: int = 1

    def validate(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"cost table field {f.name} must be positive")
        if self.issue_width_per_mtc != 1:
            raise ValueError("issue width is fixed at 1 per MTC")
        return self


@dataclass
class MachineConfig:
    blocks: int = 1
    mtc_per_block: int = 4
    stc_per_block: int = 2
    threads_per_mtc: int = 16
    spad_bytes: int = 4096 * 1024
    cache_bytes: int = 16 * 1024
    cache_assoc: int = 4
    cache_line_bytes: int = 64
    cache_policy: str = "write-back-write-allocate"
    cache_flush_on_barrier: bool = True
    native_8byte: bool = False
    dram_capacity: int | None = None
    cost: CostTable = field(default_factory=CostTable)

    def validate(self):
        for name in ("blocks", "mtc_per_block", "stc_per_block", "threads_per_mtc"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.spad_bytes <= 0:
            raise ValueError("spad_bytes must be positive")
        line, assoc, total = self.cache_line_bytes, self.cache_assoc, self.cache_bytes
        if line <= 0 or assoc <= 0 or total <= 0 or total % (line * assoc):
            raise ValueError(
                f"cache geometry invalid: {total} bytes / {assoc}-way / {line}B lines")
        if self.cache_policy != "write-back-write-allocate":
            raise ValueError(f"unsupported cache policy {self.cache_policy!r}")
        self.cost.validate()
        return self

    @property
    def cache_sets(self) -> int:
        return self.cache_bytes // (self.cache_line_bytes * self.cache_assoc)

    @property
    def workers_per_block(self) -> int:
        return self.mtc_per_block * self.threads_per_mtc

    @property
    def threads_per_block(self) -> int:
        return self.workers_per_block + self.stc_per_block

    @classmethod
    def from_file(cls, path) -> "MachineConfig":
        """Load a key=value config file.  '#' starts a comment; keys are the
        field names of MachineConfig and CostTable, flat."""
        cfg = cls()
        cost_fields = {f.name: f.type for f in fields(CostTable)}
        cfg_fields = {f.name: f.type for f in fields(cls) if f.name != "cost"}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
                key, val = (s.strip() for s in line.split("=", 1))
                if key in cost_fields:
                    setattr(cfg.cost, key, int(val))
                elif key in cfg_fields:
                    cur = getattr(cfg, key)
                    if isinstance(cur, bool):
                        setattr(cfg, key, val.lower() in ("1", "true", "yes", "on"))
                    elif key == "dram_capacity":
                        setattr(cfg, key, None if val.lower() == "none" else int(val))
                    elif isinstance(cur, int):
                        setattr(cfg, key, int(val))
                    else:
                        setattr(cfg, key, val)
                else:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        return cfg.validate()


# ---------------------------------------------------------------------------
# memory regions

@dataclass
class Region:
    """One allocated range of the global address space with real backing
    storage, so atomics and table updates happen against actual memory."""

    name: str
    space: str                 # "spad" or "dram"
    block: int | None          # owning block (spad) or affinity (dram)
    base: int
    nbytes: int
    buf: np.ndarray            # uint8 backing

    def view(self, dtype) -> np.ndarray:
        return self.buf.view(dtype)

    @property
    def end(self) -> int:
        return self.base + self.nbytes

    def addr(self, index: int, itemsize: int = 8) -> int:
        return self.base + index * itemsize


class _Cache:
    """Set-associative write-back write-allocate LRU cache for one block."""

    def __init__(self, config: MachineConfig):
        self.line = config.cache_line_bytes
        self.nsets = config.cache_sets
        self.assoc = config.cache_assoc
        self.sets = [dict() for _ in range(self.nsets)]   # line -> dirty flag, LRU order

    def access_lines(self, addr: int, nbytes: int, write: bool):
        """Touch every line of [addr, addr+nbytes); returns
        (miss_lines, fill_bytes, writeback_bytes)."""
        first = addr // self.line
        last = (addr + max(nbytes, 1) - 1) // self.line
        misses = 0
        fill = 0
        wb = 0
        for ln in range(first, last + 1):
            s = self.sets[ln % self.nsets]
            if ln in s:
                dirty = s.pop(ln)
                s[ln] = dirty or write     # reinsert as most-recent
            else:
                misses += 1
                fill += self.line          # write-allocate: misses always fill
                if len(s) >= self.assoc:
                    victim = next(iter(s))     # LRU sits at insertion-order front
                    if s.pop(victim):
                        wb += self.line
                s[ln] = write
        return misses, fill, wb

    def flush(self):
        """Invalidate everything, returning write-back bytes for dirty lines."""
        wb = 0
        for s in self.sets:
            wb += sum(1 for d in s.values() if d) * self.line
            s.clear()
        return wb


# ---------------------------------------------------------------------------
# cost descriptors yielded by tasks

@dataclass
class Op:
    kind: str
    n: int = 1                  # instructions issued
    nbytes: int = 0
    addr: int = -1
    rw: str = "read"
    native: bool = False
    remote: bool = False
    nowait: bool = False
    label: str = ""
    group: str = ""
    group_size: int = 0
    dma_kind: str = "copy"
    src: int = -1
    dst: int = -1
    handle: int = -1
    n_elems: int = 0


def op_exec(n: int) -> Op:
    """n plain ALU/control instructions."""
    return Op("exec", n=n)


def op_spad(n: int, rw: str = "read") -> Op:
    """n scratchpad word accesses."""
    return Op("spad", n=n, rw=rw)


def op_dram(addr: int, nbytes: int, n: int, rw: str = "read",
            native: bool = False) -> Op:
    """A batch of n DRAM accesses over the contiguous range starting at addr.

    The cached path consults the block cache per line; the native path (only
    honored when the machine enables native 8-byte support) moves exactly
    nbytes with no line fills.
    """
    return Op("dram", n=n, nbytes=nbytes, addr=addr, rw=rw, native=native)


def op_atomic(space: str, n: int = 1, remote: bool = False, native: bool = False,
              nowait: bool = False, nbytes: int = 0, addr: int = -1) -> Op:
    """Cost of n atomic read-modify-write instructions already applied to
    backing memory by the caller.  ``nowait`` models atomics executed at the
    memory side with no response needed, so the thread does not stall.  DRAM
    atomics with a concrete ``addr`` account their line traffic through the
    block cache; without one they are charged a full line each way."""
    return Op("atomic", n=n, label=space, remote=remote, native=native,
              nowait=nowait, nbytes=nbytes, addr=addr)


def op_dma(dma_kind: str, nbytes: int, src: int = -1, dst: int = -1,
           n_elems: int = 1, src_space: str = "dram", dst_space: str = "dram") -> Op:
    o = Op("dma_submit", n=1, nbytes=nbytes, dma_kind=dma_kind, src=src, dst=dst,
           n_elems=n_elems)
    o.label = f"{src_space}>{dst_space}"
    return o


def op_dma_wait(handle: int) -> Op:
    return Op("dma_wait", n=1, handle=handle)


def op_barrier(group: str, group_size: int) -> Op:
    """Park until ``group_size`` arrivals of ``group``; handled by the
    collective engine, so no issue slot is consumed."""
    return Op("barrier", n=0, group=group, group_size=group_size)


def op_phase(label: str) -> Op:
    """Zero-cost phase annotation; partitions per-thread active-cycle counts."""
    return Op("phase", n=0, label=label)


# ---------------------------------------------------------------------------
# trace

@dataclass
class ExecutionTrace:
    """Counters and per-thread accounting of one simulated run.

    ``issued_instructions``/``active_cycles``/``stall_cycles`` are per worker
    thread (MTC contexts first, then STCs).  Aggregate IPC style metrics are
    defined over MTC-issued instructions; STC issue is tracked separately in
    ``stc_issued`` since the service cores only run setup chores.
    """

    total_cycles: int
    n_threads: int
    issued: np.ndarray
    active: np.ndarray
    stall: np.ndarray
    mtc_issued_total: int
    stc_issued: int
    dram_bytes_read: int
    dram_bytes_written: int
    spad_accesses: int
    cache_hits: int
    cache_misses: int
    dma_ops: int
    barrier_count: int
    phase_active: dict
    utilization_interval: int
    utilization_samples: dict          # gid -> np.ndarray of issued per interval

    @property
    def issued_instructions(self) -> int:
        return self.mtc_issued_total

    def cache_hit_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_hits / total if total else 0.0

    def phase_cycles(self, phase_prefix: str) -> dict:
        """Per-thread active cycles summed over phases starting with prefix."""
        out = {}
        for (label, gid), cycles in self.phase_active.items():
            if label.startswith(phase_prefix):
                out[gid] = out.get(gid, 0) + cycles
        return out

    def to_json(self) -> str:
        doc = {
            "total_cycles": int(self.total_cycles),
            "n_threads": int(self.n_threads),
            "issued_instructions": int(self.mtc_issued_total),
            "stc_issued": int(self.stc_issued),
            "dram_bytes_read": int(self.dram_bytes_read),
            "dram_bytes_written": int(self.dram_bytes_written),
            "spad_accesses": int(self.spad_accesses),
            "cache_hits": int(self.cache_hits),
            "cache_misses": int(self.cache_misses),
            "dma_ops": int(self.dma_ops),
            "barrier_count": int(self.barrier_count),
            "threads": [
                {"thread": t, "issued": int(self.issued[t]),
                 "active": int(self.active[t]), "stall": int(self.stall[t])}
                for t in range(self.n_threads)
            ],
            "phase_active": {
                f"{label}/{gid}": int(c)
                for (label, gid), c in sorted(self.phase_active.items())
            },
            "utilization_interval": int(self.utilization_interval),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def threads_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["thread", "issued", "active_cycles", "stall_cycles"])
        for t in range(self.n_threads):
            w.writerow([t, int(self.issued[t]), int(self.active[t]), int(self.stall[t])])
        return buf.getvalue()

    def intervals_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["interval_start", "thread", "issued_in_interval"])
        for gid in sorted(self.utilization_samples):
            bins = self.utilization_samples[gid]
            for i, v in enumerate(bins):
                if v:
                    w.writerow([i * self.utilization_interval, gid, int(v)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# the machine

class _Thread:
    __slots__ = ("gid", "block", "unit", "gen", "ready", "issued", "active",
                 "stall", "phase", "parked", "done", "result")

    def __init__(self, gid, block, unit):
        self.gid = gid
        self.block = block
        self.unit = unit          # issue unit index (shared per MTC)
        self.gen = None
        self.ready = 0
        self.issued = 0
        self.active = 0
        self.stall = 0
        self.phase = ""
        self.parked = False
        self.done = False
        self.result = None


class Machine:
    """One simulated multi-block system; see module docstring."""

    def __init__(self, config: MachineConfig):
        self.config = config.validate()
        self.cost = config.cost
        self.regions: list[Region] = []
        self._bases: list[int] = []
        self._spad_next = [SPAD_BASE + b * _align(config.spad_bytes)
                           for b in range(config.blocks)]
        self._spad_used = [0] * config.blocks
        self._dram_next = DRAM_BASE
        self._dram_used = 0
        self.caches = [_Cache(config) for _ in range(config.blocks)]
        # counters shared by direct calls and scheduled runs
        self.dram_bytes_read = 0
        self.dram_bytes_written = 0
        self.spad_accesses = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.dma_ops = 0
        self.barrier_count = 0
        self.cycle = 0

    # -- address space ------------------------------------------------------

    def alloc_spad(self, block: int, nbytes: int, name: str = "spad") -> Region:
        if self._spad_used[block] + nbytes > self.config.spad_bytes:
            raise AllocationError(
                f"scratchpad of block {block} exhausted: "
                f"{self._spad_used[block]} + {nbytes} > {self.config.spad_bytes}")
        base = self._spad_next[block] + self._spad_used[block]
        self._spad_used[block] += _align(nbytes, 8)
        return self._add_region(Region(name, "spad", block, base, nbytes,
                                       np.zeros(nbytes, dtype=np.uint8)))

    def dgas_partition(self, nbytes: int, affinity: int | None = None,
                       name: str = "dram") -> Region:
        """Allocate a DRAM range, optionally with affinity to one block."""
        cap = self.config.dram_capacity
        if cap is not None and self._dram_used + nbytes > cap:
            raise AllocationError(
                f"DRAM capacity {cap} exceeded by request of {nbytes} bytes")
        base = self._dram_next
        self._dram_next += _align(nbytes, 64)
        self._dram_used += nbytes
        return self._add_region(Region(name, "dram", affinity, base, nbytes,
                                       np.zeros(nbytes, dtype=np.uint8)))

    def _add_region(self, r: Region) -> Region:
        i = bisect.bisect_left(self._bases, r.base)
        self.regions.insert(i, r)
        self._bases.insert(i, r.base)
        return r

    def lookup(self, addr: int) -> tuple[Region, int]:
        i = bisect.bisect_right(self._bases, addr) - 1
        if i >= 0:
            r = self.regions[i]
            if r.base <= addr < r.end:
                return r, addr - r.base
        raise UnmappedAddressError(f"address {addr:#x} is not mapped")

    # -- direct semantic operations (host-level, also used by scheduled ops) --

    def mem_access(self, addr: int, nbytes: int, rw: str = "read",
                   n_accesses: int = 1, native: bool = False) -> int:
        """Perform the cache/traffic accounting of one batched access and
        return its latency in cycles.  SPAD accesses bypass the cache."""
        region, _ = self.lookup(addr)
        if region.space == "spad":
            self.spad_accesses += n_accesses
            return n_accesses * self.cost.spad_access_cycles
        if native and self.config.native_8byte:
            if rw == "read":
                self.dram_bytes_read += nbytes
            else:
                self.dram_bytes_written += nbytes
            return n_accesses * self.cost.dram_access_cycles
        block = region.block if region.block is not None else 0
        cache = self.caches[block % self.config.blocks]
        misses, fill, wb = cache.access_lines(addr, nbytes, rw == "write")
        hits = max(n_accesses - misses, 0)
        self.cache_hits += hits
        self.cache_misses += misses
        self.dram_bytes_read += fill
        self.dram_bytes_written += wb
        return hits * self.cost.spad_access_cycles + misses * self.cost.dram_access_cycles

    def atomic_cas(self, addr: int, expected: int, new: int) -> tuple[bool, int]:
        """Compare-and-swap on one 64-bit word; returns (success, observed)."""
        region, off = self.lookup(addr)
        word = region.buf[off:off + 8].view(np.int64)
        observed = int(word[0])
        if observed == expected:
            word[0] = new
            return True, observed
        return False, observed

    def atomic_fetch_add(self, addr: int, delta, dtype=np.int64):
        """Fetch-and-add on one 64-bit word (int or float); returns old value."""
        region, off = self.lookup(addr)
        word = region.buf[off:off + 8].view(dtype)
        old = word[0].item()
        word[0] = old + delta
        return old

    def flush_caches(self, block: int | None = None) -> int:
        """Write back and invalidate cache contents; returns bytes written."""
        targets = range(self.config.blocks) if block is None else [block]
        wb = 0
        for b in targets:
            wb += self.caches[b].flush()
        self.dram_bytes_written += wb
        return wb

    # -- thread topology ----------------------------------------------------

    def worker_ids(self, block: int | None = None) -> list[int]:
        """Thread ids of the MTC contexts (the kernel workers)."""
        blocks = range(self.config.blocks) if block is None else [block]
        tpb = self.config.threads_per_block
        out = []
        for b in blocks:
            out.extend(range(b * tpb, b * tpb + self.config.workers_per_block))
        return out

    def stc_ids(self, block: int | None = None) -> list[int]:
        blocks = range(self.config.blocks) if block is None else [block]
        tpb = self.config.threads_per_block
        out = []
        for b in blocks:
            base = b * tpb + self.config.workers_per_block
            out.extend(range(base, base + self.config.stc_per_block))
        return out

    def n_threads(self) -> int:
        return self.config.blocks * self.config.threads_per_block

    def thread_block(self, gid: int) -> int:
        return gid // self.config.threads_per_block

    def _issue_unit(self, gid: int) -> tuple[int, bool]:
        """(global issue-unit index, is_mtc) for a thread id."""
        cfg = self.config
        b, local = divmod(gid, cfg.threads_per_block)
        units_per_block = cfg.mtc_per_block + cfg.stc_per_block
        if local < cfg.workers_per_block:
            return b * units_per_block + local // cfg.threads_per_mtc, True
        return b * units_per_block + cfg.mtc_per_block + (local - cfg.workers_per_block), False

    # -- the scheduler ------------------------------------------------------

    def run(self, tasks: dict, utilization_interval: int = 8192,
            priority: list | None = None) -> ExecutionTrace:
        """Run ``tasks`` (thread id -> generator) to completion.

        Generators yield Op descriptors; ``yield`` evaluates to the op's
        result (a DMA handle for submissions, None otherwise).  Returns the
        ExecutionTrace; raises DeadlockError when threads block forever.

        ``priority`` optionally reorders the same-cycle tie-break: a list of
        thread ids from most to least preferred.  The default prefers lower
        ids.  Schedules differ, but a correct kernel's output must not.
        """
        cfg = self.config
        cost = self.cost
        base_counts = (self.dram_bytes_read, self.dram_bytes_written,
                       self.spad_accesses, self.cache_hits, self.cache_misses,
                       self.dma_ops, self.barrier_count)
        n_units = cfg.blocks * (cfg.mtc_per_block + cfg.stc_per_block)
        unit_free = [0] * n_units
        bw_free = 0
        dma_free = [0] * cfg.blocks
        dma_completion: dict[int, int] = {}
        dma_next_handle = 0
        barrier_wait: dict[str, list] = {}
        threads: dict[int, _Thread] = {}
        phase_active: dict = {}
        samples: dict[int, np.ndarray] = {}
        mtc_issued = 0
        stc_issued = 0
        last_finish = 0

        for gid, gen in tasks.items():
            if not (0 <= gid < self.n_threads()):
                raise ValueError(f"thread id {gid} outside machine topology")
            th = _Thread(gid, self.thread_block(gid), self._issue_unit(gid))
            th.gen = gen
            threads[gid] = th
            samples[gid] = np.zeros(16, dtype=np.int64)

        rank = {gid: gid for gid in threads}
        if priority is not None:
            for i, gid in enumerate(priority):
                if gid in rank:
                    rank[gid] = i - len(priority)

        heap = [(0, rank[gid], gid) for gid in sorted(threads)]
        heapq.heapify(heap)

        def record_issue(th, start, n):
            nonlocal mtc_issued, stc_issued
            if n <= 0:
                return
            th.issued += n
            th.active += n
            if th.unit[1]:
                mtc_issued += n
            else:
                stc_issued += n
            if th.phase:
                key = (th.phase, th.gid)
                phase_active[key] = phase_active.get(key, 0) + n
            bins = samples[th.gid]
            idx = start // utilization_interval
            if idx >= len(bins):
                grown = np.zeros(max(idx + 1, 2 * len(bins)), dtype=np.int64)
                grown[:len(bins)] = bins
                bins = samples[th.gid] = grown
            bins[idx] += n

        def reserve_bw(t_start, nbytes):
            """Serialize nbytes over the shared DRAM pipe; returns drain cycle."""
            nonlocal bw_free
            if nbytes <= 0:
                return t_start
            begin = max(bw_free, t_start)
            bw_free = begin + _ceil_div(nbytes, cost.dram_peak_bytes_per_cycle)
            return bw_free

        while heap:
            t_ready, _, gid = heapq.heappop(heap)
            th = threads[gid]
            if th.parked or th.done:
                continue
            try:
                op = th.gen.send(th.result)
            except StopIteration:
                th.done = True
                last_finish = max(last_finish, t_ready)
                continue
            th.result = None

            if op.kind == "phase":
                th.phase = op.label
                heapq.heappush(heap, (t_ready, rank[gid], gid))
                continue

            if op.kind == "barrier":
                waiters = barrier_wait.setdefault(op.group, [])
                waiters.append((th, t_ready))
                th.parked = True
                if len(waiters) == op.group_size:
                    release = max(t for _, t in waiters) + cost.barrier_cycles
                    self.barrier_count += 1
                    if cfg.cache_flush_on_barrier:
                        wb = 0
                        for b in {w.block for w, _ in waiters}:
                            wb += self.caches[b].flush()
                        self.dram_bytes_written += wb
                        reserve_bw(release, wb)
                    del barrier_wait[op.group]
                    for w, arrived in waiters:
                        w.parked = False
                        w.stall += max(0, release - arrived)
                        heapq.heappush(heap, (release, rank[w.gid], w.gid))
                continue

            unit_idx = th.unit[0]
            start = max(t_ready, unit_free[unit_idx])
            issue_wait = start - t_ready
            issue_end = start + op.n
            unit_free[unit_idx] = issue_end
            record_issue(th, start, op.n)
            tail = 0

            if op.kind == "exec":
                pass

            elif op.kind == "spad":
                self.spad_accesses += op.n
                tail = op.n * cost.spad_access_cycles

            elif op.kind == "dram":
                region, _ = self.lookup(op.addr)
                before_r, before_w = self.dram_bytes_read, self.dram_bytes_written
                before_miss = self.cache_misses
                tail = self.mem_access(op.addr, op.nbytes, op.rw, op.n, op.native)
                if (region.space == "dram" and region.block is not None
                        and region.block != th.block):
                    # crossing blocks pays a network hop per line transfer
                    hops = (self.cache_misses - before_miss) if not op.native else op.n
                    tail += hops * cost.remote_extra_cycles
                moved = (self.dram_bytes_read - before_r) + (self.dram_bytes_written - before_w)
                drain = reserve_bw(issue_end, moved)
                tail = max(tail, drain - issue_end)

            elif op.kind == "atomic":
                if op.label == "spad":
                    self.spad_accesses += op.n
                    tail = op.n * cost.spad_access_cycles
                else:
                    # a DRAM atomic is a read-modify-write executed at the
                    # memory side; it moves its operand in each direction
                    nbytes = op.nbytes if op.nbytes else op.n * 8
                    if op.native and self.config.native_8byte:
                        self.dram_bytes_read += nbytes
                        self.dram_bytes_written += nbytes
                        reserve_bw(issue_end, 2 * nbytes)
                    elif op.addr >= 0:
                        self.mem_access(op.addr, nbytes, "write", op.n, False)
                    else:
                        line = cfg.cache_line_bytes
                        self.dram_bytes_read += op.n * line
                        self.dram_bytes_written += op.n * line
                        reserve_bw(issue_end, 2 * op.n * line)
                    if not op.nowait:
                        tail = op.n * cost.dram_access_cycles
                        if op.remote:
                            tail += op.n * cost.remote_extra_cycles

            elif op.kind == "dma_submit":
                for a in (op.src, op.dst):
                    if a >= 0:
                        self.lookup(a)
                if (op.dma_kind == "copy" and op.src >= 0 and op.dst >= 0
                        and op.src < op.dst + op.nbytes and op.dst < op.src + op.nbytes):
                    raise ValueError("overlapping DMA copy ranges")
                self.dma_ops += 1
                b = th.block
                engine_start = max(dma_free[b], issue_end)
                duration = _ceil_div(op.nbytes, cost.dma_bytes_per_cycle)
                touches_dram = "dram" in op.label
                done_engine = engine_start + cost.dma_setup_cycles + duration
                if touches_dram:
                    drain = reserve_bw(engine_start + cost.dma_setup_cycles, op.nbytes)
                    done = max(done_engine, drain)
                    src_space, dst_space = op.label.split(">")
                    if dst_space == "dram":
                        self.dram_bytes_written += op.nbytes
                    if src_space == "dram":
                        self.dram_bytes_read += op.nbytes
                else:
                    done = done_engine
                dma_free[b] = done_engine
                handle = dma_next_handle
                dma_next_handle += 1
                dma_completion[handle] = done
                th.result = handle

            elif op.kind == "dma_wait":
                if op.handle not in dma_completion:
                    raise ValueError(f"wait on unknown DMA handle {op.handle}")
                done = dma_completion[op.handle]
                tail = max(0, done - issue_end)

            else:
                raise ValueError(f"unknown op kind {op.kind!r}")

            finish = issue_end + tail
            th.stall += issue_wait + tail
            heapq.heappush(heap, (finish, rank[gid], gid))

        blocked = [th.gid for th in threads.values() if th.parked]
        if blocked:
            detail = {g: [w.gid for w, _ in ws] for g, ws in barrier_wait.items()}
            raise DeadlockError(
                f"threads {blocked} blocked forever; incomplete barriers: {detail}")

        total = last_finish
        for comp in dma_completion.values():
            total = max(total, comp)
        total = max(total, bw_free)
        self.cycle = max(self.cycle, total)

        n = self.n_threads()
        issued = np.zeros(n, dtype=np.int64)
        active = np.zeros(n, dtype=np.int64)
        stall = np.zeros(n, dtype=np.int64)
        for gid, th in threads.items():
            issued[gid] = th.issued
            active[gid] = th.active
            stall[gid] = min(th.stall, max(total - th.active, 0))
        nbins = _ceil_div(total, utilization_interval) if total else 1
        trimmed = {g: b[:nbins].copy() for g, b in samples.items()}
        return ExecutionTrace(
            total_cycles=total,
            n_threads=n,
            issued=issued,
            active=active,
            stall=stall,
            mtc_issued_total=mtc_issued,
            stc_issued=stc_issued,
            dram_bytes_read=self.dram_bytes_read - base_counts[0],
            dram_bytes_written=self.dram_bytes_written - base_counts[1],
            spad_accesses=self.spad_accesses - base_counts[2],
            cache_hits=self.cache_hits - base_counts[3],
            cache_misses=self.cache_misses - base_counts[4],
            dma_ops=self.dma_ops - base_counts[5],
            barrier_count=self.barrier_count - base_counts[6],
            phase_active=phase_active,
            utilization_interval=utilization_interval,
            utilization_samples=trimmed,
        )


def machine_new(config: MachineConfig | None = None) -> Machine:
    return Machine(config if config is not None else MachineConfig())


def _align(nbytes: int, to: int = 4096) -> int:
    return (nbytes + to - 1) // to * to


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)
