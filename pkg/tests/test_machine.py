import numpy as np
import pytest

from smash.machine import (
    AllocationError,
    CostTable,
    DeadlockError,
    Machine,
    MachineConfig,
    UnmappedAddressError,
    machine_new,
    op_barrier,
    op_dma,
    op_dma_wait,
    op_dram,
    op_exec,
    op_phase,
    op_spad,
    op_atomic,
)


def default_machine(**kw):
    cfg = MachineConfig(**kw)
    return Machine(cfg)


# --- construction and geometry -------------------------------------------

def test_default_topology():
    m = machine_new()
    assert len(m.worker_ids()) == 64          # 4 MTCs x 16 contexts
    assert len(m.stc_ids()) == 2
    assert m.config.cache_sets == 64          # 16KB / 4-way / 64B lines


def test_two_blocks_doubles_contexts():
    m = default_machine(blocks=2)
    assert len(m.worker_ids()) == 128
    assert len(m.worker_ids(block=1)) == 64


def test_invalid_geometry_rejected():
    with pytest.raises(ValueError):
        MachineConfig(cache_bytes=1000).validate()   # not divisible by line*assoc
    with pytest.raises(ValueError):
        MachineConfig(mtc_per_block=0).validate()
    with pytest.raises(ValueError):
        CostTable(dram_access_cycles=0).validate()
    with pytest.raises(ValueError):
        CostTable(issue_width_per_mtc=2).validate()


# --- scheduling ----------------------------------------------------------

def unit_ops_task(n):
    def task():
        for _ in range(n):
            yield op_exec(1)
    return task()


def test_single_thread_100_alu():
    m = machine_new()
    tr = m.run({0: unit_ops_task(100)})
    assert tr.total_cycles == 100
    assert tr.issued_instructions == 100
    assert tr.issued_instructions / tr.total_cycles == 1.0


def test_round_robin_16_threads_one_mtc():
    m = machine_new()
    tasks = {gid: unit_ops_task(10) for gid in range(16)}   # all on MTC 0
    tr = m.run(tasks)
    assert tr.total_cycles == 160
    for gid in range(16):
        assert tr.active[gid] == 10
        assert tr.active[gid] / tr.total_cycles == 1 / 16


def test_threads_on_different_mtcs_run_in_parallel():
    m = machine_new()
    tr = m.run({0: unit_ops_task(50), 16: unit_ops_task(50)})
    assert tr.total_cycles == 50


def test_determinism_byte_identical():
    def build():
        m = machine_new()
        reg = m.dgas_partition(1 << 16)
        tasks = {}
        for gid in range(8):
            def task(g=gid):
                yield op_exec(3 + g)
                yield op_dram(reg.base + 64 * g, 64, 8)
                yield op_spad(4)
                yield op_barrier("x", 8)
                yield op_exec(1)
            tasks[gid] = task()
        return m.run(tasks)
    assert build().to_json() == build().to_json()


def test_ipc_never_exceeds_mtc_count():
    m = machine_new()
    tasks = {gid: unit_ops_task(40) for gid in m.worker_ids()}
    tr = m.run(tasks)
    ipc = tr.issued_instructions / tr.total_cycles
    assert ipc <= m.config.mtc_per_block * m.config.blocks + 1e-12
    assert ipc == pytest.approx(4.0)          # fully issue-bound program


def test_stall_plus_active_bounded():
    m = machine_new()
    reg = m.dgas_partition(1 << 20)
    def task():
        yield op_dram(reg.base, 4096, 64)
        yield op_exec(10)
    tr = m.run({0: task()})
    assert tr.active[0] + tr.stall[0] <= tr.total_cycles


# --- atomics -------------------------------------------------------------

def test_cas_on_empty_slot():
    m = machine_new()
    reg = m.dgas_partition(64)
    reg.view(np.int64)[:] = -1
    ok, observed = m.atomic_cas(reg.base, -1, 7)
    assert ok and observed == -1
    ok, observed = m.atomic_cas(reg.base, -1, 9)
    assert not ok and observed == 7


def test_cas_same_cycle_lower_thread_wins():
    for first, second in [(0, 16), (16, 0)]:
        m = machine_new()
        reg = m.dgas_partition(64)
        reg.view(np.int64)[:] = -1
        outcomes = {}
        def contender(gid, tag):
            ok, _ = m.atomic_cas(reg.base, -1, tag)
            outcomes[gid] = ok
            yield op_atomic("spad")
        tr = m.run({first: contender(first, 100 + first),
                    second: contender(second, 100 + second)})
        assert sum(outcomes.values()) == 1
        assert outcomes[0]                      # lower thread id wins the tie
        assert reg.view(np.int64)[0] == 100


def test_fetch_add_returns_old():
    m = machine_new()
    reg = m.dgas_partition(64)
    reg.view(np.float64)[0] = 1.5
    old = m.atomic_fetch_add(reg.base, 2.5, dtype=np.float64)
    assert old == 1.5
    assert reg.view(np.float64)[0] == 4.0


def test_fetch_add_64_threads():
    m = machine_new()
    reg = m.dgas_partition(64)
    def bump():
        m.atomic_fetch_add(reg.base, 1)
        yield op_atomic("spad")
    m.run({gid: bump() for gid in m.worker_ids()})
    assert reg.view(np.int64)[0] == 64


def test_remote_atomic_same_state_higher_cost():
    def run(remote):
        m = default_machine(blocks=2)
        reg = m.dgas_partition(64, affinity=0)
        def task():
            m.atomic_fetch_add(reg.base, 5)
            yield op_atomic("dram", remote=remote)
        tr = m.run({66: task()})     # a worker on block 1
        return tr.total_cycles, int(reg.view(np.int64)[0])
    local_cycles, local_val = run(False)
    remote_cycles, remote_val = run(True)
    assert local_val == remote_val == 5
    assert remote_cycles > local_cycles


# --- memory and cache ----------------------------------------------------

def test_same_word_miss_then_hit():
    m = machine_new()
    reg = m.dgas_partition(4096)
    m.mem_access(reg.base, 8, "read")
    assert (m.cache_misses, m.cache_hits) == (1, 0)
    m.mem_access(reg.base, 8, "read")
    assert (m.cache_misses, m.cache_hits) == (1, 1)


def test_streaming_64kb_misses():
    m = machine_new()
    reg = m.dgas_partition(1 << 16)
    m.mem_access(reg.base, 1 << 16, "read", n_accesses=(1 << 16) // 8)
    assert m.cache_misses == 1024             # 64KB / 64B lines


def test_streaming_hit_rate_is_seven_eighths():
    m = machine_new()
    reg = m.dgas_partition(1 << 14)
    def task():
        for i in range(1024):
            yield op_dram(reg.base + 8 * i, 8, 1)
    tr = m.run({0: task()})
    assert tr.cache_misses == 128
    assert tr.cache_hits == 896
    assert tr.cache_hit_rate() == 7 / 8


def test_write_back_write_allocate_traffic():
    m = machine_new()
    reg = m.dgas_partition(1 << 20)
    line = m.config.cache_line_bytes
    # dirty more lines than the cache holds; evictions must write back
    nlines = (m.config.cache_bytes // line) + 64
    for i in range(nlines):
        m.mem_access(reg.base + i * line, 8, "write")
    assert m.dram_bytes_read == nlines * line            # fills on write miss
    assert m.dram_bytes_written == 64 * line             # evicted dirty lines
    wb = m.flush_caches()
    assert wb == m.config.cache_bytes                    # rest still dirty


def test_spad_bypasses_cache():
    m = machine_new()
    reg = m.alloc_spad(0, 4096)
    lat = m.mem_access(reg.base, 8, "read")
    assert lat == m.cost.spad_access_cycles
    assert m.cache_misses == 0 and m.spad_accesses == 1


def test_native_8byte_moves_exact_bytes():
    m = default_machine(native_8byte=True)
    reg = m.dgas_partition(4096)
    m.mem_access(reg.base, 8, "read", native=True)
    assert m.dram_bytes_read == 8
    assert m.cache_misses == 0
    # flag off: same request falls back to line accounting
    m2 = machine_new()
    reg2 = m2.dgas_partition(4096)
    m2.mem_access(reg2.base, 8, "read", native=True)
    assert m2.dram_bytes_read == 64


def test_unmapped_address_rejected():
    m = machine_new()
    with pytest.raises(UnmappedAddressError):
        m.mem_access(0xDEAD, 8)
    with pytest.raises(UnmappedAddressError):
        m.atomic_cas(0xDEAD, 0, 1)


# --- DGAS ----------------------------------------------------------------

def test_dgas_disjoint_allocations():
    m = machine_new()
    a = m.dgas_partition(1000)
    b = m.dgas_partition(1000)
    s = m.alloc_spad(0, 1000)
    ranges = sorted([(a.base, a.end), (b.base, b.end), (s.base, s.end)])
    for (lo1, hi1), (lo2, hi2) in zip(ranges, ranges[1:]):
        assert hi1 <= lo2


def test_dgas_affinity_remote_reads_cost_more():
    def run(reader_gid):
        m = default_machine(blocks=2)
        reg = m.dgas_partition(4096, affinity=0)
        def task():
            yield op_dram(reg.base, 64, 8)
        return m.run({reader_gid: task()}).total_cycles
    local = run(0)       # worker on block 0
    remote = run(66)     # worker on block 1
    assert remote > local


def test_dram_capacity_cap():
    m = default_machine(dram_capacity=1 << 20)
    m.dgas_partition(1 << 19)
    with pytest.raises(AllocationError):
        m.dgas_partition(1 << 20)
    # default: unlimited
    machine_new().dgas_partition(1 << 30)


def test_spad_capacity_enforced():
    m = machine_new()
    with pytest.raises(AllocationError):
        m.alloc_spad(0, m.config.spad_bytes + 1)


# --- DMA -----------------------------------------------------------------

def test_dma_copy_accounting():
    m = machine_new()
    spad = m.alloc_spad(0, 4096)
    dram = m.dgas_partition(4096)
    def task():
        h = yield op_dma("copy", 4096, src=spad.base, dst=dram.base,
                         src_space="spad", dst_space="dram")
        yield op_dma_wait(h)
    tr = m.run({0: task()})
    assert tr.dram_bytes_written == 4096
    assert tr.dma_ops == 1


def test_dma_scatter_one_instruction_k_writes():
    m = machine_new()
    dram = m.dgas_partition(1 << 16)
    k = 100
    def task():
        h = yield op_dma("scatter", 8 * k, dst=dram.base, n_elems=k,
                         src_space="spad", dst_space="dram")
        yield op_dma_wait(h)
    tr = m.run({0: task()})
    assert tr.issued[0] == 2                  # the submit and the wait
    assert tr.dram_bytes_written == 8 * k


def test_dma_overlaps_with_compute():
    cost = CostTable()
    nbytes = 4096
    dma_path = cost.dma_setup_cycles + -(-nbytes // cost.dma_bytes_per_cycle)
    def run(alu, use_wait=True):
        m = machine_new()
        spad = m.alloc_spad(0, nbytes)
        dram = m.dgas_partition(nbytes)
        def task():
            h = yield op_dma("copy", nbytes, src=spad.base, dst=dram.base,
                             src_space="spad", dst_space="dram")
            yield op_exec(alu)
            if use_wait:
                yield op_dma_wait(h)
        return m.run({0: task()}).total_cycles
    total = run(100)
    serial = 1 + dma_path + 100 + 1
    # paths overlap: the wait resolves at whichever of the two finishes last
    assert total == max(1 + 100 + 1, 1 + dma_path)
    assert total < serial


def test_dma_overlapping_copy_rejected():
    m = machine_new()
    dram = m.dgas_partition(4096)
    def task():
        yield op_dma("copy", 256, src=dram.base, dst=dram.base + 128)
    with pytest.raises(ValueError, match="overlap"):
        m.run({0: task()})


# --- barriers ------------------------------------------------------------

def test_barrier_release_timing():
    m = machine_new()
    def early():
        yield op_exec(10)
        yield op_barrier("b", 2)
    def late():
        yield op_exec(500)
        yield op_barrier("b", 2)
    tr = m.run({0: early(), 16: late()})      # separate MTCs, no issue contention
    assert tr.total_cycles == 500 + m.cost.barrier_cycles


def test_single_thread_barrier_pass_through():
    m = machine_new()
    def task():
        yield op_barrier("solo", 1)
    tr = m.run({0: task()})
    assert tr.total_cycles == m.cost.barrier_cycles
    assert tr.barrier_count == 1


def test_barrier_flushes_block_cache():
    m = machine_new()
    dram = m.dgas_partition(4096)
    def task():
        yield op_dram(dram.base, 8, 1, rw="write")     # dirty one line
        yield op_barrier("b", 1)
    tr = m.run({0: task()})
    assert tr.dram_bytes_written == m.config.cache_line_bytes


def test_deadlock_detection():
    m = machine_new()
    def arrives():
        yield op_barrier("g", 2)
    def never():
        yield op_exec(5)
    with pytest.raises(DeadlockError, match="blocked"):
        m.run({0: arrives(), 1: never()})


# --- traffic conservation ------------------------------------------------

def test_traffic_conservation():
    m = machine_new()
    dram = m.dgas_partition(1 << 16)
    spad = m.alloc_spad(0, 4096)
    line = m.config.cache_line_bytes
    def task():
        yield op_dram(dram.base, 1024, 128)              # 16 line fills
        yield op_dma("copy", 2048, src=spad.base, dst=dram.base + 2048,
                     src_space="spad", dst_space="dram")
        yield op_exec(5)
    tr = m.run({0: task()})
    assert tr.dram_bytes_read == 16 * line
    assert tr.dram_bytes_written == 2048


# --- phases and utilization ----------------------------------------------

def test_phase_accounting():
    m = machine_new()
    def task():
        yield op_phase("ramp")
        yield op_exec(30)
        yield op_phase("main")
        yield op_exec(70)
    tr = m.run({0: task()})
    assert tr.phase_active[("ramp", 0)] == 30
    assert tr.phase_active[("main", 0)] == 70
    assert tr.phase_cycles("ma")[0] == 70


def test_utilization_samples():
    m = machine_new()
    tr = m.run({0: unit_ops_task(100)}, utilization_interval=16)
    bins = tr.utilization_samples[0]
    assert bins.sum() == 100
    csv_text = tr.intervals_csv()
    assert "interval_start" in csv_text.splitlines()[0]
    assert len(tr.threads_csv().splitlines()) == m.n_threads() + 1


# --- config file ---------------------------------------------------------

def test_config_from_file(tmp_path):
    p = tmp_path / "machine.cfg"
    p.write_text(
        "# test machine\n"
        "blocks = 2\n"
        "spad_bytes = 1048576\n"
        "dram_access_cycles = 50\n"
        "native_8byte = true\n"
        "dram_capacity = none\n")
    cfg = MachineConfig.from_file(p)
    assert cfg.blocks == 2
    assert cfg.spad_bytes == 1 << 20
    assert cfg.cost.dram_access_cycles == 50
    assert cfg.native_8byte is True
    assert cfg.dram_capacity is None


def test_config_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("warp_drive = 9\n")
    with pytest.raises(ValueError, match="warp_drive"):
        MachineConfig.from_file(p)
