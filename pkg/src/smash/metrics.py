"""Derived measurements over execution traces and matrix censuses.

Pure functions: nothing here touches a machine or mutates a trace.  The
measures fall in two groups.

Matrix-shape measures: ``arithmetic_intensity`` relates the multiply's
product count to the bytes that must cross DRAM, through the compression
factor cf = flop / nnz(C).  The intensity bound is

    ai = flop / ((nnz(A) + nnz(B) + nnz(C)) * bytes_per_element)

which equals nnz(C) * cf over the same denominator and can never exceed
cf / bytes_per_element.

Trace measures: ``aggregate_ipc`` (issued instructions per cycle over the
worker cores), ``bandwidth_utilization`` (DRAM bytes moved against the
peak the cost table allows), and ``utilization_stats`` (per-thread issue
counts, optionally restricted to one phase, with a histogram normalized
to the busiest thread in the way thread-utilization plots usually are).
"""

from __future__ import annotations

import io
import csv
import json
from dataclasses import dataclass, field

import numpy as np

WORKERS_PER_BLOCK = 64
THREADS_PER_BLOCK = 66  # 64 MTC contexts plus two STCs


@dataclass(frozen=True)
class IntensityReport:
    """Arithmetic-intensity census of one multiply.

    ``cf`` is None when the output is empty (no nonzeros to compress
    into); ``ai`` is None when every byte count is zero.  ``ai_rounded``
    carries the conventional two-decimal presentation of the intensity
    alongside the full-precision value.
    """

    flop: int
    nnz_a: int
    nnz_b: int
    nnz_c: int
    bytes_per_element: int
    cf: float | None
    ai: float | None

    @property
    def ai_rounded(self) -> float | None:
        return None if self.ai is None else round(self.ai, 2)

    def as_dict(self) -> dict:
        return {
            "flop": int(self.flop),
            "nnz_a": int(self.nnz_a),
            "nnz_b": int(self.nnz_b),
            "nnz_c": int(self.nnz_c),
            "bytes_per_element": int(self.bytes_per_element),
            "cf": self.cf,
            "ai": self.ai,
            "ai_rounded": self.ai_rounded,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def arithmetic_intensity(nnz_a: int, nnz_b: int, nnz_c: int, flop: int,
                         bytes_per_element: int = 12) -> IntensityReport:
    """Compression factor and FLOP-per-byte intensity of a multiply.

    ``bytes_per_element`` defaults to a 4-byte index plus an 8-byte value.
    """
    counts = {"nnz_a": nnz_a, "nnz_b": nnz_b, "nnz_c": nnz_c, "flop": flop}
    for name, v in counts.items():
        if v < 0:
            raise ValueError(f"{name} is negative: {v}")
    if bytes_per_element <= 0:
        raise ValueError(f"bytes_per_element must be positive: {bytes_per_element}")
    cf = flop / nnz_c if nnz_c else None
    moved = (nnz_a + nnz_b + nnz_c) * bytes_per_element
    ai = flop / moved if moved else None
    return IntensityReport(flop=flop, nnz_a=nnz_a, nnz_b=nnz_b, nnz_c=nnz_c,
                           bytes_per_element=bytes_per_element, cf=cf, ai=ai)


def aggregate_ipc(trace_or_issued, cycles: int | None = None) -> float:
    """Issued instructions per cycle, aggregated over the MTC workers.

    Accepts either a trace (worker-issued total and cycle count are read
    from it) or explicit (issued, cycles) counts.
    """
    if cycles is None:
        issued = trace_or_issued.mtc_issued_total
        cycles = trace_or_issued.total_cycles
    else:
        issued = trace_or_issued
    if cycles <= 0:
        raise ValueError(f"cycle count must be positive: {cycles}")
    return issued / cycles


def bandwidth_utilization(trace, peak_bytes_per_cycle: float) -> float:
    """Fraction of the DRAM byte budget the run actually moved."""
    if peak_bytes_per_cycle <= 0:
        raise ValueError(f"peak bandwidth must be positive: {peak_bytes_per_cycle}")
    moved = trace.dram_bytes_read + trace.dram_bytes_written
    budget = trace.total_cycles * peak_bytes_per_cycle
    return moved / budget if budget else 0.0


def worker_ids(n_threads: int) -> list:
    """The MTC-context thread ids in a trace of ``n_threads`` threads."""
    ids = []
    for base in range(0, n_threads, THREADS_PER_BLOCK):
        ids.extend(range(base, min(base + WORKERS_PER_BLOCK, n_threads)))
    return ids


@dataclass
class UtilizationReport:
    """Per-worker issue statistics with a normalized histogram.

    ``per_thread`` is each worker's issued share of the run (or of one
    phase when the report was filtered); the histogram bins those values
    after dividing by the busiest worker, so its top bin counts threads
    running within a bin-width of the leader.  ``series`` holds each
    worker's per-interval issue occupancy.
    """

    per_thread: np.ndarray
    mean: float
    stddev: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    interval: int
    series: dict = field(default_factory=dict)

    def top_bin_count(self) -> int:
        return int(self.hist_counts[-1])

    def histogram_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["bin_low", "bin_high", "count"])
        for i, c in enumerate(self.hist_counts):
            w.writerow([f"{self.hist_edges[i]:.6f}",
                        f"{self.hist_edges[i + 1]:.6f}", int(c)])
        return out.getvalue()

    def series_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["thread", "interval_index", "utilization"])
        for gid in sorted(self.series):
            for k, u in enumerate(self.series[gid]):
                w.writerow([gid, k, f"{u:.6f}"])
        return out.getvalue()

    def as_dict(self) -> dict:
        return {
            "per_thread": [float(u) for u in self.per_thread],
            "mean": float(self.mean),
            "stddev": float(self.stddev),
            "hist_counts": [int(c) for c in self.hist_counts],
            "hist_edges": [float(e) for e in self.hist_edges],
            "interval": int(self.interval),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _phase_matches(label: str, phase: str) -> bool:
    if label == phase:
        return True
    _, _, name = label.rpartition("/")
    return name == phase


def utilization_stats(trace, interval: int | None = None, hist_bins: int = 10,
                      phase: str | None = None) -> UtilizationReport:
    """Per-worker utilization of a run, or of one phase of it.

    ``phase`` selects either a full phase label or a bare phase name,
    which then matches that phase in every window.  Utilization here is
    issued instructions over total cycles, the issue-side view a
    single-issue context can never push past 1.  The histogram is over
    values normalized to the busiest worker, which is what makes balance
    across kernel variants comparable even when both run far below the
    issue ceiling.
    """
    if interval is None:
        interval = trace.utilization_interval
    if interval <= 0:
        raise ValueError(f"interval must be positive: {interval}")
    if interval % trace.utilization_interval:
        raise ValueError(
            f"interval {interval} is not a multiple of the trace's sample "
            f"interval {trace.utilization_interval}")

    workers = worker_ids(trace.n_threads)
    total = max(trace.total_cycles, 1)
    if phase is None:
        issued = np.array([trace.active[t] for t in workers], dtype=np.float64)
    else:
        per = dict.fromkeys(workers, 0)
        for (label, gid), c in trace.phase_active.items():
            if gid in per and _phase_matches(label, phase):
                per[gid] += c
        issued = np.array([per[t] for t in workers], dtype=np.float64)
    per_thread = issued / total

    peak = per_thread.max()
    normalized = per_thread / peak if peak > 0 else per_thread
    hist_counts, hist_edges = np.histogram(
        normalized, bins=hist_bins, range=(0.0, 1.0))

    group = interval // trace.utilization_interval
    series = {}
    for gid in workers:
        samples = trace.utilization_samples.get(gid)
        if samples is None:
            continue
        n = len(samples)
        pad = (-n) % group
        resampled = np.pad(samples, (0, pad)).reshape(-1, group).sum(axis=1)
        series[gid] = np.minimum(resampled / interval, 1.0)

    return UtilizationReport(
        per_thread=per_thread,
        mean=float(per_thread.mean()) if len(per_thread) else 0.0,
        stddev=float(per_thread.std()) if len(per_thread) else 0.0,
        hist_counts=hist_counts,
        hist_edges=hist_edges,
        interval=interval,
        series=series,
    )


def trace_summary(trace, peak_bytes_per_cycle: float) -> dict:
    """The headline numbers of one run as a flat dict."""
    return {
        "cycles": int(trace.total_cycles),
        "issued": int(trace.mtc_issued_total),
        "aggregate_ipc": aggregate_ipc(trace),
        "bandwidth_utilization": bandwidth_utilization(trace, peak_bytes_per_cycle),
        "dram_bytes_read": int(trace.dram_bytes_read),
        "dram_bytes_written": int(trace.dram_bytes_written),
        "cache_hit_rate": trace.cache_hit_rate(),
        "barriers": int(trace.barrier_count),
        "dma_ops": int(trace.dma_ops),
    }
