"""Command-line front end: dataset generation, kernel runs, version
comparison and report emission.

Four subcommands share one input convention.  A matrix pair comes either
from files (``--a``/``--b``, MatrixMarket format) or from the generator
(``--scale`` with ``--edges`` or ``--target-nnz``; matrix A uses
``--seed`` and matrix B uses ``--seed`` + 500), never both.  All outputs
are deterministic functions of the arguments, so identical invocations
produce byte-identical files.

Exit codes: 0 success, 1 verification failure, 2 usage error (including
inputs the requested kernel or guard refuses), 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .dataflows import spgemm_colwise, spgemm_inner, spgemm_outer, spgemm_rowwise
from .kernels import WindowOverflowError, smash_v1, smash_v2, smash_v3
from .machine import CostTable, Machine, MachineConfig
from .metrics import trace_summary, utilization_stats
from .rmat import RmatParams, edges_for_target_nnz, rmat_matrix
from .sparse import (
    DimensionMismatchError,
    dense_multiply_oracle,
    mm_read,
    mm_write,
    symbolic_row_flops,
)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3

ORACLE_GUARD_DIM = 2048

SIM_KERNELS = {"v1": smash_v1, "v2": smash_v2, "v3": smash_v3}
BASELINE_KERNELS = ("rowwise", "inner", "outer", "colwise", "oracle")
KERNEL_NAMES = tuple(SIM_KERNELS) + BASELINE_KERNELS


class CliError(Exception):
    """A failure with a chosen exit code."""

    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# shared input handling

def _add_input_args(p):
    p.add_argument("--a", help="MatrixMarket file for the left matrix")
    p.add_argument("--b", help="MatrixMarket file for the right matrix")
    p.add_argument("--scale", type=int, help="generate 2^scale square inputs")
    p.add_argument("--edges", type=int, help="generator edge inserts per matrix")
    p.add_argument("--target-nnz", type=int,
                   help="pick the edge count that lands near this nonzero count")
    p.add_argument("--seed", type=int, default=1,
                   help="generator seed for A; B uses seed + 500 (default 1)")


def _gen_params(args, seed) -> RmatParams:
    if args.edges is not None:
        return RmatParams(scale=args.scale, edges=args.edges, seed=seed)
    if args.target_nnz is not None:
        return edges_for_target_nnz(
            RmatParams(scale=args.scale, edges=1, seed=seed), args.target_nnz)
    raise CliError("generated inputs need --edges or --target-nnz")


def _load_pair(args):
    from_files = args.a is not None or args.b is not None
    from_gen = args.scale is not None
    if from_files and from_gen:
        raise CliError("give either --a/--b files or --scale generation, not both")
    if from_files:
        if args.a is None or args.b is None:
            raise CliError("both --a and --b are required for file inputs")
        return mm_read(args.a), mm_read(args.b)
    if from_gen:
        a = rmat_matrix(_gen_params(args, args.seed))
        b = rmat_matrix(_gen_params(args, args.seed + 500))
        return a, b
    raise CliError("no input source: give --a/--b or --scale")


def _machine_for(args, kernel: str):
    """The machine to run on plus the cost table metrics should assume."""
    if args.machine_config:
        cfg = MachineConfig.from_file(args.machine_config)
        return Machine(cfg), cfg.cost
    cfg = MachineConfig(native_8byte=(kernel == "v3"))
    return Machine(cfg), cfg.cost


def _dense_reference(a, b, force: bool, why: str):
    biggest = max(a.nrows, a.ncols, b.nrows, b.ncols)
    if biggest > ORACLE_GUARD_DIM and not force:
        raise CliError(
            f"{why} would build a dense {biggest}x{biggest} intermediate; "
            f"pass --force to override the {ORACLE_GUARD_DIM} limit")
    return dense_multiply_oracle(a, b, max_dim=max(biggest, ORACLE_GUARD_DIM))


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    m = rmat_matrix(_gen_params(args, args.seed))
    mm_write(args.out, m)
    total = m.nrows * m.ncols
    sparsity = 1.0 - m.nnz / total if total else 0.0
    print(f"wrote {args.out}: {m.nrows}x{m.ncols}, nnz={m.nnz}, "
          f"sparsity={sparsity:.4%}")
    return EXIT_OK


def _run_baseline(kernel, a, b, force: bool):
    if kernel == "rowwise":
        return spgemm_rowwise(a, b)[0]
    if kernel == "inner":
        return spgemm_inner(a, b.to_csc())[0]
    if kernel == "outer":
        return spgemm_outer(a.to_csc(), b)[0]
    if kernel == "colwise":
        return spgemm_colwise(a.to_csc(), b.to_csc())[0].to_csr()
    return _dense_reference(a, b, force, "the dense oracle")


def _verify(kernel, output, a, b, force: bool) -> None:
    want = _dense_reference(a, b, force, "--verify")
    got = output.canonicalize()
    if got.allclose(want):
        return
    for i in range(want.nrows):
        gs, ge = got.row_ptr[i], got.row_ptr[i + 1]
        ws, we = want.row_ptr[i], want.row_ptr[i + 1]
        gcols, wcols = got.col_idx[gs:ge], want.col_idx[ws:we]
        gvals, wvals = got.values[gs:ge], want.values[ws:we]
        if not np.array_equal(gcols, wcols):
            extra = set(gcols.tolist()) ^ set(wcols.tolist())
            j = min(extra) if extra else int(wcols[0])
            raise CliError(
                f"{kernel} verification failed at row {i}: column set differs "
                f"(first differing column {j})", EXIT_VERIFY)
        bad = np.nonzero(~np.isclose(gvals, wvals, rtol=1e-9, atol=0.0))[0]
        if bad.size:
            k = int(bad[0])
            raise CliError(
                f"{kernel} verification failed at ({i}, {int(wcols[k])}): "
                f"got {gvals[k]!r}, want {wvals[k]!r}", EXIT_VERIFY)
    raise CliError(f"{kernel} verification failed: shapes differ", EXIT_VERIFY)


def _report_rows(kernel, rep, cost: CostTable) -> dict:
    summary = trace_summary(rep.trace, cost.dram_peak_bytes_per_cycle)
    row = {"kernel": kernel, "windows": len(rep.plan.windows),
           "flops": int(rep.flops), "output_nnz": int(rep.output.nnz)}
    row.update(summary)
    row.update(rep.probe_stats.as_dict())
    return row


def _write_metrics_csv(path, rows):
    fields = list(rows[0])
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _csv_sibling(path: str) -> str:
    stem, dot, ext = path.rpartition(".")
    if dot and ext.lower() == "json":
        return f"{stem}.csv"
    return f"{path}.csv"


def cmd_run(args) -> int:
    a, b = _load_pair(args)
    kernel = args.kernel
    try:
        if kernel in SIM_KERNELS:
            machine, cost = _machine_for(args, kernel)
            rep = SIM_KERNELS[kernel](
                a, b, machine=machine, utilization_interval=args.interval)
            output = rep.output
            row = _report_rows(kernel, rep, cost)
            report_json = json.loads(rep.to_json())
            report_json["kernel"] = kernel
            report_json["metrics"] = row
        else:
            output = _run_baseline(kernel, a, b, args.force)
            row = {"kernel": kernel, "output_nnz": int(output.nnz),
                   "flops": int(symbolic_row_flops(a, b).sum())}
            report_json = dict(row)
            report_json["output_shape"] = [output.nrows, output.ncols]
    except DimensionMismatchError as e:
        raise CliError(str(e)) from e

    if args.verify:
        _verify(kernel, output, a, b, args.force)
        report_json["verified"] = True

    if args.out:
        mm_write(args.out, output.canonicalize())
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report_json, f, sort_keys=True, separators=(",", ":"))
            f.write("\n")
        _write_metrics_csv(_csv_sibling(args.report), [row])
    print(f"{kernel}: nnz={output.nnz}" + (
        f", cycles={row['cycles']}" if "cycles" in row else ""))
    return EXIT_OK


def cmd_compare(args) -> int:
    kernels = args.kernel
    if len(kernels) < 2:
        raise CliError("need at least two --kernel runs to compare")
    bad = [k for k in kernels if k not in SIM_KERNELS]
    if bad:
        raise CliError(f"compare covers the simulated kernels only, not {bad[0]}")
    a, b = _load_pair(args)
    rows = []
    nnzs = set()
    try:
        for kernel in kernels:
            machine, cost = _machine_for(args, kernel)
            rep = SIM_KERNELS[kernel](
                a, b, machine=machine, utilization_interval=args.interval)
            rows.append(_report_rows(kernel, rep, cost))
            nnzs.add(int(rep.output.nnz))
    except DimensionMismatchError as e:
        raise CliError(str(e)) from e
    if len(nnzs) != 1:
        raise CliError("compared kernels disagree on the output nonzero count",
                       EXIT_VERIFY)

    base = rows[0]["cycles"]
    for row in rows:
        row["speedup"] = base / row["cycles"]

    header = ["kernel", "cycles", "speedup", "aggregate_ipc",
              "bandwidth_utilization", "cache_hit_rate", "collisions"]
    fmt = "{:<8} {:>14} {:>8} {:>8} {:>10} {:>8} {:>12}"
    print(fmt.format("kernel", "cycles", "speedup", "ipc", "bw_util", "hit", "collisions"))
    for row in rows:
        print(fmt.format(row["kernel"], f"{row['cycles']:,}",
                         f"{row['speedup']:.2f}x",
                         f"{row['aggregate_ipc']:.2f}",
                         f"{row['bandwidth_utilization']:.3f}",
                         f"{row['cache_hit_rate']:.2f}",
                         f"{row['collisions']:,}"))

    if args.out:
        _write_metrics_csv(args.out, rows)
    if args.report:
        with open(args.report, "w") as f:
            json.dump({"inputs": {"nnz_a": int(a.nnz), "nnz_b": int(b.nnz)},
                       "runs": rows}, f, sort_keys=True, separators=(",", ":"))
            f.write("\n")
    return EXIT_OK


class _TraceView:
    """Read-only adapter giving a saved trace document the attribute
    surface the metrics functions expect."""

    def __init__(self, doc: dict):
        self.total_cycles = doc["total_cycles"]
        self.n_threads = doc["n_threads"]
        self.mtc_issued_total = doc["issued_instructions"]
        self.dram_bytes_read = doc["dram_bytes_read"]
        self.dram_bytes_written = doc["dram_bytes_written"]
        self.dma_ops = doc["dma_ops"]
        self.barrier_count = doc["barrier_count"]
        self._hits = doc["cache_hits"]
        self._misses = doc["cache_misses"]
        threads = doc["threads"]
        self.active = np.zeros(self.n_threads, dtype=np.int64)
        self.issued = np.zeros(self.n_threads, dtype=np.int64)
        self.stall = np.zeros(self.n_threads, dtype=np.int64)
        for row in threads:
            t = row["thread"]
            self.active[t] = row["active"]
            self.issued[t] = row["issued"]
            self.stall[t] = row["stall"]
        self.phase_active = {}
        for key, c in doc["phase_active"].items():
            label, _, gid = key.rpartition("/")
            self.phase_active[(label, int(gid))] = c
        self.utilization_interval = doc["utilization_interval"]
        self.utilization_samples = {}

    def cache_hit_rate(self) -> float:
        total = self._hits + self._misses
        return self._hits / total if total else 0.0


def cmd_report(args) -> int:
    with open(args.report) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CliError(f"{args.report} is not a report file: {e}", EXIT_IO) from e
    if "trace" not in doc:
        raise CliError(f"{args.report} has no embedded trace (baseline run?)")
    trace = _TraceView(doc["trace"])
    cost = (MachineConfig.from_file(args.machine_config).cost
            if args.machine_config else CostTable())
    summary = trace_summary(trace, cost.dram_peak_bytes_per_cycle)

    print(f"kernel version {doc.get('kernel', doc.get('version'))}: "
          f"{doc['output_nnz']} output nonzeros over {doc['windows']} windows")
    for key in ("cycles", "issued", "aggregate_ipc", "bandwidth_utilization",
                "cache_hit_rate", "dram_bytes_read", "dram_bytes_written",
                "barriers", "dma_ops"):
        v = summary[key]
        print(f"  {key} = {v:.4f}" if isinstance(v, float) else f"  {key} = {v:,}")
    stats = doc.get("probe_stats")
    if stats:
        print(f"  probes: {stats['insertions']} inserts, {stats['merges']} merges, "
              f"{stats['collisions']} collisions "
              f"(max displacement {stats['max_probe_length']})")

    rep = utilization_stats(trace, hist_bins=args.bins, phase=args.phase)
    if args.out:
        with open(args.out, "w") as f:
            f.write(rep.histogram_csv())
        print(f"wrote {args.out}")
    else:
        print(f"  thread utilization mean={rep.mean:.4f} stddev={rep.stddev:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser plumbing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smash",
        description="Sparse matrix multiply kernels on a simulated "
                    "graph-accelerator block")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a power-law matrix file")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--edges", type=int)
    p.add_argument("--target-nnz", type=int)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="MatrixMarket output path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run one kernel on a matrix pair")
    p.add_argument("--kernel", choices=KERNEL_NAMES, required=True)
    _add_input_args(p)
    p.add_argument("--machine-config", help="key=value machine config file")
    p.add_argument("--out", help="write the (canonicalized) product here")
    p.add_argument("--report", help="write the run report JSON here "
                                    "(a metrics CSV lands next to it)")
    p.add_argument("--verify", action="store_true",
                   help="check the product against the dense oracle")
    p.add_argument("--force", action="store_true",
                   help="lift the dense-oracle size guard")
    p.add_argument("--interval", type=int, default=8192,
                   help="trace sampling interval in cycles")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several kernels on one input pair")
    p.add_argument("--kernel", choices=tuple(SIM_KERNELS), action="append",
                   default=[], help="repeat once per kernel")
    _add_input_args(p)
    p.add_argument("--machine-config")
    p.add_argument("--out", help="comparison table CSV path")
    p.add_argument("--report", help="comparison JSON path")
    p.add_argument("--interval", type=int, default=8192)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="summarize a saved run report")
    p.add_argument("--report", required=True, help="report JSON from `run`")
    p.add_argument("--machine-config")
    p.add_argument("--out", help="write the utilization histogram CSV here")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--phase", help="restrict the histogram to one phase name")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except WindowOverflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
