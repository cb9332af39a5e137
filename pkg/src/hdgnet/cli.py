"""Command-line front end for convergence sweeps and snapshot output.

Example::

    hdgnet run --fixture single_pipe --k 2 --eps 1e-2,1e-3 --h 1/8:1/64 --out results
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import REPORT_COLUMNS, RunRecord, attach_eoc, run_with_reference
from .network import FIXTURES, NetworkError, load_fixture, load_network_file, serialize
from .scheme import MESH_STRATEGIES, SolveConfig
from .space import snapshot_csv

REFERENCE_KINDS = ("same", "convdiff", "none")


class PlanError(ValueError):
    """Raised for command-line input that does not describe a valid sweep."""


def fmt(x) -> str:
    """Round-trip exact text for a float; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise PlanError(f"not a number: {text!r}") from None


def parse_list(text: str) -> list[float]:
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise PlanError("empty list")
    return [_number(t) for t in items]


def parse_h(text: str) -> list[float]:
    """Comma list, or ``start:end`` meaning start, start/2, ... down to end."""
    if ":" not in text:
        return parse_list(text)
    start, _, end = text.partition(":")
    a, b = _number(start), _number(end)
    if not (a > 0 and b > 0 and b <= a):
        raise PlanError(f"halving range needs 0 < end <= start, got {text!r}")
    n = math.log2(a / b)
    if abs(n - round(n)) > 1e-9:
        raise PlanError(f"{text!r}: end is not start halved an integer number of times")
    return [a / 2**i for i in range(int(round(n)) + 1)]


def parse_snapshots(values: list[str] | None) -> list[float]:
    out: list[float] = []
    for v in values or []:
        text = v[2:] if v.startswith("t=") else v
        out.extend(parse_list(text))
    if any(t < 0 for t in out):
        raise PlanError("snapshot times must be nonnegative")
    return sorted(set(out))


@dataclass
class ExperimentPlan:
    network: str
    hs: list[float]
    epss: list[float]
    ks: list[int]
    alpha: float = 1.0
    tau_ratio: float = 0.5
    t_max: float | None = None
    mesh: str = "graded"
    reference: str = "same"
    snapshots: list[float] = field(default_factory=list)
    out: str = "results"
    jobs: int = 1

    def configs(self) -> list[SolveConfig]:
        """Sweep order: k, then eps, then h (so EOCs follow along h)."""
        return [SolveConfig(eps=e, h=h, k=k, alpha=self.alpha, tau_ratio=self.tau_ratio,
                            t_max=self.t_max, mesh=self.mesh)
                for k in self.ks for e in self.epss for h in self.hs]


def _run_entry(config: SolveConfig, topology, reference: str, snapshots: list[float]):
    """Worker: one sweep entry. Never raises; failures come back as text."""
    t0 = time.perf_counter()
    try:
        record, sol = run_with_reference(config, topology, None, reference, keep_solution=True)
    except Exception as exc:  # reported per entry, the sweep continues
        return {"record": None, "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(), "wall": time.perf_counter() - t0}
    snaps = {}
    traj = sol.trajectory
    for t in snapshots:
        i = int(np.argmin(np.abs(traj.times - t)))
        snaps[fmt(t)] = (float(traj.times[i]), snapshot_csv(sol.space, [traj.times[i]],
                                                            [traj.states[i]]))
    return {"record": record, "error": None, "snapshots": snaps,
            "wall": time.perf_counter() - t0}


def _failed_record(config: SolveConfig) -> RunRecord:
    return RunRecord("failed", config.k, config.alpha, config.eps, config.h, math.nan,
                     0, 0, math.nan)


def report_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in records:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in r.row()])
    return buf.getvalue()


def plot_data_csv(records: list[RunRecord]) -> str:
    """(h, error) series keyed by branch, k and eps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "branch", "k", "epsilon", "h", "error"])
    for r in records:
        if r.branch == "failed" or not math.isfinite(r.error):
            continue
        key = f"{r.branch}_k{r.k}_eps{fmt(r.eps)}"
        w.writerow([key, r.branch, r.k, fmt(r.eps), fmt(r.h), fmt(r.error)])
    return buf.getvalue()


def _snapshot_name(config: SolveConfig, t: str) -> str:
    return f"snapshot_k{config.k}_eps{fmt(config.eps)}_h{fmt(config.h)}_t{t}.csv"


def execute(plan: ExperimentPlan, topology, argv: list[str] | None = None) -> int:
    """Run the sweep and write all artifacts. Returns the exit status."""
    configs = plan.configs()
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    args = [(c, topology, plan.reference, plan.snapshots) for c in configs]
    if plan.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(_run_entry, *zip(*args)))
    else:
        results = [_run_entry(*a) for a in args]
    records, entries, failures = [], [], []
    for c, res in zip(configs, results):
        rec = res["record"] if res["record"] is not None else _failed_record(c)
        records.append(rec)
        entry = {"config": c.to_dict(), "wall_seconds": res["wall"], "status": "ok"}
        if res["error"] is not None:
            entry["status"] = "failed"
            entry["error"] = res["error"]
            failures.append(entry)
            print(f"hdgnet: entry k={c.k} eps={fmt(c.eps)} h={fmt(c.h)} failed: {res['error']}",
                  file=sys.stderr)
        else:
            entry["mesh_stats"] = rec.stats
            entry["snapshots"] = {}
            for t, (actual, text) in res["snapshots"].items():
                name = _snapshot_name(c, t)
                (out / name).write_text(text)
                entry["snapshots"][name] = {"requested": float(t), "time": actual}
        entries.append(entry)
    attach_eoc(records)
    (out / "report.csv").write_text(report_csv(records))
    (out / "plot_data.csv").write_text(plot_data_csv(records))
    manifest = {
        "tool": "hdgnet",
        "version": __version__,
        "argv": list(argv) if argv is not None else None,
        "network_source": plan.network,
        "network": topology.to_dict(),
        "plan": {"h": plan.hs, "eps": plan.epss, "k": plan.ks, "alpha": plan.alpha,
                 "tau_ratio": plan.tau_ratio, "t_max": plan.t_max, "mesh": plan.mesh,
                 "reference": plan.reference, "snapshots": plan.snapshots, "jobs": plan.jobs},
        "entries": entries,
        "failures": len(failures),
        "wall_seconds_total": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdgnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence sweep")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", choices=FIXTURES, help="bundled network")
    src.add_argument("--network", help="path to a JSON network document")
    run.add_argument("--k", default="2", help="polynomial order(s), comma separated")
    run.add_argument("--alpha", type=float, default=1.0, help="diffusive jump penalty")
    run.add_argument("--eps", default="1e-2", help="diffusion values, comma separated")
    run.add_argument("--h", default="1/8:1/64",
                     help="mesh sizes: comma list or start:end halving range")
    run.add_argument("--tau-ratio", type=float, default=0.5, help="time step as a multiple of h")
    run.add_argument("--tmax", type=float, default=None, help="final time (default: network horizon)")
    run.add_argument("--mesh", choices=MESH_STRATEGIES, default="graded")
    run.add_argument("--reference", choices=REFERENCE_KINDS, default="same",
                     help="error reference: refined self, convection-diffusion, or none")
    run.add_argument("--snapshot", action="append", metavar="t=VALUES",
                     help="write per-edge profiles at these times (repeatable)")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                     help="parallel sweep entries (default: all cores)")

    fx = sub.add_parser("fixture", help="list bundled networks or print one")
    fx.add_argument("name", nargs="?", choices=FIXTURES)
    return parser


def plan_from_args(args) -> tuple[ExperimentPlan, object]:
    if args.fixture:
        topology, source = load_fixture(args.fixture), f"fixture:{args.fixture}"
    else:
        try:
            topology = load_network_file(args.network)
        except OSError as exc:
            raise PlanError(f"cannot read network file: {exc}") from None
        source = str(args.network)
    ks = parse_list(args.k)
    if any(k != int(k) for k in ks):
        raise PlanError("--k takes integers")
    if args.jobs < 1:
        raise PlanError("--jobs must be at least 1")
    plan = ExperimentPlan(
        network=source, hs=parse_h(args.h),
        epss=parse_list(args.eps), ks=[int(k) for k in ks], alpha=args.alpha,
        tau_ratio=args.tau_ratio, t_max=args.tmax, mesh=args.mesh, reference=args.reference,
        snapshots=parse_snapshots(args.snapshot), out=args.out, jobs=args.jobs)
    horizon = plan.t_max if plan.t_max is not None else topology.horizon
    if any(t > horizon for t in plan.snapshots):
        raise PlanError(f"snapshot time beyond the final time {horizon}")
    plan.configs()  # every entry must be valid before anything runs
    shortest = min(e.length for e in topology.edges)
    if max(plan.hs) > shortest:
        raise PlanError(f"h = {max(plan.hs)} exceeds the shortest edge length {shortest}")
    return plan, topology


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    if args.command == "fixture":
        if args.name is None:
            print("\n".join(FIXTURES))
        else:
            print(serialize(load_fixture(args.name)))
        return 0
    try:
        plan, topology = plan_from_args(args)
    except (PlanError, NetworkError, ValueError) as exc:
        print(f"hdgnet: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return execute(plan, topology, argv)


if __name__ == "__main__":
    sys.exit(main())
