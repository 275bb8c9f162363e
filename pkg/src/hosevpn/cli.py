"""Run orchestration and the ``hosevpn`` command line."""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .hose import minimal_reservation, reservation_cost
from .metrics import (
    SUMMARY_HEADER, TIMESERIES_METRICS, InvariantViolation, MetricsError, MetricsReport,
    aggregate_runs, emit_timeseries, summary_rows, timeseries_by_series_csv, to_csv,
)
from .scenario import (
    SWEEPABLE, Scenario, ScenarioError, build_hose, build_simulator, build_topology,
    parse_scenario, with_parameter,
)
from .topology import TopologyError

log = logging.getLogger("hosevpn")

RUN_HEADER = ("run", "seed", "series", "packets_sent", "packets_received", "packets_dropped",
              "in_flight", "pdr", "mean_delay", "energy")


@dataclass
class RunSet:
    scenario: Scenario
    reports: list
    mean: MetricsReport
    traces: list = field(default_factory=list)

    @property
    def summary(self) -> list:
        return summary_rows(self.mean)


def run_once(s: Scenario, seed: int, trace: bool = False):
    sim = build_simulator(s, seed, trace=trace)
    report = sim.run(round(s.duration * 1_000_000_000))
    return report, sim


def measured_series(s: Scenario) -> str:
    return f"flow/{s.measured_flow or s.flows[0].name}"


def execute(s: Scenario, *, runs: Optional[int] = None, seed: Optional[int] = None, trace: bool = False) -> RunSet:
    """Run ``s`` with seeds ``seed, seed+1, ...`` and aggregate; nothing is written."""
    runs = s.runs if runs is None else runs
    base = s.seed if seed is None else seed
    reports, traces = [], []
    for k in range(runs):
        report, sim = run_once(s, base + k, trace)
        reports.append(report)
        traces.append(sim.trace_lines)
        log.info("run %d (seed %d): %d events", k, base + k, sim.processed)
    mean = aggregate_runs(reports, minimum=s.min_runs)
    return RunSet(s, reports, mean, traces if trace else [])


def output_files(rs: RunSet) -> dict:
    """Relative path -> file text for everything a run set emits."""
    s, mean = rs.scenario, rs.mean
    files = {"summary.csv": to_csv(SUMMARY_HEADER, rs.summary)}
    measured = measured_series(s)
    paths = [f"path/{label}" for label in mean.path_labels()]
    for metric in TIMESERIES_METRICS:
        files[f"{metric}.csv"] = to_csv(("time_s", "value"), emit_timeseries(mean, metric, measured))
        if paths:
            files[f"{metric}_by_path.csv"] = timeseries_by_series_csv(mean, metric, paths)
    rows = []
    for k, r in enumerate(rs.reports):
        for name, sr in r.series.items():
            v = sr.scalars()
            rows.append((k, r.seed, name, v["packets_sent"], v["packets_received"], v["packets_dropped"],
                         v["in_flight"], v["pdr"], v["mean_delay"], v["energy"]))
    files["runs.csv"] = to_csv(RUN_HEADER, rows)
    if mean.link_usage:
        n = min(len(v) for v in mean.link_usage.values())
        interval = s.sample_interval
        keys = list(mean.link_usage)
        usage_rows = [((i + 1) * interval, *(mean.link_usage[key][i] for key in keys)) for i in range(n)]
        files["link_usage.csv"] = to_csv(("time_s", *keys), usage_rows)
    if s.hose is not None:
        files["reservation.csv"] = reservation_csv(s)
    for k, lines in enumerate(rs.traces):
        if lines is not None:
            files[f"run-{k}/trace.tsv"] = "time_ns\tevent_kind\tnode\tpacket_id\tdetail\n" + "".join(
                line + "\n" for line in lines)
    return files


def reservation_csv(s: Scenario) -> str:
    hose, fractions = build_hose(s)
    topo = build_topology(s)
    links = sorted(fractions.links())
    x = minimal_reservation(fractions, hose, links)
    rows = [(f"{a}-{b}", topo.link(a, b).bandwidth, x[(a, b)]) for a, b in links]
    rows.append(("total", "", reservation_cost(x)))
    return to_csv(("link", "link_bandwidth", "reservation"), rows)


def write_tree(root: Path, files: dict) -> None:
    """Write ``files`` under ``root`` atomically: all of them or none."""
    root = Path(root)
    root.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{root.name}-", dir=root.parent))
    try:
        for rel, text in sorted(files.items()):
            target = tmp / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        if root.exists():
            shutil.rmtree(root)
        tmp.rename(root)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def run_scenario(s: Scenario, out: Optional[Path] = None, *, runs=None, seed=None, trace=False) -> RunSet:
    rs = execute(s, runs=runs, seed=seed, trace=trace)
    if out is not None:
        write_tree(Path(out) / s.name, output_files(rs))
    return rs


SWEEP_HEADER = ("value",) + SUMMARY_HEADER


def sweep(s: Scenario, parameter: str, values: list, out: Optional[Path] = None, *, runs=None, seed=None,
          trace=False) -> dict:
    """One full run per value; returns ``{value: RunSet}`` and writes a combined table."""
    variants = [(v, with_parameter(s, parameter, v)) for v in values]
    results = {}
    files = {}
    combined = []
    for v, variant in variants:
        rs = execute(variant, runs=runs, seed=seed, trace=trace)
        results[v] = rs
        for rel, text in output_files(rs).items():
            files[f"{parameter}={v}/{rel}"] = text
        combined.extend((v, *row) for row in rs.summary)
    files[f"sweep_{parameter}.csv"] = to_csv(SWEEP_HEADER, combined)
    if out is not None:
        write_tree(Path(out) / s.name, files)
    return results


def format_summary(rows: list) -> str:
    header = ("path", "bw(Mb/s)", "received", "PDR(%)", "delay(s)", "energy(J)", "loss")
    lines = ["  ".join(f"{h:>10}" for h in header)]
    for label, bw, recv, pdr, delay, energy, loss in rows:
        lines.append("  ".join(f"{x:>10}" for x in (
            label, f"{bw / 1e6:.2f}", f"{recv:.1f}", f"{pdr:.2f}", f"{delay:.4f}",
            f"{energy:.4f}", f"{loss:.1f}")))
    return "\n".join(lines)


def _parse_sweep(text: str):
    name, sep, values = text.partition("=")
    if not sep or not values:
        raise ScenarioError(f"--sweep expects <param>=<v1,v2,...>, got {text!r}")
    if name not in SWEEPABLE:
        raise ScenarioError(f"cannot sweep {name!r}; sweepable: {', '.join(SWEEPABLE)}")
    cast = int if name == "packet_size" else float
    try:
        return name, [cast(v) for v in values.split(",")]
    except ValueError:
        raise ScenarioError(f"--sweep {name}: bad value list {values!r}") from None


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hosevpn", description="Run hose-model VPN / AODV scenarios.")
    ap.add_argument("--scenario", required=True, help="scenario YAML file")
    ap.add_argument("--seed", type=int, help="base seed (default: scenario seed)")
    ap.add_argument("--runs", type=int, help="repetitions (default: scenario runs)")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--sweep", help="sweep a parameter: packet_size|flow_interval|failure_time=v1,v2,...")
    ap.add_argument("--trace", action="store_true", help="write per-run event traces")
    ap.add_argument("--quiet", action="store_true", help="print nothing on success")
    args = ap.parse_args(argv)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        s = parse_scenario(args.scenario)
        if args.sweep:
            param, values = _parse_sweep(args.sweep)
            results = sweep(s, param, values, Path(args.out), runs=args.runs, seed=args.seed, trace=args.trace)
            if not args.quiet:
                for v, rs in results.items():
                    print(f"{param}={v}")
                    print(format_summary(rs.summary))
        else:
            rs = run_scenario(s, Path(args.out), runs=args.runs, seed=args.seed, trace=args.trace)
            if not args.quiet:
                print(format_summary(rs.summary))
    except (ScenarioError, TopologyError, OSError) as exc:
        print(f"hosevpn: error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, MetricsError) as exc:
        print(f"hosevpn: run failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
