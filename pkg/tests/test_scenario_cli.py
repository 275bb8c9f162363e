import hashlib
from pathlib import Path

import pytest
import yaml

from hosevpn import cli
from hosevpn.cli import execute, main, run_scenario, sweep
from hosevpn.metrics import Collector, InvariantViolation
from hosevpn.scenario import (
    ScenarioError, build_candidates, parse_scenario, parse_scenario_dict, parse_scenario_text, serialize_scenario,
    to_dict, with_parameter,
)

ROOT = Path(__file__).resolve().parent.parent
SHIPPED = sorted((ROOT / "scenarios").glob("*.yaml"))

SMALL = {
    "version": 1,
    "name": "small",
    "duration": 2.0,
    "runs": 5,
    "topology": {
        "nodes": [{"id": i, "x": 10.0 * i, "y": 0.0} for i in range(1, 5)],
        "links": [{"a": 1, "b": 2}, {"a": 2, "b": 4}, {"a": 1, "b": 3}, {"a": 3, "b": 4}],
    },
    "paths": [
        {"label": "lo", "bandwidth": 1.0e6, "hops": [1, 2, 4]},
        {"label": "hi", "bandwidth": 1.5e6, "hops": [1, 3, 4]},
    ],
    "flows": [{"name": "f", "src": 1, "dst": 4, "interval": 0.01, "start": 0.1, "stop": 1.8, "jitter": 0.005}],
    "failures": [{"link": [2, 4], "at": 1.0}],
}


def small(**changes):
    data = {**SMALL, **changes}
    return parse_scenario_dict(data)


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


# -- parsing

def test_shipped_three_path_scenario():
    s = parse_scenario(ROOT / "scenarios" / "three_paths.yaml")
    assert sorted(c.allocated_bw for c in build_candidates(s)) == [1.8e6, 1.9e6, 2.1e6]


def test_missing_duration_is_named():
    data = dict(SMALL)
    del data["duration"]
    with pytest.raises(ScenarioError, match="duration"):
        parse_scenario_dict(data)


def test_misspelled_key_rejected():
    data = yaml.safe_load(yaml.safe_dump(SMALL))
    data["paths"][0]["bandwith"] = data["paths"][0].pop("bandwidth")
    with pytest.raises(ScenarioError, match="bandwith"):
        parse_scenario_dict(data)


def test_defaults_applied():
    s = small()
    assert s.flows[0].packet_size == 512 and s.sample_interval == 0.5
    data = dict(SMALL)
    del data["runs"]
    assert parse_scenario_dict(data).runs == 5


@pytest.mark.parametrize("change", [
    {"flows": [{"name": "f", "src": 1, "dst": 9, "interval": 0.01}]},
    {"paths": [{"label": "x", "bandwidth": 1.0, "hops": [1, 4]}]},
    {"failures": [{"link": [1, 4], "at": 1.0}]},
    {"measured_flow": "nope"},
    {"version": 2},
    {"duration": "long"},
])
def test_cross_reference_errors(change):
    with pytest.raises(ScenarioError):
        small(**change)


def test_bad_yaml_file(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed\n")
    with pytest.raises(ScenarioError):
        parse_scenario(p)


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_round_trip_shipped(path):
    s = parse_scenario(path)
    assert parse_scenario_text(serialize_scenario(s)) == s


def test_round_trip_small():
    s = small()
    again = parse_scenario_text(serialize_scenario(s))
    assert again == s and to_dict(again) == to_dict(s)


# -- running

def test_runs_produce_reports_and_mean():
    rs = execute(small())
    assert len(rs.reports) == 5
    assert [r.seed for r in rs.reports] == [0, 1, 2, 3, 4]
    assert set(rs.mean.series) == set(rs.reports[0].series)


def test_identical_invocations_identical_trees(tmp_path):
    s = small()
    run_scenario(s, tmp_path / "a", trace=True)
    run_scenario(s, tmp_path / "b", trace=True)
    a, b = tree_digest(tmp_path / "a"), tree_digest(tmp_path / "b")
    assert a == b
    assert "small/summary.csv" in a and "small/run-4/trace.tsv" in a
    assert all(f"small/{m}.csv" in a for m in ("bandwidth", "packets_received", "pdr", "energy",
                                              "routing_delay", "packet_loss"))


def test_failure_moves_traffic_to_next_path():
    rs = execute(small())
    lo = {row[0]: row[2] for row in rs.mean.path("lo").samples}
    hi = {row[0]: row[2] for row in rs.mean.path("hi").samples}
    assert hi[1.0] == 0 and hi[1.5] > 0 and hi[2.0] > hi[1.5]
    assert lo[1.5] == lo[2.0]


def test_sweep_packet_size(tmp_path):
    results = sweep(small(), "packet_size", [256, 512, 1024], tmp_path)
    assert list(results) == [256, 512, 1024]
    combined = (tmp_path / "small" / "sweep_packet_size.csv").read_text().splitlines()
    assert combined[0].startswith("value,path,")
    assert len(combined) == 1 + 3 * 2
    for v in (256, 512, 1024):
        assert (tmp_path / "small" / f"packet_size={v}" / "summary.csv").exists()


def test_single_value_sweep_equals_plain_run():
    s = small()
    one = sweep(s, "packet_size", [512])[512]
    plain = execute(s)
    assert one.summary == plain.summary


def test_sweep_failure_time_moves_the_shift():
    s = with_parameter(small(), "failure_time", 1.5)
    assert s.failures[0].at == 1.5


def test_unsweepable_parameter():
    with pytest.raises(ScenarioError):
        sweep(small(), "nodes", [10, 20])


# -- command line

def write_small(tmp_path, **changes):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump({**SMALL, **changes}))
    return p


def test_cli_success(tmp_path, capsys):
    code = main(["--scenario", str(write_small(tmp_path)), "--out", str(tmp_path / "out"), "--runs", "5"])
    assert code == 0
    assert "lo" in capsys.readouterr().out
    assert (tmp_path / "out" / "small" / "summary.csv").exists()


def test_cli_quiet_sweep(tmp_path, capsys):
    code = main(["--scenario", str(write_small(tmp_path)), "--out", str(tmp_path / "out"), "--quiet",
                 "--sweep", "flow_interval=0.01,0.02"])
    assert code == 0 and capsys.readouterr().out == ""
    assert (tmp_path / "out" / "small" / "flow_interval=0.02" / "pdr.csv").exists()


def test_cli_bad_scenario_exit_code(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("name: x\n")
    assert main(["--scenario", str(p), "--out", str(tmp_path / "out"), "--quiet"]) == 2
    assert main(["--scenario", str(tmp_path / "missing.yaml"), "--quiet"]) == 2
    assert main(["--scenario", str(write_small(tmp_path)), "--sweep", "nodes=1,2", "--quiet"]) == 2


def test_cli_too_few_runs_fails(tmp_path):
    assert main(["--scenario", str(write_small(tmp_path)), "--runs", "2", "--quiet",
                 "--out", str(tmp_path / "out")]) == 1
    assert not (tmp_path / "out" / "small").exists()


def test_invariant_failure_exits_nonzero_and_leaves_no_output(tmp_path, monkeypatch):
    def broken(self):
        raise InvariantViolation("forced")

    monkeypatch.setattr(Collector, "check_conservation", broken)
    assert main(["--scenario", str(write_small(tmp_path)), "--out", str(tmp_path / "out"), "--quiet"]) == 1
    assert not (tmp_path / "out" / "small").exists()


def test_failed_write_removes_partial_tree(tmp_path, monkeypatch):
    rs = execute(small())
    files = cli.output_files(rs)
    files["zz/late.csv"] = object()  # not text: writing it fails after others are on disk
    with pytest.raises(TypeError):
        cli.write_tree(tmp_path / "out" / "small", files)
    assert not (tmp_path / "out" / "small").exists()
    assert list((tmp_path / "out").iterdir()) == []
