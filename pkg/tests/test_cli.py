import json

import numpy as np
import pytest

from visia import cli, scenes, sim
from visia.replan import CLEARANCE_ONLY, VISIBILITY_AWARE
from visia.scenario import scenario_from_dict


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def write_doc(tmp_path, doc, name="s.json"):
    f = tmp_path / name
    f.write_text(json.dumps(doc))
    return f


def random_posts_doc():
    doc = scenes.wall_scan(n_views=2, posts=False)
    doc["random_obstacles"] = {
        "count": 2,
        "size_min": [0.3, 0.3, 0.5],
        "size_max": [0.6, 0.6, 1.0],
        "region": {"min": [1.0, -3.0, 0.0], "max": [7.0, -1.0, 1.0]},
        "trigger": {"type": "distance", "param": 8.0},
    }
    return doc


def test_run_writes_outputs_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", "--scene", "wall", "--out", a) == 0
    assert run_cli("run", "--scene", "wall", "--out", b) == 0
    for name in ("report.json", "trace.jsonl", "trajectory.csv", "scenario.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["mode"] == VISIBILITY_AWARE
    timing = json.loads((a / "timing.json").read_text())
    assert len(timing["calls"]) >= summary["replans"] > 0


def test_run_artifacts_round_trip(tmp_path):
    out = tmp_path / "r"
    run_cli("run", "--scene", "wall", "--mode", CLEARANCE_ONLY, "--out", out)
    report = cli.read_report(out / "report.json")
    traj = cli.read_trajectory(out / "trajectory.csv")
    trace = cli.read_trace(out / "trace.jsonl")
    frames = [r for r in trace if r["type"] == "frame"]
    assert report["mode"] == CLEARANCE_ONLY
    assert traj.shape == (report["n_frames"], 7) == (len(frames), 7)
    assert np.allclose(traj[:, 0], [f["t"] for f in frames])
    assert 100.0 * traj[:, 6].mean() == pytest.approx(report["OR"])
    again = scenario_from_dict(json.loads((out / "scenario.json").read_text()))
    assert sim.run(again, mode=CLEARANCE_ONLY).dumps() == (out / "report.json").read_text()


def test_trajectory_header_checked(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        cli.read_trajectory(f)


def test_speed_override_scales_flight_time(tmp_path):
    # every edge of the clear wall scan is a pure translation
    run_cli("run", "--scene", "wall-clear", "--out", tmp_path / "fast")
    run_cli("run", "--scene", "wall-clear", "--set", "limits.v_max=0.5", "--out", tmp_path / "slow")
    fast = cli.read_report(tmp_path / "fast" / "report.json")
    slow = cli.read_report(tmp_path / "slow" / "report.json")
    assert slow["FT"] == pytest.approx(2 * fast["FT"])
    assert slow["CR"] == fast["CR"]


def test_compare_identical_without_obstacles(tmp_path, capsys):
    assert run_cli("compare", "--scene", "wall-clear", "--out", tmp_path) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["method", "FT", "CR", "OR", "VaE", "CL_ms"]
    rows = [ln.split()[1:] for ln in lines[1:]]
    assert len(rows) == 2 and rows[0] == rows[1]


def test_compare_averages_trials(tmp_path):
    doc = random_posts_doc()
    f = write_doc(tmp_path, doc)
    run_cli("compare", "--scenario", f, "--trials", 2, "--out", tmp_path)
    table = json.loads((tmp_path / "compare.json").read_text())["rows"]
    for mode in (VISIBILITY_AWARE, CLEARANCE_ONLY):
        reps = [sim.run(scenario_from_dict({**doc, "seed": s}), mode=mode) for s in (0, 1)]
        for key in ("FT", "CR", "OR", "VaE"):
            assert table[mode][key] == pytest.approx(np.mean([getattr(r, key) for r in reps]))


def test_validate(tmp_path, capsys):
    f = write_doc(tmp_path, scenes.wall_scan())
    assert run_cli("validate", "--scenario", f) == 0
    assert json.loads(capsys.readouterr().out)["valid"]


def test_invalid_scenario_exit_code(tmp_path):
    doc = scenes.wall_scan()
    doc["limits"]["v_max"] = -1
    assert run_cli("validate", "--scenario", write_doc(tmp_path, doc)) == cli.EXIT_INVALID
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run_cli("run", "--scenario", bad, "--out", tmp_path / "o") == cli.EXIT_INVALID
    assert run_cli("run", "--scenario", tmp_path / "missing.json", "--out", tmp_path / "o") == cli.EXIT_INVALID
    assert run_cli("run", "--scene", "moon", "--out", tmp_path / "o") == cli.EXIT_INVALID
    assert run_cli("validate", "--scene", "wall", "--set", "limits.warp=1") == cli.EXIT_INVALID


def test_degraded_exit_code(tmp_path):
    assert run_cli("run", "--scene", "wall-facing", "--out", tmp_path) == cli.EXIT_DEGRADED


def test_oracle_suite(capsys):
    assert run_cli("oracle", "--suite", "sop", "--n", 8) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["passed"] and rec["n"] == 8
    assert run_cli("oracle", "--suite", "nope") == cli.EXIT_INVALID


def test_bench(capsys):
    assert run_cli("bench", "--scene", "wall", "--trials", 1) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["replans"] > 0 and rec["CL_max_ms"] >= rec["CL_mean_ms"] > 0


def test_export(tmp_path):
    assert run_cli("export", "--scene", "wall", "--out", tmp_path) == 0
    for name in ("scenario.json", "trajectory.csv", "nominal.csv", "elements.csv"):
        assert (tmp_path / name).exists()
    head = (tmp_path / "elements.csv").read_text().splitlines()[0]
    assert head == "id,x,y,z,nx,ny,nz,first_seen"
