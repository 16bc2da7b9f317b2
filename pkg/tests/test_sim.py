import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from visia import scenes, sim
from visia.replan import CLEARANCE_ONLY, VISIBILITY_AWARE, PlannerParams
from visia.scenario import build_world, scenario_from_dict


@pytest.mark.parametrize(
    "cr, or_, ft, expect",
    [(97.84, 1.86, 79.80, 120.33), (42.52, 65.31, 73.18, 20.16), (84.93, 73.17, 20.42, 111.59)],
)
def test_vae_reference_rows(cr, or_, ft, expect):
    assert abs(sim.vae(cr, or_, ft) - expect) <= 0.01


def test_vae_clean_full_coverage():
    # percent units on both factors: full coverage, no occlusion, 100 s
    assert sim.vae(100.0, 0.0, 100.0) == pytest.approx(100.0)


def test_vae_rejects_zero_time():
    with pytest.raises(ValueError):
        sim.vae(50.0, 0.0, 0.0)


def test_chamfer_examples():
    assert sim.chamfer([[0.0, 0, 0]], [[0.0, 0, 0]]) == 0.0
    assert sim.chamfer([0.0], [1.0]) == 2.0
    with pytest.raises(ValueError):
        sim.chamfer(np.zeros((0, 3)), [[0, 0, 0]])


def brute_chamfer(a, b):
    da = [min(math.dist(x, y) for y in b) for x in a]
    db = [min(math.dist(x, y) for x in a) for y in b]
    return sum(da) / len(da) + sum(db) / len(db)


@given(st.integers(0, 2**31))
def test_chamfer_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(rng.integers(1, 15), 3))
    b = rng.normal(size=(rng.integers(1, 15), 3))
    assert sim.chamfer(a, b) == pytest.approx(brute_chamfer(a, b), rel=1e-12)
    assert sim.chamfer(a, b) == pytest.approx(sim.chamfer(b, a), rel=1e-12)


# -- closed loop ----------------------------------------------------------------------------------


def run_doc(doc, mode=VISIBILITY_AWARE, **kw):
    return sim.run(scenario_from_dict(doc), mode=mode, **kw)


@pytest.fixture(scope="module")
def empty_runs():
    doc = scenes.wall_scan(posts=False)
    return doc, run_doc(doc), run_doc(doc, CLEARANCE_ONLY)


def test_no_obstacles_no_replans(empty_runs):
    doc, rep, _ = empty_runs
    assert rep.replans == 0 and rep.OR == 0.0 and rep.status == "ok"
    world = build_world(scenario_from_dict(doc))
    assert rep.CR == pytest.approx(100.0 * len(world.intended_ids) / rep.n_elements)
    assert rep.D_set == 0.0 and rep.J_dev == 0.0


def test_mode_isolation(empty_runs):
    _, va, co = empty_runs
    a, b = va.to_dict(), co.to_dict()
    assert a.pop("mode") != b.pop("mode")
    assert a == b


def test_report_invariants(empty_runs):
    for rep in empty_runs[1:]:
        assert 0 <= rep.CR <= 100 and 0 <= rep.OR <= 100
        assert rep.VaE == pytest.approx(rep.CR * (100 - rep.OR) / rep.FT, rel=1e-6)


@pytest.fixture(scope="module")
def wall_runs():
    doc = scenes.wall_scan()
    records = []
    va = run_doc(doc, trace=records.append, keep_frames=True)
    return doc, va, records, run_doc(doc, CLEARANCE_ONLY)


def test_clearance_only_sees_more_occlusion(wall_runs):
    _, va, _, co = wall_runs
    assert co.OR > va.OR


def test_visibility_aware_replans(wall_runs):
    _, va, _, _ = wall_runs
    assert va.replans > 0 and va.CL_max > 0 and len(va.latencies) >= va.replans


def test_coverage_non_decreasing(wall_runs):
    _, va, records, _ = wall_runs
    frames = [r for r in records if r["type"] == "frame"]
    assert len(frames) == va.n_frames
    seen, prev_t, curve = set(), -1.0, []
    for f in frames:
        assert f["t"] >= prev_t
        prev_t = f["t"]
        seen.update(f["new"])
        curve.append(len(seen))
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    times = sorted(va.first_seen.values())
    assert times == sorted(times) and (not times or times[-1] <= va.FT + 1e-9)


def test_frame_rate_and_occlusion_share(wall_runs):
    _, va, _, _ = wall_runs
    ts = np.array([f.t for f in va.frames])
    assert np.all(np.diff(ts) <= 0.1 + 1e-9)
    assert va.OR == pytest.approx(100.0 * sum(f.occluded for f in va.frames) / len(va.frames))


def test_reports_byte_identical(wall_runs):
    doc, va, _, _ = wall_runs
    assert run_doc(doc).dumps() == va.dumps()


def test_params_mode_follows_argument():
    doc = scenes.wall_scan(n_views=2, posts=False)
    sc = scenario_from_dict(doc)
    rep = sim.run(sc, PlannerParams.from_scenario(sc), mode=CLEARANCE_ONLY)
    assert rep.mode == CLEARANCE_ONLY
