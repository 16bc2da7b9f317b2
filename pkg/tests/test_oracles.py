import math

import numpy as np
import pytest

from visia import oracles, repair, tour


@pytest.mark.parametrize("name, n", [("sweep", 300), ("shift-bound", 60), ("phiastar", 12), ("sop", 30), ("chamfer", 50)])
def test_suite_passes(name, n):
    rep = oracles.run_suites([name], n=n)[0]
    assert rep.passed, rep.counterexample
    assert rep.n == n and rep.to_dict()["passed"]


def ends_first_sweep(intervals, s_lb):
    """Sweep that closes an interval before opening one at the same position."""
    ivs = [(max(lo, s_lb), hi) for lo, hi in intervals if max(lo, s_lb) <= hi]
    if not ivs:
        return s_lb, 0
    events = sorted([(lo, 1, +1) for lo, _ in ivs] + [(hi, 0, -1) for _, hi in ivs])
    best_s, best, run = s_lb, 0, 0
    for pos, _, d in events:
        run += d
        if run > best:
            best_s, best = pos, run
    return best_s, best


def test_sweep_suite_catches_touching_interval_bug():
    rep = oracles.sweep_suite(n=300, impl=ends_first_sweep)
    assert not rep.passed
    ce = rep.counterexample
    ivs = [tuple(float(v) for v in iv) for iv in ce["intervals"]]
    # the shrunk counterexample still disagrees with the reference
    assert ends_first_sweep(ivs, ce["s_lb"]) != oracles.scan_shift(ivs, ce["s_lb"])
    assert tuple(ce["expected"]) == repair.optimal_shift(ivs, ce["s_lb"])
    assert len(ivs) <= 3


def test_sweep_suite_catches_wrong_tie_rule():
    def rightmost(intervals, s_lb):
        s, k = repair.optimal_shift(intervals, s_lb)
        his = [hi for lo, hi in intervals if max(lo, s_lb) <= s <= hi]
        return (min(his), k) if k else (s, k)

    assert not oracles.sweep_suite(n=300, impl=rightmost).passed


def test_sop_suite_catches_precedence_violation():
    def reversed_anchors(prob):
        sol = tour.reorder(prob)
        if len(prob.anchors) < 2:
            return sol
        order = list(sol.order)
        pos = sorted(order.index(a) for a in prob.anchors)
        for p, a in zip(pos, reversed(prob.anchors)):
            order[p] = a
        return tour.TourSolution(order, tour.tour_cost(order, prob.cost))

    assert not oracles.sop_suite(n=40, impl=reversed_anchors).passed


def test_chamfer_suite_catches_one_sided_distance():
    from scipy.spatial import cKDTree

    def one_sided(a, b):
        return 2 * float(cKDTree(np.asarray(b)).query(np.asarray(a))[0].mean())

    assert not oracles.chamfer_suite(n=20, impl=one_sided).passed


def test_shift_bound_suite_catches_missing_margin():
    def no_margin(hs, d, x, d_min):
        return repair.s_lower_bound(hs, d, x, 0.0)

    assert not oracles.shift_bound_suite(n=40, impl=no_margin).passed


def test_phiastar_suite_catches_always_feasible():
    rep = oracles.phiastar_suite(n=12, impl=lambda qa, qb, grid: True)
    assert not rep.passed and rep.counterexample is not None


def test_scan_shift_examples():
    assert oracles.scan_shift([(0, 2), (1, 3), (2, 4)], 0.0) == (2, 3)
    assert oracles.scan_shift([(0, 1)], 5.0) == (5.0, 0)
    assert oracles.scan_shift([(-math.inf, math.inf)], 1.5) == (1.5, 1)
