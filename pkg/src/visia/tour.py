"""Visiting order under a precedence chain.

Node 0 is the fixed start. Anchors must appear in the given relative order;
free nodes go anywhere after the start. An optional fixed end node closes
the tour.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_PASSES = 200


@dataclass
class TourProblem:
    cost: np.ndarray  # (N, N) symmetric, zero diagonal
    anchors: list  # node ids in required order (start excluded)
    free: list  # unordered node ids
    start: int = 0
    end: int | None = None  # fixed last node, if any

    @classmethod
    def from_points(cls, points, anchors, free, start=0, end=None):
        pts = np.asarray(points, float)
        cost = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        return cls(cost, list(anchors), list(free), start, end)

    def check(self):
        c = self.cost
        if c.shape[0] != c.shape[1]:
            raise ValueError("cost matrix must be square")
        if not np.allclose(c, c.T) or np.any(c < 0) or np.any(np.diag(c) != 0):
            raise ValueError("cost must be symmetric, non-negative, zero on the diagonal")
        ids = [self.start, *self.anchors, *self.free] + ([self.end] if self.end is not None else [])
        if len(set(ids)) != len(ids):
            raise ValueError("node listed twice")


@dataclass
class TourSolution:
    order: list
    total_cost: float


def tour_cost(order, cost) -> float:
    if len(order) == 0:
        raise ValueError("empty order")
    return float(sum(cost[a, b] for a, b in zip(order[:-1], order[1:])))


def feasible(order, problem: TourProblem) -> bool:
    if not order or order[0] != problem.start:
        return False
    if problem.end is not None and order[-1] != problem.end:
        return False
    pos = {n: i for i, n in enumerate(order)}
    expected = {problem.start, *problem.anchors, *problem.free}
    if problem.end is not None:
        expected.add(problem.end)
    if set(order) != expected or len(order) != len(expected):
        return False
    idx = [pos[a] for a in problem.anchors]
    return all(i < j for i, j in zip(idx, idx[1:]))


def _insertion(problem: TourProblem) -> list:
    c = problem.cost
    order = [problem.start, *problem.anchors]
    if problem.end is not None:
        order.append(problem.end)
    pending = list(problem.free)
    while pending:
        best = None
        for n in pending:
            for k in range(1, len(order) + 1):
                if problem.end is not None and k == len(order):
                    continue
                prev = order[k - 1]
                if k < len(order):
                    nxt = order[k]
                    delta = c[prev, n] + c[n, nxt] - c[prev, nxt]
                else:
                    delta = c[prev, n]
                key = (delta, n, k)
                if best is None or key < best:
                    best = key
        _, n, k = best
        order.insert(k, n)
        pending.remove(n)
    return order


def _two_opt(order, problem: TourProblem, anchor_set) -> tuple[list, bool]:
    """One first-improvement pass of precedence-safe segment reversals."""
    c = problem.cost
    n = len(order)
    last = n - 1 if problem.end is not None else n
    for i in range(1, last - 1):
        # reversing a segment holding at most one anchor keeps the chain order
        seg_anchors = 1 if order[i] in anchor_set else 0
        for j in range(i + 1, last):
            if order[j] in anchor_set:
                seg_anchors += 1
            if seg_anchors > 1:
                break
            a, b = order[i - 1], order[i]
            d = order[j]
            e = order[j + 1] if j + 1 < n else None
            before = c[a, b] + (c[d, e] if e is not None else 0.0)
            after = c[a, d] + (c[b, e] if e is not None else 0.0)
            if after < before - 1e-12:
                order[i : j + 1] = order[i : j + 1][::-1]
                return order, True
    return order, False


def _or_opt(order, problem: TourProblem, anchor_set) -> tuple[list, bool]:
    """Relocate one free node to its cheapest precedence-safe position."""
    c = problem.cost
    n = len(order)
    last = n - 1 if problem.end is not None else n
    for i in range(1, last):
        node = order[i]
        if node in anchor_set:
            continue
        prev = order[i - 1]
        nxt = order[i + 1] if i + 1 < n else None
        removed = c[prev, node] + (c[node, nxt] - c[prev, nxt] if nxt is not None else 0.0)
        rest = order[:i] + order[i + 1 :]
        best_gain, best_k = 1e-12, None
        for k in range(1, len(rest) + 1):
            if problem.end is not None and k == len(rest):
                continue
            if k == i:
                continue
            a = rest[k - 1]
            if k < len(rest):
                b = rest[k]
                added = c[a, node] + c[node, b] - c[a, b]
            else:
                added = c[a, node]
            gain = removed - added
            if gain > best_gain:
                best_gain, best_k = gain, k
        if best_k is not None:
            rest.insert(best_k, node)
            return rest, True
    return order, False


def reorder(problem: TourProblem, improve: bool = True) -> TourSolution:
    """Cheapest insertion of free nodes into the anchor chain, then local search."""
    problem.check()
    order = _insertion(problem)
    anchor_set = set(problem.anchors)
    if improve:
        for _ in range(MAX_PASSES):
            order, moved = _two_opt(order, problem, anchor_set)
            if not moved:
                order, moved = _or_opt(order, problem, anchor_set)
            if not moved:
                break
    return TourSolution(order, tour_cost(order, problem.cost))


def brute_force(problem: TourProblem) -> TourSolution:
    """Exact optimum by enumerating every feasible permutation (small inputs)."""
    inner = [*problem.anchors, *problem.free]
    best = None
    for perm in itertools.permutations(inner):
        order = [problem.start, *perm] + ([problem.end] if problem.end is not None else [])
        if not feasible(order, problem):
            continue
        cost = tour_cost(order, problem.cost)
        if best is None or cost < best.total_cost - 1e-12:
            best = TourSolution(order, cost)
    if best is None:
        raise ValueError("no feasible order")
    return best
