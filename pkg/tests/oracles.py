"""Independent brute-force reference computations used as test oracles.

Nothing here imports the package's metric code; exact rational arithmetic
is used wherever inputs allow it.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def gini_bruteforce(values) -> float:
    xs = [Fraction(v) for v in values]
    n = len(xs)
    total = sum(xs)
    if n == 0 or total == 0:
        return 0.0
    diff = sum(abs(a - b) for a in xs for b in xs)
    mean = total / n
    return float(diff / (2 * n * n * mean))


def pearson_textbook(x, y) -> float:
    xs = [Fraction(v) for v in x]
    ys = [Fraction(v) for v in y]
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxy = sum(a * b for a, b in zip(xs, ys))
    sxx = sum(a * a for a in xs)
    syy = sum(b * b for b in ys)
    num = n * sxy - sx * sy
    den2 = (n * sxx - sx * sx) * (n * syy - sy * sy)
    return float(num) / math.sqrt(float(den2))


def average_ranks(x) -> list[Fraction]:
    # rank = (#strictly smaller) + (size of tie group + 1) / 2
    return [Fraction(sum(1 for b in x if b < a)) + Fraction(sum(1 for b in x if b == a) + 1, 2) for a in x]


def spearman_textbook(x, y) -> float:
    return pearson_textbook(average_ranks(x), average_ranks(y))


def spearman_no_ties(x, y) -> float:
    """Classic 1 - 6 sum d^2 / (n (n^2 - 1)); valid only without ties."""
    rx, ry = average_ranks(x), average_ranks(y)
    n = len(x)
    d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
    return float(1 - Fraction(6) * d2 / (n * (n * n - 1)))


def _all_simple_paths(succ, s, t):
    stack = [(s, [s])]
    while stack:
        node, path = stack.pop()
        for nxt in succ[node]:
            if nxt == t:
                yield path + [t]
            elif nxt not in path:
                stack.append((nxt, path + [nxt]))


def betweenness_bruteforce(nodes, arcs) -> dict:
    """Sum over ordered pairs (s, t) of the share of shortest s-t paths through v.

    Every simple path is enumerated; the shortest ones are kept.
    """
    succ = {v: sorted({b for a, b in arcs if a == v}) for v in nodes}
    score = {v: Fraction(0) for v in nodes}
    for s, t in itertools.permutations(nodes, 2):
        paths = list(_all_simple_paths(succ, s, t))
        if not paths:
            continue
        shortest = min(len(p) for p in paths)
        geodesics = [p for p in paths if len(p) == shortest]
        for v in nodes:
            if v in (s, t):
                continue
            through = sum(1 for p in geodesics if v in p)
            score[v] += Fraction(through, len(geodesics))
    return {v: float(c) for v, c in score.items()}


def degrees_by_scan(nodes, arcs) -> dict:
    return {v: (sum(1 for a, b in arcs if b == v), sum(1 for a, b in arcs if a == v)) for v in nodes}


def mutual_pairs_by_scan(nodes, arcs) -> set:
    arcset = set(arcs)
    return {frozenset((a, b)) for a in nodes for b in nodes if a < b and (a, b) in arcset and (b, a) in arcset}
