"""Brute-force reference implementations the production code is checked against.

Each one is written independently of the package internals.
"""
import math
from fractions import Fraction

import numpy as np


def floyd_warshall(n, edges):
    """All-pairs shortest paths over ``(u, v, w)`` directed edges; inf where unreachable."""
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0.0)
    for u, v, w in edges:
        D[u, v] = min(D[u, v], w)
    for k in range(n):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :])
    return D


def two_pass_dispersion(w, xy):
    w = [float(v) for v in w]
    total = math.fsum(w)
    xc = math.fsum(wi * p[0] for wi, p in zip(w, xy)) / total
    yc = math.fsum(wi * p[1] for wi, p in zip(w, xy)) / total
    ss = math.fsum(wi * ((p[0] - xc) ** 2 + (p[1] - yc) ** 2) for wi, p in zip(w, xy))
    return math.sqrt(ss / total), (xc, yc)


def multiset_stats(w, d, resolution=1000):
    """Unweighted mean/std after repeating each distance round(w * resolution) times."""
    reps = [int(round(wi * resolution)) for wi in w]
    n = sum(reps)
    mean = math.fsum(r * di for r, di in zip(reps, d)) / n
    var = math.fsum(r * (di - mean) ** 2 for r, di in zip(reps, d)) / n
    return mean, math.sqrt(var)


def pearson_distance(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return 1.0 - sxy / math.sqrt(sxx * syy)


def naive_complete_linkage(D):
    """O(n^3) agglomeration recomputing every cluster-to-cluster max from the point matrix.

    Returns ``[(id_a, id_b, distance)]`` with ids ``0..n-1`` for leaves and
    ``n + step`` for merged clusters; ties go to the smallest (lower id, higher id).
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    clusters = {i: [i] for i in range(n)}
    out = []
    for step in range(n - 1):
        ids = sorted(clusters)
        reach = {c: D[clusters[c], :].max(axis=0) for c in ids}
        best = None
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                d = reach[a][clusters[b]].max()
                key = (d, a, b)
                if best is None or key < best:
                    best = key
        d, a, b = best
        clusters[n + step] = clusters.pop(a) + clusters.pop(b)
        out.append((a, b, float(d)))
    return out


def hypergeom_tail_exact(a, b, c, d):
    """P(X >= a) with exact big-integer factorials."""
    f = math.factorial
    r1, r2, c1, c2, n = a + b, c + d, a + c, b + d, a + b + c + d
    total = Fraction(0)
    for x in range(a, min(r1, c1) + 1):
        total += Fraction(f(r1) * f(r2) * f(c1) * f(c2), f(x) * f(r1 - x) * f(c1 - x) * f(r2 - c1 + x) * f(n))
    return total


def hypergeom_tails_by_margin(n, r1, c1):
    """Exact upper tails for every feasible ``a`` given margins, as {a: Fraction}."""
    lo, hi = max(0, r1 + c1 - n), min(r1, c1)
    terms = {x: math.comb(c1, x) * math.comb(n - c1, r1 - x) for x in range(lo, hi + 1)}
    denom = math.comb(n, r1)
    tails, acc = {}, 0
    for x in range(hi, lo - 1, -1):
        acc += terms[x]
        tails[x] = Fraction(acc, denom)
    return tails
