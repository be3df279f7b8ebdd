"""Brute-force references for the graph builders (test-only)."""

import itertools
import math


def dtw_brute_force(x, y):
    """Minimum cost over every monotone warping path, enumerated explicitly."""
    n, m = len(x), len(y)
    best = math.inf

    def walk(i, j, cost):
        nonlocal best
        cost += abs(x[i] - y[j])
        if i == n - 1 and j == m - 1:
            best = min(best, cost)
            return
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best


def floyd_warshall(n, edges):
    """All-pairs hop distances; math.inf for unreachable pairs."""
    d = [[0 if i == j else math.inf for j in range(n)] for i in range(n)]
    for a, b in edges:
        d[a][b] = d[b][a] = 1
    for k, i, j in itertools.product(range(n), repeat=3):
        if d[i][k] + d[k][j] < d[i][j]:
            d[i][j] = d[i][k] + d[k][j]
    return d


def random_edges(rng, n, density):
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    keep = rng.random(len(pairs)) < density
    return [p for p, k in zip(pairs, keep) if k]
