"""Independent reference implementations used as test oracles.

Deliberately naive: clarity over speed, different algorithms and summation
orders than the library code wherever possible.
"""

import math

import numpy as np


def central_fd(fn, x, step=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.shape[0])
    for idx in range(x.shape[0]):
        hi = x.copy()
        lo = x.copy()
        hi[idx] += step
        lo[idx] -= step
        grad[idx] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def two_pass_metrics(deltas):
    """(mae, mse, mae_stderr, mse_stderr) via fsum and the textbook two-pass variance."""
    deltas = [float(d) for d in deltas]
    n = len(deltas)
    abs_d = [abs(d) for d in deltas]
    sq_d = [d * d for d in deltas]
    mae = math.fsum(abs_d) / n
    mse = math.fsum(sq_d) / n
    if n == 1:
        return mae, mse, 0.0, 0.0

    def stderr(xs, mean):
        var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
        return math.sqrt(var) / math.sqrt(n)

    return mae, mse, stderr(abs_d, mae), stderr(sq_d, mse)


def naive_hac_complete(points):
    """O(n^3) complete-linkage reference.

    Returns (merges, partitions): merges as (left, right, height) with the
    same id convention and tie-breaking as the library (smallest (left,
    right) pair, left < right), and partitions as the list of n partitions
    (each a set of frozensets of leaf indices), from all-singletons down to
    one cluster.  Cluster distances are recomputed from the leaf distance
    matrix at every step, never cached or updated incrementally.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    leaf_dist = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            leaf_dist[i, j] = math.sqrt(
                math.fsum((points[i, d] - points[j, d]) ** 2 for d in range(points.shape[1]))
            )

    members = {i: [i] for i in range(n)}
    partitions = [{frozenset([i]) for i in range(n)}]
    merges = []
    for t in range(n - 1):
        best = None
        for a in sorted(members):
            for b in sorted(members):
                if b <= a:
                    continue
                d = max(leaf_dist[x, y] for x in members[a] for y in members[b])
                if best is None or d < best[0]:
                    best = (d, a, b)
        d, a, b = best
        new = n + t
        members[new] = members.pop(a) + members.pop(b)
        merges.append((a, b, d))
        partitions.append({frozenset(members[c]) for c in members})
    return merges, partitions
