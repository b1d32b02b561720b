"""Slow, obviously-correct reference implementations used as test oracles.

None of these share code with the package; they loop where the package
vectorises and enumerate where it optimises.
"""

import itertools
import math

import numpy as np


def naive_forward(model, x):
    """Per-element loops in float64 for a single HWC input."""
    a = np.asarray(x, dtype=np.float64)
    for layer in model.layers:
        if layer.kind == "conv2d":
            kh, kw, cin, cout = layer.kernel
            w = np.asarray(layer.weights, dtype=np.float64).reshape(kh, kw, cin, cout)
            h, wd = a.shape[0] - kh + 1, a.shape[1] - kw + 1
            out = np.zeros((h, wd, cout))
            for r in range(h):
                for c in range(wd):
                    for o in range(cout):
                        s = 0.0
                        for i in range(kh):
                            for j in range(kw):
                                for ch in range(cin):
                                    s += a[r + i, c + j, ch] * w[i, j, ch, o]
                        out[r, c, o] = s + (layer.bias[o] if layer.bias.size else 0.0)
            a = out
        elif layer.kind == "dense":
            w = np.asarray(layer.weights, dtype=np.float64).reshape(layer.in_features, layer.out_features)
            out = np.zeros(layer.out_features)
            for o in range(layer.out_features):
                s = 0.0
                for i in range(layer.in_features):
                    s += a[i] * w[i, o]
                out[o] = s + (layer.bias[o] if layer.bias.size else 0.0)
            a = out
        elif layer.kind in ("maxpool", "avgpool"):
            k, s = layer.window, layer.stride
            h = (a.shape[0] - k) // s + 1
            wd = (a.shape[1] - k) // s + 1
            out = np.zeros((h, wd, a.shape[2]))
            for r in range(h):
                for c in range(wd):
                    for ch in range(a.shape[2]):
                        tile = [a[r * s + i, c * s + j, ch] for i in range(k) for j in range(k)]
                        out[r, c, ch] = max(tile) if layer.kind == "maxpool" else sum(tile) / len(tile)
            a = out
        elif layer.kind == "relu":
            a = np.where(a > 0, a, 0.0)
        elif layer.kind == "tanh":
            a = np.tanh(a)
        elif layer.kind == "flatten":
            a = a.reshape(-1)
    return a


def brute_kmeans_sse(values, k):
    """Minimum SSE over every contiguous partition of the sorted values."""
    v = sorted(float(x) for x in values)
    n = len(v)
    best = math.inf
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0, *cuts, n)
        sse = 0.0
        for lo, hi in zip(bounds, bounds[1:]):
            seg = v[lo:hi]
            m = sum(seg) / len(seg)
            sse += sum((x - m) ** 2 for x in seg)
        best = min(best, sse)
    return best


def loop_inertia(values, centers, assignment):
    total = 0.0
    for x, a in zip(values, assignment):
        total += (float(x) - float(centers[a])) ** 2
    return total


def dominates(p, q):
    """(al, cr) pairs; minimise al, maximise cr."""
    return p[0] <= q[0] and p[1] >= q[1] and (p[0] < q[0] or p[1] > q[1])


def pareto_oracle(records, budget):
    """O(n^2) dominance filter; exact duplicates keep the smallest ktuple."""
    pool = [r for r in records if r.al <= budget]
    keep = []
    for r in pool:
        if any(dominates((q.al, q.cr), (r.al, r.cr)) for q in pool):
            continue
        twins = [q.ktuple for q in pool if (q.al, q.cr) == (r.al, r.cr)]
        if r.ktuple == min(twins):
            keep.append(r)
    return sorted(keep, key=lambda r: r.cr)


def layer_selection_oracle(points, budget):
    """Pairwise dominance over (b_index min, al min) with ties to the smaller k."""
    pool = [p for p in points if budget is None or p.al <= budget]
    out = []
    for p in pool:
        beaten = any(q.b_index <= p.b_index and q.al <= p.al and (q.b_index < p.b_index or q.al < p.al)
                     for q in pool)
        tied = any(q.b_index == p.b_index and q.al == p.al and q.k < p.k for q in pool)
        if not beaten and not tied:
            out.append(p.k)
    return sorted(out)


def grid_hypervolume(points, al_ref, cr_ref=1.0):
    """Union area of reference rectangles, by slicing at every distinct al."""
    pts = [(a, c) for a, c in points if a < al_ref and c > cr_ref]
    xs = sorted({a for a, _ in pts} | {al_ref})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        top = max((c for a, c in pts if a <= x0), default=cr_ref)
        area += (x1 - x0) * (top - cr_ref)
    return area


def brute_kmeans_partition(values, k):
    """Best contiguous partition of the sorted values, by enumerating every cut set.

    Segment costs are scored with prefix sums to keep n=64, k=4 affordable
    (~40k partitions); the winner's SSE is then recomputed directly.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if k == 1:
        return float(np.sum((v - v.mean()) ** 2))
    cuts = np.array(list(itertools.combinations(range(1, n), k - 1)), dtype=np.int64).reshape(-1, k - 1)
    bounds = np.hstack([np.zeros((len(cuts), 1), np.int64), cuts, np.full((len(cuts), 1), n)])
    p1 = np.concatenate(([0.0], np.cumsum(v)))
    p2 = np.concatenate(([0.0], np.cumsum(v * v)))
    lo, hi = bounds[:, :-1], bounds[:, 1:]
    s1, s2, cnt = p1[hi] - p1[lo], p2[hi] - p2[lo], hi - lo
    best = bounds[int(np.argmin(np.sum(s2 - s1 * s1 / cnt, axis=1)))]
    return float(sum(np.sum((v[a:b] - v[a:b].mean()) ** 2) for a, b in zip(best, best[1:])))
