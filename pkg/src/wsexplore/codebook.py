"""Weight sharing: 1-D clustering, codebook application and bit accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WSError
from .model import LayerSpec

WEIGHT_BITS = 32
#: Layers with more weights than this may be clustered with Lloyd's algorithm
#: instead of the exact dynamic program (opt-in).
DEFAULT_LLOYD_THRESHOLD = 65_536


@dataclass(frozen=True, eq=False)
class Codebook:
    centers: np.ndarray
    assignment: np.ndarray
    method: str = "dp"

    @property
    def k(self) -> int:
        return len(self.centers)

    def decode(self) -> np.ndarray:
        return self.centers[self.assignment]


@dataclass(frozen=True)
class CompressionStats:
    k: int
    b_index: int
    n_weights: int
    original_bits: int
    compressed_bits: int
    cr: float


def index_bits(k: int) -> int:
    """Bits needed to address one of ``k`` shared values, ``ceil(log2(k))``."""
    k = int(k)
    if k < 1:
        raise WSError(f"cluster count must be >= 1, got {k}")
    return (k - 1).bit_length()


def layer_compression(n_weights: int, k: int) -> CompressionStats:
    """Storage accounting for a layer of ``n_weights`` sharing ``k`` 32-bit values."""
    n_weights, k = int(n_weights), int(k)
    if n_weights < 1:
        raise WSError(f"n_weights must be >= 1, got {n_weights}")
    if not 1 <= k <= n_weights:
        raise WSError(f"k must lie in [1, {n_weights}], got {k}")
    b = index_bits(k)
    original = WEIGHT_BITS * n_weights
    compressed = b * n_weights + WEIGHT_BITS * k
    return CompressionStats(k, b, n_weights, original, compressed, original / compressed)


def _codebook_from_labels(values, unique_labels, inverse, k, method):
    assignment = unique_labels[inverse].astype(np.int64)
    counts = np.bincount(assignment, minlength=k)
    centers = np.bincount(assignment, weights=values, minlength=k) / counts
    return Codebook(centers, assignment, method)


def _dp_tables(u, counts, k_max):
    """Cost and split tables of the optimal contiguous partition of sorted ``u``.

    ``split[m, j]`` is the first unique index of the last cluster when the
    prefix ``u[:j+1]`` is cut into ``m + 1`` clusters. Optimal split points
    are non-decreasing in ``j`` (the SSE cost is Monge), so each level is
    solved by divide and conquer, one recursion depth per vectorized step.
    """
    n = len(u)
    x = u - np.average(u, weights=counts)  # centring limits cancellation in S2 - S1^2/W
    w_pre = np.concatenate(([0.0], np.cumsum(counts)))
    s1_pre = np.concatenate(([0.0], np.cumsum(counts * x)))
    s2_pre = np.concatenate(([0.0], np.cumsum(counts * x * x)))

    def cost(i, j):
        # weighted SSE of u[i..j] inclusive
        w = w_pre[j + 1] - w_pre[i]
        s1 = s1_pre[j + 1] - s1_pre[i]
        s2 = s2_pre[j + 1] - s2_pre[i]
        return np.maximum(s2 - s1 * s1 / w, 0.0)

    best = np.full((k_max, n), np.inf)
    split = np.zeros((k_max, n), dtype=np.int64)
    best[0] = cost(np.zeros(n, dtype=np.int64), np.arange(n))
    for m in range(1, k_max):
        prev = best[m - 1]
        # open segments: j in [jlo, jhi] whose optimal split lies in [ilo, ihi]
        jlo, jhi = np.array([m]), np.array([n - 1])
        ilo, ihi = np.array([m]), np.array([n - 1])
        while jlo.size:
            mid = (jlo + jhi) // 2
            top = np.minimum(ihi, mid)
            lengths = top - ilo + 1
            seg = np.repeat(np.arange(mid.size), lengths)
            offsets = np.concatenate(([0], np.cumsum(lengths)[:-1]))
            i = ilo[seg] + np.arange(seg.size) - offsets[seg]
            total = prev[i - 1] + cost(i, mid[seg])
            seg_min = np.minimum.reduceat(total, offsets)
            # leftmost position attaining each segment's minimum
            hit = np.flatnonzero(total == seg_min[seg])
            first = hit[np.concatenate(([True], seg[hit][1:] != seg[hit][:-1]))]
            opt = i[first]
            best[m, mid] = seg_min
            split[m, mid] = opt
            left = mid > jlo
            right = mid < jhi
            jlo, jhi, ilo, ihi = (
                np.concatenate((jlo[left], mid[right] + 1)),
                np.concatenate((mid[left] - 1, jhi[right])),
                np.concatenate((ilo[left], opt[right])),
                np.concatenate((opt[left], ihi[right])),
            )
    return best, split


def _labels_from_split(split, n, k):
    labels = np.empty(n, dtype=np.int64)
    end = n - 1
    for m in range(k - 1, -1, -1):
        start = split[m, end] if m else 0
        labels[start:end + 1] = m
        end = start - 1
    return labels


def _prepare(values):
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise WSError("cannot cluster an empty array")
    if not np.all(np.isfinite(values)):
        raise WSError("cannot cluster non-finite values")
    u, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    return values, u, inverse.reshape(-1), counts.astype(np.float64)


def _check_k(k, n_distinct):
    if k < 1:
        raise WSError(f"k must be >= 1, got {k}")
    if k > n_distinct:
        raise WSError(f"k={k} exceeds the {n_distinct} distinct values available")


def kmeans_1d_all(values, k_max: int) -> list:
    """Optimal 1-D k-means codebooks for every k in ``1..k_max`` from one DP pass."""
    values, u, inverse, counts = _prepare(values)
    _check_k(int(k_max), len(u))
    _, split = _dp_tables(u, counts, int(k_max))
    return [
        _codebook_from_labels(values, _labels_from_split(split, len(u), k), inverse, k, "dp")
        for k in range(1, int(k_max) + 1)
    ]


def kmeans_1d(values, k: int) -> Codebook:
    """Globally optimal 1-D k-means clustering (minimum within-cluster SSE).

    Works by dynamic programming over the sorted distinct values, so the
    result is exact and needs no seed. Centers come back sorted ascending.
    """
    values, u, inverse, counts = _prepare(values)
    k = int(k)
    _check_k(k, len(u))
    _, split = _dp_tables(u, counts, k)
    return _codebook_from_labels(values, _labels_from_split(split, len(u), k), inverse, k, "dp")


def lloyd_1d(values, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> Codebook:
    """Lloyd's k-means in 1-D with seeded restarts; approximate but cheap."""
    values, u, inverse, counts = _prepare(values)
    k = int(k)
    _check_k(k, len(u))
    rng = np.random.default_rng(seed)
    best_labels, best_sse = None, np.inf
    for _ in range(restarts):
        centers = np.sort(rng.choice(u, size=k, replace=False))
        for _ in range(max_iter):
            edges = (centers[1:] + centers[:-1]) / 2
            labels = np.searchsorted(edges, u, side="right")
            w = np.bincount(labels, weights=counts, minlength=k)
            if np.any(w == 0):
                # re-seed empty clusters on the worst-fitted distinct values
                err = counts * (u - centers[labels]) ** 2
                for c, far in zip(np.flatnonzero(w == 0), np.argsort(-err)):
                    centers[c] = u[far]
                centers = np.sort(centers)
                continue
            new = np.bincount(labels, weights=counts * u, minlength=k) / w
            if np.array_equal(new, centers):
                break
            centers = new
        edges = (centers[1:] + centers[:-1]) / 2
        labels = np.searchsorted(edges, u, side="right")
        _, labels = np.unique(labels, return_inverse=True)
        if labels.max() + 1 != k:
            continue
        means = np.bincount(labels, counts * u) / np.bincount(labels, counts)
        sse = float(np.sum(counts * (u - means[labels]) ** 2))
        if sse < best_sse:
            best_labels, best_sse = labels, sse
    if best_labels is None:
        raise WSError(f"Lloyd's iterations failed to find {k} non-empty clusters")
    return _codebook_from_labels(values, best_labels, inverse, k, "lloyd")


def cluster_layer_weights(values, ks, lloyd_threshold=None, seed: int = 0) -> dict:
    """Codebooks ``{k: Codebook}`` for the requested cluster counts.

    The exact DP is used unless ``lloyd_threshold`` is given and the array is
    larger than it; fallback codebooks carry ``method == "lloyd"``.
    """
    ks = sorted(set(int(k) for k in ks))
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if lloyd_threshold is not None and values.size > lloyd_threshold:
        return {k: lloyd_1d(values, k, seed=seed) for k in ks}
    all_books = kmeans_1d_all(values, ks[-1])
    return {k: all_books[k - 1] for k in ks}


def apply_codebook(layer: LayerSpec, cb: Codebook) -> LayerSpec:
    """Copy of ``layer`` with every weight replaced by its shared value."""
    if len(cb.assignment) != layer.weights.size:
        raise WSError(f"codebook covers {len(cb.assignment)} weights, layer has {layer.weights.size}")
    return layer.with_weights(cb.decode().astype(np.float32))


def clustering_inertia(values, cb: Codebook) -> float:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(values) != len(cb.assignment):
        raise WSError(f"codebook covers {len(cb.assignment)} values, got {len(values)}")
    return float(np.sum((values - cb.decode()) ** 2))
