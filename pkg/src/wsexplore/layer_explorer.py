"""Per-layer sensitivity sweeps and Pareto selection of cluster counts.

Each weighted layer is clustered on its own (the rest of the network stays
exact) for every k in the sweep range. The resulting accuracy-loss curve is
then reduced to the few k values worth combining: the best k per index
bit-width, minus those beaten by a narrower bit-width.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codebook import apply_codebook, cluster_layer_weights, clustering_inertia, layer_compression
from .errors import InfeasibleError, WSError
from .model import LabeledDataset, ModelSpec, accuracy_loss, score

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    k_min: int = 1
    k_max: int = 256
    layer_al_budget: Optional[float] = None
    stride: int = 1
    lloyd_threshold: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k_max:
            raise WSError(f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.stride < 1:
            raise WSError("stride must be >= 1")

    def ks_for(self, n_distinct: int) -> list:
        """Swept k values, with k_max clamped to the distinct-weight count."""
        k_max = min(self.k_max, n_distinct)
        if k_max < self.k_min:
            raise InfeasibleError(f"layer has only {n_distinct} distinct weights, below k_min={self.k_min}")
        return list(range(self.k_min, k_max + 1, self.stride))


@dataclass(frozen=True)
class CurvePoint:
    k: int
    al: float
    cr: float
    b_index: int
    inertia: float
    method: str = "dp"


@dataclass
class SensitivityCurve:
    layer_index: int
    points: list = field(default_factory=list)

    def point(self, k: int) -> CurvePoint:
        for p in self.points:
            if p.k == k:
                return p
        raise WSError(f"k={k} was not swept for layer {self.layer_index}")

    def al_of(self, k: int) -> float:
        return self.point(k).al


@dataclass
class CandidateSet:
    layer_index: int
    candidates: list = field(default_factory=list)

    @property
    def ks(self) -> list:
        return [c.k for c in self.candidates]

    def __len__(self):
        return len(self.candidates)


def _check_weighted(model: ModelSpec, layer_index: int):
    if not 0 <= layer_index < len(model.layers):
        raise WSError(f"layer index {layer_index} out of range (model has {len(model.layers)} layers)")
    if not model.layers[layer_index].is_weighted:
        raise WSError(f"layer {layer_index} ({model.layers[layer_index].kind}) has no weights to share")


def sweep_layer(model: ModelSpec, layer_index: int, cfg: SweepConfig, dataset: LabeledDataset,
                baseline_acc: float, workers: int = 1, codebooks: Optional[dict] = None) -> SensitivityCurve:
    """Sensitivity curve of one layer: one full-dataset scoring per swept k.

    If ``codebooks`` is a dict, the per-k codebooks are stored into it under
    ``(layer_index, k)`` so later combination scoring can reuse them.
    """
    _check_weighted(model, layer_index)
    layer = model.layers[layer_index]
    weights = layer.weights
    ks = cfg.ks_for(len(np.unique(weights)))
    books = cluster_layer_weights(weights, ks, cfg.lloyd_threshold, cfg.seed)
    if codebooks is not None:
        codebooks.update({(layer_index, k): cb for k, cb in books.items()})

    def evaluate(k):
        cb = books[k]
        approx = model.replace_layers({layer_index: apply_codebook(layer, cb)})
        stats = layer_compression(weights.size, k)
        al = accuracy_loss(baseline_acc, score(approx, dataset))
        return CurvePoint(k, al, stats.cr, stats.b_index, clustering_inertia(weights, cb), cb.method)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            points = list(pool.map(evaluate, ks))
    else:
        points = [evaluate(k) for k in ks]
    points.sort(key=lambda p: p.k)
    return SensitivityCurve(layer_index, points)


def sweep_model(model: ModelSpec, cfg: SweepConfig, dataset: LabeledDataset, baseline_acc: float,
                workers: int = 1, codebooks: Optional[dict] = None) -> list:
    """Sweep every weighted layer in order."""
    curves = []
    for idx in model.weighted_indices:
        curves.append(sweep_layer(model, idx, cfg, dataset, baseline_acc, workers, codebooks))
        log.info("layer %d: %d points swept", idx, len(curves[-1].points))
    return curves


def select_layer_candidates(curve: SensitivityCurve, cfg: SweepConfig) -> CandidateSet:
    """Pareto-efficient k values of a curve under (index bits, accuracy loss).

    Points over the layer budget are dropped, each bit-width keeps its
    lowest-loss point (smaller k on ties), and bit-widths that do not lower
    the loss relative to every narrower kept bit-width are discarded.
    """
    if not curve.points:
        raise WSError(f"empty sensitivity curve for layer {curve.layer_index}")
    points = curve.points
    if cfg.layer_al_budget is not None:
        points = [p for p in points if p.al <= cfg.layer_al_budget]
    if not points:
        raise InfeasibleError(f"layer {curve.layer_index} cannot meet budget "
                              f"{cfg.layer_al_budget} pp at any k")
    per_level = {}
    for p in points:
        cur = per_level.get(p.b_index)
        if cur is None or (p.al, p.k) < (cur.al, cur.k):
            per_level[p.b_index] = p
    kept = []
    lowest_al = np.inf
    for b in sorted(per_level):
        p = per_level[b]
        if p.al < lowest_al:
            kept.append(p)
            lowest_al = p.al
    return CandidateSet(curve.layer_index, sorted(kept, key=lambda p: p.k))
