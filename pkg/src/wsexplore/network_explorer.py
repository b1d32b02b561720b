"""Combination search over per-layer candidates.

A *ktuple* is a plain tuple of ints, one cluster count per weighted layer in
model order. Combinations are enumerated lazily in lexicographic order
(first layer slowest) and scored either by full evaluation or by the linear
surrogate from :mod:`wsexplore.predictor`.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .codebook import apply_codebook, cluster_layer_weights, clustering_inertia, kmeans_1d, layer_compression
from .errors import InfeasibleError, WSError
from .layer_explorer import CandidateSet
from .model import LabeledDataset, ModelSpec, accuracy_loss, score
from .predictor import PredictionModel, RegressionSample, features_for, fit

log = logging.getLogger(__name__)

DEFAULT_CAP = 10 ** 6
MEASURED = "measured"
PREDICTED = "predicted"


@dataclass(frozen=True)
class EvalRecord:
    ktuple: tuple
    al: float
    al_source: str
    cr: float
    per_layer_inertia: tuple = ()

    @property
    def inertia_sum(self) -> float:
        return float(sum(self.per_layer_inertia))


@dataclass
class ParetoFront:
    points: list
    al_budget: float

    def __len__(self):
        return len(self.points)

    @property
    def ktuples(self) -> list:
        return [p.ktuple for p in self.points]


class KTupleSpace:
    """Lazy, indexable cross product of the per-layer candidate k values."""

    def __init__(self, candidate_sets: Sequence):
        ks = [list(cs.ks) if isinstance(cs, CandidateSet) else list(cs) for cs in candidate_sets]
        if not ks:
            raise WSError("no candidate sets given")
        for i, layer_ks in enumerate(ks):
            if not layer_ks:
                raise WSError(f"candidate set {i} is empty")
        self.layer_ks = ks
        self.count = math.prod(len(c) for c in ks)

    def __len__(self):
        return self.count

    def __iter__(self):
        return itertools.product(*self.layer_ks)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(self.count))]
        index = int(index)
        if index < 0:
            index += self.count
        if not 0 <= index < self.count:
            raise IndexError(index)
        out = []
        for layer_ks in reversed(self.layer_ks):
            index, r = divmod(index, len(layer_ks))
            out.append(layer_ks[r])
        return tuple(reversed(out))


def enumerate_ktuples(candidate_sets: Sequence) -> KTupleSpace:
    return KTupleSpace(candidate_sets)


def network_compression(model: ModelSpec, ktuple) -> float:
    """Whole-network weight storage ratio for a combination."""
    _check_ktuple(model, ktuple)
    orig = comp = 0
    for idx, k in zip(model.weighted_indices, ktuple):
        stats = layer_compression(model.layers[idx].weights.size, k)
        orig += stats.original_bits
        comp += stats.compressed_bits
    return orig / comp


def _check_ktuple(model, ktuple):
    if len(ktuple) != model.num_weighted_layers:
        raise WSError(f"ktuple has {len(ktuple)} entries, model has {model.num_weighted_layers} weighted layers")


def candidate_codebooks(model: ModelSpec, candidate_sets: Sequence[CandidateSet],
                        lloyd_threshold: Optional[int] = None, seed: int = 0) -> dict:
    """Precompute ``{(layer_index, k): Codebook}`` for every candidate."""
    books = {}
    for cs in candidate_sets:
        layer = model.layers[cs.layer_index]
        for k, cb in cluster_layer_weights(layer.weights, cs.ks, lloyd_threshold, seed).items():
            books[(cs.layer_index, k)] = cb
    return books


def compress_model(model: ModelSpec, ktuple, codebooks: Optional[dict] = None):
    """Cluster every weighted layer per ``ktuple``; returns (model, per-layer inertia)."""
    _check_ktuple(model, ktuple)
    updates, inertia = {}, []
    for idx, k in zip(model.weighted_indices, ktuple):
        layer = model.layers[idx]
        cb = codebooks.get((idx, k)) if codebooks is not None else None
        if cb is None:
            cb = kmeans_1d(layer.weights, k)
        updates[idx] = apply_codebook(layer, cb)
        inertia.append(clustering_inertia(layer.weights, cb))
    return model.replace_layers(updates), tuple(inertia)


def score_candidate(model: ModelSpec, ktuple, dataset: LabeledDataset, baseline_acc: float,
                    codebooks: Optional[dict] = None) -> EvalRecord:
    """Measure one combination: all layers clustered together, one scoring."""
    ktuple = tuple(int(k) for k in ktuple)
    approx, inertia = compress_model(model, ktuple, codebooks)
    al = accuracy_loss(baseline_acc, score(approx, dataset))
    return EvalRecord(ktuple, al, MEASURED, network_compression(model, ktuple), inertia)


def score_many(model, ktuples, dataset, baseline_acc, codebooks=None, workers: int = 1) -> list:
    """Score combinations, returning records in input order whatever ``workers`` is."""
    def one(kt):
        return score_candidate(model, kt, dataset, baseline_acc, codebooks)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, ktuples))
    return [one(kt) for kt in ktuples]


def exhaustive_explore(model: ModelSpec, candidate_sets: Sequence[CandidateSet], dataset: LabeledDataset,
                       baseline_acc: float, cap: int = DEFAULT_CAP, workers: int = 1,
                       codebooks: Optional[dict] = None) -> list:
    """Measure every combination, in enumeration order."""
    space = enumerate_ktuples(candidate_sets)
    if space.count > cap:
        raise InfeasibleError(f"{space.count} combinations exceed the exhaustive cap of {cap}; "
                              f"use predicted mode or raise the cap")
    if codebooks is None:
        codebooks = candidate_codebooks(model, candidate_sets)
    return score_many(model, space, dataset, baseline_acc, codebooks, workers)


def valid_fraction(records: Sequence[EvalRecord], al_budget: float) -> float:
    """Share of records whose loss fits in the budget."""
    if not records:
        return 0.0
    return sum(r.al <= al_budget for r in records) / len(records)


def subsample(count_total: int, fraction: float, seed: int, min_size: int = 1) -> list:
    """Sorted distinct indices drawn uniformly without replacement.

    The draw has ``max(min_size, floor(fraction * count_total))`` elements;
    ``min_size`` is normally the number of regression unknowns.
    """
    if not 0 < fraction <= 1:
        raise WSError(f"fraction must be in (0, 1], got {fraction}")
    if count_total < min_size:
        raise InfeasibleError(f"only {count_total} items available, need at least {min_size}")
    size = max(min_size, math.floor(fraction * count_total))
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(count_total, size=size, replace=False))


def predicted_explore(candidate_sets: Sequence[CandidateSet], predictor_model: PredictionModel,
                      curves: Sequence, model: ModelSpec) -> list:
    """Surrogate loss for every combination; no dataset scoring at all."""
    space = enumerate_ktuples(candidate_sets)
    if predictor_model.n_layers != len(space.layer_ks):
        raise WSError(f"predictor covers {predictor_model.n_layers} layers, "
                      f"candidates cover {len(space.layer_ks)}")
    # per-layer lookup tables keep this O(N) per tuple
    al_of = [{k: curve.al_of(k) for k in ks} for ks, curve in zip(space.layer_ks, curves)]
    inertia_of = [{k: curve.point(k).inertia for k in ks} for ks, curve in zip(space.layer_ks, curves)]
    sizes = [model.layers[i].weights.size for i in model.weighted_indices]
    bits = [{k: layer_compression(n, k) for k in ks} for ks, n in zip(space.layer_ks, sizes)]
    records = []
    for kt in space:
        feats = [al_of[i][k] for i, k in enumerate(kt)]
        orig = sum(bits[i][k].original_bits for i, k in enumerate(kt))
        comp = sum(bits[i][k].compressed_bits for i, k in enumerate(kt))
        records.append(EvalRecord(
            tuple(kt), float(predictor_model.predict_features(feats)), PREDICTED, orig / comp,
            tuple(inertia_of[i][k] for i, k in enumerate(kt)),
        ))
    return records


def pareto_front(records: Sequence[EvalRecord], al_budget: float) -> ParetoFront:
    """Non-dominated records (minimise loss, maximise CR) within the budget.

    Records equal on both axes collapse to the lexicographically smallest
    ktuple. Output is sorted by CR ascending, along which loss strictly rises.
    """
    feasible = sorted((r for r in records if r.al <= al_budget), key=lambda r: (r.al, -r.cr, r.ktuple))
    front, best_cr = [], -math.inf
    for r in feasible:
        if r.cr > best_cr:
            front.append(r)
            best_cr = r.cr
    return ParetoFront(front, al_budget)


def hypervolume(points, al_ref: float, cr_ref: float = 1.0) -> float:
    """Area dominated by ``(al, cr)`` points and bounded by the reference point.

    Loss is minimised and CR maximised, so each point covers the rectangle
    ``[al, al_ref] x [cr_ref, cr]``. Points need not be mutually non-dominated.
    """
    pts = sorted(((float(a), float(c)) for a, c in points if a < al_ref and c > cr_ref),
                 key=lambda p: -p[1])
    area, lowest_al = 0.0, math.inf
    for n, (a, c) in enumerate(pts):
        lowest_al = min(lowest_al, a)
        next_cr = pts[n + 1][1] if n + 1 < len(pts) else cr_ref
        area += (al_ref - lowest_al) * (c - next_cr)
    return area


@dataclass
class FrontComparison:
    coverage: float
    mean_gap: float
    max_gap: float
    hv_truth: float
    hv_predicted: float
    hv_ratio: float
    eps_al: float
    eps_cr: float
    n_truth: int
    n_predicted: int
    rescored: list = field(default_factory=list)


def compare_fronts(truth: ParetoFront, predicted_selection: ParetoFront, all_measured: Sequence[EvalRecord],
                   eps_al: float = 1e-9, eps_cr: float = 1e-9) -> FrontComparison:
    """Judge a surrogate-selected front against the measured truth front.

    The selection is first re-scored by looking each ktuple up in
    ``all_measured``. Reported metrics: coverage of truth points matched
    within ``(eps_al, eps_cr)``, normalised distance from each truth point to
    the nearest re-scored point, and the hypervolume ratio with reference
    point ``(budget, cr=1)``.
    """
    measured = {r.ktuple: r for r in all_measured}
    rescored = []
    for p in predicted_selection.points:
        if p.ktuple not in measured:
            raise WSError(f"ktuple {p.ktuple} of the predicted front has no measurement")
        rescored.append(measured[p.ktuple])
    budget = truth.al_budget
    t = np.array([(p.al, p.cr) for p in truth.points], dtype=np.float64).reshape(-1, 2)
    q = np.array([(p.al, p.cr) for p in rescored], dtype=np.float64).reshape(-1, 2)
    if len(t) == 0:
        coverage, mean_gap, max_gap = 1.0, 0.0, 0.0
    elif len(q) == 0:
        coverage, mean_gap, max_gap = 0.0, math.inf, math.inf
    else:
        close = ((np.abs(t[:, None, 0] - q[None, :, 0]) <= eps_al)
                 & (np.abs(t[:, None, 1] - q[None, :, 1]) <= eps_cr))
        coverage = float(np.mean(close.any(axis=1)))
        scale = np.array([budget, t[:, 1].max()])
        d = np.linalg.norm((t[:, None, :] - q[None, :, :]) / scale, axis=2).min(axis=1)
        mean_gap, max_gap = float(d.mean()), float(d.max())
    hv_t = hypervolume(t, budget)
    hv_q = hypervolume([(a, c) for a, c in q if a <= budget], budget)
    if hv_t > 0:
        ratio = hv_q / hv_t
    else:
        ratio = 1.0 if hv_q == 0 else math.inf
    return FrontComparison(coverage, mean_gap, max_gap, hv_t, hv_q, ratio, eps_al, eps_cr,
                           len(t), len(q), rescored)


@dataclass
class PredictedRun:
    sample_records: list
    predictor: PredictionModel
    predicted_records: list
    predicted_front: ParetoFront
    rescored_records: list
    rescored_front: ParetoFront
    scorings: int


def predicted_pipeline(model: ModelSpec, candidate_sets: Sequence[CandidateSet], curves: Sequence,
                       dataset: LabeledDataset, baseline_acc: float, al_budget: float,
                       sample_fraction: float, seed: int, workers: int = 1,
                       codebooks: Optional[dict] = None, measured: Optional[Sequence[EvalRecord]] = None,
                       filter_valid: bool = False, intercept: bool = False) -> PredictedRun:
    """Subsample, score, fit the surrogate, predict everything, re-score the front.

    With ``filter_valid`` the training subset is drawn from the in-budget
    records of ``measured`` (a previous exhaustive run) and costs no new
    scoring. Front members already measured are not scored twice.
    """
    space = enumerate_ktuples(candidate_sets)
    n_layers = len(space.layer_ks)
    if codebooks is None:
        codebooks = candidate_codebooks(model, candidate_sets)
    scorings = 0
    if filter_valid:
        if measured is None:
            raise WSError("filter_valid needs measured records from an exhaustive run")
        pool = [r for r in measured if r.al <= al_budget]
        picks = subsample(len(pool), sample_fraction, seed, n_layers + bool(intercept))
        sample_records = [pool[i] for i in picks]
    else:
        picks = subsample(space.count, sample_fraction, seed, n_layers + bool(intercept))
        sample_records = score_many(model, [space[i] for i in picks], dataset, baseline_acc, codebooks, workers)
        scorings += len(sample_records)
    samples = [RegressionSample(tuple(features_for(r.ktuple, curves)), r.al) for r in sample_records]
    predictor = fit(samples, intercept=intercept, seed=seed, sample_fraction=sample_fraction,
                    filter_valid=filter_valid)
    predicted = predicted_explore(candidate_sets, predictor, curves, model)
    front = pareto_front(predicted, al_budget)
    known = {r.ktuple: r for r in (measured or [])}
    known.update({r.ktuple: r for r in sample_records})
    todo = [kt for kt in front.ktuples if kt not in known]
    fresh = {r.ktuple: r for r in score_many(model, todo, dataset, baseline_acc, codebooks, workers)}
    scorings += len(fresh)
    rescored = [known.get(kt) or fresh[kt] for kt in front.ktuples]
    log.info("predicted mode: %d scorings for %d combinations", scorings, space.count)
    return PredictedRun(sample_records, predictor, predicted, front, rescored,
                        pareto_front(rescored, al_budget), scorings)
