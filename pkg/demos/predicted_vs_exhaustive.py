"""Surrogate-guided search against the exhaustive ground truth.

A linear model maps per-layer losses to network loss. It is fitted on a
small random share of the combinations, used to rank all of them, and only
its chosen front is measured. The exhaustive run is the yardstick.

    python3 demos/predicted_vs_exhaustive.py [fraction] [seed]
"""

import sys

from wsexplore.fixture import LAYER_BUDGET_PP, make_fixture
from wsexplore.layer_explorer import SweepConfig, select_layer_candidates, sweep_model
from wsexplore.model import score, score_calls
from wsexplore.network_explorer import compare_fronts, exhaustive_explore, pareto_front, predicted_pipeline

BUDGET_PP = 2.0
fraction = float(sys.argv[1]) if len(sys.argv) > 1 else 0.10
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

model, data = make_fixture()
base = score(model, data)
cfg = SweepConfig(1, 32, LAYER_BUDGET_PP)
books = {}
curves = sweep_model(model, cfg, data, base, codebooks=books)
candidates = [select_layer_candidates(c, cfg) for c in curves]

start = score_calls.value
records = exhaustive_explore(model, candidates, data, base, codebooks=books)
truth = pareto_front(records, BUDGET_PP)
exhaustive_cost = score_calls.value - start

start = score_calls.value
run = predicted_pipeline(model, candidates, curves, data, base, BUDGET_PP, fraction, seed, codebooks=books)
predicted_cost = score_calls.value - start

print("fitted coefficients:", " ".join(f"{a:.3f}" for a in run.predictor.alphas))
print(f"scorings: exhaustive {exhaustive_cost}, predicted {predicted_cost} "
      f"({len(run.sample_records)} to fit, the rest to re-measure the chosen front)")

cmp = compare_fronts(truth, run.predicted_front, records)
print(f"truth front {cmp.n_truth} points, predicted front {cmp.n_predicted} points")
print(f"coverage {cmp.coverage:.2f}, mean gap {cmp.mean_gap:.3f}, hypervolume ratio {cmp.hv_ratio:.3f}")

print(f"\n{'ktuple':<18} {'predicted':>9} {'measured':>9} {'CR':>7}")
for p, m in zip(run.predicted_front.points, run.rescored_records):
    print(f"{str(p.ktuple):<18} {p.al:>9.3f} {m.al:>9.3f} {p.cr:>7.2f}")
