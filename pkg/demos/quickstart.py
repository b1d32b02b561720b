"""Compress the shipped fixture CNN and list its loss/compression trade-offs.

    python3 demos/quickstart.py
"""

from wsexplore.fixture import LAYER_BUDGET_PP, make_fixture
from wsexplore.layer_explorer import SweepConfig, select_layer_candidates, sweep_model
from wsexplore.model import score
from wsexplore.network_explorer import enumerate_ktuples, exhaustive_explore, pareto_front

BUDGET_PP = 2.0

model, data = make_fixture()
base = score(model, data)
print(f"fixture: {model.num_weighted_layers} weighted layers, {len(data)} samples, baseline accuracy {base:.3f}")

# Cluster each layer alone for k = 1..32 and keep the efficient cluster counts.
cfg = SweepConfig(1, 32, LAYER_BUDGET_PP)
books = {}
curves = sweep_model(model, cfg, data, base, codebooks=books)
candidates = [select_layer_candidates(c, cfg) for c in curves]
for n, cs in enumerate(candidates, start=1):
    print(f"  layer{n}: k in {cs.ks}")

space = enumerate_ktuples(candidates)
print(f"{space.count} combinations; scoring them all")
records = exhaustive_explore(model, candidates, data, base, codebooks=books)

front = pareto_front(records, BUDGET_PP)
print(f"\nnon-dominated combinations within {BUDGET_PP} pp of accuracy loss:")
print(f"  {'ktuple':<18} {'loss (pp)':>9} {'CR':>7}")
for r in front.points:
    print(f"  {str(r.ktuple):<18} {r.al:>9.3f} {r.cr:>7.2f}")
