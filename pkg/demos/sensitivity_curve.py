"""How sensitive is one layer to weight sharing?

Sweeps the second conv layer of the fixture and prints, for each k, the
index width, the accuracy loss and the layer compression ratio. Rows marked
with * are the ones kept as candidates.

    python3 demos/sensitivity_curve.py [layer_number]
"""

import sys

from wsexplore.fixture import LAYER_BUDGET_PP, make_fixture
from wsexplore.layer_explorer import SweepConfig, select_layer_candidates, sweep_layer
from wsexplore.model import score

layer_no = int(sys.argv[1]) if len(sys.argv) > 1 else 2
model, data = make_fixture()
idx = model.weighted_indices[layer_no - 1]
cfg = SweepConfig(1, 32, LAYER_BUDGET_PP)

curve = sweep_layer(model, idx, cfg, data, score(model, data))
kept = set(select_layer_candidates(curve, cfg).ks)

w = model.layers[idx].weights
print(f"layer{layer_no}: {model.layers[idx].kind}, {w.size} weights, budget {LAYER_BUDGET_PP} pp")
print(f"{'':2}{'k':>3} {'bits':>4} {'loss pp':>8} {'CR':>6} {'inertia':>10}")
for p in curve.points:
    mark = "*" if p.k in kept else " "
    print(f"{mark:2}{p.k:>3} {p.b_index:>4} {p.al:>8.3f} {p.cr:>6.2f} {p.inertia:>10.3g}")
