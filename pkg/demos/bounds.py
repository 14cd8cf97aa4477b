"""Lipschitz constants and complexity bounds for a random network."""

import numpy as np

from mcn import random_network
from mcn.analysis import block_ratios, bound_report, lipschitz_report

rng = np.random.default_rng(1)
net = random_network(rng, 2, [(2, 3), (2, 3), (1, 2)], 1, skip="random")

lip = lipschitz_report(net)
for k, row in enumerate(lip.layers):
    worst = block_ratios(net, k, 500, rng).max()
    print(f"layer {k}: kappa={row.kappa:.3f} blockwise={row.kappa_blockwise:.3f} worst measured ratio={worst:.3f}")

rep = bound_report(net, input_norm=2.0, delta=1e-3, n=1000)
print(f"s={rep.s} l={rep.l} w={rep.w} log covering={rep.covering_log:.1f}")
print("generalization terms:", {k: round(v, 4) for k, v in rep.generalization.items()})
