"""
Does the learnt logit order points by density?
==============================================

With no known anomalies at all, energy OPE should still recover the shape of
the normal class: the optimal logit is a strictly increasing function of the
normal-class density.  We train on draws from a 1-D unit Gaussian and compare
the ranking of ``g`` with the ranking of the true density on a lattice.

Run from the repository root::

    python demos/plot_density_probe.py
"""
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ope.config import load_config
from ope.metrics import lattice, monotonicity_probe
from ope.nn import forward
from ope.training import build_task, train

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "output")
os.makedirs(OUT, exist_ok=True)

cfg = load_config(os.path.join(HERE, "..", "configs", "density_probe.json"))
task = build_task(cfg.dataset)
density = task.densities["positive"]  # already in the standardized coordinates

(xs,) = lattice(task.domain, 201)
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
for seed in range(3):
    net = train(cfg, task, seed).net
    rho = monotonicity_probe(net, density, task.domain, 201)
    g = forward(net, xs[:, None])
    print(f"seed {seed}: Spearman rho(g, P) = {rho:.3f}")
    ax1.plot(xs, g - g.max(), label=f"seed {seed}, rho {rho:.3f}")
    ax2.plot(np.log(density(xs[:, None])), g, ".", ms=2)

# a perfect monotone link is any increasing curve in the right panel
ax1.plot(xs, np.log(density(xs[:, None])) - np.log(density(np.zeros((1, 1))))[0], "k--", label="log P (shifted)")
ax1.set_xlabel("x (standardized)")
ax1.set_ylabel("g(x) - max g")
ax1.legend()
ax2.set_xlabel("log P(x)")
ax2.set_ylabel("g(x)")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "density_probe.png"), dpi=120)
print("wrote", os.path.join(OUT, "density_probe.png"))
