"""
How many known anomalies does OPE need?
=======================================

Normal data is a two-component Gaussian mixture, anomalies a broad Gaussian
that overlaps it.  We give the classifier 0, 10, 100 and 1000 labelled
anomalies and repeat each setting over five trials with fresh subsamples.
For comparison a plain cross-entropy classifier gets 10 anomalies.

Run from the repository root::

    python demos/plot_negative_budget.py
"""
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ope.config import load_config
from ope.training import run_experiment

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "output")
os.makedirs(OUT, exist_ok=True)

base = load_config(os.path.join(HERE, "..", "configs", "mixture_trend.json"))
budgets = [0, 10, 100, 1000]
means, stds = [], []
for k in budgets:
    report = run_experiment(base.replace(**{"dataset.subsample": {"count": k}}), 5, master_seed=0)
    means.append(report.mean)
    stds.append(report.std)
    print(f"OPE, {k:4d} anomalies: AUC {report.mean:.3f} +- {report.std:.3f}")

ce = run_experiment(base.replace(**{"dataset.subsample": {"count": 10}, "loss.variant": "cross_entropy"}),
                    5, master_seed=0)
print(f"cross-entropy, 10 anomalies: AUC {ce.mean:.3f} +- {ce.std:.3f}")

fig, ax = plt.subplots(figsize=(5, 4))
x = range(len(budgets))
ax.errorbar(x, means, yerr=stds, marker="o", capsize=3, label="OPE")
ax.errorbar([1], [ce.mean], yerr=[ce.std], marker="s", capsize=3, color="C3", label="cross-entropy")
ax.set_xticks(list(x), [str(b) for b in budgets])
ax.set_xlabel("labelled anomalies")
ax.set_ylabel("test AUC (5 trials)")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "negative_budget.png"), dpi=120)
print("wrote", os.path.join(OUT, "negative_budget.png"))
