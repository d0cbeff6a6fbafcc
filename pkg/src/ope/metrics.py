"""ROC AUC, decision-surface grids, trial aggregation and the density monotonicity probe."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .nn import DenseNet, forward, sigmoid
from .samplers import BoxDomain


def roc_auc(scores, labels) -> float:
    """Probability that a random positive scores above a random negative, ties counted 1/2.

    Orientation: label 1 is the normal (positive) class and should score high,
    so pass ``f`` (or ``g``) directly; an anomaly score is ``1 - f``.
    Midrank formulation of the Mann-Whitney statistic, O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one positive and one negative label")
    if np.any(np.isnan(scores)):
        raise ValueError("scores contain NaN")

    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # midranks: tied blocks share the mean of their 1-based ranks
    starts = np.r_[0, np.flatnonzero(s[1:] != s[:-1]) + 1]
    ends = np.r_[starts[1:], len(s)]
    block_rank = 0.5 * (starts + 1 + ends)
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(block_rank, ends - starts)

    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass
class GridDump:
    xs: np.ndarray  # (resolution,)
    ys: np.ndarray  # (resolution,)
    f: np.ndarray  # (resolution, resolution), f[i, j] at (xs[j], ys[i])
    domain: BoxDomain

    def points(self):
        xx, yy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def save_csv(self, path, fingerprint=None):
        P = self.points()
        with open(path, "w") as fh:
            if fingerprint:
                fh.write(f"# config_fingerprint={fingerprint}\n")
            fh.write("x,y,f\n")
            for (x, y), v in zip(P, self.f.ravel()):
                fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")

    def save_pgm(self, path, fingerprint=None):
        """Binary greyscale image, ``f * 255``, top row = largest y."""
        img = np.round(np.clip(self.f[::-1], 0.0, 1.0) * 255).astype(np.uint8)
        h, w = img.shape
        comment = f"# config_fingerprint={fingerprint}\n" if fingerprint else ""
        with open(path, "wb") as fh:
            fh.write(f"P5\n{comment}{w} {h}\n255\n".encode())
            fh.write(img.tobytes())


def lattice(domain: BoxDomain, resolution: int):
    """Per-axis coordinates of a ``resolution``-point lattice spanning the box, ends included."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    return [np.linspace(lo, hi, resolution) for lo, hi in zip(domain.lo, domain.hi)]


def grid_eval(net: DenseNet, domain: BoxDomain, resolution: int) -> GridDump:
    """``f = sigmoid(g)`` on a ``resolution x resolution`` lattice over a 2-D box."""
    if domain.dim != 2 or net.n_inputs != 2:
        raise ValueError(f"grid_eval supports 2-D inputs only, got dimension {domain.dim}")
    xs, ys = lattice(domain, resolution)
    xx, yy = np.meshgrid(xs, ys)
    g = forward(net, np.column_stack([xx.ravel(), yy.ravel()]))
    return GridDump(xs, ys, sigmoid(g).reshape(resolution, resolution), domain)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    aucs: list
    seeds: list
    fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not 0.0 <= a <= 1.0 for a in self.aucs):
            raise ValueError("AUC values must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return float(np.mean(sorted(self.aucs)))

    @property
    def std(self) -> float:
        # population std
        return float(np.std(sorted(self.aucs)))

    def to_dict(self):
        d = asdict(self)
        d["mean"] = self.mean
        d["std"] = self.std
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(d["aucs"], d["seeds"], d.get("fingerprint", ""), d.get("extra", {}))


# ---------------------------------------------------------------------------
# monotone link between logit and density
# ---------------------------------------------------------------------------

def monotonicity_probe(g_fn, density_fn, domain: BoxDomain, n_grid: int, threshold=1e-6) -> float:
    """Spearman correlation between ``g`` and the density over a lattice of the box.

    ``g_fn`` is a DenseNet or any callable mapping ``(n, N)`` points to ``(n,)``
    values.  Lattice cells with density <= ``threshold`` are excluded.
    """
    if domain.dim > 2:
        raise ValueError("monotonicity_probe supports 1-D and 2-D domains")
    axes = lattice(domain, n_grid)
    mesh = np.meshgrid(*axes)
    P_pts = np.column_stack([m.ravel() for m in mesh])
    p = np.asarray(density_fn(P_pts), dtype=np.float64)
    keep = p > threshold
    if keep.sum() < 2:
        raise ValueError("no lattice cells left above the density threshold")
    g = forward(g_fn, P_pts[keep]) if isinstance(g_fn, DenseNet) else np.asarray(g_fn(P_pts[keep]))
    rho = spearmanr(g, p[keep]).statistic
    return float(rho)
