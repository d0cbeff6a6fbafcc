"""Training objectives: two-class cross-entropy, brute-force OPE and energy OPE.

Every loss is written through the logit ``g`` using

    -log f(x)       = softplus(-g(x))
    -log(1 - f(x))  = softplus(g(x))

so no logarithm of zero is ever evaluated.

Reported totals keep the leading factor 1/2,

    total = 1/2 (L+ + gamma L- + (1 - eps) L0).

The returned parameter gradients drop it: they are the gradient of
``L+ + gamma L- + (1 - eps) L0`` (per-batch means), i.e. ``2 * grad(total)``.
Under adam that constant only rescales the effective epsilon, so it is
absorbed rather than carried through every update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import DenseNet, ShapeError, sigmoid, softplus

VARIANTS = ("cross_entropy", "ope", "eope")


@dataclass
class LossConfig:
    variant: str = "ope"
    epsilon: float = 0.95
    gamma: float | None = None  # None: estimated from class counts, see default_gamma
    pred_reg_c: float = 1e-3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.pred_reg_c < 0:
            raise ValueError(f"pred_reg_c must be >= 0, got {self.pred_reg_c}")


@dataclass
class LossBreakdown:
    l_plus: float
    l_minus: float
    l_zero_or_energy: float
    total: float
    # c * mean g(x0)^2 for eope; reported but not part of ``total``
    pred_reg: float = 0.0

    def as_dict(self):
        return {
            "l_plus": self.l_plus,
            "l_minus": self.l_minus,
            "l_zero_or_energy": self.l_zero_or_energy,
            "total": self.total,
            "pred_reg": self.pred_reg,
        }


def default_gamma(n_pos: int, n_neg: int) -> float:
    """Estimate of P(C-)/P(C+) from training counts, clamped to [1e-3, 1e3]; 0 without negatives."""
    if n_neg == 0:
        return 0.0
    if n_pos <= 0:
        raise ValueError("need at least one positive sample")
    return float(np.clip(n_neg / n_pos, 1e-3, 1e3))


def _is_empty(X):
    return X is None or np.asarray(X).shape[0] == 0


def _logits_and_cache(net, X):
    out, cache = net.forward_full(X)
    if out.shape[1] != 1:
        raise ShapeError(f"expected a scalar-output network, got {out.shape[1]} outputs")
    return out[:, 0], cache


def _backprop(net, cache, dL_dg):
    return net.backward(cache, dL_dg[:, None])[0]


def _labelled_terms(net, pos, neg, gamma):
    """L+, L- and the combined gradient grad L+ + gamma grad L-."""
    if _is_empty(pos):
        raise ValueError("positive batch is empty")
    g_pos, cache = _logits_and_cache(net, pos)
    n = g_pos.shape[0]
    l_plus = float(np.mean(softplus(-g_pos)))
    grads = _backprop(net, cache, -sigmoid(-g_pos) / n)

    l_minus = 0.0
    if not _is_empty(neg):
        g_neg, cache = _logits_and_cache(net, neg)
        n = g_neg.shape[0]
        l_minus = float(np.mean(softplus(g_neg)))
        g_minus = _backprop(net, cache, sigmoid(g_neg) / n)
        grads = [a + gamma * b for a, b in zip(grads, g_minus)]
    return l_plus, l_minus, grads


def _resolve_gamma(cfg, neg):
    if _is_empty(neg):
        return 0.0
    return 1.0 if cfg.gamma is None else cfg.gamma


def cross_entropy_loss_and_grad(net: DenseNet, pos, neg, gamma: float = 1.0):
    """Two-class baseline ``1/2 (L+ + gamma L-)``."""
    if _is_empty(neg):
        raise ValueError("negative batch is empty; cross-entropy needs both classes")
    l_plus, l_minus, grads = _labelled_terms(net, pos, neg, gamma)
    total = 0.5 * (l_plus + gamma * l_minus)
    return LossBreakdown(l_plus, l_minus, 0.0, total), grads


def ope_loss_and_grad(net: DenseNet, pos, neg, unif, cfg: LossConfig):
    """Brute-force OPE.

    ``unif`` are draws from the uniform distribution over the domain box.
    ``neg`` may be empty or None (one-class mode), which drops the L- term.
    """
    if _is_empty(unif):
        raise ValueError("uniform batch is empty")
    gamma = _resolve_gamma(cfg, neg)
    l_plus, l_minus, grads = _labelled_terms(net, pos, neg, gamma)

    g0, cache = _logits_and_cache(net, unif)
    l_zero = float(np.mean(softplus(g0)))
    g_zero = _backprop(net, cache, sigmoid(g0) / g0.shape[0])
    w = 1.0 - cfg.epsilon
    grads = [a + w * b for a, b in zip(grads, g_zero)]

    total = 0.5 * (l_plus + gamma * l_minus + w * l_zero)
    return LossBreakdown(l_plus, l_minus, l_zero, total), grads


def energy_term_grads(net: DenseNet, negative_phase, c: float):
    """Gradients of the energy term from model samples.

    Returns ``(g, energy_grads, stabilizer_grads)``: the logits at the samples,
    ``mean grad_theta g(x0)`` (the negative phase estimate of grad log Z) and
    the gradient of ``c * mean g(x0)^2``.
    """
    if _is_empty(negative_phase):
        raise ValueError("negative-phase batch is empty; the energy gradient is undefined")
    g0, cache = _logits_and_cache(net, negative_phase)
    m = g0.shape[0]
    energy = _backprop(net, cache, np.full(m, 1.0 / m))
    stab = _backprop(net, cache, 2.0 * c * g0 / m)
    return g0, energy, stab


def eope_loss_and_grad(net: DenseNet, pos, neg, negative_phase, cfg: LossConfig):
    """Energy OPE.

    ``negative_phase`` should be samples from the density proportional to
    ``exp(g(x))`` on the domain.  The reported ``l_zero_or_energy`` is
    ``mean g(x0)``, a monitoring proxy: log Z itself is never evaluated.
    The prediction penalty ``c * mean g(x0)^2`` belongs to the energy term
    and is therefore also weighted by ``1 - eps``.
    """
    gamma = _resolve_gamma(cfg, neg)
    l_plus, l_minus, grads = _labelled_terms(net, pos, neg, gamma)

    g0, energy, stab = energy_term_grads(net, negative_phase, cfg.pred_reg_c)
    w = 1.0 - cfg.epsilon
    grads = [a + w * (e + s) for a, e, s in zip(grads, energy, stab)]

    l_energy = float(np.mean(g0))
    total = 0.5 * (l_plus + gamma * l_minus + w * l_energy)
    pred_reg = cfg.pred_reg_c * float(np.mean(g0 * g0))
    return LossBreakdown(l_plus, l_minus, l_energy, total, pred_reg), grads


# ---------------------------------------------------------------------------
# closed-form optimum
# ---------------------------------------------------------------------------

def optimal_f(p_pos, p_neg, C, gamma, epsilon):
    """Pointwise minimiser of the OPE objective.

    ``p_pos / (p_pos + (1 - eps) C + gamma p_neg)``; with ``C = 0`` this is the
    Bayes posterior of the two-class problem with prior ratio ``gamma``.
    """
    p_pos, p_neg, C = (np.asarray(a, dtype=np.float64) for a in (p_pos, p_neg, C))
    if np.any(p_pos < 0) or np.any(p_neg < 0) or np.any(C < 0):
        raise ValueError("densities must be non-negative")
    denom = p_pos + (1.0 - epsilon) * C + gamma * p_neg
    if np.any(denom <= 0):
        raise ValueError("optimal_f is undefined where every density term vanishes")
    out = p_pos / denom
    return float(out) if out.ndim == 0 else out


def ope_pointwise_objective(g, p_pos, p_neg, C, gamma, epsilon):
    """Expected OPE loss density at a point where the logit is ``g`` (factor 1/2 dropped)."""
    return p_pos * softplus(-g) + (gamma * p_neg + (1.0 - epsilon) * C) * softplus(g)
