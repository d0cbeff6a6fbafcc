"""Negative-phase samplers on a bounding box.

The target of every MCMC sampler here is the density proportional to
``exp(g(x))`` restricted to the box, where ``g`` is the classifier logit.
MCMC moves that leave the box are reflected back at the walls; generator
outputs are clamped.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, DenseNet, adam_step, init_dense_net, value_and_input_grad

RMSPROP_FLOOR = 1e-8


@dataclass
class BoxDomain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not np.all(np.isfinite(self.lo)) or not np.all(np.isfinite(self.hi)):
            raise ValueError("box bounds must be finite")
        if np.any(self.hi <= self.lo):
            raise ValueError("box needs hi > lo in every coordinate")
        if not np.isfinite(self.density) or self.density <= 0:
            raise ValueError("box volume gives a non-finite uniform density")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def density(self) -> float:
        """Uniform density C = 1 / volume."""
        return float(np.exp(-np.sum(np.log(self.widths))))

    @property
    def mean_edge(self) -> float:
        return float(np.mean(self.widths))

    def contains(self, X) -> np.ndarray:
        X = np.asarray(X)
        return np.all((X >= self.lo) & (X <= self.hi), axis=-1)

    @classmethod
    def around(cls, X, margin=0.1):
        """Per-feature ``[min - margin*range, max + margin*range]`` of the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        lo, hi = lo - margin * span, hi + margin * span
        # constant features still get a box of unit width
        flat = span <= 0
        return cls(np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi))

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["lo"], d["hi"])


def reflect(x, lo, hi, p=None):
    """Fold ``x`` back into ``[lo, hi]`` by mirror reflection at the walls.

    Momentum components are negated once per wall crossing, which keeps a
    leapfrog trajectory time-reversible.
    """
    width = hi - lo
    y = (x - lo) / width
    k = np.floor(y)
    frac = y - k
    odd = (np.mod(k, 2.0) == 1.0)
    y = np.where(odd, 1.0 - frac, frac)
    out = np.clip(lo + y * width, lo, hi)
    if p is None:
        return out
    return out, np.where(odd, -p, p)


def uniform_sample(domain: BoxDomain, m: int, rng) -> np.ndarray:
    if m < 1:
        raise ValueError("need m >= 1 samples")
    return domain.lo + rng.random((m, domain.dim)) * domain.widths


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    positions: np.ndarray
    rmsprop_m: np.ndarray | None = None
    # diagnostics from the last update
    accept_rate: float = float("nan")
    n_rejected_nonfinite: int = 0
    restarts: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.rmsprop_m is None:
            self.rmsprop_m = np.zeros_like(self.positions)

    def copy(self):
        return ChainState(self.positions.copy(), self.rmsprop_m.copy(), self.accept_rate,
                          self.n_rejected_nonfinite, self.restarts)


def init_chains(domain: BoxDomain, m: int, rng) -> ChainState:
    return ChainState(uniform_sample(domain, m, rng))


def leapfrog(net, x, p, step_size, n_steps, domain=None):
    """Leapfrog integration for the potential ``U(x) = -g(x)``.

    Returns ``(x, p, g(x))`` at the end of the trajectory.
    """
    g, grad = value_and_input_grad(net, x)
    for _ in range(n_steps):
        p = p + 0.5 * step_size * grad
        x = x + step_size * p
        if domain is not None:
            x, p = reflect(x, domain.lo, domain.hi, p)
        g, grad = value_and_input_grad(net, x)
        p = p + 0.5 * step_size * grad
    return x, p, g


def hmc_step(net: DenseNet, state: ChainState, step_size, n_leapfrog, rng, domain: BoxDomain | None = None):
    """One Metropolis-corrected HMC transition per chain targeting ``exp(g)``.

    Chains whose trajectory produces non-finite values are rejected and
    counted in ``n_rejected_nonfinite``.
    """
    x0 = state.positions
    p0 = rng.standard_normal(x0.shape)
    u = rng.random(x0.shape[0])
    if n_leapfrog == 0 or step_size == 0:
        # the proposal is the current point and is always accepted
        new = state.copy()
        new.accept_rate = 1.0
        new.n_rejected_nonfinite = 0
        return new

    g0 = value_and_input_grad(net, x0)[0]
    with np.errstate(over="ignore", invalid="ignore"):
        x1, p1, g1 = leapfrog(net, x0, p0, step_size, n_leapfrog, domain)
        h0 = -g0 + 0.5 * np.sum(p0 * p0, axis=1)
        h1 = -g1 + 0.5 * np.sum(p1 * p1, axis=1)
        finite = np.isfinite(h1) & np.all(np.isfinite(x1), axis=1)
        log_ratio = np.where(finite, h0 - h1, -np.inf)
    accept = finite & (np.log(u) < log_ratio)

    new = state.copy()
    new.positions = np.where(accept[:, None], x1, x0)
    new.accept_rate = float(np.mean(accept))
    new.n_rejected_nonfinite = int(np.sum(~finite))
    return new


def rmsprop_step(net: DenseNet, state: ChainState, eta, rho, lam, rng, domain: BoxDomain | None = None):
    """Noisy RMSProp-normalised gradient ascent on ``g``.

    ``m <- rho m + (1 - rho) grad^2``, ``x <- x + eta (grad / sqrt(m) + lam xi)``
    with ``xi ~ N(0, I)``; ``m`` is floored at 1e-8 inside the square root.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if eta <= 0 or lam < 0:
        raise ValueError("need eta > 0 and lam >= 0")
    x = state.positions
    _, grad = value_and_input_grad(net, x)
    xi = rng.standard_normal(x.shape)
    m = rho * state.rmsprop_m + (1.0 - rho) * grad * grad
    x = x + eta * (grad / np.sqrt(np.maximum(m, RMSPROP_FLOOR)) + lam * xi)
    if domain is not None:
        x = reflect(x, domain.lo, domain.hi)
    new = state.copy()
    new.positions = x
    new.rmsprop_m = m
    return new


@dataclass
class SamplerConfig:
    kind: str = "hmc"  # uniform | hmc | rmsprop | generator
    steps_per_update: int = 4
    restart_prob: float = 0.05
    # hmc; None scales with the box
    step_size: float | None = None
    n_leapfrog: int = 5
    # rmsprop
    eta: float | None = None
    rho: float = 0.9
    lam: float = 1.0
    # generator
    latent_dim: int | None = None
    generator_hidden: list = field(default_factory=lambda: [64, 64])
    generator_lr: float = 1e-3
    repulsion: float = 1.0  # weight of the pairwise repulsion term
    bandwidth: float | None = None  # None: squared mean box edge

    def __post_init__(self):
        if self.kind not in ("uniform", "hmc", "rmsprop", "generator"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.steps_per_update < 0:
            raise ValueError("steps_per_update must be >= 0")
        if not 0.0 <= self.restart_prob <= 1.0:
            raise ValueError("restart_prob must lie in [0, 1]")

    def hmc_step_size(self, domain):
        return 0.05 * domain.mean_edge if self.step_size is None else self.step_size

    def rmsprop_eta(self, domain):
        return 0.01 * domain.mean_edge if self.eta is None else self.eta


def persistent_negative_phase(net: DenseNet, state: ChainState, cfg: SamplerConfig, domain: BoxDomain, rng):
    """Advance persistent chains and return their positions as the negative-phase batch.

    Each chain is first restarted uniformly in the box with probability
    ``restart_prob``, then moved ``steps_per_update`` sampler steps.
    """
    state = state.copy()
    restart = rng.random(state.positions.shape[0]) < cfg.restart_prob
    n_restart = int(restart.sum())
    if n_restart:
        state.positions[restart] = uniform_sample(domain, n_restart, rng)
        state.rmsprop_m[restart] = 0.0
    accepts = []
    for _ in range(cfg.steps_per_update):
        if cfg.kind == "hmc":
            state = hmc_step(net, state, cfg.hmc_step_size(domain), cfg.n_leapfrog, rng, domain)
            accepts.append(state.accept_rate)
        elif cfg.kind == "rmsprop":
            state = rmsprop_step(net, state, cfg.rmsprop_eta(domain), cfg.rho, cfg.lam, rng, domain)
        else:
            raise ValueError(f"sampler kind {cfg.kind!r} has no persistent chains")
    state.restarts = n_restart
    state.accept_rate = float(np.mean(accepts)) if accepts else float("nan")
    return state.positions.copy(), state


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------

@dataclass
class GeneratorNet:
    net: DenseNet
    latent_dim: int
    adam: AdamState

    @classmethod
    def create(cls, n_features, rng, latent_dim=None, hidden=(64, 64), lr=1e-3):
        latent_dim = n_features if latent_dim is None else latent_dim
        net = init_dense_net([latent_dim, *hidden, n_features], rng)
        return cls(net, latent_dim, AdamState.for_params(net.params(), lr=lr))


def _generate(gen: GeneratorNet, m, rng, domain):
    z = rng.standard_normal((m, gen.latent_dim))
    raw, cache = gen.net.forward_full(z)
    return np.clip(raw, domain.lo, domain.hi), raw, cache


def generator_negative_phase(net: DenseNet, gen: GeneratorNet, m, rng, domain: BoxDomain):
    """``m`` generator samples ``G(z)``, ``z ~ N(0, I)``, clamped into the box."""
    if gen.net.n_outputs != domain.dim:
        raise ValueError(f"generator produces {gen.net.n_outputs} features, domain has {domain.dim}")
    return _generate(gen, m, rng, domain)[0]


def generator_objective(net: DenseNet, X, bandwidth, repulsion=1.0):
    """``mean g(X) - w * mean_{i<j} exp(-|x_i - x_j|^2 / h)`` and its gradient w.r.t. ``X``."""
    m = X.shape[0]
    g, dg = value_and_input_grad(net, X)
    obj = float(np.mean(g))
    grad = dg / m
    if m > 1 and repulsion:
        diff = X[:, None, :] - X[None, :, :]
        k = np.exp(-np.sum(diff * diff, axis=-1) / bandwidth)
        np.fill_diagonal(k, 0.0)
        n_pairs = m * (m - 1) / 2
        obj -= repulsion * float(np.sum(k)) / 2 / n_pairs
        grad = grad + (2.0 * repulsion / bandwidth / n_pairs) * np.sum(k[:, :, None] * diff, axis=1)
    return obj, grad


def generator_train_step(net: DenseNet, gen: GeneratorNet, m, rng, domain: BoxDomain, repulsion=1.0,
                         bandwidth=None):
    """One adam ascent step of the generator towards high ``g`` with a repulsion bonus.

    Returns the objective value at the pre-update parameters.  Components that
    the clamp pins to the box boundary pass no gradient.
    """
    X, raw, cache = _generate(gen, m, rng, domain)
    obj, dX = generator_objective(net, X, domain.mean_edge**2 if bandwidth is None else bandwidth, repulsion)
    if not np.isfinite(obj) or not np.all(np.isfinite(dX)):
        raise FloatingPointError(
            f"non-finite generator objective {obj}: sample mean {X.mean(axis=0)}, "
            f"sample std {X.std(axis=0)}"
        )
    inside = (raw >= domain.lo) & (raw <= domain.hi)
    grads, _ = gen.net.backward(cache, -dX * inside)
    gen.net.set_params(adam_step(gen.net.params(), grads, gen.adam))
    return obj
