"""Task construction, the OPE / EOPE training loops and the repeated-trial runner."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .config import RunConfig
from .losses import (
    LossConfig,
    cross_entropy_loss_and_grad,
    default_gamma,
    eope_loss_and_grad,
    ope_loss_and_grad,
)
from .metrics import MetricsReport, roc_auc
from .nn import AdamState, DenseNet, adam_step, forward, init_dense_net, save_checkpoint
from .samplers import (
    BoxDomain,
    GeneratorNet,
    generator_negative_phase,
    generator_train_step,
    init_chains,
    persistent_negative_phase,
    uniform_sample,
)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Non-finite loss; ``last_good`` holds the network before the failing step."""

    def __init__(self, msg, last_good=None, step=None):
        super().__init__(msg)
        self.last_good = last_good
        self.step = step


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

@dataclass
class Task:
    train: D.LabeledDataset
    test: D.LabeledDataset
    domain: BoxDomain
    standardizer: D.Standardizer | None = None
    # exact class densities in model space, when the generator knows them
    densities: dict = field(default_factory=dict)


def _generate(spec, rng):
    if spec.kind == "moons":
        return D.make_moons(spec.n, spec.noise, rng), {}
    if spec.kind == "moons_ring":
        moons = D.make_moons(spec.n, spec.noise, rng)
        ring = D.make_ring(spec.n_negative, spec.ring_radius, spec.ring_center, rng)
        X = np.vstack([moons.X, ring])
        y = np.r_[np.ones(len(moons)), np.zeros(len(ring))]
        classes = np.r_[moons.classes, np.full(len(ring), 2)]
        return D.LabeledDataset(X, y, classes), {}
    if spec.kind == "two_disks":
        return D.make_two_disks(spec.n, spec.radius, spec.centers, rng), {}
    if spec.kind == "gaussian_mixture":
        return D.make_gaussian_mixture(spec.mixture, rng)
    raise ValueError(f"no generator for dataset kind {spec.kind!r}")


def build_task(spec, subsample_rng=None) -> Task:
    """Generate or load data, split, standardize, fix the domain and subsample negatives.

    Everything up to the subsample is determined by ``spec.seed`` so all trials
    share one split; ``subsample_rng`` draws the per-trial negative subset.
    """
    rng = np.random.default_rng(spec.seed)
    densities = {}
    if spec.kind == "csv":
        full = D.load_csv(spec.path, spec.label_column, spec.class_column)
        if spec.test_path:
            train = full
            test = D.load_csv(spec.test_path, spec.label_column, spec.class_column, split="test")
        else:
            train, test = D.train_test_split(full, rng, spec.test_fraction)
    else:
        full, densities = _generate(spec, rng)
        train, test = D.train_test_split(full, rng, spec.test_fraction)

    st = None
    if spec.standardize:
        st = D.standardize_fit(train)
        train = D.standardize_apply(train, st)
        test = D.standardize_apply(test, st)
        # density in model space: p_z(z) = p_x(x(z)) * prod(std)
        jac = float(np.prod(st.std))
        densities = {k: (lambda Z, fn=fn: fn(st.inverse(Z)) * jac) for k, fn in densities.items()}

    dom = spec.domain or {}
    if "lo" in dom:
        domain = BoxDomain(dom["lo"], dom["hi"])
    else:
        domain = BoxDomain.around(train.positives, dom.get("margin", 0.1))

    if spec.test_anomalies == "uniform_box":
        test_pos = test.positives
        n_anom = spec.n_test_anomalies or len(test_pos)
        anomalies = uniform_sample(domain, n_anom, rng)
        test = D.LabeledDataset(np.vstack([test_pos, anomalies]), np.r_[np.ones(len(test_pos)), np.zeros(n_anom)],
                                None, "test", test.standardized)

    if spec.subsample is not None:
        train = D.subsample_protocol(train, D.SubsampleMode(**spec.subsample),
                                     subsample_rng if subsample_rng is not None else rng)
    return Task(train, test, domain, st, densities)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    net: DenseNet
    domain: BoxDomain
    gamma: float
    steps: int
    converged: bool
    log: list


def _batch(X, m, rng):
    n = X.shape[0]
    return X[rng.choice(n, size=m, replace=n < m)]


def _plateau(totals, window, tol):
    t = len(totals)
    if tol is None or t < 2 * window or t % window:
        return False
    prev = np.mean(totals[t - 2 * window:t - window])
    cur = np.mean(totals[t - window:])
    return bool(prev - cur < tol)


def train(cfg: RunConfig, task: Task, seed: int | None = None, log_path=None) -> TrainResult:
    """Run brute-force OPE, energy OPE or the cross-entropy baseline.

    Each step draws a positive batch, a known-anomaly batch (when the training
    set has negatives) and, for OPE/EOPE, a negative-phase batch, all of size
    ``batch_size``; sets smaller than the batch are drawn with replacement.
    Separate random streams drive initialisation, data batches and the
    negative phase, so variants that share a seed see identical data batches.
    """
    seed = cfg.training.seed if seed is None else seed
    s_init, s_batch, s_phase, s_gen = np.random.SeedSequence(seed).spawn(4)
    rng_init = np.random.default_rng(s_init)
    rng_batch = np.random.default_rng(s_batch)
    rng_phase = np.random.default_rng(s_phase)

    pos, neg = task.train.positives, task.train.negatives
    n_features = task.train.n_features
    variant = cfg.loss.variant
    if variant == "cross_entropy" and len(neg) == 0:
        raise ValueError("cross_entropy training needs negative samples")

    gamma = cfg.loss.gamma if cfg.loss.gamma is not None else default_gamma(len(pos), len(neg))
    loss_cfg = LossConfig(variant, cfg.loss.epsilon, gamma, cfg.loss.pred_reg_c)

    net = init_dense_net([n_features, *cfg.model.hidden, 1], rng_init, cfg.model.activation)
    o = cfg.optimizer
    adam = AdamState.for_params(net.params(), lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    m = cfg.training.batch_size
    domain = task.domain
    sc = cfg.sampler

    chains = gen = None
    if variant == "eope":
        if sc.kind == "generator":
            gen = GeneratorNet.create(n_features, np.random.default_rng(s_gen), sc.latent_dim,
                                      sc.generator_hidden, sc.generator_lr)
        else:
            chains = init_chains(domain, m, rng_phase)

    records, totals = [], []
    log_fh = open(log_path, "w") if log_path else None
    converged = False
    step = 0
    try:
        for step in range(1, cfg.training.max_steps + 1):
            xp = _batch(pos, m, rng_batch)
            xn = _batch(neg, m, rng_batch) if len(neg) else None
            diag = {}
            if variant == "cross_entropy":
                br, grads = cross_entropy_loss_and_grad(net, xp, xn, gamma)
            elif variant == "ope":
                x0 = uniform_sample(domain, m, rng_phase)
                br, grads = ope_loss_and_grad(net, xp, xn, x0, loss_cfg)
            else:
                if gen is not None:
                    for _ in range(sc.steps_per_update):
                        generator_train_step(net, gen, m, rng_phase, domain, sc.repulsion, sc.bandwidth)
                    x0 = generator_negative_phase(net, gen, m, rng_phase, domain)
                else:
                    x0, chains = persistent_negative_phase(net, chains, sc, domain, rng_phase)
                    diag = {"accept_rate": chains.accept_rate, "restarts": chains.restarts}
                br, grads = eope_loss_and_grad(net, xp, xn, x0, loss_cfg)
                diag["mean_g_negative_phase"] = br.l_zero_or_energy

            finite = np.isfinite(br.total) and all(np.all(np.isfinite(g)) for g in grads)
            if not finite:
                raise TrainingError(f"non-finite loss at step {step}", net.copy(), step - 1)
            net.set_params(adam_step(net.params(), grads, adam))

            rec = {"step": step, **br.as_dict(), **diag}
            records.append(rec)
            totals.append(br.total)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
            if _plateau(totals, cfg.training.convergence_window, cfg.training.convergence_tol):
                converged = True
                break
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(net, domain, gamma, step, converged, records)


def score(net: DenseNet, X) -> np.ndarray:
    """Normality score; the logit ``g`` rather than ``f`` so saturated outputs do not tie."""
    return forward(net, X)


def evaluate(net: DenseNet, ds: D.LabeledDataset) -> float:
    return roc_auc(score(net, ds.X), ds.y)


def checkpoint_extra(cfg: RunConfig, task: Task, result: TrainResult):
    return {
        "domain": task.domain.to_dict(),
        "standardizer": task.standardizer.to_dict() if task.standardizer else None,
        "gamma": result.gamma,
        "loss_variant": cfg.loss.variant,
        "config": cfg.to_dict(),
        "config_fingerprint": cfg.fingerprint(),
    }


def train_to_dir(cfg: RunConfig, out_dir, seed=None):
    """Train and write ``checkpoint.json`` and ``train_log.jsonl`` into ``out_dir``.

    On a non-finite loss the last good network is still checkpointed before
    the error propagates.
    """
    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.training.seed if seed is None else seed
    task = build_task(cfg.dataset)
    ckpt = os.path.join(out_dir, "checkpoint.json")
    try:
        result = train(cfg, task, seed, log_path=os.path.join(out_dir, "train_log.jsonl"))
    except TrainingError as exc:
        dummy = TrainResult(exc.last_good, task.domain, float("nan"), exc.step, False, [])
        save_checkpoint(ckpt, exc.last_good, rng_seed=seed, step=exc.step,
                        extra=checkpoint_extra(cfg, task, dummy))
        raise
    save_checkpoint(ckpt, result.net, rng_seed=seed, step=result.steps,
                    extra=checkpoint_extra(cfg, task, result))
    return task, result


# ---------------------------------------------------------------------------
# repeated trials
# ---------------------------------------------------------------------------

def trial_seeds(master_seed: int, n_trials: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(n_trials)
    return [int(c.generate_state(1)[0]) for c in children]


def run_experiment(cfg: RunConfig, n_trials: int = 5, master_seed: int | None = None) -> MetricsReport:
    """Train ``n_trials`` models, each on a fresh negative subsample with its own seed.

    Reports per-trial test AUC with mean and population std.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    master_seed = cfg.training.seed if master_seed is None else master_seed
    seeds = trial_seeds(master_seed, n_trials)
    aucs = []
    for i, s in enumerate(seeds):
        try:
            task = build_task(cfg.dataset, subsample_rng=np.random.default_rng(s))
            result = train(cfg, task, s)
            aucs.append(evaluate(result.net, task.test))
        except Exception as exc:
            raise ExperimentError(f"trial {i} (seed {s}) failed: {exc}") from exc
        log.info("trial %d seed %d auc %.4f", i, s, aucs[-1])
    return MetricsReport(aucs, seeds, cfg.fingerprint(), {"master_seed": master_seed})
