"""Anomaly detection classifiers trained on normal data, a few known anomalies and a weighted uniform or sampled negative phase."""

from .data import LabeledDataset, load_csv, make_gaussian_mixture, make_moons, make_two_disks, subsample_protocol
from .losses import (
    LossBreakdown,
    LossConfig,
    cross_entropy_loss_and_grad,
    eope_loss_and_grad,
    ope_loss_and_grad,
    optimal_f,
)
from .metrics import MetricsReport, grid_eval, monotonicity_probe, roc_auc
from .nn import DenseNet, adam_step, forward, init_dense_net, input_grad, param_grad, sigmoid, softplus
from .samplers import BoxDomain, hmc_step, rmsprop_step, uniform_sample

__version__ = "0.1.0"

__all__ = [
    "BoxDomain", "DenseNet", "LabeledDataset", "LossBreakdown", "LossConfig", "MetricsReport",
    "adam_step", "cross_entropy_loss_and_grad", "eope_loss_and_grad", "forward", "grid_eval", "hmc_step",
    "init_dense_net", "input_grad", "load_csv", "make_gaussian_mixture", "make_moons", "make_two_disks",
    "monotonicity_probe", "ope_loss_and_grad", "optimal_f", "param_grad", "rmsprop_step", "roc_auc",
    "sigmoid", "softplus", "subsample_protocol", "uniform_sample",
]
