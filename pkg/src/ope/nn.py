"""Dense networks with hand-derived gradients, stable elementwise functions and adam.

All arrays are float64.  A batch of inputs is a 2-D array ``(batch, n_features)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_SCHEMA_VERSION = 1

ACTIVATIONS = ("tanh", "relu", "linear")


class ShapeError(ValueError):
    """Raised when array dimensions do not match the network."""


class CheckpointError(ValueError):
    """Raised for missing or malformed checkpoint fields."""


# ---------------------------------------------------------------------------
# elementwise functions
# ---------------------------------------------------------------------------

def softplus(z):
    """log(1 + exp(z)) without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # exp of a non-positive argument only
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise ValueError("logit is defined only for 0 < p < 1")
    return np.log(p) - np.log1p(-p)


def _activate(tag, z):
    if tag == "tanh":
        return np.tanh(z)
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "linear":
        return z
    raise ValueError(f"unknown activation {tag!r}")


def _activation_derivative(tag, z, a):
    if tag == "tanh":
        return 1.0 - a * a
    if tag == "relu":
        return (z > 0).astype(np.float64)
    if tag == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {tag!r}")


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    weight: np.ndarray  # (n_in, n_out)
    bias: np.ndarray  # (n_out,)
    activation: str = "tanh"


@dataclass
class DenseNet:
    """Fully-connected network ``x -> layers[-1](... layers[0](x))``.

    A classifier network has a single linear output unit whose value is the
    logit ``g(x)``; ``f(x) = sigmoid(g(x))``.  Generator networks reuse the
    same class with a wider output.
    """

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for i, layer in enumerate(self.layers):
            layer.weight = np.asarray(layer.weight, dtype=np.float64)
            layer.bias = np.asarray(layer.bias, dtype=np.float64)
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[1],):
                raise ShapeError(f"layer {i}: weight {layer.weight.shape} and bias {layer.bias.shape} disagree")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if i > 0 and self.layers[i - 1].weight.shape[1] != layer.weight.shape[0]:
                raise ShapeError(
                    f"layer {i} expects {layer.weight.shape[0]} inputs, "
                    f"previous layer produces {self.layers[i - 1].weight.shape[1]}"
                )

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.n_inputs] + [layer.weight.shape[1] for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def set_params(self, params):
        if len(params) != 2 * len(self.layers):
            raise ShapeError(f"expected {2 * len(self.layers)} parameter blocks, got {len(params)}")
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeError(f"parameter block {i} has the wrong shape")
            layer.weight = np.array(w, dtype=np.float64)
            layer.bias = np.array(b, dtype=np.float64)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ShapeError(f"expected input of shape (batch, {self.n_inputs}), got {X.shape}")
        return X

    def forward_full(self, X):
        """Return the network output ``(batch, n_outputs)`` and the cache for backprop."""
        X = self._check_input(X)
        cache = [(X, None, None)]
        a = X
        for layer in self.layers:
            z = a @ layer.weight + layer.bias
            a = _activate(layer.activation, z)
            cache.append((a, z, layer))
        return a, cache

    def __call__(self, X):
        return self.forward_full(X)[0]

    def backward(self, cache, d_out, need_input=False, need_params=True):
        """Backpropagate ``d_out = dL/d(output)`` of shape ``(batch, n_outputs)``.

        Returns ``(param_grads, d_input)`` where param_grads follows ``params()``
        (None when not requested) and d_input is None unless requested.
        """
        grads = [None] * (2 * len(self.layers)) if need_params else None
        delta = d_out
        for i in range(len(self.layers) - 1, -1, -1):
            a, z, layer = cache[i + 1]
            delta = delta * _activation_derivative(layer.activation, z, a)
            if need_params:
                grads[2 * i] = cache[i][0].T @ delta
                grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0 or need_input:
                delta = delta @ layer.weight.T
        return grads, (delta if need_input else None)


def init_dense_net(dims, rng, activation="tanh", output_activation="linear") -> DenseNet:
    """Glorot-uniform weights, zero biases.  ``dims = [n_in, h1, ..., n_out]``."""
    if len(dims) < 2:
        raise ValueError("dims needs at least input and output sizes")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = math.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-bound, bound, size=(n_in, n_out))
        act = output_activation if i == len(dims) - 2 else activation
        layers.append(Layer(w, np.zeros(n_out), act))
    return DenseNet(layers)


def _require_scalar(net):
    if net.n_outputs != 1:
        raise ShapeError(f"expected a scalar-output network, got {net.n_outputs} outputs")


def forward(net: DenseNet, X) -> np.ndarray:
    """Logits ``g(x)`` for each row of ``X``."""
    _require_scalar(net)
    return net(X)[:, 0]


def param_grad(net: DenseNet, X, dL_dg) -> list[np.ndarray]:
    """Gradient of ``sum_i dL_dg[i] * g(X[i])`` w.r.t. every parameter block."""
    _require_scalar(net)
    dL_dg = np.asarray(dL_dg, dtype=np.float64)
    X = net._check_input(X)
    if dL_dg.shape != (X.shape[0],):
        raise ShapeError(f"dL_dg has shape {dL_dg.shape}, expected ({X.shape[0]},)")
    _, cache = net.forward_full(X)
    grads, _ = net.backward(cache, dL_dg[:, None])
    return grads


def value_and_input_grad(net: DenseNet, X):
    """``g(X)`` and the per-row input gradient ``grad_x g(x_i)`` in one pass."""
    _require_scalar(net)
    out, cache = net.forward_full(X)
    _, dx = net.backward(cache, np.ones_like(out), need_input=True, need_params=False)
    return out[:, 0], dx


def input_grad(net: DenseNet, x) -> np.ndarray:
    """``grad_x g(x)`` for a single point ``x`` (vector) or each row of a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != net.n_inputs:
            raise ShapeError(f"expected a vector of length {net.n_inputs}, got {x.shape[0]}")
        return value_and_input_grad(net, x[None, :])[1][0]
    return value_and_input_grad(net, x)[1]


# ---------------------------------------------------------------------------
# adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kwargs)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected adam descent step.  Returns new parameter arrays; mutates ``state``."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter blocks but {len(grads)} gradient blocks")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.m[i].shape != p.shape:
            raise ShapeError(f"parameter block {i}: shape {p.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {i}")

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def net_to_dict(net: DenseNet) -> dict:
    # json writes floats with repr(), the shortest string that round-trips exactly
    return {
        "dims": net.dims,
        "activations": [l.activation for l in net.layers],
        "weights": [l.weight.ravel().tolist() for l in net.layers],
        "biases": [l.bias.tolist() for l in net.layers],
    }


def net_from_dict(d: dict) -> DenseNet:
    for key in ("dims", "activations", "weights", "biases"):
        if key not in d:
            raise CheckpointError(f"checkpoint is missing field {key!r}")
    dims = d["dims"]
    n = len(dims) - 1
    if n < 1 or len(d["activations"]) != n or len(d["weights"]) != n or len(d["biases"]) != n:
        raise CheckpointError("field 'dims' is inconsistent with the layer lists")
    layers = []
    for i in range(n):
        w = np.asarray(d["weights"][i], dtype=np.float64)
        if w.size != dims[i] * dims[i + 1]:
            raise CheckpointError(f"field 'weights[{i}]' has {w.size} entries, expected {dims[i] * dims[i + 1]}")
        b = np.asarray(d["biases"][i], dtype=np.float64)
        if b.size != dims[i + 1]:
            raise CheckpointError(f"field 'biases[{i}]' has {b.size} entries, expected {dims[i + 1]}")
        layers.append(Layer(w.reshape(dims[i], dims[i + 1]), b, d["activations"][i]))
    return DenseNet(layers)


def save_checkpoint(path, net: DenseNet, *, rng_seed=None, step=0, extra=None):
    doc = {"schema_version": CHECKPOINT_SCHEMA_VERSION, **net_to_dict(net), "rng_seed": rng_seed, "step": step}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Return ``(net, doc)``; ``doc`` is the full JSON document."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CheckpointError("checkpoint is missing field 'schema_version'")
    if doc["schema_version"] != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(f"unsupported field 'schema_version': {doc['schema_version']!r}")
    return net_from_dict(doc), doc
