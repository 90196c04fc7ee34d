"""Small differentiable models: a ReLU MLP classifier and an NLinear forecaster.

Parameters are held in lists of float64 arrays so the optimiser can treat
both models uniformly through ``arrays()`` / ``from_arrays()``.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reporting
from .tensor import as_matrix, check_finite, matmul

CHECKPOINT_FORMAT = "clfvar-params"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    weights: list
    biases: list

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def from_arrays(self, arrays):
        return MlpParams(list(arrays[0::2]), list(arrays[1::2]))

    def copy(self):
        return self.from_arrays([a.copy() for a in self.arrays()])


@dataclass
class NLinearParams:
    weight: np.ndarray
    bias: np.ndarray

    @property
    def lookback(self):
        return self.weight.shape[0]

    @property
    def horizon(self):
        return self.weight.shape[1]

    def arrays(self):
        return [self.weight, self.bias]

    def from_arrays(self, arrays):
        return NLinearParams(arrays[0], arrays[1])

    def copy(self):
        return NLinearParams(self.weight.copy(), self.bias.copy())


@dataclass
class MlpCache:
    inputs: list  # input to each layer
    pre: list  # pre-activation output of each layer


def init_mlp(rng, sizes):
    """He initialisation: N(0, sqrt(2 / fan_in)) weights, zero biases."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"invalid layer sizes {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = math.sqrt(2.0 / fan_in)
        weights.append(rng.gaussian_array((fan_in, fan_out), 0.0, std))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward_mlp(params, x):
    """Logits for a batch; returns ``(logits, cache)``."""
    h = as_matrix(x)
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input width {h.shape[1]} != first layer size {params.weights[0].shape[0]}"
        )
    inputs, pre = [], []
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = matmul(h, w) + b
        pre.append(z)
        h = np.maximum(z, 0.0) if layer < last else z
    return check_finite(h, "logits"), MlpCache(inputs, pre)


def backward_mlp(params, cache, d_logits):
    """Reverse-mode gradients of a scalar loss given ``dL/dlogits``."""
    delta = as_matrix(d_logits)
    if len(cache.inputs) != len(params.weights) or any(
        a.shape[1] != w.shape[0] for a, w in zip(cache.inputs, params.weights)
    ):
        raise ValueError("cache does not match these parameters")
    if delta.shape != cache.pre[-1].shape:
        raise ValueError(f"d_logits shape {delta.shape} != logits shape {cache.pre[-1].shape}")
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for layer in range(len(params.weights) - 1, -1, -1):
        gw[layer] = matmul(cache.inputs[layer].T, delta)
        gb[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = matmul(delta, params.weights[layer].T) * (cache.pre[layer - 1] > 0.0)
    return MlpParams(gw, gb)


def init_nlinear(lookback, horizon):
    """Zero-initialised NLinear: predicts the last value until trained."""
    return NLinearParams(np.zeros((lookback, horizon)), np.zeros(horizon))


def init_nlinear_random(rng, lookback, horizon):
    # Same scale as a default linear layer: U(-1/sqrt(L), 1/sqrt(L)).
    bound = 1.0 / math.sqrt(lookback)
    w = np.array([(2.0 * rng.uniform() - 1.0) * bound for _ in range(lookback * horizon)])
    b = np.array([(2.0 * rng.uniform() - 1.0) * bound for _ in range(horizon)])
    return NLinearParams(w.reshape(lookback, horizon), b)


def forward_nlinear(params, windows):
    """Predict ``horizon`` values per window via last-value normalisation.

    Accepts one window (vector) or a batch (``N x L`` matrix).  Returns the
    prediction(s) and the normalised inputs needed by the backward pass.
    """
    x = np.asarray(windows, dtype=np.float64)
    single = x.ndim == 1
    x = as_matrix(x)
    if x.shape[1] != params.lookback:
        raise ValueError(f"window length {x.shape[1]} != lookback {params.lookback}")
    last = x[:, -1:]
    centred = x - last
    pred = matmul(centred, params.weight) + params.bias + last
    check_finite(pred, "predictions")
    return (pred[0] if single else pred), centred


def backward_nlinear(params, centred, d_pred):
    d_pred = as_matrix(d_pred)
    if centred.shape[1] != params.lookback or d_pred.shape != (centred.shape[0], params.horizon):
        raise ValueError("cache does not match these parameters")
    return NLinearParams(matmul(centred.T, d_pred), d_pred.sum(axis=0))


def save_params(params, path):
    """Checkpoint as versioned JSON: one entry per tensor with its shape."""
    kind = "mlp" if isinstance(params, MlpParams) else "nlinear"
    tensors = [
        {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]} for a in params.arrays()
    ]
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": kind, "tensors": tensors}
    Path(path).write_text(reporting.dumps(doc), encoding="utf-8")


def load_params(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    arrays = [np.array(t["data"], dtype=np.float64).reshape(t["shape"]) for t in doc["tensors"]]
    if doc["kind"] == "mlp":
        return MlpParams(arrays[0::2], arrays[1::2])
    if doc["kind"] == "nlinear":
        return NLinearParams(arrays[0], arrays[1])
    raise ValueError(f"{path}: unknown model kind {doc['kind']!r}")
