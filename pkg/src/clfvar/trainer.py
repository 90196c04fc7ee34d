"""Deterministic mini-batch training loop.

One run is a pure function of ``(TrainConfig, DataSplits, seed)``: the seed
drives weight initialisation and the per-epoch shuffle, nothing else reads
randomness.
"""

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .datasets import DataSplits
from .losses import CLFConfig, clf_total, clf_total_regression, cel, mse
from .models import (
    backward_mlp,
    backward_nlinear,
    forward_mlp,
    forward_nlinear,
    init_mlp,
    init_nlinear_random,
)
from .rng import SeededRng
from .tensor import NonFiniteError


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr_peak: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    clf: CLFConfig = CLFConfig()
    task: str = "classification"
    hidden: tuple = (32,)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr_peak > 0:
            raise ValueError("lr_peak must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be non-negative")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.clf.activation_window > self.epochs:
            raise ValueError("activation_window exceeds epochs")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


EPOCH_FIELDS = (
    "epoch",
    "lr",
    "clf_on",
    "lambda_v_eff",
    "base_prev",
    "train_base",
    "train_sl",
    "train_vpl",
    "train_total",
    "test_metric",
    "test_loss",
    "val_metric",
)

BATCH_FIELDS = ("epoch", "batch", "cel", "sl", "vpl", "lambda_v_eff", "total")


@dataclass
class RunRecord:
    seed: int
    task: str
    metric: str  # "accuracy" (percent) or "mae"
    rows: list = field(default_factory=list)  # one tuple per epoch, EPOCH_FIELDS order
    final: dict = field(default_factory=dict)
    divergent: bool = False
    diagnostic: str = ""
    wall_time: float = 0.0
    batch_rows: Optional[list] = None

    @property
    def final_metric(self):
        return self.final.get(self.metric, math.nan)

    @property
    def final_loss(self):
        return self.final.get("test_loss", math.nan)

    def same_trajectory(self, other):
        """Equality of everything except wall time."""
        return (
            self.seed == other.seed
            and self.rows == other.rows
            and self.final == other.final
            and self.divergent == other.divergent
        )


def cosine_lr(epoch, total, peak):
    """``0.5 * peak * (1 + cos(pi * epoch / (total - 1)))``; constant if total is 1."""
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside 0..{total - 1}")
    if total == 1:
        return peak
    return 0.5 * peak * (1.0 + math.cos(math.pi * epoch / (total - 1)))


def sgd_step(params, buffers, grads, lr, momentum, weight_decay):
    """SGD with momentum and L2 weight decay, in place.

    buffer = momentum * buffer + grad + weight_decay * param
    param -= lr * buffer
    """
    if not (len(params) == len(buffers) == len(grads)):
        raise ValueError("params, buffers and grads differ in length")
    for p, b, g in zip(params, buffers, grads):
        if p.shape != b.shape or p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} / {b.shape} / {g.shape}")
        b *= momentum
        b += g
        if weight_decay:
            b += weight_decay * p
        p -= lr * b


def clf_active(epoch, total, window):
    return epoch >= total - window


def decay_lambda_v(lambda_v, lambda_wd, epochs_active):
    if lambda_wd >= 1:
        return 0.0 if epochs_active > 0 else lambda_v
    return lambda_v * (1.0 - lambda_wd) ** epochs_active


def _init_params(config, data, rng):
    if config.task == "classification":
        d = data.train.inputs.shape[1]
        return init_mlp(rng, [d, *config.hidden, data.train.n_classes])
    return init_nlinear_random(rng, data.train.lookback, data.train.horizon)


def _evaluate_classification(params, ds):
    logits, _ = forward_mlp(params, ds.inputs)
    loss, _ = cel(logits, ds.labels)
    accuracy = 100.0 * float(np.mean(np.argmax(logits, axis=1) == ds.labels))
    return accuracy, loss


def _evaluate_regression(params, ds):
    pred, _ = forward_nlinear(params, ds.inputs)
    loss, _ = mse(pred, ds.targets)
    mae = float(np.mean(np.abs(pred - ds.targets)))
    return mae, loss


@np.errstate(over="ignore", invalid="ignore")
def train(config, data: DataSplits, seed, log_batches=False):
    """Train one model from scratch; returns a :class:`RunRecord`.

    A non-finite loss or activation stops the run and flags it divergent.
    """
    started = time.perf_counter()
    regression = config.task == "regression"
    if (data.task == "regression") != regression:
        raise ValueError(f"config task {config.task!r} does not match the data")
    rng = SeededRng(seed)
    params = _init_params(config, data, rng)
    arrays = params.arrays()
    buffers = [np.zeros_like(a) for a in arrays]
    evaluate = _evaluate_regression if regression else _evaluate_classification
    record = RunRecord(seed, config.task, "mae" if regression else "accuracy")
    if log_batches:
        record.batch_rows = []

    train_ds = data.train
    if regression:
        x_all, y_all = train_ds.inputs, train_ds.targets
    else:
        x_all, y_all = train_ds.inputs, train_ds.labels
    n = len(train_ds)
    clf = config.clf
    base_prev = None
    epochs_active = 0

    try:
        for epoch in range(config.epochs):
            lr = cosine_lr(epoch, config.epochs, config.lr_peak)
            # Zero weights switch the composite off entirely, matching window=0.
            on = clf_active(epoch, config.epochs, clf.activation_window) and clf.weighted
            lam_v = decay_lambda_v(clf.lambda_v, clf.lambda_wd, epochs_active)
            order = rng.shuffle(n)
            sums = np.zeros(4)  # base, sl, vpl, total, weighted by batch size
            for b, start in enumerate(range(0, n, config.batch_size)):
                idx = order[start : start + config.batch_size]
                xb, yb = x_all[idx], y_all[idx]
                if regression:
                    pred, centred = forward_nlinear(params, xb)
                    rep = clf_total_regression(pred, yb, clf, base_prev, on, lam_v)
                    grads = backward_nlinear(params, centred, rep.grad)
                else:
                    logits, cache = forward_mlp(params, xb)
                    rep = clf_total(logits, yb, clf, base_prev, on, lam_v)
                    grads = backward_mlp(params, cache, rep.grad)
                if not math.isfinite(rep.total):
                    raise NonFiniteError("non-finite loss")
                sums += idx.size * np.array([rep.base, rep.sl, rep.vpl, rep.total])
                if log_batches:
                    record.batch_rows.append((epoch, b, rep.base, rep.sl, rep.vpl, lam_v, rep.total))
                sgd_step(arrays, buffers, grads.arrays(), lr, config.momentum, config.weight_decay)
            means = sums / n
            prev_logged = base_prev
            if on:
                base_prev = float(means[0])
                epochs_active += 1
            test_metric, test_loss = evaluate(params, data.test)
            val_metric = evaluate(params, data.val)[0] if data.val is not None else None
            if not (math.isfinite(test_metric) and math.isfinite(test_loss)):
                raise NonFiniteError("non-finite test metrics")
            record.rows.append(
                (epoch, lr, on, lam_v if on else 0.0, prev_logged, *map(float, means), test_metric, test_loss, val_metric)
            )
    except (NonFiniteError, FloatingPointError) as exc:
        record.divergent = True
        record.diagnostic = f"diverged at epoch {len(record.rows)}: {exc}"
    else:
        last = record.rows[-1]
        record.final = {record.metric: last[9], "test_loss": last[10]}
        if data.val is not None:
            record.final["val_" + record.metric] = last[11]
        if regression:
            record.final["mse"] = last[10]
    record.wall_time = time.perf_counter() - started
    return record
