"""Random log-uniform search over the composite-loss weights.

Each trial samples (lambda_v, lambda_s, lambda_wd), trains a small seed
sweep, and is scored as ``norm_std - norm_acc``.  Both terms are min-max
normalised over every completed trial, so all scores are recomputed as
the history grows and the best trial is chosen under the final
normalisation.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .harness import sweep
from .losses import CLFConfig
from .rng import SeededRng
from .tensor import sample_sd

# Scores closer than this to the minimum count as ties (first trial wins).
SCORE_TIE_TOL = 1e-12


@dataclass(frozen=True)
class SearchSpace:
    lambda_v: tuple = (1e-4, 1.0)
    lambda_s: tuple = (1e-4, 1.0)
    lambda_wd: tuple = (1e-4, 1e-1)

    def __post_init__(self):
        for name in ("lambda_v", "lambda_s", "lambda_wd"):
            low, high = getattr(self, name)
            if not (low > 0 and high > 0):
                raise ValueError(f"{name} range must be positive, got {(low, high)}")
            if low > high:
                raise ValueError(f"{name} range has low > high: {(low, high)}")


@dataclass(frozen=True)
class TunerConfig:
    space: SearchSpace = SearchSpace()
    n_trials: int = 20
    seeds_per_trial: tuple = (1, 2, 3)
    epochs: Optional[int] = None  # None keeps the training config's value
    activation_window: Optional[int] = None  # None activates for the whole run

    def __post_init__(self):
        for name in ("lambda_v", "lambda_s", "lambda_wd"):
            low, high = getattr(self.space, name)
            if not low < high:
                raise ValueError(f"{name} range needs low < high, got {(low, high)}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        object.__setattr__(self, "seeds_per_trial", tuple(int(s) for s in self.seeds_per_trial))


@dataclass
class TrialRecord:
    trial: int
    lambda_v: float
    lambda_s: float
    lambda_wd: float
    mean_acc: float
    sd_acc: float
    norm_acc: float = math.nan
    norm_std: float = math.nan
    score: float = math.nan
    divergent: bool = False


TRIAL_FIELDS = (
    "trial",
    "lambda_v",
    "lambda_s",
    "lambda_wd",
    "mean_acc",
    "sd_acc",
    "norm_acc",
    "norm_std",
    "score",
    "divergent",
)


@dataclass
class TuningResult:
    best: TrialRecord
    history: list
    metric_source: str  # "val" or "test"


def _log_uniform(rng, low, high):
    if low == high:
        return float(low)
    return math.exp(math.log(low) + (math.log(high) - math.log(low)) * rng.uniform())


def sample_params(rng, config):
    """Draw ``(lambda_v, lambda_s, lambda_wd)`` log-uniformly, in that order."""
    space = getattr(config, "space", config)
    return (
        _log_uniform(rng, *space.lambda_v),
        _log_uniform(rng, *space.lambda_s),
        _log_uniform(rng, *space.lambda_wd),
    )


def _minmax(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def rescore(history):
    """Recompute normalised terms and scores over all completed trials.

    Divergent trials take no part in normalisation and score ``+inf``.
    """
    ok = [t for t in history if not t.divergent]
    if ok:
        for t, na, ns in zip(ok, _minmax([t.mean_acc for t in ok]), _minmax([t.sd_acc for t in ok])):
            t.norm_acc, t.norm_std = na, ns
            t.score = ns - na
    for t in history:
        if t.divergent:
            t.norm_acc = t.norm_std = math.nan
            t.score = math.inf


def best_trial(history):
    """First trial whose score is within SCORE_TIE_TOL of the minimum."""
    low = min(t.score for t in history)
    for t in history:
        if t.score <= low + SCORE_TIE_TOL:
            return t


def sweep_evaluator(train_config, data, seeds, jobs=1):
    """Default trial evaluator: a seed sweep scored on val (or test) accuracy.

    Regression sweeps report ``-MAE`` in place of accuracy.
    """
    use_val = data.val is not None

    def evaluate(clf):
        result = sweep(replace(train_config, clf=clf), data, seeds, jobs)
        if result.divergent_seeds:
            return None
        key = "val_" + result.metric if use_val else result.metric
        values = np.array([r.final[key] for r in result.runs])
        if result.metric == "mae":
            values = -values  # higher is better, as for accuracy
        return float(np.sum(values)) / values.size, sample_sd(values)

    evaluate.metric_source = "val" if use_val else "test"
    return evaluate


def run_tuning(config, train_config, data, seed, jobs=1, evaluate: Optional[Callable] = None):
    """Run the search; returns a :class:`TuningResult`.

    ``evaluate(clf_config)`` may be injected; it returns ``(mean, sd)`` of
    the accuracy or ``None`` for a divergent trial.
    """
    if config.epochs is not None:
        train_config = replace(train_config, epochs=config.epochs)
    window = train_config.epochs if config.activation_window is None else config.activation_window
    if evaluate is None:
        evaluate = sweep_evaluator(train_config, data, config.seeds_per_trial, jobs)
    rng = SeededRng(seed)
    history = []
    for trial in range(config.n_trials):
        lam_v, lam_s, lam_wd = sample_params(rng, config)
        clf = CLFConfig(lam_s, lam_v, lam_wd, window)
        metrics = evaluate(clf)
        if metrics is None:
            history.append(TrialRecord(trial, lam_v, lam_s, lam_wd, math.nan, math.nan, divergent=True))
        else:
            history.append(TrialRecord(trial, lam_v, lam_s, lam_wd, metrics[0], metrics[1]))
        rescore(history)
    source = getattr(evaluate, "metric_source", "test")
    return TuningResult(best_trial(history), history, source)
