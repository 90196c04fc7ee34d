"""Multi-seed sweeps and the statistics computed over them."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import repeat

import numpy as np

from .rng import SeededRng
from .tensor import sample_sd
from .trainer import TrainConfig, train

BOOTSTRAP_RESAMPLES = 1000


@dataclass
class SweepResult:
    runs: list  # RunRecord, sorted by seed
    config: TrainConfig
    metric: str

    @property
    def seeds(self):
        return [r.seed for r in self.runs]

    @property
    def divergent_seeds(self):
        return [r.seed for r in self.runs if r.divergent]

    def final_metrics(self, include_divergent=False):
        return [r.final_metric for r in self.runs if include_divergent or not r.divergent]


@dataclass
class VariabilitySummary:
    metric: str
    n_seeds: int
    mean_metric: float
    sd_metric: float
    sd_err: float
    sd_err_analytic: float
    sd_err_bootstrap: float
    loss_mean: float
    loss_sd: float
    loss_sd_err: float
    bound_method: str
    excluded_seeds: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Reduction:
    upper: float  # reduction ratio at the upper error bound, as a fraction
    lower: float  # at the lower bound; None if the baseline lower bound is not positive
    average: float  # percent
    used: list  # which bounds entered the average

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class GroupStudyResult:
    group_size: int
    n_samples: int
    mean_of_group_means_a: float
    mean_of_group_means_b: float
    mean_of_group_sds_a: float
    mean_of_group_sds_b: float
    fraction_a_lower_sd: float
    fraction_b_lower_sd: float

    @property
    def lower_sd_group(self):
        if self.fraction_a_lower_sd > self.fraction_b_lower_sd:
            return "a"
        if self.fraction_b_lower_sd > self.fraction_a_lower_sd:
            return "b"
        return "tie"


def _train_one(args):
    config, data, seed = args
    return train(config, data, seed)


def sweep(config, data, seeds, jobs=1):
    """One training run per seed; runs are returned sorted by seed."""
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("a sweep needs at least two seeds")
    if len(set(seeds)) != len(seeds):
        dupes = sorted({s for s in seeds if seeds.count(s) > 1})
        raise ValueError(f"duplicate seeds: {dupes}")
    ordered = sorted(seeds)
    tasks = list(zip(repeat(config), repeat(data), ordered))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            runs = list(pool.map(_train_one, tasks))
    else:
        runs = [_train_one(t) for t in tasks]
    return SweepResult(runs, config, runs[0].metric)


def analytic_sd_err(sd, n):
    """Large-sample standard error of a sample SD: ``sd / sqrt(2 (n - 1))``."""
    return sd / math.sqrt(2.0 * (n - 1))


def bootstrap_sd_err(values, seed=0, resamples=BOOTSTRAP_RESAMPLES):
    """Half-width of the 95% percentile bootstrap interval of the sample SD."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    rng = SeededRng(seed)
    sds = np.empty(resamples)
    for r in range(resamples):
        idx = [rng.below(n) for _ in range(n)]
        sds[r] = sample_sd(values[idx])
    lo, hi = np.percentile(sds, [2.5, 97.5])
    return float(hi - lo) / 2.0


def summarize(result, bound="bootstrap", exclude_divergent=False, bootstrap_seed=0):
    """Mean and sample SD of the final metric and loss across seeds."""
    if bound not in ("bootstrap", "analytic"):
        raise ValueError(f"unknown bound method {bound!r}")
    runs = sorted(result.runs, key=lambda r: r.seed)
    bad = [r.seed for r in runs if r.divergent]
    if bad and not exclude_divergent:
        raise ValueError(f"divergent runs for seeds {bad}; pass exclude_divergent to drop them")
    runs = [r for r in runs if not r.divergent]
    if len(runs) < 2:
        raise ValueError("need at least two usable runs to summarise")
    metrics = np.array([r.final_metric for r in runs])
    losses = np.array([r.final_loss for r in runs])
    n = metrics.size
    sd = sample_sd(metrics)
    loss_sd = sample_sd(losses)
    err_a = analytic_sd_err(sd, n)
    err_b = bootstrap_sd_err(metrics, bootstrap_seed)
    loss_err = (
        bootstrap_sd_err(losses, bootstrap_seed) if bound == "bootstrap" else analytic_sd_err(loss_sd, n)
    )
    return VariabilitySummary(
        metric=result.metric,
        n_seeds=n,
        mean_metric=float(np.sum(metrics)) / n,
        sd_metric=sd,
        sd_err=err_b if bound == "bootstrap" else err_a,
        sd_err_analytic=err_a,
        sd_err_bootstrap=err_b,
        loss_mean=float(np.sum(losses)) / n,
        loss_sd=loss_sd,
        loss_sd_err=loss_err,
        bound_method=bound,
        excluded_seeds=bad,
    )


def avg_var_reduction(without, with_clf):
    """Average of the SD reductions evaluated at the upper and lower error bounds.

    ``without`` and ``with_clf`` are ``(sd, err)`` pairs.  A bound whose
    reduction is non-positive while the other is positive is dropped, and
    the remaining bound is reported alone.  A non-positive baseline lower
    bound (``sd - err <= 0``) likewise leaves only the upper bound.
    """
    sd_wo, err_wo = without
    sd_w, err_w = with_clf
    if not sd_wo + err_wo > 0:
        raise ValueError("baseline upper bound must be positive")
    upper = 1.0 - (sd_w + err_w) / (sd_wo + err_wo)
    lower = None
    if sd_wo - err_wo > 0:
        lower = 1.0 - (sd_w - err_w) / (sd_wo - err_wo)
    used = ["upper", "lower"] if lower is not None else ["upper"]
    if lower is not None:
        if upper <= 0 < lower:
            used = ["lower"]
        elif lower <= 0 < upper:
            used = ["upper"]
    picked = [upper if u == "upper" else lower for u in used]
    return Reduction(upper, lower, 100.0 * sum(picked) / len(picked), used)


def _group_sd_stats(pool, subsets):
    means = np.empty(len(subsets))
    sds = np.empty(len(subsets))
    for k, idx in enumerate(subsets):
        v = pool[idx]
        means[k] = float(np.sum(v)) / v.size
        sds[k] = sample_sd(v)
    return means, sds


def group_study(pool_a, pool_b, group_sizes, n_samples, seed):
    """Resample equal-index subsets of two metric pools and compare their SDs.

    Both pools must be indexed by the same seeds, so subset ``k`` picks the
    same positions from each.  Ties in SD count for neither pool.
    """
    a = np.asarray(pool_a, dtype=np.float64)
    b = np.asarray(pool_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each pool needs at least two values")
    if a.size != b.size:
        raise ValueError("pools must have the same length (one value per shared seed)")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = SeededRng(seed)
    results = []
    for size in group_sizes:
        if not 2 <= size <= a.size:
            raise ValueError(f"group size {size} outside 2..{a.size}")
        subsets = [rng.sample_indices(a.size, size) for _ in range(n_samples)]
        means_a, sds_a = _group_sd_stats(a, subsets)
        means_b, sds_b = _group_sd_stats(b, subsets)
        results.append(
            GroupStudyResult(
                group_size=size,
                n_samples=n_samples,
                mean_of_group_means_a=float(np.mean(means_a)),
                mean_of_group_means_b=float(np.mean(means_b)),
                mean_of_group_sds_a=float(np.mean(sds_a)),
                mean_of_group_sds_b=float(np.mean(sds_b)),
                fraction_a_lower_sd=float(np.mean(sds_a < sds_b)),
                fraction_b_lower_sd=float(np.mean(sds_b < sds_a)),
            )
        )
    return results


def five_number(values):
    q = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return tuple(float(v) for v in q)


@dataclass
class DurationEntry:
    window: int
    sweep: SweepResult
    summary: VariabilitySummary
    five: tuple  # min, q1, median, q3, max of the final metric


def duration_study(config, data, windows, seeds, jobs=1, bound="bootstrap", exclude_divergent=False):
    """One sweep per activation window, all reusing the same seed list."""
    entries = []
    for w in windows:
        if not 0 <= w <= config.epochs:
            raise ValueError(f"window {w} outside 0..{config.epochs}")
        cfg = replace(config, clf=replace(config.clf, activation_window=int(w)))
        result = sweep(cfg, data, seeds, jobs)
        summary = summarize(result, bound, exclude_divergent)
        entries.append(DurationEntry(int(w), result, summary, five_number(result.final_metrics())))
    return entries
