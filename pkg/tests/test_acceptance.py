"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) and
asserts on the same condition.  Runtime budgets are asserted too.
"""

import json
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from _gradcheck import numeric_grad, relative_error
from clfvar.cli import main
from clfvar.config import build_data, load
from clfvar.harness import avg_var_reduction, duration_study, group_study, sweep
from clfvar.losses import CLFConfig, cel, clf_total, clf_total_regression, mse, regression_vpl, vpl, vpl_gradient_full
from clfvar.models import NLinearParams, backward_mlp, backward_nlinear, forward_mlp, forward_nlinear, init_mlp
from clfvar.rng import SeededRng
from clfvar.tensor import log_softmax, sample_sd
from clfvar.trainer import TrainConfig, cosine_lr
from clfvar.tuner import SearchSpace, TunerConfig, run_tuning

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_c1_reduction_formula(acceptance_report):
    rows = [
        ((0.14, 0.04), (0.08, 0.02), 42.2),
        ((0.20, 0.07), (0.13, 0.04), 33.9),
        ((0.16, 0.05), (0.10, 0.04), 39.4),
        ((0.30, 0.06), (0.07, 0.02), 77.1),
    ]
    with Timer() as t:
        got = [avg_var_reduction(a, b).average for a, b, _ in rows]
    ok = all(abs(g - e) <= 0.1 for g, (_, _, e) in zip(got, rows)) and t.seconds < 1
    acceptance_report("1 reduction formula", ok, ", ".join(f"{g:.2f}" for g in got) + f" in {t.seconds:.3f}s")
    assert ok


def _kink_free_prev(rs, base):
    return base * (1.0 + rs.choice([-1.0, 1.0]) * rs.uniform(0.2, 0.8))


def _mlp_cases(seed):
    rs = np.random.default_rng(seed)
    params = init_mlp(SeededRng(seed), [2, 4, 3])
    for b in params.biases:
        b[:] = rs.normal(scale=0.1, size=b.shape)
    x, y = rs.normal(size=(10, 2)), rs.integers(0, 3, size=10)
    cfg = CLFConfig(rs.uniform(0.05, 1), rs.uniform(0.05, 1))
    prev = _kink_free_prev(rs, cel(forward_mlp(params, x)[0], y)[0])
    losses = {
        "cel": lambda z: cel(z, y)[:2],
        "vpl": lambda z: vpl(z, y)[:2],
        "composite": lambda z: (lambda r: (r.total, r.grad))(clf_total(z, y, cfg, prev)),
    }
    for name, fn in losses.items():
        logits, cache = forward_mlp(params, x)
        analytic = backward_mlp(params, cache, fn(logits)[1]).arrays()
        numeric = numeric_grad(lambda: fn(forward_mlp(params, x)[0])[0], params.arrays())
        yield "mlp " + name, relative_error(analytic, numeric)


def _nlinear_cases(seed):
    rs = np.random.default_rng(1000 + seed)
    params = NLinearParams(rs.uniform(-0.35, 0.35, size=(8, 3)), rs.normal(scale=0.1, size=3))
    x, t = rs.normal(size=(7, 8)), rs.normal(size=(7, 3))
    cfg = CLFConfig(rs.uniform(0.05, 1), rs.uniform(0.05, 1))
    prev = _kink_free_prev(rs, mse(forward_nlinear(params, x)[0], t)[0])
    losses = {
        "mse": lambda p: mse(p, t),
        "regression vpl": lambda p: regression_vpl(p, t),
        "composite": lambda p: (lambda r: (r.total, r.grad))(clf_total_regression(p, t, cfg, prev)),
    }
    for name, fn in losses.items():
        pred, centred = forward_nlinear(params, x)
        analytic = backward_nlinear(params, centred, fn(pred)[1]).arrays()
        numeric = numeric_grad(lambda: fn(forward_nlinear(params, x)[0])[0], params.arrays())
        yield "nlinear " + name, relative_error(analytic, numeric)


def test_c2_gradient_suite(acceptance_report):
    worst = {}
    with Timer() as t:
        for seed in range(20):
            for name, err in [*_mlp_cases(seed), *_nlinear_cases(seed)]:
                worst[name] = max(worst.get(name, 0.0), err)
    ok = all(e < 1e-4 for e in worst.values()) and t.seconds < 30
    detail = f"20 instances x {len(worst)} losses, worst rel err {max(worst.values()):.2e} in {t.seconds:.2f}s"
    acceptance_report("2 gradient suite", ok, detail)
    assert ok, worst


def test_c3_cancellation(acceptance_report):
    rs = np.random.default_rng(3)
    worst = 0.0
    with Timer() as t:
        for _ in range(100):
            n, k = rs.integers(2, 64), rs.integers(2, 10)
            z, y = rs.normal(scale=5.0, size=(n, k)), rs.integers(0, k, size=n)
            worst = max(worst, float(np.max(np.abs(vpl(z, y)[1] - vpl_gradient_full(z, y)))))
    ok = worst <= 1e-12 and t.seconds < 5
    acceptance_report("3 full vs simplified VPL gradient", ok, f"max abs diff {worst:.1e} over 100 batches in {t.seconds:.2f}s")
    assert ok


def _run_sweep(tmp_path, name, jobs):
    out = tmp_path / name
    code = main(["sweep", "--config", str(CONFIGS / "blobs_baseline.json"), "--seeds", "1..5", "--jobs", str(jobs), "--out", str(out), "--no-timestamp"])
    assert code == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_c4_determinism(tmp_path, acceptance_report):
    with Timer() as t:
        first = _run_sweep(tmp_path, "a", 1)
        second = _run_sweep(tmp_path, "b", 1)
        parallel = _run_sweep(tmp_path, "c", 4)
    ok = first == second == parallel and len(first) == 12 and t.seconds < 120
    acceptance_report("4 sweep determinism (jobs 1 and 4)", ok, f"{len(first)} files byte-identical in {t.seconds:.1f}s")
    assert ok


def test_c5_baseline_equivalence(acceptance_report):
    exp = load(CONFIGS / "blobs_clf.json")
    data = build_data(exp)
    base = replace(exp.train, epochs=40, clf=CLFConfig())
    zero_weights = sweep(replace(base, clf=CLFConfig(0.0, 0.0, 0.01, 40)), data, [1, 2, 3, 4, 5])
    window_zero = sweep(replace(base, clf=CLFConfig(0.1, 0.1, 0.01, 0)), data, [1, 2, 3, 4, 5])
    same = all(a.rows == b.rows and a.final == b.final for a, b in zip(zero_weights.runs, window_zero.runs))
    acceptance_report("5 zero weights == window 0", same, "5-seed sweeps x 40 epochs compared row by row")
    assert same


def test_c6_group_study(acceptance_report):
    with Timer() as t:
        (sampled,) = group_study([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0], [2], 5000, seed=0)
        (full,) = group_study([1.0, 2.0, 3.0, 4.0], [4.0, 1.0, 1.0, 1.0], [4], 10, seed=0)
    exact = 10 / math.sqrt(2) / 6
    ok = (
        abs(sampled.mean_of_group_sds_a - exact) <= 0.02
        and full.mean_of_group_sds_a == sample_sd([1.0, 2.0, 3.0, 4.0])
        and t.seconds < 5
    )
    acceptance_report("6 group study oracle", ok, f"sampled {sampled.mean_of_group_sds_a:.4f} vs exact {exact:.4f} in {t.seconds:.2f}s")
    assert ok


def test_c7_duration_prefix(acceptance_report):
    exp = load(CONFIGS / "blobs_clf.json")
    data = build_data(exp)
    windows = [10, 30, 50, 70, 90]
    with Timer() as t:
        entries = duration_study(exp.train, data, windows, [1, 2, 3, 4, 5])
    ok = t.seconds < 300 and len(entries) == 5
    for e in entries:
        for run in e.sweep.runs:
            for other in entries:
                start = exp.train.epochs - max(e.window, other.window)
                peer = next(r for r in other.sweep.runs if r.seed == run.seed)
                ok &= run.rows[:start] == peer.rows[:start]
    acceptance_report("7 duration prefix property", ok, f"25 runs, prefixes identical, {t.seconds:.1f}s")
    assert ok


def test_c8_tuner_arithmetic(acceptance_report):
    def tune(metrics):
        it = iter(metrics)
        cfg = TunerConfig(SearchSpace(), n_trials=len(metrics))
        return run_tuning(cfg, TrainConfig(epochs=2), None, 0, evaluate=lambda clf: (lambda m: (m[1], m[0]))(next(it)))

    with Timer() as t:
        two = tune([(0.1, 1.0), (0.3, 0.8)])
        same = tune([(0.2, 0.9)] * 5)
    ok = (
        [r.score for r in two.history] == [-1.0, 1.0]
        and two.best.trial == 0
        and all(r.score == 0.0 for r in same.history)
        and same.best.trial == 0
        and t.seconds < 1
    )
    acceptance_report("8 tuner arithmetic", ok, f"scores {[r.score for r in two.history]}, tie -> trial {same.best.trial}")
    assert ok


@pytest.mark.slow
def test_c9_end_to_end(tmp_path, acceptance_report):
    with Timer() as t:
        tune_dir = tmp_path / "tune"
        assert main(["tune", "--config", str(CONFIGS / "blobs_clf.json"), "--trials", "20", "--seed", "0", "--jobs", "4", "--out", str(tune_dir)]) == 0
        best = json.loads((tune_dir / "best_params.json").read_text())
        clf_cfg = json.loads((CONFIGS / "blobs_clf.json").read_text())
        clf_cfg["clf"] = best["clf"]
        clf_path = tmp_path / "clf_tuned.json"
        clf_path.write_text(json.dumps(clf_cfg))
        for name, cfg in (("baseline", CONFIGS / "blobs_baseline.json"), ("clf", clf_path)):
            assert main(["sweep", "--config", str(cfg), "--seeds", "1..20", "--jobs", "4", "--out", str(tmp_path / name), "--no-timestamp"]) == 0
        assert main(["compare", "--baseline", str(tmp_path / "baseline"), "--clf", str(tmp_path / "clf"), "--out", str(tmp_path), "--no-timestamp"]) == 0
    report = json.loads((tmp_path / "reduction.json").read_text())
    metric = report["metric"]
    base_acc = json.loads((tmp_path / "baseline" / "summary.json").read_text())["summary"]["mean_metric"]
    bounds = [metric["upper_bound_reduction_pct"]] + ([metric["lower_bound_reduction_pct"]] if "lower" in metric["bounds_used"] else [])
    consistent = min(bounds) - 1e-9 <= metric["avg_var_reduction_pct"] <= max(bounds) + 1e-9
    ok = consistent and 85 <= base_acc <= 95 and t.seconds < 1200
    direction = "lower" if metric["avg_var_reduction_pct"] > 0 else "not lower"
    detail = (
        f"baseline acc {base_acc:.1f}%, SD {metric['baseline']['sd']:.3f} -> {metric['clf']['sd']:.3f} "
        f"(avg reduction {metric['avg_var_reduction_pct']:.1f}%, CLF SD {direction}; "
        f"loss SD reduction {report['loss']['avg_var_reduction_pct']:.1f}%), {t.seconds:.0f}s"
    )
    acceptance_report("9 end-to-end report (soft)", ok, detail)
    assert ok


def test_c10_micro_oracles(acceptance_report):
    rs = np.random.default_rng(10)
    rows = np.exp(log_softmax(rs.normal(scale=30, size=(200, 7)))).sum(axis=1)
    ok = (
        float(np.max(np.abs(rows - 1))) <= 1e-12
        and sample_sd([1.0, 2.0, 3.0]) == 1.0
        and cosine_lr(0, 100, 0.4) == 0.4
        and cosine_lr(99, 100, 0.4) == 0.0
    )
    acceptance_report("10 micro-oracles", ok, f"softmax row-sum error {np.max(np.abs(rows - 1)):.1e}")
    assert ok
