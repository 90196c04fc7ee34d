"""Experiment configuration files (JSON).

Layout, with every section but ``dataset`` optional::

    {
      "dataset": {"kind": "blobs", ...} | {"kind": "series", ...} | {"kind": "csv", ...},
      "model":   {"hidden": [32]},
      "train":   {"epochs": 100, "batch_size": 32, "lr_peak": 0.1,
                  "momentum": 0.9, "weight_decay": 0.0005},
      "clf":     {"lambda_s": 0, "lambda_v": 0, "lambda_wd": 0, "activation_window": 0},
      "sweep":   {"seeds": "1..20", "bound": "bootstrap", "exclude_divergent": false},
      "tune":    {"lambda_v": [1e-4, 1], "lambda_s": [1e-4, 1], "lambda_wd": [1e-4, 0.1],
                  "n_trials": 20, "seeds_per_trial": "1..3", "epochs": null,
                  "activation_window": null},
      "output":  "runs/baseline"
    }

Unknown keys are rejected.  The config hash covers every section except
``output`` after defaults are filled in.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from . import datasets as ds
from .losses import CLFConfig
from .reporting import content_hash
from .rng import SeededRng
from .trainer import TrainConfig
from .tuner import SearchSpace, TunerConfig


class ConfigError(ValueError):
    pass


DATASET_DEFAULTS = {
    "blobs": {
        "n_per_class": 100,
        "n_classes": 3,
        "dim": 2,
        "spread": 0.5,
        "radius": 1.0,
        "test_fraction": 0.3,
        "val_fraction": 0.0,
        "seed": 0,
    },
    "series": {
        "n": 2000,
        "noise": 0.1,
        "lookback": 96,
        "horizon": 24,
        "stride": 1,
        "amp1": 1.0,
        "period1": 24.0,
        "amp2": 0.5,
        "period2": 168.0,
        "slope": 0.0,
        "seed": 0,
    },
    "csv": {
        "path": None,
        "task": "classification",
        "features": [],
        "target": None,
        "n_classes": None,
        "lookback": 0,
        "horizon": 0,
        "stride": 1,
        "test_fraction": 0.3,
        "val_fraction": 0.0,
    },
}

SECTION_DEFAULTS = {
    "model": {"hidden": [32]},
    "train": {"epochs": 100, "batch_size": 32, "lr_peak": 0.1, "momentum": 0.9, "weight_decay": 5e-4},
    "clf": {"lambda_s": 0.0, "lambda_v": 0.0, "lambda_wd": 0.0, "activation_window": 0},
    "sweep": {"seeds": "1..20", "bound": "bootstrap", "exclude_divergent": False},
    "tune": {
        "lambda_v": [1e-4, 1.0],
        "lambda_s": [1e-4, 1.0],
        "lambda_wd": [1e-4, 0.1],
        "n_trials": 20,
        "seeds_per_trial": "1..3",
        "epochs": None,
        "activation_window": None,
    },
}

TOP_LEVEL = ("dataset", "model", "train", "clf", "sweep", "tune", "output")


def parse_seeds(text):
    """Parse ``"a..b"`` (inclusive), ``"1,2,5"`` or a single integer."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ConfigError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse seeds {text!r}") from None


def parse_int_list(text):
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse integer list {text!r}") from None


def _merge(section, given, defaults):
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {unknown}")
    merged = dict(defaults)
    merged.update(given)
    return merged


@dataclass
class ExperimentConfig:
    sections: dict  # defaults filled in
    base_dir: Path
    train: TrainConfig
    seeds: list
    tuner: TunerConfig

    @property
    def dataset(self):
        return self.sections["dataset"]

    @property
    def output(self):
        return self.sections.get("output")

    @property
    def config_hash(self):
        return content_hash({k: v for k, v in self.sections.items() if k != "output"})


def from_dict(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(TOP_LEVEL))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    if "dataset" not in raw:
        raise ConfigError("missing 'dataset' section")
    data = raw["dataset"]
    if not isinstance(data, dict) or data.get("kind") not in DATASET_DEFAULTS:
        raise ConfigError(f"dataset.kind must be one of {sorted(DATASET_DEFAULTS)}")
    sections = {"dataset": {"kind": data["kind"], **_merge("dataset", {k: v for k, v in data.items() if k != "kind"}, DATASET_DEFAULTS[data["kind"]])}}
    for name, defaults in SECTION_DEFAULTS.items():
        sections[name] = _merge(name, raw.get(name, {}), defaults)
    if raw.get("output") is not None:
        if not isinstance(raw["output"], str):
            raise ConfigError("output must be a path string")
        sections["output"] = raw["output"]

    d = sections["dataset"]
    task = "regression" if d["kind"] == "series" or (d["kind"] == "csv" and d["task"] == "forecast") else "classification"
    try:
        tr = sections["train"]
        c = sections["clf"]
        train = TrainConfig(
            epochs=int(tr["epochs"]),
            batch_size=int(tr["batch_size"]),
            lr_peak=float(tr["lr_peak"]),
            momentum=float(tr["momentum"]),
            weight_decay=float(tr["weight_decay"]),
            clf=CLFConfig(float(c["lambda_s"]), float(c["lambda_v"]), float(c["lambda_wd"]), int(c["activation_window"])),
            task=task,
            hidden=tuple(sections["model"]["hidden"]),
        )
        t = sections["tune"]
        tuner = TunerConfig(
            space=SearchSpace(tuple(t["lambda_v"]), tuple(t["lambda_s"]), tuple(t["lambda_wd"])),
            n_trials=int(t["n_trials"]),
            seeds_per_trial=tuple(parse_seeds(t["seeds_per_trial"])),
            epochs=t["epochs"],
            activation_window=t["activation_window"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if sections["sweep"]["bound"] not in ("bootstrap", "analytic"):
        raise ConfigError("sweep.bound must be 'bootstrap' or 'analytic'")
    seeds = parse_seeds(sections["sweep"]["seeds"])
    return ExperimentConfig(sections, Path(base_dir), train, seeds, tuner)


def load(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(raw, path.parent)


def build_data(exp):
    """Materialise the dataset section as :class:`~clfvar.datasets.DataSplits`."""
    d = exp.dataset
    kind = d["kind"]
    if kind == "blobs":
        full = ds.make_blobs(SeededRng(d["seed"]), d["n_per_class"], d["n_classes"], d["dim"], d["spread"], d["radius"])
        return ds.split_classification(full, d["test_fraction"], d["val_fraction"])
    if kind == "series":
        shape = ds.SeriesShape(d["amp1"], d["period1"], d["amp2"], d["period2"], d["slope"])
        series = ds.make_series(SeededRng(d["seed"]), d["n"], d["noise"], shape)
        return ds.split_forecast(ds.window(series, d["lookback"], d["horizon"], d["stride"]))
    path = Path(d["path"]) if d["path"] else None
    if path is None or d["target"] is None:
        raise ConfigError("csv dataset needs 'path' and 'target'")
    if not path.is_absolute():
        path = exp.base_dir / path
    if d["task"] == "forecast":
        schema = ds.CsvSchema("forecast", d["target"], (), None, d["lookback"], d["horizon"], d["stride"])
        return ds.split_forecast(ds.load_csv(path, schema))
    if d["task"] != "classification":
        raise ConfigError("csv task must be 'classification' or 'forecast'")
    schema = ds.CsvSchema("classification", d["target"], tuple(d["features"]), d["n_classes"])
    return ds.split_classification(ds.load_csv(path, schema), d["test_fraction"], d["val_fraction"])
