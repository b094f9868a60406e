"""Experiment config files: ``key = value`` lines under five fixed sections.

Every key belongs to exactly one section and also exists as a command-line
flag (``batch_size`` -> ``--batch-size``).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from rs2 import sampling
from rs2.core import ConfigError
from rs2.data import GENERATORS, SyntheticSpec
from rs2.harness import DataSource, RunConfig
from rs2.models import LOSS_KINDS, MODEL_KINDS
from rs2.optim import LR_KINDS


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _words(text: str) -> tuple[str, ...]:
    return tuple(text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (section, parser, default, help)
SCHEMA: dict[str, tuple[str, object, object, str]] = {
    "generator": ("dataset", str, "gaussian_blobs", f"synthetic generator {GENERATORS}"),
    "n": ("dataset", int, 1000, "number of examples before the train/test split"),
    "d": ("dataset", int, 2, "feature dimension"),
    "k": ("dataset", int, 2, "number of classes"),
    "separation": ("dataset", float, 5.0, "class separation (sphere radius / lattice spacing)"),
    "noise": ("dataset", float, 1.0, "feature noise scale"),
    "data_seed": ("dataset", int, 0, "seed of the generator and of the train/test split"),
    "csv": ("dataset", str, "", "load a CSV file instead of generating"),
    "idx_images": ("dataset", str, "", "IDX image file (with --idx-labels)"),
    "idx_labels": ("dataset", str, "", "IDX label file"),
    "test_fraction": ("dataset", float, 0.2, "held-out fraction"),
    "label_noise": ("dataset", float, 0.0, "fraction of training labels to flip"),
    "model": ("model", str, "softmax_regression", f"one of {MODEL_KINDS}"),
    "hidden": ("model", int, 32, "hidden width for mlp1"),
    "loss": ("model", str, "cross_entropy", f"one of {LOSS_KINDS}"),
    "l2": ("model", float, 0.0, "L2 coefficient"),
    "method": ("train", str, "rs2_without_replacement", f"one of {sampling.KINDS}"),
    "r": ("train", float, 0.1, "selection ratio"),
    "rounds": ("train", int, 10, "rounds X"),
    "batch_size": ("train", int, 32, "mini-batch size b"),
    "lr_schedule": ("train", str, "cosine_r_scaled", f"one of {LR_KINDS}"),
    "lr": ("train", float, 0.1, "initial step size (C for inverse_t)"),
    "lr_min": ("train", float, 0.0, "cosine floor"),
    "momentum": ("train", float, 0.0, "heavy-ball momentum (sgd only)"),
    "optimizer": ("train", str, "sgd", "sgd or nesterov"),
    "seed": ("train", int, 0, "run seed"),
    "eval_every": ("train", int, 1, "evaluate every this many rounds"),
    "r_values": ("sweep", _floats, (), "selection ratios to sweep (defaults to r)"),
    "seeds": ("sweep", _ints, (), "seeds to sweep (defaults to seed)"),
    "methods": ("sweep", _words, (), "methods to sweep (defaults to method)"),
    "workers": ("sweep", int, 1, "parallel worker cap"),
    "out_dir": ("report", str, "", "output directory"),
    "plots": ("report", _bool, False, "write SVG figures"),
    "targets": ("report", _floats, (), "accuracy targets for time-to-accuracy"),
}
SECTIONS = ("dataset", "model", "train", "sweep", "report")


def _parse_value(key: str, raw):
    _, parser, _, _ = SCHEMA[key]
    if not isinstance(raw, str):
        return raw
    try:
        return parser(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def read_config(path) -> dict:
    """Parse a config file into ``{key: value}``; unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case so typos are reported verbatim
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            if SCHEMA[key][0] != section:
                raise ConfigError(f"{path}: key {key!r} belongs in [{SCHEMA[key][0]}], not [{section}]")
            values[key] = _parse_value(key, raw)
    return values


def merged_settings(file_values: dict, overrides: dict) -> dict:
    out = {key: spec[2] for key, spec in SCHEMA.items()}
    out.update(file_values)
    for key, raw in overrides.items():
        if raw is not None:
            out[key] = _parse_value(key, raw)
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    base: RunConfig
    r_values: tuple[float, ...]
    seeds: tuple[int, ...]
    methods: tuple[str, ...]
    out_dir: Path
    plots: bool = False
    targets: tuple[float, ...] = ()
    workers: int = 1
    settings: dict = field(default_factory=dict)

    def cells(self):
        for method in self.methods:
            for r in self.r_values:
                for seed in self.seeds:
                    yield replace(self.base, method=method, r=r, seed=seed)

    def validate(self):
        if not (self.r_values and self.seeds and self.methods):
            raise ConfigError("sweep axes must be non-empty")
        for m in self.methods:
            if m not in sampling.KINDS:
                raise ConfigError(f"unknown method {m!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def data_source(s: dict) -> DataSource:
    if s["csv"]:
        return DataSource(csv_path=s["csv"], test_fraction=s["test_fraction"], split_seed=s["data_seed"])
    if s["idx_images"] or s["idx_labels"]:
        if not (s["idx_images"] and s["idx_labels"]):
            raise ConfigError("IDX input needs both idx_images and idx_labels")
        return DataSource(
            idx_images=s["idx_images"],
            idx_labels=s["idx_labels"],
            test_fraction=s["test_fraction"],
            split_seed=s["data_seed"],
        )
    spec = SyntheticSpec(s["generator"], s["n"], s["d"], s["k"], s["separation"], s["noise"], s["data_seed"])
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return DataSource(synthetic=spec, test_fraction=s["test_fraction"], split_seed=s["data_seed"])


def run_config(s: dict) -> RunConfig:
    for key, allowed in (("model", MODEL_KINDS), ("loss", LOSS_KINDS), ("method", sampling.KINDS), ("lr_schedule", LR_KINDS)):
        if s[key] not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {s[key]!r}")
    cfg = RunConfig(
        data=data_source(s),
        model=s["model"],
        hidden=s["hidden"] if s["model"] == "mlp1" else 0,
        loss=s["loss"],
        l2=s["l2"],
        method=s["method"],
        r=s["r"],
        rounds=s["rounds"],
        batch_size=s["batch_size"],
        lr_schedule=s["lr_schedule"],
        lr=s["lr"],
        lr_min=s["lr_min"],
        momentum=s["momentum"],
        optimizer=s["optimizer"],
        seed=s["seed"],
        label_noise=s["label_noise"],
        eval_every=s["eval_every"],
        targets=tuple(s["targets"]),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def experiment_spec(s: dict) -> ExperimentSpec:
    if not s["out_dir"]:
        raise ConfigError("an output directory is required")
    base = run_config(s)
    spec = ExperimentSpec(
        base=base,
        r_values=tuple(s["r_values"]) or (base.r,),
        seeds=tuple(s["seeds"]) or (base.seed,),
        methods=tuple(s["methods"]) or (base.method,),
        out_dir=Path(s["out_dir"]),
        plots=s["plots"],
        targets=tuple(s["targets"]),
        workers=s["workers"],
        settings=dict(s),
    )
    spec.validate()
    return spec
