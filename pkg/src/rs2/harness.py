"""Round-loop training driver with timing, evaluation and bookkeeping."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from rs2 import _kernels, models, optim, sampling
from rs2.core import Dataset, NumericError, Rng, train_test_split, uniform_indices
from rs2.data import SyntheticSpec, generate_dataset, load_csv, load_idx
from rs2.models import Loss, Model

CSV_COLUMNS = ("round", "steps", "train_loss", "test_acc", "lr_last", "selection_ms", "train_ms", "cum_time_ms")


@dataclass(frozen=True)
class DataSource:
    """Where a run's examples come from: a generator spec or files on disk."""

    synthetic: SyntheticSpec | None = None
    csv_path: str | None = None
    idx_images: str | None = None
    idx_labels: str | None = None
    test_fraction: float = 0.2
    split_seed: int = 0

    def load(self) -> Dataset:
        if self.synthetic is not None:
            return generate_dataset(self.synthetic)
        if self.csv_path:
            return load_csv(self.csv_path)
        if self.idx_images and self.idx_labels:
            return load_idx(self.idx_images, self.idx_labels)
        raise ValueError("data source names no dataset")

    def train_test(self) -> tuple[Dataset, Dataset]:
        return train_test_split(self.load(), self.test_fraction, Rng(self.split_seed, "split"))


@dataclass(frozen=True)
class RunConfig:
    data: DataSource = field(default_factory=lambda: DataSource(SyntheticSpec()))
    model: str = "softmax_regression"
    hidden: int = 0
    loss: str = "cross_entropy"
    l2: float = 0.0
    method: str = "rs2_without_replacement"
    r: float = 1.0
    rounds: int = 10
    batch_size: int = 32
    lr_schedule: str = "cosine_r_scaled"
    lr: float = 0.1
    lr_min: float = 0.0
    momentum: float = 0.0
    optimizer: str = "sgd"
    seed: int = 0
    label_noise: float = 0.0
    eval_every: int = 1
    targets: tuple[float, ...] = ()

    def validate(self):
        if not 0.0 < self.r <= 1.0:
            raise ValueError("r must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label noise must be in [0, 1)")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.method not in sampling.KINDS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.optimizer not in ("sgd", "nesterov"):
            raise ValueError("optimizer must be 'sgd' or 'nesterov'")
        if self.optimizer == "nesterov" and self.momentum:
            raise ValueError("momentum applies to the sgd optimizer only")


@dataclass
class RoundEntry:
    round: int
    steps: int
    train_loss: float
    test_acc: float
    lr_last: float
    selection_ms: float
    train_ms: float
    cum_time_ms: float


@dataclass
class RunRecord:
    entries: list[RoundEntry] = field(default_factory=list)
    total_selection_ms: float = 0.0
    total_train_ms: float = 0.0
    final_weights: np.ndarray | None = None
    weights_digest: str = ""
    complete: bool = False
    error: str = ""
    steps: int = 0
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    # full-batch diagnostics at the final weights
    final_grad_norm_sq: float = float("nan")
    final_train_loss: float = float("nan")
    final_test_loss: float = float("nan")

    @property
    def final_accuracy(self) -> float:
        return self.entries[-1].test_acc if self.entries else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in self.entries:
            w.writerow(
                [
                    e.round,
                    e.steps,
                    repr(float(e.train_loss)),
                    repr(float(e.test_acc)),
                    repr(float(e.lr_last)),
                    f"{e.selection_ms:.3f}",
                    f"{e.train_ms:.3f}",
                    f"{e.cum_time_ms:.3f}",
                ]
            )
        return buf.getvalue()


def read_record_csv(path) -> RunRecord:
    rec = RunRecord(complete=True)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            rec.entries.append(
                RoundEntry(
                    round=int(row["round"]),
                    steps=int(row["steps"]),
                    train_loss=float(row["train_loss"]),
                    test_acc=float(row["test_acc"]),
                    lr_last=float(row["lr_last"]),
                    selection_ms=float(row["selection_ms"]),
                    train_ms=float(row["train_ms"]),
                    cum_time_ms=float(row["cum_time_ms"]),
                )
            )
    rec.total_selection_ms = sum(e.selection_ms for e in rec.entries)
    rec.total_train_ms = sum(e.train_ms for e in rec.entries)
    rec.steps = rec.entries[-1].steps if rec.entries else 0
    return rec


def weights_digest(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype=np.float64).tobytes()).hexdigest()[:16]


def flip_labels(dataset: Dataset, p: float, rng: Rng) -> Dataset:
    """Give exactly ``round(p * N)`` uniformly chosen examples a different label."""
    if not 0.0 <= p < 1.0:
        raise ValueError("p must be in [0, 1)")
    k = dataset.num_classes
    if k < 2:
        raise ValueError("label flipping needs at least two classes")
    n = len(dataset)
    m = int(math.floor(p * n + 0.5))
    if m == 0:
        return dataset
    chosen = uniform_indices(rng.fork("flip/which"), n, m)
    offsets = 1 + uniform_indices(rng.fork("flip/offset"), k - 1, m, distinct=False)
    labels = dataset.labels.copy()
    labels[chosen] = (labels[chosen] + offsets) % k
    return dataset.with_labels(labels)


def time_to_accuracy(record: RunRecord, targets) -> dict[float, float | None]:
    """Earliest cumulative selection+training time (ms) reaching each target."""
    out: dict[float, float | None] = {}
    for target in targets:
        out[target] = next((e.cum_time_ms for e in record.entries if e.test_acc >= target), None)
    return out


def generalization_gap(model: Model, loss: Loss, train: Dataset, heldout: Dataset) -> float:
    """Mean held-out loss minus mean training loss."""
    return models.mean_loss(model, loss, heldout) - models.mean_loss(model, loss, train)


def relative_accuracy_drop(clean_acc: float, noisy_acc: float) -> tuple[float, float]:
    if clean_acc == 0:
        raise ValueError("clean accuracy must be non-zero")
    raw = clean_acc - noisy_acc
    return raw, 100.0 * raw / clean_acc


def prepare_data(config: RunConfig) -> tuple[Dataset, Dataset]:
    train, test = config.data.train_test()
    if config.label_noise:
        train = flip_labels(train, config.label_noise, Rng(config.seed, "label_noise"))
    return train, test


def build_model(config: RunConfig, train: Dataset) -> Model:
    k_out = train.num_classes
    return models.init_model(config.model, train.dim, k_out, Rng(config.seed, "init"), config.hidden)


def build_lr_schedule(config: RunConfig, n_train: int, planned_steps: int) -> optim.LrSchedule:
    per_round = math.ceil(n_train / config.batch_size)
    return optim.LrSchedule(
        kind=config.lr_schedule,
        eta0=config.lr,
        total_full_steps=per_round * config.rounds,
        r=config.r,
        eta_min=config.lr_min,
        scaled_steps=planned_steps,
    )


def run(config: RunConfig, data: tuple[Dataset, Dataset] | None = None, snapshot_steps=()) -> RunRecord:
    """Train for ``config.rounds`` rounds on per-round subsets.

    Each round times the subset selection and the optimizer steps
    separately; evaluation time is excluded from both. ``snapshot_steps``
    lists global step counts at which a copy of the weights is kept.
    """
    config.validate()
    _kernels.warmup()
    train, test = data if data is not None else prepare_data(config)
    model = build_model(config, train)
    loss = Loss(config.loss, config.l2)
    n, b = len(train), config.batch_size
    sched = sampling.SubsetSchedule(config.method, config.r, Rng(config.seed, "schedule"))
    planned = sum(math.ceil(s / b) for s in sched.planned_sizes(n, config.rounds))
    lr_sched = build_lr_schedule(config, n, planned)
    state = optim.OptimizerState.init(model.weights)
    accel = None
    if config.optimizer == "nesterov":
        accel = optim.AcceleratedParams(
            alpha=lambda t: 2.0 / (t + 1),
            beta=lambda t: optim.lr_at(lr_sched, t),
            lam=lambda t: optim.lr_at(lr_sched, t),
        )
    snapshot_steps = set(snapshot_steps)
    x, y = train.features, train.labels

    record = RunRecord()
    steps = 0
    sel_acc = train_acc = 0.0
    loss_sum, loss_count, lr_last = 0.0, 0, float("nan")
    cum = 0.0
    try:
        for rnd in range(1, config.rounds + 1):
            t0 = time.perf_counter()
            weights = None
            if config.method == "importance_recompute" or (config.method == "importance_resample" and rnd == 1):
                cur = model.with_weights(state.w if accel is None else state.w_ag)
                weights = sampling.loss_based_weights(models.per_example_losses(cur, loss, x, y))
            subset = sched.next_round_subset(rnd, train, weights)
            t1 = time.perf_counter()
            for batch in sampling.batches(subset, b):
                lr_last = optim.lr_at(lr_sched, state.t)
                if accel is None:
                    value, grad = models.loss_and_grad(model.with_weights(state.w), loss, x[batch], y[batch])
                    state = optim.sgd_step(state, grad, lr_last, config.momentum)
                else:
                    state = optim.compute_md_point(state, accel)
                    value, grad = models.loss_and_grad(model.with_weights(state.w_md), loss, x[batch], y[batch])
                    state = optim.nesterov_step(state, grad, accel)
                steps += 1
                loss_sum += value
                loss_count += 1
                if steps in snapshot_steps:
                    record.snapshots[steps] = _output_weights(state, accel).copy()
            t2 = time.perf_counter()
            sel_acc += (t1 - t0) * 1e3
            train_acc += (t2 - t1) * 1e3
            if rnd % config.eval_every == 0 or rnd == config.rounds:
                cum += sel_acc + train_acc
                acc = models.accuracy(model.with_weights(_output_weights(state, accel)), test)
                record.entries.append(
                    RoundEntry(rnd, steps, loss_sum / max(loss_count, 1), acc, lr_last, sel_acc, train_acc, cum)
                )
                record.total_selection_ms += sel_acc
                record.total_train_ms += train_acc
                sel_acc = train_acc = 0.0
                loss_sum, loss_count = 0.0, 0
        record.complete = True
    except NumericError as exc:
        record.error = str(exc)
        record.total_selection_ms += sel_acc
        record.total_train_ms += train_acc
    record.steps = steps
    final = _output_weights(state, accel)
    record.final_weights = final.copy()
    record.weights_digest = weights_digest(final)
    if record.complete:
        fm = model.with_weights(final)
        record.final_grad_norm_sq = float(np.sum(models.full_gradient(fm, loss, train) ** 2))
        record.final_train_loss = models.mean_loss(fm, loss, train)
        record.final_test_loss = models.mean_loss(fm, loss, test) if len(test) else float("nan")
    return record


def _output_weights(state: optim.OptimizerState, accel) -> np.ndarray:
    # the accelerated method reports its aggregated iterate
    return state.w if accel is None else state.w_ag
