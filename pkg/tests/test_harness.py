import math

import numpy as np
import pytest

from rs2.core import Dataset, Rng, shuffle
from rs2.data import SyntheticSpec
from rs2.harness import (
    CSV_COLUMNS,
    DataSource,
    RoundEntry,
    RunConfig,
    RunRecord,
    flip_labels,
    generalization_gap,
    prepare_data,
    read_record_csv,
    relative_accuracy_drop,
    run,
    time_to_accuracy,
)
from rs2.models import Loss, Model, init_model, log_softmax, loss_and_grad, per_example_losses
from rs2.optim import LrSchedule, OptimizerState, lr_at, sgd_step

SMALL = DataSource(SyntheticSpec("gaussian_blobs", 250, 4, 3, 3.0, 1.0, 1), test_fraction=0.2, split_seed=1)


def _cfg(**kw):
    base = dict(data=SMALL, method="rs2_without_replacement", r=0.5, rounds=4, batch_size=16,
                lr_schedule="cosine_r_scaled", lr=0.5, seed=3)
    base.update(kw)
    return RunConfig(**base)


def test_single_round_full_data_step_count():
    rec = run(_cfg(r=1.0, rounds=1))
    assert rec.steps == math.ceil(200 / 16)
    assert rec.complete and len(rec.entries) == 1


@pytest.mark.parametrize("method", ["rs2_with_replacement", "rs2_without_replacement", "static_random",
                                    "rs2_with_replacement_stratified", "importance_resample", "importance_recompute"])
def test_step_count_law(method):
    rec = run(_cfg(method=method, r=0.3, rounds=5))
    k = math.floor(0.3 * 200 + 1e-9)
    if method == "rs2_without_replacement":
        # passes of 200 split 60, 60, 60, 20
        assert rec.steps == 4 + 4 + 4 + 2 + 4
    else:
        assert rec.steps == math.ceil(k / 16) * 5
    assert rec.entries[-1].steps == rec.steps


def test_step_count_when_subsets_tile_evenly():
    rec = run(_cfg(r=0.25, rounds=6, batch_size=10))
    T = math.ceil(200 / 10)
    assert rec.steps == math.floor(0.25 * T) * 6


def test_full_ratio_matches_plain_epoch_loop():
    cfg = _cfg(r=1.0, rounds=3, lr_schedule="constant", lr=0.3)
    rec = run(cfg)
    train, _ = prepare_data(cfg)
    model = init_model("softmax_regression", 4, 3, Rng(3, "init"))
    loss = Loss("cross_entropy")
    state = OptimizerState.init(model.weights)
    epochs = Rng(3, "schedule")
    for epoch in range(3):
        order = shuffle(epochs.fork("pass", epoch + 1), np.arange(200))
        for start in range(0, 200, 16):
            idx = order[start : start + 16]
            _, g = loss_and_grad(model.with_weights(state.w), loss, train.features[idx], train.labels[idx])
            state = sgd_step(state, g, 0.3)
    assert np.array_equal(rec.final_weights, state.w)


def test_early_stop_equivalence_small():
    cfg_full = _cfg(r=1.0, rounds=5, batch_size=20, lr_schedule="naive_early_stop", lr=0.4)
    cfg_cut = _cfg(r=0.2, rounds=5, batch_size=20, lr_schedule="naive_early_stop", lr=0.4)
    cut = run(cfg_cut)
    full = run(cfg_full, snapshot_steps=[cut.steps])
    assert cut.steps == 10
    assert np.array_equal(cut.final_weights, full.snapshots[cut.steps])


def test_determinism_except_wall_clock():
    a, b = run(_cfg(method="rs2_with_replacement")), run(_cfg(method="rs2_with_replacement"))
    assert a.weights_digest == b.weights_digest
    strip = lambda rec: [(e.round, e.steps, e.train_loss, e.test_acc, e.lr_last) for e in rec.entries]
    assert strip(a) == strip(b)


def test_eval_cadence():
    rec = run(_cfg(rounds=7, eval_every=3))
    assert [e.round for e in rec.entries] == [3, 6, 7]
    assert rec.entries[-1].cum_time_ms == pytest.approx(rec.total_selection_ms + rec.total_train_ms)


def test_nesterov_run_learns():
    rec = run(_cfg(optimizer="nesterov", r=0.5, rounds=6, lr=0.2))
    assert rec.complete and rec.final_accuracy > 0.8


def test_numeric_failure_gives_incomplete_record():
    cfg = _cfg(model="linear_regression", loss="mse", lr_schedule="constant", lr=1e6, rounds=20)
    with np.errstate(over="ignore", invalid="ignore"):
        rec = run(cfg)
    assert not rec.complete
    assert "non-finite" in rec.error
    assert rec.steps < 20 * 7


def test_csv_schema_and_round_trip(tmp_path):
    rec = run(_cfg())
    text = rec.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    (tmp_path / "r.csv").write_text(text)
    back = read_record_csv(tmp_path / "r.csv")
    assert [e.steps for e in back.entries] == [e.steps for e in rec.entries]
    assert back.final_accuracy == pytest.approx(rec.final_accuracy, abs=1e-6)


def test_flip_labels_examples():
    ds = Dataset(np.zeros((10, 1)), np.arange(10) % 3, 3)
    assert flip_labels(ds, 0.0, Rng(0)) is ds
    flipped = flip_labels(ds, 0.5, Rng(0))
    assert int(np.sum(flipped.labels != ds.labels)) == 5
    binary = Dataset(np.zeros((20, 1)), np.arange(20) % 2, 2)
    fb = flip_labels(binary, 0.3, Rng(1))
    changed = fb.labels != binary.labels
    assert changed.sum() == 6
    assert np.all(fb.labels[changed] == 1 - binary.labels[changed])
    with pytest.raises(ValueError):
        flip_labels(Dataset(np.zeros((3, 1)), [0, 0, 0], 1), 0.5, Rng(0))


def test_flip_labels_new_label_uniform_over_others():
    ds = Dataset(np.zeros((4000, 1)), np.zeros(4000, dtype=int), 4)
    new = flip_labels(ds, 0.75, Rng(2)).labels
    counts = np.bincount(new, minlength=4)
    assert counts[0] == 1000
    assert np.all(np.abs(counts[1:] - 1000) < 4 * math.sqrt(3000 * (1 / 3) * (2 / 3)))


def test_label_noise_leaves_test_split_alone():
    clean_train, clean_test = prepare_data(_cfg())
    noisy_train, noisy_test = prepare_data(_cfg(label_noise=0.2))
    assert noisy_test.equals(clean_test)
    assert int(np.sum(noisy_train.labels != clean_train.labels)) == 40


def _record(pairs):
    return RunRecord(entries=[RoundEntry(i + 1, i, 0.0, acc, 0.0, 0.0, 0.0, ms) for i, (acc, ms) in enumerate(pairs)])


def test_time_to_accuracy_examples():
    rec = _record([(0.3, 10.0), (0.6, 20.0)])
    assert time_to_accuracy(rec, [0.5]) == {0.5: 20.0}
    assert time_to_accuracy(rec, [0.0]) == {0.0: 10.0}
    assert time_to_accuracy(rec, [0.9]) == {0.9: None}


def test_generalization_gap_same_data_is_zero():
    ds = Dataset(np.random.default_rng(0).normal(size=(20, 3)), np.arange(20) % 2, 2)
    m = init_model("softmax_regression", 3, 2, Rng(0))
    assert generalization_gap(m, Loss("cross_entropy"), ds, ds) == 0.0


def test_generalization_gap_constant_predictor():
    c = np.array([0.5, -1.0, 2.0])
    m = Model("softmax_regression", 2, 3, np.concatenate([np.zeros(6), c]))
    g = np.random.default_rng(1)
    train = Dataset(g.normal(size=(30, 2)), g.integers(0, 3, 30), 3)
    held = Dataset(g.normal(size=(17, 2)), g.integers(0, 3, 17), 3)
    nll = -log_softmax(c[None, :])[0]
    expected = nll[held.labels].mean() - nll[train.labels].mean()
    assert generalization_gap(m, Loss("cross_entropy"), train, held) == pytest.approx(expected, abs=1e-12)


def test_generalization_gap_positive_for_interpolating_model():
    g = np.random.default_rng(2)
    train = Dataset(g.normal(size=(20, 60)), g.integers(0, 2, 20), 2)
    held = Dataset(g.normal(size=(40, 60)), g.integers(0, 2, 40), 2)
    m = init_model("softmax_regression", 60, 2, Rng(0))
    loss = Loss("cross_entropy")
    for _ in range(300):
        _, grad = loss_and_grad(m, loss, train.features, train.labels)
        m = m.with_weights(m.weights - 0.5 * grad)
    assert per_example_losses(m, loss, train.features, train.labels).max() < 0.1
    assert generalization_gap(m, loss, train, held) > 0


def test_relative_accuracy_drop_examples():
    raw, rel = relative_accuracy_drop(89.7, 77.5)
    assert raw == pytest.approx(12.2, abs=1e-9)
    assert round(rel, 1) == 13.6
    assert relative_accuracy_drop(0.8, 0.8) == (0.0, 0.0)
    assert relative_accuracy_drop(50.0, 25.0) == (25.0, 50.0)
    with pytest.raises(ValueError):
        relative_accuracy_drop(0.0, 0.0)


def test_lr_schedule_reaches_floor_on_last_step():
    rec = run(_cfg(r=0.3, rounds=5, lr_min=0.01))
    assert rec.entries[-1].lr_last == pytest.approx(0.01)


def test_invalid_config():
    with pytest.raises(ValueError):
        run(_cfg(r=0.0))
    with pytest.raises(ValueError):
        run(_cfg(optimizer="nesterov", momentum=0.9))
