import struct

import numpy as np
import pytest

from rs2.core import Dataset, ParseError, Rng
from rs2.data import SyntheticSpec, generate_dataset, load_csv, load_idx, write_csv, write_idx
from rs2.models import Loss, accuracy, init_model, loss_and_grad


@pytest.mark.parametrize("kind", ["gaussian_blobs", "concentric", "checkerboard"])
def test_generators_are_deterministic(kind):
    spec = SyntheticSpec(kind, 200, 3, 4, 2.0, 0.5, 9)
    a, b = generate_dataset(spec), generate_dataset(spec)
    assert a.equals(b)
    assert not a.equals(generate_dataset(SyntheticSpec(kind, 200, 3, 4, 2.0, 0.5, 10)))
    assert a.class_counts().sum() == 200 and len(a.class_counts()) == 4


def test_blobs_without_noise_sit_on_their_means():
    ds = generate_dataset(SyntheticSpec("gaussian_blobs", 60, 5, 3, 4.0, 0.0, 1))
    for c in range(3):
        pts = ds.features[ds.labels == c]
        assert np.all(pts == pts[0])
        assert np.linalg.norm(pts[0]) == pytest.approx(4.0)


def test_blobs_two_classes_are_separable():
    ds = generate_dataset(SyntheticSpec("gaussian_blobs", 400, 2, 2, 10.0, 0.1, 2))
    model = init_model("softmax_regression", 2, 2, Rng(0))
    loss = Loss("cross_entropy")
    for _ in range(200):
        _, g = loss_and_grad(model, loss, ds.features, ds.labels)
        model = model.with_weights(model.weights - 0.5 * g)
    assert accuracy(model, ds) > 0.99


def test_checkerboard_neighbours_alternate():
    ds = generate_dataset(SyntheticSpec("checkerboard", 16, 2, 2, 1.0, 0.0, 0))
    pos = {tuple(p): lab for p, lab in zip(ds.features.tolist(), ds.labels.tolist())}
    assert pos[(0.0, 0.0)] != pos[(1.0, 0.0)]
    assert pos[(1.0, 1.0)] == pos[(0.0, 0.0)]


def test_concentric_radii_without_noise():
    ds = generate_dataset(SyntheticSpec("concentric", 90, 3, 3, 1.5, 0.0, 4))
    radii = np.linalg.norm(ds.features, axis=1)
    np.testing.assert_allclose(radii, (ds.labels + 1) * 1.5)


def test_invalid_spec():
    with pytest.raises(ValueError):
        generate_dataset(SyntheticSpec("spirals", 10, 2, 2, 1.0, 1.0, 0))
    with pytest.raises(ValueError):
        generate_dataset(SyntheticSpec("gaussian_blobs", 1, 2, 2, 1.0, 1.0, 0))
    with pytest.raises(ValueError):
        generate_dataset(SyntheticSpec("gaussian_blobs", 10, 0, 2, 1.0, 1.0, 0))


def test_csv_three_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,2,0\n3,4,1\n5,6,1\n")
    ds = load_csv(p)
    assert ds.features.shape == (3, 2)
    assert ds.labels.tolist() == [0, 1, 1]


def test_csv_round_trip(tmp_path):
    ds = generate_dataset(SyntheticSpec("gaussian_blobs", 50, 3, 3, 2.0, 1.0, 5))
    write_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert back.equals(ds)


@pytest.mark.parametrize(
    "text,where",
    [("", "line 1"), ("label\n0\n", "line 1"), ("a,label\n1,0\n2\n", "line 3"), ("a,label\nx,0\n", "line 2"),
     ("a,label\n1,0.5\n", "line 2")],
)
def test_csv_errors_name_the_line(tmp_path, text, where):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError, match=where):
        load_csv(p)


def test_idx_round_trip(tmp_path):
    g = np.random.default_rng(0)
    imgs = g.integers(0, 256, size=(7, 3, 4), dtype=np.uint8)
    labels = g.integers(0, 10, size=7, dtype=np.uint8)
    write_idx(imgs, labels, tmp_path / "i", tmp_path / "l")
    raw = (tmp_path / "i").read_bytes()
    assert raw[:16] == struct.pack(">IIII", 0x803, 7, 3, 4)
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(ds.features, imgs.reshape(7, 12) / 255.0)
    assert ds.labels.tolist() == labels.tolist()


def test_idx_wrong_magic(tmp_path):
    write_idx(np.zeros((2, 2, 2), np.uint8), np.zeros(2, np.uint8), tmp_path / "i", tmp_path / "l")
    with pytest.raises(ParseError, match="byte 0"):
        load_idx(tmp_path / "l", tmp_path / "l")


def test_idx_truncated_payload(tmp_path):
    write_idx(np.zeros((2, 2, 2), np.uint8), np.zeros(2, np.uint8), tmp_path / "i", tmp_path / "l")
    (tmp_path / "i").write_bytes((tmp_path / "i").read_bytes()[:-1])
    with pytest.raises(ParseError, match="byte 16"):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_idx_count_mismatch(tmp_path):
    write_idx(np.zeros((2, 2, 2), np.uint8), np.zeros(3, np.uint8), tmp_path / "i", tmp_path / "l")
    with pytest.raises(ParseError):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_csv_dataset_shapes_validated():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), [0, 5], 2)
