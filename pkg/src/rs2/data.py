"""Synthetic datasets plus CSV and IDX readers/writers."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rs2.core import Dataset, ParseError, Rng, shuffle

GENERATORS = ("gaussian_blobs", "concentric", "checkerboard")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "gaussian_blobs"
    n: int = 1000
    d: int = 2
    k: int = 2
    separation: float = 5.0
    noise: float = 1.0
    seed: int = 0

    def validate(self):
        if self.kind not in GENERATORS:
            raise ValueError(f"unknown generator {self.kind!r}; choose from {GENERATORS}")
        if self.k < 2 or self.n < self.k:
            raise ValueError("need N >= K >= 2")
        if self.d < 1:
            raise ValueError("need d >= 1")
        if self.noise < 0 or self.separation < 0:
            raise ValueError("noise and separation must be non-negative")


def _balanced_labels(n: int, k: int, rng: Rng) -> np.ndarray:
    return shuffle(rng, np.arange(n) % k)


def _blob_means(spec: SyntheticSpec, rng: Rng) -> np.ndarray:
    g = rng.normal((spec.d, max(spec.k, spec.d)))
    if spec.k <= spec.d:
        # orthonormal directions: every pair of means is sep * sqrt(2) apart
        q, _ = np.linalg.qr(g)
        dirs = q[:, : spec.k].T
    else:
        dirs = rng.normal((spec.k, spec.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return spec.separation * dirs


def generate_dataset(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    rng = Rng(spec.seed, "generate/" + spec.kind)
    labels = _balanced_labels(spec.n, spec.k, rng.fork("labels"))
    noise_rng = rng.fork("noise")
    if spec.kind == "gaussian_blobs":
        means = _blob_means(spec, rng.fork("means"))
        x = means[labels] + spec.noise * noise_rng.normal((spec.n, spec.d))
    elif spec.kind == "concentric":
        # class c sits on a sphere of radius (c + 1) * separation
        dirs = rng.fork("dirs").normal((spec.n, spec.d))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radius = (labels + 1.0) * spec.separation
        x = dirs / norms * radius[:, None] + spec.noise * noise_rng.normal((spec.n, spec.d))
    else:
        # one point per lattice cell; neighbouring cells alternate classes
        grid_dims = min(spec.d, 2)
        side = math.ceil(spec.n ** (1.0 / grid_dims))
        cells = np.arange(spec.n)
        coords = np.stack([cells % side, cells // side], axis=1)[:, :grid_dims]
        labels = coords.sum(axis=1) % spec.k
        x = np.zeros((spec.n, spec.d))
        x[:, :grid_dims] = coords * spec.separation
        x += spec.noise * noise_rng.normal((spec.n, spec.d))
    return Dataset(x, labels, spec.k)


def write_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv(path, num_classes: int | None = None) -> Dataset:
    """Header row required; the last column holds integer labels."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: line 1: empty file") from None
        if len(header) < 2:
            raise ParseError(f"{path}: line 1: header needs at least one feature and a label column")
        width = len(header)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:-1]])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad feature value ({exc})") from None
            try:
                labels.append(int(row[-1]))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: label {row[-1]!r} is not an integer") from None
    if not labels:
        raise ParseError(f"{path}: no data rows")
    x = np.array(feats, dtype=np.float64)
    y = np.array(labels, dtype=np.int64)
    if not np.all(np.isfinite(x)):
        raise ParseError(f"{path}: non-finite feature values")
    if y.min() < 0:
        raise ParseError(f"{path}: negative label")
    k = num_classes if num_classes is not None else max(int(y.max()) + 1, 2)
    return Dataset(x, y, k)


def _read_idx(path: Path, expected_magic: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise ParseError(f"{path}: byte 0: file too short for a magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ParseError(f"{path}: byte 0: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"{path}: byte 4: truncated dimension header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    count = int(np.prod(dims)) if dims else 0
    if len(raw) - header != count:
        raise ParseError(
            f"{path}: byte {header}: payload has {len(raw) - header} bytes, dims {dims} need {count}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Classic big-endian IDX pair; pixels are scaled to [0, 1]."""
    images = _read_idx(Path(images_path), IDX_IMAGES_MAGIC)
    labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(f"{images_path}: {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    k = num_classes if num_classes is not None else max(int(y.max()) + 1 if y.size else 2, 2)
    return Dataset(x, y, k)


def write_idx(images: np.ndarray, labels, images_path, labels_path) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3:
        raise ValueError("images must be (n, rows, cols)")
    if images.dtype != np.uint8 or labels.dtype != np.uint8:
        images, labels = images.astype(np.uint8), labels.astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())
