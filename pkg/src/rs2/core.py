"""Numeric primitives, seeded random streams and the dataset container."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from rs2 import _kernels


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    """A non-finite value showed up where finiteness is required.

    ``index`` names the offending example (or ``None`` when the failure
    cannot be pinned to one).
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConfigError(ValueError):
    pass


class ParseError(ValueError):
    pass


class Rng:
    """Counter-based random stream keyed by ``(seed, purpose, index)``.

    Backed by Philox, so two Rng objects built from the same triple produce
    the same sequence regardless of what other streams were consumed.
    """

    def __init__(self, seed: int, purpose: str = "root", index: int = 0):
        if seed < 0 or index < 0:
            raise ValueError("seed and stream index must be non-negative")
        self.seed = int(seed)
        self.purpose = purpose
        self.index = int(index)
        tag = zlib.crc32(purpose.encode("utf-8"))
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(tag, self.index))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def fork(self, purpose: str, index: int = 0) -> "Rng":
        """Fresh stream under the same seed; does not advance ``self``."""
        return Rng(self.seed, purpose, index)

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, purpose={self.purpose!r}, index={self.index})"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed, sequential-over-k summation order.

    Every output entry is accumulated as ``((a0*b0 + a1*b1) + a2*b2) + ...``
    so results do not depend on BLAS blocking or thread count.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def uniform_indices(rng: Rng, n: int, k: int, distinct: bool = True) -> np.ndarray:
    """Draw ``k`` indices from ``range(n)`` in draw order.

    With ``distinct`` this is a partial Fisher-Yates: slot ``i`` swaps with
    position ``i + floor(u_i * (n - i))`` where ``u_i`` is the i-th uniform
    of the stream. Otherwise each index is ``floor(u_i * n)``.
    """
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if n == 0:
        raise ValueError("cannot draw from an empty range")
    u = rng.uniform(k)
    if not distinct:
        return np.minimum((u * n).astype(np.int64), n - 1)
    if k > n:
        raise ValueError(f"cannot draw {k} distinct indices from {n}")
    return _kernels.partial_fisher_yates(n, u)


def shuffle(rng: Rng, items) -> np.ndarray:
    """Fisher-Yates permutation of ``items`` (the input is not modified).

    Walks ``i = n-1 .. 1``; the m-th uniform ``u`` of the stream swaps
    position ``i = n-1-m`` with ``floor(u * (i + 1))``.
    """
    arr = np.array(items, dtype=np.int64, copy=True).reshape(-1)
    n = arr.shape[0]
    if n < 2:
        return arr
    _kernels.fisher_yates(arr, rng.uniform(n - 1))
    return arr


@dataclass(frozen=True)
class Dataset:
    """Dense features, integer labels and stable example ids."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError("features must be a 2-D matrix")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ShapeError(f"{y.shape[0] if y.ndim == 1 else y.shape} labels for {x.shape[0]} rows")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.mod(y, 1) == 0):
                raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(x)):
            raise NumericError("features contain non-finite values")
        ids = np.arange(x.shape[0], dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (x.shape[0],) or not np.array_equal(np.sort(ids), np.arange(x.shape[0])):
            raise ValueError("ids must be a permutation of 0..N-1")
        x.setflags(write=False)
        y.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.features[index], self.labels[index], self.num_classes)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features, labels, self.num_classes, self.ids)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


def train_test_split(dataset: Dataset, test_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    n = len(dataset)
    n_test = int(np.floor(test_fraction * n + 0.5))
    order = shuffle(rng, np.arange(n))
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return dataset.subset(train_idx), dataset.subset(test_idx)
