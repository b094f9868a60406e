"""Per-round subset selection: RS2 variants and importance-based baselines."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from rs2 import _kernels
from rs2.core import Dataset, Rng, shuffle, uniform_indices

KINDS = (
    "static_random",
    "rs2_with_replacement",
    "rs2_with_replacement_stratified",
    "rs2_without_replacement",
    "importance_resample",
    "importance_recompute",
)
RS2_KINDS = ("rs2_with_replacement", "rs2_with_replacement_stratified", "rs2_without_replacement")
IMPORTANCE_KINDS = ("importance_resample", "importance_recompute")


def subset_size(r: float, n: int) -> int:
    """``floor(r * n)``, tolerant of binary round-off (0.29 * 100 -> 29)."""
    return int(math.floor(r * n + 1e-9))


def loss_based_weights(losses) -> np.ndarray:
    """Normalize per-example losses into a sampling distribution."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ValueError("expected a non-empty loss vector")
    if not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite")
    if np.any(losses < 0):
        raise ValueError("losses must be non-negative")
    total = math.fsum(losses)
    if total == 0.0:
        return np.full(losses.size, 1.0 / losses.size)
    return losses / total


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"expected {n} importance weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("importance weights must be finite and non-negative")
    if not w.sum() > 0:
        raise ValueError("importance weights must have positive total mass")
    return w


def weighted_sample(rng: Rng, weights, k: int) -> np.ndarray:
    """``k`` distinct indices, each draw proportional to the remaining weight."""
    w = np.asarray(weights, dtype=np.float64)
    positive = int(np.count_nonzero(w > 0))
    if k > positive:
        raise ValueError(f"only {positive} examples carry positive weight, cannot draw {k}")
    out = _kernels.weighted_draws_without_replacement(w, rng.uniform(k))
    if out.shape[0] != k:  # pragma: no cover - guarded by the positive count
        raise ArithmeticError("weighted sampling ran out of mass")
    return out


def stratified_quotas(class_counts, r: float) -> np.ndarray:
    """Per-class sample counts summing to ``floor(r * N)``.

    Each class gets ``floor(r * N_c)``; leftover slots go to the largest
    fractional remainders, then larger classes, then lower class index.
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    k = subset_size(r, int(counts.sum()))
    exact = [r * int(c) for c in counts]
    quotas = [min(int(math.floor(e + 1e-9)), int(c)) for e, c in zip(exact, counts)]
    residual = k - sum(quotas)
    order = sorted(
        range(len(counts)),
        key=lambda c: (-(exact[c] - quotas[c]), -int(counts[c]), c),
    )
    for c in order:
        if residual <= 0:
            break
        if quotas[c] < counts[c]:
            quotas[c] += 1
            residual -= 1
    return np.array(quotas, dtype=np.int64)


class SubsetSchedule:
    """Stateful source of each round's training subset.

    Rounds must be requested in order starting at 1. Every kind returns
    distinct indices within a round; "with replacement" refers to reuse
    across rounds.
    """

    def __init__(self, kind: str, r: float, rng: Rng, weights=None):
        if kind not in KINDS:
            raise ValueError(f"unknown subset schedule kind {kind!r}")
        if not 0.0 < r <= 1.0:
            raise ValueError("selection ratio r must be in (0, 1]")
        self.kind = kind
        self.r = r
        self.rng = rng
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self._last_round = 0
        self._static = None
        self._perm = None
        self._cursor = 0
        self._pass = 0
        self._members = None

    def size_for(self, n: int) -> int:
        k = subset_size(self.r, n)
        if k == 0:
            raise ValueError("selection ratio too small for dataset")
        return k

    def next_round_subset(self, round: int, dataset: Dataset, weights=None) -> np.ndarray:
        if round != self._last_round + 1:
            raise ValueError(f"rounds must advance by one (expected {self._last_round + 1}, got {round})")
        n = len(dataset)
        k = self.size_for(n)
        kind = self.kind
        if kind == "static_random":
            if self._static is None:
                self._static = uniform_indices(self.rng.fork("static"), n, k)
            out = self._static
        elif kind == "rs2_with_replacement":
            out = uniform_indices(self.rng.fork("round", round), n, k)
        elif kind == "rs2_with_replacement_stratified":
            out = self._stratified(dataset, round)
        elif kind == "rs2_without_replacement":
            out = self._take_from_pass(n, k)
        elif kind == "importance_resample":
            if weights is not None and self.weights is None:
                self.weights = np.asarray(weights, dtype=np.float64)
            w = _check_weights(self.weights, n)
            out = weighted_sample(self.rng.fork("round", round), w, k)
        else:
            if weights is None:
                raise ValueError("importance_recompute needs fresh weights every round")
            w = _check_weights(weights, n)
            # stable sort on -w keeps lower index first among ties
            out = np.argsort(-w, kind="stable")[:k].astype(np.int64)
        self._last_round = round
        return np.array(out, dtype=np.int64)

    def _take_from_pass(self, n: int, k: int) -> np.ndarray:
        # a pass that doesn't split evenly ends with a short subset; the next
        # round starts a fresh permutation
        if self._perm is None or self._cursor >= n:
            self._pass += 1
            self._perm = pass_permutation(self.rng, n, self._pass)
            self._cursor = 0
        out = self._perm[self._cursor : self._cursor + k]
        self._cursor += out.shape[0]
        return out

    def _stratified(self, dataset: Dataset, round: int) -> np.ndarray:
        if self._members is None:
            labels = dataset.labels
            if dataset.num_classes <= np.iinfo(np.uint16).max:
                # narrow keys let numpy use its radix sort; order is unchanged
                labels = labels.astype(np.uint16)
            order = np.argsort(labels, kind="stable")
            bounds = np.cumsum(dataset.class_counts())[:-1]
            self._members = np.split(order, bounds)
        quotas = stratified_quotas([m.size for m in self._members], self.r)
        parts = []
        for c, q in enumerate(quotas):
            if q == 0:
                continue
            members = self._members[c]
            pick = uniform_indices(self.rng.fork(f"stratified/{c}", round), members.size, int(q))
            parts.append(members[pick])
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def planned_sizes(self, n: int, rounds: int) -> list[int]:
        """Subset size of each round, without consuming randomness."""
        k = self.size_for(n)
        if self.kind != "rs2_without_replacement":
            return [k] * rounds
        sizes, cursor = [], n
        for _ in range(rounds):
            if cursor >= n:
                cursor = 0
            take = min(k, n - cursor)
            sizes.append(take)
            cursor += take
        return sizes


def pass_permutation(rng: Rng, n: int, pass_index: int) -> np.ndarray:
    """The permutation of ``0..n-1`` used for pass ``pass_index`` (1-based)."""
    return shuffle(rng.fork("pass", pass_index), np.arange(n))


def next_round_subset(sched: SubsetSchedule, round: int, dataset: Dataset, weights=None) -> np.ndarray:
    return sched.next_round_subset(round, dataset, weights)


def batches(subset, b: int) -> Iterator[np.ndarray]:
    """Consecutive slices of size ``b``; the last one may be short."""
    subset = np.asarray(subset)
    for start in range(0, subset.shape[0], b):
        yield subset[start : start + b]


def early_stop_equivalent_stream(rng: Rng, n: int, b: int, r: float, rounds: int) -> list[np.ndarray]:
    """Mini-batches of full-data training, stopped after ``floor(r*T*X)`` of them.

    ``T = ceil(n / b)``; each pass slices a fresh permutation sequentially, so
    the final batch of a pass is short when ``b`` does not divide ``n``.
    """
    if not 1 <= b <= n:
        raise ValueError("batch size must satisfy 1 <= b <= N")
    per_pass = math.ceil(n / b)
    total = subset_size(r, per_pass * rounds)
    out: list[np.ndarray] = []
    p = 0
    while len(out) < total:
        p += 1
        perm = pass_permutation(rng, n, p)
        for batch in batches(perm, b):
            if len(out) == total:
                break
            out.append(batch)
    return out
