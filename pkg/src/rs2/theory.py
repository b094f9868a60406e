"""Closed-form convergence and generalization bounds, and the 1-NN label
disagreement proxy for how much data sits near a decision boundary."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rs2.core import ConfigError, Dataset


@dataclass(frozen=True)
class ConvergenceInputs:
    beta: float
    sigma: float
    b: int
    r: float
    T: int
    X: int
    delta0: float

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise ValueError("r must be in (0, 1]")
        if min(self.beta, self.b, self.T, self.X, self.delta0) <= 0 or self.sigma < 0:
            raise ValueError("beta, b, T, X, delta0 must be positive and sigma >= 0")

    @property
    def iterations(self) -> float:
        return self.r * self.T * self.X


@dataclass(frozen=True)
class GeneralizationInputs:
    N: int
    C: float
    beta_f: float
    L_f: float
    r: float
    T: int
    X: int

    def __post_init__(self):
        if min(self.N, self.C, self.beta_f, self.L_f, self.T, self.X) <= 0:
            raise ValueError("N, C, beta_f, L_f, T, X must be positive")
        if not 0.0 < self.r <= 1.0:
            raise ValueError("r must be in (0, 1]")
        if self.C * self.beta_f >= 1.0:
            raise ConfigError(f"step constant C={self.C} must be below 1/beta_f={1.0 / self.beta_f}")
        if self.r * self.T * self.X < 1.0:
            # the log(e * rTX) term goes negative below one step
            raise ValueError("r*T*X must be at least one step")

    @property
    def iterations(self) -> float:
        return self.r * self.T * self.X


def convergence_bound(p: ConvergenceInputs) -> float:
    """Bound on E||grad l||^2 for accelerated SGD after ``r*T*X`` steps:
    ``21 beta D / (4 rTX) + 4 sigma sqrt(beta D) / sqrt(b rTX)``."""
    n = p.iterations
    return 21.0 * p.beta * p.delta0 / (4.0 * n) + 4.0 * p.sigma * math.sqrt(p.beta * p.delta0) / math.sqrt(p.b * n)


def convex_bound(p: ConvergenceInputs, w0_dist: float) -> float:
    """Convex-case suboptimality bound:
    ``48 beta R^2 / (rTX)^2 + 24 R sigma / sqrt(b rTX)`` with ``R = ||w0 - w*||``."""
    if w0_dist < 0:
        raise ValueError("w0_dist must be non-negative")
    n = p.iterations
    return 48.0 * p.beta * w0_dist**2 / (n * n) + 24.0 * w0_dist * p.sigma / math.sqrt(p.b * n)


def generalization_bound(p: GeneralizationInputs) -> float:
    """Stability bound for plain SGD with steps ``eta_t <= C/t``."""
    n = p.iterations
    cb = p.C * p.beta_f
    return (
        (1.0 / p.N)
        * 2.0
        * p.C
        * math.exp(cb)
        * p.L_f**2
        * n**cb
        * min(1.0 + 1.0 / cb, math.log(math.e * n))
    )


def nn_label_disagreement(dataset: Dataset) -> float:
    """Fraction of examples whose nearest other example has a different label.

    Exact O(N^2) scan in row blocks; equal distances go to the lower id.
    """
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two examples")
    x = dataset.features
    pos_of_id = np.argsort(dataset.ids, kind="stable")
    block = max(1, 4_000_000 // (n * max(x.shape[1], 1)))
    sentinel = np.iinfo(np.int64).max
    disagree = 0
    for start in range(0, n, block):
        stop = min(start + block, n)
        # explicit differences, not the |a|^2+|b|^2-2ab expansion, so that
        # geometrically tied distances compare equal
        d2 = ((x[start:stop, None, :] - x[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        tied = d2 == d2.min(axis=1, keepdims=True)
        nn_id = np.where(tied, dataset.ids[None, :], sentinel).min(axis=1)
        nn_pos = pos_of_id[nn_id]
        disagree += int(np.count_nonzero(dataset.labels[nn_pos] != dataset.labels[start:stop]))
    return disagree / n
