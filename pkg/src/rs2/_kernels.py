"""Compiled inner loops for the samplers.

The random draws are made in numpy beforehand; these loops only apply them,
so the stream consumed is the same whether or not numba is in use.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _scaled(u, m):
    # floor(u * m) for u in [0, 1), clamped against round-up at the top
    j = int(u * m)
    return j if j < m else m - 1


@njit(cache=True)
def partial_fisher_yates(n, uniforms):
    k = uniforms.shape[0]
    pool = np.arange(n)
    for i in range(k):
        j = i + _scaled(uniforms[i], n - i)
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return pool[:k].copy()


@njit(cache=True)
def fisher_yates(arr, uniforms):
    # uniforms[m] picks the partner of position i = n-1-m from [0, i]
    n = arr.shape[0]
    for m in range(uniforms.shape[0]):
        i = n - 1 - m
        j = _scaled(uniforms[m], i + 1)
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


@njit(cache=True)
def weighted_draws_without_replacement(weights, uniforms):
    """Sequential proportional draws, removing each winner before the next.

    Uses a Fenwick tree over the weights so each draw is O(log n). Returns
    fewer than ``len(uniforms)`` indices only if positive mass runs out.
    """
    n = weights.shape[0]
    tree = np.zeros(n + 1)
    for i in range(n):
        tree[i + 1] += weights[i]
        parent = (i + 1) + ((i + 1) & -(i + 1))
        if parent <= n:
            tree[parent] += tree[i + 1]
    remaining = weights.copy()
    total = 0.0
    for i in range(n):
        total += weights[i]
    top = 1
    while top * 2 <= n:
        top *= 2
    k = uniforms.shape[0]
    out = np.empty(k, dtype=np.int64)
    count = 0
    for d in range(k):
        if total <= 0.0:
            break
        target = uniforms[d] * total
        pos = 0
        step = top
        while step > 0:
            nxt = pos + step
            if nxt <= n and tree[nxt] <= target:
                pos = nxt
                target -= tree[nxt]
            step //= 2
        idx = pos
        # rounding can land on a zero-weight slot or run off the end
        if idx >= n or remaining[idx] <= 0.0:
            idx = -1
            best = n - 1
            while best >= 0:
                if remaining[best] > 0.0:
                    idx = best
                    break
                best -= 1
            if idx < 0:
                break
        out[count] = idx
        count += 1
        w = remaining[idx]
        remaining[idx] = 0.0
        total -= w
        j = idx + 1
        while j <= n:
            tree[j] -= w
            j += j & -j
        # guard against drift leaving phantom mass
        if total < 1e-300:
            total = 0.0
            for i in range(n):
                total += remaining[i]
    return out[:count]


def warmup():
    """Load or compile every kernel so the first timed call pays nothing."""
    u = np.array([0.5, 0.25])
    partial_fisher_yates(3, u)
    fisher_yates(np.arange(3), u)
    weighted_draws_without_replacement(np.array([1.0, 2.0, 3.0]), u)
