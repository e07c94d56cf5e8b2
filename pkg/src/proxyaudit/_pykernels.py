"""Pure-Python fallback for the aggregation kernels.

Same signatures as the compiled module. Sums are correctly rounded via
``math.fsum``, so results agree with the compensated compiled sums to
within an ulp or two.
"""
from __future__ import annotations

import math

import numpy as np


def group_sums(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.intp)
    if values.shape[0] != groups.shape[0]:
        raise ValueError("values and groups differ in length")
    if groups.size and groups.max() >= n_groups:
        raise IndexError("group id out of range")
    out = np.zeros(n_groups, dtype=np.float64)
    keep = groups >= 0
    if not keep.any():
        return out
    vals, ids = values[keep], groups[keep]
    order = np.argsort(ids, kind="stable")
    vals, ids = vals[order], ids[order]
    bounds = np.flatnonzero(np.diff(ids)) + 1
    for chunk, gid in zip(np.split(vals, bounds), ids[np.r_[0, bounds]]):
        out[gid] = math.fsum(chunk.tolist())
    return out


def weighted_column_sums(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape[0] != weights.shape[0]:
        raise ValueError("values and weights differ in length")
    k = weights.shape[1]
    num = np.array([math.fsum((weights[:, j] * values).tolist()) for j in range(k)])
    den = np.array([math.fsum(weights[:, j].tolist()) for j in range(k)])
    return num.reshape(k), den.reshape(k)


def threshold_assign(probs: np.ndarray, q: float) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    above = probs > q
    hit = above.any(axis=1)
    out = np.where(hit, np.argmax(above, axis=1), -1)
    return out.astype(np.intp)
