"""
Batch-level data/noise assignment for diffusion training.

The sampled noise vectors are permuted so that the total squared L2
distance between each chunk and its assigned noise is minimal.
"""

import logging

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

EXACT_LIMIT = 128


def assignment_cost(chunks: np.ndarray, noises: np.ndarray, perm: np.ndarray) -> float:
    """Σ_i ‖chunk_i − noise_perm[i]‖²."""
    a = np.asarray(chunks, dtype=np.float64).reshape(len(chunks), -1)
    n = np.asarray(noises, dtype=np.float64).reshape(len(noises), -1)
    return float(((a - n[np.asarray(perm)]) ** 2).sum())


def _greedy(cost: np.ndarray) -> np.ndarray:
    """Repeatedly take the globally cheapest remaining pair."""
    b = cost.shape[0]
    perm = np.full(b, -1, dtype=np.int64)
    order = np.argsort(cost, axis=None, kind="stable")
    used_rows, used_cols = set(), set()
    for flat in order:
        i, j = divmod(int(flat), b)
        if i in used_rows or j in used_cols:
            continue
        perm[i] = j
        used_rows.add(i)
        used_cols.add(j)
        if len(used_rows) == b:
            break
    return perm


def immiscible_assign(chunks: np.ndarray, noises: np.ndarray) -> np.ndarray:
    """Permutation π with noises[π[i]] assigned to chunks[i].

    Exact (Hungarian) for B ≤ 128; larger batches fall back to a greedy
    match and log a warning.
    """
    a = np.asarray(chunks, dtype=np.float64).reshape(len(chunks), -1)
    n = np.asarray(noises, dtype=np.float64).reshape(len(noises), -1)
    if a.shape != n.shape:
        raise ValueError(f"chunks {a.shape} and noises {n.shape} differ")
    b = a.shape[0]
    if b <= 1:
        return np.arange(b, dtype=np.int64)
    cost = cdist(a, n, metric="sqeuclidean")
    if b > EXACT_LIMIT:
        logger.warning("batch of %d exceeds exact assignment limit %d; using greedy match", b, EXACT_LIMIT)
        return _greedy(cost)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(b, dtype=np.int64)
    perm[rows] = cols
    return perm
