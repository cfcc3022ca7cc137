"""Pure-numpy lattice kernels over the sparse allowed-transition layout.

Fallback for environments without the compiled extension.  All functions take
the same arguments as their compiled counterparts:

  emission    (T, E) float64 log-scores
  trans       (T-1, A) or (1, A) float64 transition scores in allowed_list
              order; a single row is broadcast across time steps
  prev_idx    (A,) int64 previous-edge id per allowed pair
  next_idx    (A,) int64 next-edge id per allowed pair
  by_next     (A,) int64 permutation sorting pairs by (next, prev)
  starts      (E+1,) int64 group boundaries of by_next per next edge

Transitions outside the allowed list are excluded from sums and maxima, which
is numerically identical to masking them with a large negative constant.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _trans_row(trans: np.ndarray, t: int) -> np.ndarray:
    return trans[0] if trans.shape[0] == 1 else trans[t]


def sparse_forward(emission, trans, prev_idx, next_idx, by_next, starts):
    """Forward recursion; returns (alpha, log_z)."""
    T, E = emission.shape
    alpha = np.empty((T, E))
    alpha[0] = emission[0]
    for t in range(1, T):
        cand = alpha[t - 1, prev_idx] + _trans_row(trans, t - 1)
        acc = np.full(E, -np.inf)
        np.logaddexp.at(acc, next_idx, cand)
        alpha[t] = emission[t] + acc
    m = alpha[-1].max()
    log_z = m + np.log(np.exp(alpha[-1] - m).sum())
    return alpha, float(log_z)


def sparse_backward(emission, trans, prev_idx, next_idx, by_next, starts):
    """Backward recursion; beta[t, e] sums over continuations from edge e at t."""
    T, E = emission.shape
    beta = np.empty((T, E))
    beta[-1] = 0.0
    for t in range(T - 2, -1, -1):
        cand = _trans_row(trans, t) + emission[t + 1, next_idx] + beta[t + 1, next_idx]
        acc = np.full(E, -np.inf)
        np.logaddexp.at(acc, prev_idx, cand)
        beta[t] = acc
    return beta


def sparse_viterbi(emission, trans, prev_idx, next_idx, by_next, starts):
    """Max-score path; ties broken by the smallest edge id at every argmax."""
    T, E = emission.shape
    prev_sorted = prev_idx[by_next]
    ptr = np.empty((T, E), dtype=np.int64)
    delta = emission[0].copy()
    pos = np.arange(prev_sorted.shape[0])
    seg_id = np.repeat(np.arange(E), np.diff(starts))
    reduce_starts = starts[:-1]
    for t in range(1, T):
        row = _trans_row(trans, t - 1)
        cand = delta[prev_sorted] + row[by_next]
        gmax = np.maximum.reduceat(cand, reduce_starts)
        # first (= smallest prev edge id) entry attaining the group max
        eligible = np.where(cand >= gmax[seg_id], pos, prev_sorted.shape[0])
        first = np.minimum.reduceat(eligible, reduce_starts)
        ptr[t] = prev_sorted[first]
        delta = emission[t] + gmax
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    score = float(delta[path[-1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = ptr[t, path[t]]
    return path, score
