"""The lattice engine: sequence scoring, forward-backward, NLL gradients and
constrained decoding over possession-edge sequences.

Transition scores come in three modes:

  none      all transitions score zero
  dynamic   one score per allowed pair per step, laid out in allowed_list order
  static    a shared |E| x |E| matrix of scores

When ``masked`` is set, transitions outside the allowed set contribute
``mask_value`` (a large negative constant) to sequence scores, and the dynamic
programs restrict themselves to allowed pairs, which is numerically identical
(exp(mask_value) underflows to zero) but runs in O(T * |A|).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .rules import RuleSet

logger = logging.getLogger(__name__)

DEFAULT_MASK_VALUE = -1.0e4

TRANSITION_MODES = ("none", "dynamic", "static")


@dataclass
class ScoreTable:
    """Log-domain emission and transition scores for one window or episode."""

    emission: np.ndarray  # (T, E)
    trans_mode: str = "none"
    trans_dynamic: np.ndarray | None = None  # (T-1, |A|)
    trans_static: np.ndarray | None = None  # (E, E)
    masked: bool = True
    mask_value: float = DEFAULT_MASK_VALUE

    def __post_init__(self):
        self.emission = np.ascontiguousarray(self.emission, dtype=np.float64)
        if self.trans_mode not in TRANSITION_MODES:
            raise ValueError(f"unknown transition mode {self.trans_mode!r}")
        if self.trans_mode == "dynamic":
            if self.trans_dynamic is None:
                raise ValueError("dynamic mode requires trans_dynamic")
            self.trans_dynamic = np.ascontiguousarray(self.trans_dynamic, dtype=np.float64)
            if self.trans_dynamic.shape[0] != max(self.T - 1, 0):
                raise ValueError(
                    f"trans_dynamic has {self.trans_dynamic.shape[0]} rows, expected {self.T - 1}"
                )
        if self.trans_mode == "static":
            if self.trans_static is None:
                raise ValueError("static mode requires trans_static")
            self.trans_static = np.ascontiguousarray(self.trans_static, dtype=np.float64)
        if not np.all(np.isfinite(self.emission)):
            raise ValueError("emission scores must be finite")

    @property
    def T(self) -> int:
        return self.emission.shape[0]

    @property
    def n_edges(self) -> int:
        return self.emission.shape[1]


@dataclass
class LatticeResult:
    log_z: float
    marginals_emission: np.ndarray | None = None  # (T, E)
    marginals_transition: np.ndarray | None = None  # (T-1, |A|) in allowed_list order
    nll: float | None = None


@dataclass
class ScoreGradients:
    """Gradient of the NLL, shaped like the ScoreTable parameters."""

    emission: np.ndarray
    trans_dynamic: np.ndarray | None = None
    trans_static: np.ndarray | None = None
    illegal_gold: bool = False


def _check_table(table: ScoreTable, rules: RuleSet):
    if table.n_edges != rules.n_edges:
        raise ValueError(f"table has {table.n_edges} edges, rules have {rules.n_edges}")
    if table.trans_mode == "dynamic" and table.T > 1:
        if table.trans_dynamic.shape[1] != rules.n_allowed:
            raise ValueError("trans_dynamic width does not match rules.allowed_list")


def _sparse_trans(table: ScoreTable, rules: RuleSet) -> np.ndarray:
    """Transition scores gathered at allowed pairs: (T-1, |A|) or a shared (1, |A|) row."""
    if table.trans_mode == "dynamic":
        return table.trans_dynamic if table.T > 1 else np.zeros((1, rules.n_allowed))
    if table.trans_mode == "static":
        row = table.trans_static[rules.allowed_prev, rules.allowed_next]
        return np.ascontiguousarray(row[None, :])
    return np.zeros((1, rules.n_allowed))


def _dense_trans_step(table: ScoreTable, rules: RuleSet, t: int) -> np.ndarray:
    """Full |E| x |E| transition matrix for step t-1 -> t (unmasked modes)."""
    if table.trans_mode == "static":
        return table.trans_static
    psi = np.zeros((rules.n_edges, rules.n_edges))
    if table.trans_mode == "dynamic":
        psi[rules.allowed_prev, rules.allowed_next] = table.trans_dynamic[t - 1]
    return psi


def transition_score(table: ScoreTable, rules: RuleSet, prev_edge: int, next_edge: int, t: int) -> float:
    """psi_t(prev, next) for the step from t-1 to t (t >= 1, 0-based)."""
    allowed = rules.is_allowed(prev_edge, next_edge)
    if table.masked and not allowed:
        return table.mask_value
    if table.trans_mode == "none":
        return 0.0
    if table.trans_mode == "static":
        return float(table.trans_static[prev_edge, next_edge])
    if allowed:
        return float(table.trans_dynamic[t - 1, rules.pair_index[prev_edge, next_edge]])
    return 0.0  # dynamic scores exist only for allowed pairs


def score_sequence(table: ScoreTable, rules: RuleSet, path: np.ndarray) -> float:
    """S(e) = f_1(e_1) + sum_{t>=2} (f_t(e_t) + psi_t(e_{t-1}, e_t))."""
    path = np.asarray(path, dtype=np.int64)
    _check_table(table, rules)
    if path.shape[0] != table.T:
        raise ValueError(f"path length {path.shape[0]} != T={table.T}")
    s = float(table.emission[np.arange(table.T), path].sum())
    for t in range(1, table.T):
        s += transition_score(table, rules, int(path[t - 1]), int(path[t]), t)
    return s


def _kernel_args(table: ScoreTable, rules: RuleSet):
    return (
        table.emission,
        _sparse_trans(table, rules),
        rules.allowed_prev,
        rules.allowed_next,
        rules.by_next_order,
        rules.by_next_starts,
    )


def _dense_forward(table: ScoreTable, rules: RuleSet):
    T, E = table.emission.shape
    alpha = np.empty((T, E))
    alpha[0] = table.emission[0]
    for t in range(1, T):
        psi = _dense_trans_step(table, rules, t)
        alpha[t] = table.emission[t] + logsumexp(alpha[t - 1][:, None] + psi, axis=0)
    return alpha, float(logsumexp(alpha[-1]))


def _dense_backward(table: ScoreTable, rules: RuleSet):
    T, E = table.emission.shape
    beta = np.empty((T, E))
    beta[-1] = 0.0
    for t in range(T - 2, -1, -1):
        psi = _dense_trans_step(table, rules, t + 1)
        beta[t] = logsumexp(psi + (table.emission[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def _forward(table: ScoreTable, rules: RuleSet):
    if table.masked:
        return _kernels.sparse_forward(*_kernel_args(table, rules))
    return _dense_forward(table, rules)


def _backward(table: ScoreTable, rules: RuleSet):
    if table.masked:
        return _kernels.sparse_backward(*_kernel_args(table, rules))
    return _dense_backward(table, rules)


def forward_log_z(table: ScoreTable, rules: RuleSet) -> LatticeResult:
    _check_table(table, rules)
    _, log_z = _forward(table, rules)
    return LatticeResult(log_z=log_z)


def forward_backward(table: ScoreTable, rules: RuleSet) -> LatticeResult:
    """Log-partition plus posterior edge and transition marginals."""
    _check_table(table, rules)
    alpha, log_z = _forward(table, rules)
    beta = _backward(table, rules)
    marg_e = np.exp(alpha + beta - log_z)
    T = table.T
    vals = _sparse_trans(table, rules)
    marg_t = np.empty((max(T - 1, 0), rules.n_allowed))
    for t in range(1, T):
        row = vals[0] if vals.shape[0] == 1 else vals[t - 1]
        marg_t[t - 1] = np.exp(
            alpha[t - 1, rules.allowed_prev]
            + row
            + table.emission[t, rules.allowed_next]
            + beta[t, rules.allowed_next]
            - log_z
        )
    return LatticeResult(log_z=log_z, marginals_emission=marg_e, marginals_transition=marg_t)


def nll_and_gradients(table: ScoreTable, rules: RuleSet, gold: np.ndarray) -> tuple[float, ScoreGradients]:
    """NLL of the gold path and its gradient w.r.t. every stored score.

    Emission gradient is marginal - indicator; transition gradients likewise.
    Masked (disallowed) transitions carry a constant score, hence exactly zero
    gradient.  A gold path that is illegal under masking is tolerated: the NLL
    comes back huge but finite and ``illegal_gold`` is set.
    """
    gold = np.asarray(gold, dtype=np.int64)
    _check_table(table, rules)
    if gold.shape[0] != table.T:
        raise ValueError(f"gold length {gold.shape[0]} != T={table.T}")

    alpha, log_z = _forward(table, rules)
    beta = _backward(table, rules)
    T, E = table.emission.shape

    nll = log_z - score_sequence(table, rules, gold)

    grad_e = np.exp(alpha + beta - log_z)
    grad_e[np.arange(T), gold] -= 1.0

    illegal = bool(rules.violation_mask(gold).any())
    if illegal and table.masked:
        logger.warning("gold path contains transitions outside the allowed set")

    grad_dyn = None
    grad_static = None
    vals = _sparse_trans(table, rules)

    if table.trans_mode == "dynamic" and T > 1:
        grad_dyn = np.empty((T - 1, rules.n_allowed))
        for t in range(1, T):
            grad_dyn[t - 1] = np.exp(
                alpha[t - 1, rules.allowed_prev]
                + vals[t - 1]
                + table.emission[t, rules.allowed_next]
                + beta[t, rules.allowed_next]
                - log_z
            )
            k = rules.pair_index[gold[t - 1], gold[t]]
            if k >= 0:
                grad_dyn[t - 1, k] -= 1.0
    elif table.trans_mode == "static":
        grad_static = np.zeros((E, E))
        if table.masked:
            row_sum = np.zeros(rules.n_allowed)
            for t in range(1, T):
                row_sum += np.exp(
                    alpha[t - 1, rules.allowed_prev]
                    + vals[0]
                    + table.emission[t, rules.allowed_next]
                    + beta[t, rules.allowed_next]
                    - log_z
                )
            np.add.at(grad_static, (rules.allowed_prev, rules.allowed_next), row_sum)
            for t in range(1, T):
                if rules.is_allowed(int(gold[t - 1]), int(gold[t])):
                    grad_static[gold[t - 1], gold[t]] -= 1.0
        else:
            for t in range(1, T):
                grad_static += np.exp(
                    alpha[t - 1][:, None]
                    + table.trans_static
                    + (table.emission[t] + beta[t])[None, :]
                    - log_z
                )
                grad_static[gold[t - 1], gold[t]] -= 1.0

    return float(nll), ScoreGradients(
        emission=grad_e, trans_dynamic=grad_dyn, trans_static=grad_static, illegal_gold=illegal
    )


def viterbi_decode(table: ScoreTable, rules: RuleSet) -> tuple[np.ndarray, float]:
    """Highest-scoring path; ties resolved toward the smallest edge id."""
    _check_table(table, rules)
    if table.masked:
        path, score = _kernels.sparse_viterbi(*_kernel_args(table, rules))
        return np.asarray(path), score
    T, E = table.emission.shape
    delta = table.emission[0].copy()
    ptr = np.empty((T, E), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + _dense_trans_step(table, rules, t)
        ptr[t] = np.argmax(cand, axis=0)  # first max = smallest prev id
        delta = table.emission[t] + cand[ptr[t], np.arange(E)]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = ptr[t, path[t]]
    return path, float(delta[path[-1]])


def greedy_decode(table: ScoreTable, rules: RuleSet, constrained: bool = True) -> np.ndarray:
    """Per-step argmax: unconstrained over all edges, or restricted to the
    successors of the previously chosen edge (GCD). Ties -> smallest edge id."""
    _check_table(table, rules)
    if not constrained:
        return np.argmax(table.emission, axis=1).astype(np.int64)
    T = table.T
    path = np.empty(T, dtype=np.int64)
    path[0] = int(np.argmax(table.emission[0]))
    for t in range(1, T):
        succ = rules.successors(int(path[t - 1]))
        cand = table.emission[t, succ].copy()
        if table.trans_mode == "dynamic":
            cand += table.trans_dynamic[t - 1, rules.pair_index[path[t - 1], succ]]
        elif table.trans_mode == "static":
            cand += table.trans_static[path[t - 1], succ]
        path[t] = succ[int(np.argmax(cand))]
    return path
