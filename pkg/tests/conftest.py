"""Shared test fixtures and brute-force oracles.

The oracles deliberately avoid the production dynamic-programming code: log Z
and Viterbi are recomputed by enumerating every possible edge sequence and
scoring each with score_sequence, so agreement is meaningful evidence.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from posspath.lattice import ScoreTable, score_sequence
from posspath.rules import RuleSet, build_rule_set

# one "[PASS]/[FAIL] criterion — detail" line per acceptance criterion,
# filled in by tests/test_acceptance.py and echoed after output capture ends
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def enumerate_scores(table: ScoreTable, rules: RuleSet):
    """(path, score) for every edge sequence of length T (|E|^T of them)."""
    E = rules.n_edges
    for path in itertools.product(range(E), repeat=table.T):
        p = np.asarray(path, dtype=np.int64)
        yield p, score_sequence(table, rules, p)


def brute_force_log_z(table: ScoreTable, rules: RuleSet) -> float:
    return float(logsumexp([s for _, s in enumerate_scores(table, rules)]))


def brute_force_viterbi(table: ScoreTable, rules: RuleSet):
    """Max-score path; ties resolved to the reverse-lexicographically smallest

    path, which is what backpointer Viterbi with smallest-edge argmax returns.
    """
    best_score = -np.inf
    best_path = None
    for p, s in enumerate_scores(table, rules):
        key = tuple(reversed(p.tolist()))
        if s > best_score + 1e-12 or (
            abs(s - best_score) <= 1e-12 and key < tuple(reversed(best_path.tolist()))
        ):
            best_score = s
            best_path = p
    return best_path, best_score


def random_instance(rng: np.random.Generator, masked=None, mode=None):
    """A small random ScoreTable + rules with |E| <= 9, T <= 4."""
    shapes = [(2, 0), (3, 0), (2, 1), (1, 2)]
    n_players, n_out = shapes[int(rng.integers(len(shapes)))]
    rules = build_rule_set(n_players, n_out)
    T = int(rng.integers(1, 5))
    if mode is None:
        mode = str(rng.choice(["none", "dynamic", "static"]))
    if masked is None:
        masked = bool(rng.integers(2))
    emission = rng.normal(size=(T, rules.n_edges))
    kw = {}
    if mode == "dynamic":
        kw["trans_dynamic"] = rng.normal(size=(max(T - 1, 0), rules.n_allowed))
    elif mode == "static":
        kw["trans_static"] = rng.normal(size=(rules.n_edges, rules.n_edges))
    table = ScoreTable(emission=emission, trans_mode=mode, masked=masked, **kw)
    return table, rules


@pytest.fixture(scope="session")
def rules_2p() -> RuleSet:
    return build_rule_set(2, 0)


@pytest.fixture(scope="session")
def rules_3n() -> RuleSet:
    return build_rule_set(2, 1)


@pytest.fixture(scope="session")
def rules_full() -> RuleSet:
    return build_rule_set(22, 4)
