"""Edge-level and event-level evaluation metrics.

Event matching is a Needleman-Wunsch global alignment in which a predicted and
a true event may only be matched when they share the event type and acting
player and lie within a temporal window; those conditions are hard constraints
encoded as a forbidding match score.  The relaxed-recall curve drops the
type/actor conditions and sweeps temporal and spatial tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventRecord
from .labeling import needleman_wunsch_align
from .rules import RuleSet

FORBID = -1.0e9


@dataclass
class EdgeMetrics:
    edge_acc: float
    sender_acc: float
    receiver_acc: float
    violation_rate: float
    n_steps: int

    def as_dict(self) -> dict:
        return {
            "edge_acc": self.edge_acc,
            "sender_acc": self.sender_acc,
            "receiver_acc": self.receiver_acc,
            "violation_rate": self.violation_rate,
            "n_steps": self.n_steps,
        }


@dataclass
class EventMatchReport:
    matched: int
    detected: int
    truth: int
    precision: float
    recall: float
    f1: float
    precision_degenerate: bool = False
    matches: list = field(default_factory=list)  # (pred index, true index, dt)

    def as_dict(self) -> dict:
        return {
            "matched": self.matched,
            "detected": self.detected,
            "truth": self.truth,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def edge_metrics(pred: np.ndarray, gold: np.ndarray, rules: RuleSet) -> EdgeMetrics:
    pred = np.asarray(pred, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise ValueError("pred and gold paths must have equal length")
    ps, pr = np.divmod(pred, rules.n_total)
    gs, gr = np.divmod(gold, rules.n_total)
    T = pred.shape[0]
    violations = rules.violation_mask(pred)
    return EdgeMetrics(
        edge_acc=float((pred == gold).mean()),
        sender_acc=float((ps == gs).mean()),
        receiver_acc=float((pr == gr).mean()),
        violation_rate=float(violations.mean()) if T > 1 else 0.0,
        n_steps=T,
    )


def _counts_to_report(matched, detected, truth, matches) -> EventMatchReport:
    degen = detected == 0
    precision = matched / detected if detected else 0.0
    recall = matched / truth if truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EventMatchReport(
        matched=matched,
        detected=detected,
        truth=truth,
        precision=precision,
        recall=recall,
        f1=f1,
        precision_degenerate=degen,
        matches=matches,
    )


def _aligned_matches(pred, truth, qualifies, gap_penalty=-0.5):
    def match_fn(p, t):
        return 1.0 if qualifies(p, t) else FORBID

    pairs, _ = needleman_wunsch_align(pred, truth, match_fn, gap_penalty)
    return [
        (i, j)
        for i, j in pairs
        if i is not None and j is not None and qualifies(pred[i], truth[j])
    ]


def match_events(
    pred: list[EventRecord], truth: list[EventRecord], dt_max_s: float = 1.0
) -> EventMatchReport:
    pred = sorted(pred, key=lambda e: (e.time_s, e.actor))
    truth = sorted(truth, key=lambda e: (e.time_s, e.actor))

    def qualifies(p, t):
        return p.kind == t.kind and p.actor == t.actor and abs(p.time_s - t.time_s) <= dt_max_s

    matched = _aligned_matches(pred, truth, qualifies)
    matches = [(i, j, pred[i].time_s - truth[j].time_s) for i, j in matched]
    return _counts_to_report(len(matched), len(pred), len(truth), matches)


def relaxed_recall_curve(
    pred: list[EventRecord],
    truth: list[EventRecord],
    dt_grid: np.ndarray,
    dx_grid: np.ndarray,
) -> np.ndarray:
    """Recall for every (dt, dx) tolerance pair; type and actor are ignored.

    Monotone non-decreasing along both axes since larger tolerances only admit
    more matches.
    """
    pred = sorted(pred, key=lambda e: (e.time_s, e.actor))
    truth = sorted(truth, key=lambda e: (e.time_s, e.actor))
    out = np.zeros((len(dt_grid), len(dx_grid)))
    if not truth:
        return out
    for a, dt in enumerate(dt_grid):
        for b, dx in enumerate(dx_grid):
            def qualifies(p, t, dt=dt, dx=dx):
                return (
                    abs(p.time_s - t.time_s) <= dt
                    and np.hypot(p.x - t.x, p.y - t.y) <= dx
                )

            out[a, b] = len(_aligned_matches(pred, truth, qualifies)) / len(truth)
    return out
