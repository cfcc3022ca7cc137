"""Discrete on-ball events from possession-path change-points.

An event fires at every step t >= 2 where the selected edge changes (never at
the first step: the window start is a state, not an event).  The class is read
off the topology of the newly selected edge: a player self-loop is a control,
a directed edge from a player is a kick, an outside self-loop is out-of-play.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rules import RuleSet
from .windows import TrackingWindow

CONTINUATION = "continuation"
CONTROL = "control"
KICK = "kick"
OUT_OF_PLAY = "out_of_play"
VIOLATION = "violation"

EVENT_KINDS = (CONTROL, KICK, OUT_OF_PLAY)


@dataclass(frozen=True)
class EventRecord:
    step: int
    time_s: float
    kind: str
    actor: int  # player for control/kick, outside node for out_of_play
    target: int | None = None  # kick receiver intent
    x: float = 0.0
    y: float = 0.0


def classify_edge(edge_id: int, rules: RuleSet) -> str:
    """Event class an edge would initiate: control, kick or out_of_play."""
    s, r = rules.decode(edge_id)
    if s == r:
        return OUT_OF_PLAY if rules.is_outside(s) else CONTROL
    return KICK


def classify_transition(prev_edge: int, next_edge: int, rules: RuleSet) -> str:
    if prev_edge == next_edge:
        return CONTINUATION
    if not rules.is_allowed(prev_edge, next_edge):
        return VIOLATION
    return classify_edge(next_edge, rules)


def extract_events(path: np.ndarray, window: TrackingWindow, rules: RuleSet) -> list[EventRecord]:
    path = np.asarray(path, dtype=np.int64)
    if path.shape[0] != window.T:
        raise ValueError("path and window lengths differ")
    events = []
    for t in range(1, path.shape[0]):
        if path[t] == path[t - 1]:
            continue
        kind = classify_edge(int(path[t]), rules)
        s, r = rules.decode(int(path[t]))
        actor = s
        target = r if kind == KICK else None
        x, y = window.positions[t, actor]
        events.append(
            EventRecord(
                step=window.start_step + t,
                time_s=window.time_of_step(t),
                kind=kind,
                actor=actor,
                target=target,
                x=float(x),
                y=float(y),
            )
        )
    return events


def retime_events(events: list[EventRecord], from_hz: float, to_hz: float) -> list[EventRecord]:
    """Re-time events from the decode grid to a finer frame grid (nearest frame)."""
    out = []
    for ev in events:
        frame = round(ev.time_s * to_hz)
        out.append(
            EventRecord(
                step=frame,
                time_s=frame / to_hz,
                kind=ev.kind,
                actor=ev.actor,
                target=ev.target,
                x=ev.x,
                y=ev.y,
            )
        )
    return out
