"""Training-label construction from raw tracking and touch annotations.

Pipeline: resample tracking to the working rate, detect extra touch candidates
from the optional ball track (RDP corner points), merge them into the touch
list via global alignment, then expand the touch list into a per-step
possession path.  The ball channel is used for label construction only; it is
never an inference input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .rules import OUTSIDE_NAMES, RuleSet

logger = logging.getLogger(__name__)

KIND_TOUCH = "touch"
KIND_OUT = "out_of_play"

WINDOW_STEPS = 50
WINDOW_STRIDE = 5


@dataclass(frozen=True)
class TouchRecord:
    time_s: float
    frame: int
    player: int  # node index; an outside node index when kind == out_of_play
    kind: str = KIND_TOUCH


@dataclass
class Episode:
    """A continuous in-play segment: tracking at a fixed rate plus touches."""

    episode_id: str
    rate_hz: float
    positions: np.ndarray  # (n_frames, n_total, 2), outside anchors included
    team_of: np.ndarray  # (n_total,)
    touches: list[TouchRecord] = field(default_factory=list)
    ball: np.ndarray | None = None  # (n_frames, 2); labels only, never inference
    start_time_s: float = 0.0
    pitch_length: float = 105.0
    pitch_width: float = 68.0

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def frame_times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.n_frames) / self.rate_hz

    def step_of_time(self, time_s: float) -> int:
        """Nearest retained frame for a touch time (clipped to the episode)."""
        step = round((time_s - self.start_time_s) * self.rate_hz)
        return int(np.clip(step, 0, self.n_frames - 1))


def resample(episode: Episode, from_hz: float, to_hz: float, interpolate: bool = False) -> Episode:
    """Decimate tracking from ``from_hz`` to ``to_hz``.

    The default path requires an integer decimation ratio (25 -> 5 keeps every
    5th frame).  ``interpolate`` enables linear resampling for non-integer
    ratios.  Touch times are kept at full precision; snapping to the new grid
    happens in build_gold_path.
    """
    if abs(episode.rate_hz - from_hz) > 1e-9:
        raise ValueError(f"episode is at {episode.rate_hz} Hz, not {from_hz} Hz")
    ratio = from_hz / to_hz
    if abs(ratio - round(ratio)) < 1e-9:
        k = int(round(ratio))
        if k == 1:
            return episode
        return replace(
            episode,
            rate_hz=to_hz,
            positions=episode.positions[::k],
            ball=episode.ball[::k] if episode.ball is not None else None,
        )
    if not interpolate:
        raise ValueError(
            f"non-integer decimation {from_hz} -> {to_hz}; pass interpolate=True"
        )
    old_t = episode.frame_times()
    n_new = int(np.floor((old_t[-1] - old_t[0]) * to_hz)) + 1
    new_t = episode.start_time_s + np.arange(n_new) / to_hz
    pos = np.empty((n_new,) + episode.positions.shape[1:])
    for n in range(episode.positions.shape[1]):
        for c in range(2):
            pos[:, n, c] = np.interp(new_t, old_t, episode.positions[:, n, c])
    ball = None
    if episode.ball is not None:
        ball = np.stack([np.interp(new_t, old_t, episode.ball[:, c]) for c in range(2)], axis=1)
    return replace(episode, rate_hz=to_hz, positions=pos, ball=ball)


def rdp_simplify(points: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices of the vertices retained by Ramer-Douglas-Peucker (endpoints included)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        a, b = points[lo], points[hi]
        seg = b - a
        norm = np.hypot(*seg)
        mid = points[lo + 1 : hi]
        if norm < 1e-12:
            d = np.linalg.norm(mid - a, axis=1)
        else:
            rel = mid - a
            d = np.abs(seg[0] * rel[:, 1] - seg[1] * rel[:, 0]) / norm
        i = int(np.argmax(d))
        if d[i] > epsilon:
            keep[lo + 1 + i] = True
            stack.append((lo, lo + 1 + i))
            stack.append((lo + 1 + i, hi))
    return np.flatnonzero(keep)


def rdp_touch_candidates(ball_track: np.ndarray, times: np.ndarray, epsilon_m: float = 0.8) -> np.ndarray:
    """Candidate touch times: interior vertices surviving RDP simplification."""
    kept = rdp_simplify(ball_track, epsilon_m)
    interior = kept[(kept > 0) & (kept < len(ball_track) - 1)]
    return np.asarray(times)[interior]


GAP = None  # alignment marker


def needleman_wunsch_align(seq_a, seq_b, match_fn, gap_penalty: float = -0.5):
    """Global alignment maximizing total score.

    Returns (pairs, score) where pairs is a list of (i, j) index pairs with
    None marking a gap.  Tie-break order: match/mismatch, then gap in
    sequence a (consume b), then gap in b (consume a).
    """
    na, nb = len(seq_a), len(seq_b)
    score = np.zeros((na + 1, nb + 1))
    score[1:, 0] = gap_penalty * np.arange(1, na + 1)
    score[0, 1:] = gap_penalty * np.arange(1, nb + 1)
    move = np.zeros((na + 1, nb + 1), dtype=np.int8)  # 0 diag, 1 gap-in-a, 2 gap-in-b
    move[1:, 0] = 2
    move[0, 1:] = 1
    for i in range(1, na + 1):
        for j in range(1, nb + 1):
            diag = score[i - 1, j - 1] + match_fn(seq_a[i - 1], seq_b[j - 1])
            gap_a = score[i, j - 1] + gap_penalty
            gap_b = score[i - 1, j] + gap_penalty
            best, mv = diag, 0
            if gap_a > best:
                best, mv = gap_a, 1
            if gap_b > best:
                best, mv = gap_b, 2
            score[i, j] = best
            move[i, j] = mv
    pairs = []
    i, j = na, nb
    while i > 0 or j > 0:
        mv = move[i, j]
        if mv == 0:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif mv == 1:
            pairs.append((GAP, j - 1))
            j -= 1
        else:
            pairs.append((i - 1, GAP))
            i -= 1
    pairs.reverse()
    return pairs, float(score[na, nb])


def insert_missed_touches(
    episode: Episode,
    candidates: np.ndarray,
    match_window_s: float = 0.4,
    match_score: float = 1.0,
    mismatch_score: float = -1.0,
    gap_penalty: float = -0.5,
    attribution_radius_m: float = 3.0,
) -> list[TouchRecord]:
    """Insert RDP candidates not aligned to any annotated touch.

    Alignment is a global NW over times; a candidate counts as matched only if
    its aligned touch is within the temporal window.  Unmatched candidates are
    attributed to the nearest player at that time (from the ball position) or
    dropped if none is within the attribution radius.
    """
    touches = sorted(episode.touches, key=lambda r: r.time_s)
    cand = np.sort(np.asarray(candidates, dtype=np.float64))
    if cand.size == 0:
        return touches
    if episode.ball is None:
        raise ValueError("episode has no ball track to attribute candidates")

    def match_fn(t_event, t_cand):
        return match_score if abs(t_event - t_cand) <= match_window_s else mismatch_score

    event_times = [r.time_s for r in touches]
    pairs, _ = needleman_wunsch_align(event_times, cand, match_fn, gap_penalty)
    matched_cand = {
        j for i, j in pairs
        if i is not None and j is not None and abs(event_times[i] - cand[j]) <= match_window_s
    }

    n_players_guess = int((episode.team_of < 2).sum())
    out = list(touches)
    for j, t in enumerate(cand):
        if j in matched_cand:
            continue
        frame = episode.step_of_time(t)
        ball_pos = episode.ball[frame]
        d = np.linalg.norm(episode.positions[frame, :n_players_guess] - ball_pos, axis=1)
        nearest = int(np.argmin(d))
        if d[nearest] > attribution_radius_m:
            logger.warning(
                "dropping touch candidate at %.2fs: nearest player %.1fm away", t, d[nearest]
            )
            continue
        out.append(TouchRecord(time_s=float(t), frame=frame, player=nearest))
    out.sort(key=lambda r: r.time_s)
    return out


def build_gold_path(episode: Episode, rules: RuleSet) -> np.ndarray:
    """Expand the touch list into one edge per frame.

    Between consecutive touches by u then v, steps in [t_u, t_v) carry (u,u)
    if v == u and (u,v) otherwise.  An out-of-play record through boundary o
    turns the preceding interval into the flight (u,o) and everything from the
    crossing on into the absorbing (o,o).
    """
    if not episode.touches:
        raise ValueError("episode has no touches")
    touches = sorted(episode.touches, key=lambda r: r.time_s)
    steps = [episode.step_of_time(r.time_s) for r in touches]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("touches collapse onto the same frame or are out of order")
    if steps[0] > 0:
        raise ValueError("first touch must be at or before the first frame")

    T = episode.n_frames
    path = np.empty(T, dtype=np.int64)
    for k, rec in enumerate(touches):
        start = steps[k]
        stop = steps[k + 1] if k + 1 < len(touches) else T
        if rec.kind == KIND_OUT:
            if not rules.is_outside(rec.player):
                raise ValueError("out_of_play record must name an outside node")
            path[start:T] = rules.encode(rec.player, rec.player)
            # rewrite the preceding flight to target the boundary
            if k > 0:
                path[steps[k - 1] : start] = rules.encode(touches[k - 1].player, rec.player)
            break
        u = rec.player
        if k + 1 < len(touches):
            v = touches[k + 1].player
            if touches[k + 1].kind == KIND_OUT:
                v = u  # provisional; rewritten above when the out record is reached
        else:
            v = u
        path[start:stop] = rules.encode(u, u if v == u else v)

    violations = rules.violation_mask(path)
    if violations.any():
        logger.warning(
            "gold path for episode %s contains %d illegal transitions",
            episode.episode_id, int(violations.sum()),
        )
    return path


def make_windows(n_steps: int, length: int = WINDOW_STEPS, stride: int = WINDOW_STRIDE) -> list[int]:
    """Start offsets of sliding windows; empty when the episode is too short."""
    if n_steps < length:
        return []
    return list(range(0, n_steps - length + 1, stride))
