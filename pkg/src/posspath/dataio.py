"""CSV interchange formats.

Tracking: (episode_id, frame, time_s, team, player_id, x_m, y_m), long format,
optionally with player_id == "ball" rows used only for label construction.
Touches: (episode_id, frame, time_s, player_id, kind); out-of-play rows name a
boundary (left/right/top/bottom) as player_id.  Gold paths: (episode_id, step,
sender_id, receiver_id).  Events: (episode_id, step, time_s, kind, actor_id,
target_id, x_m, y_m).  Coordinates: origin bottom-left, x in [0, pitch_length],
y in [0, pitch_width].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .labeling import KIND_OUT, Episode, TouchRecord
from .rules import OUTSIDE_NAMES, RuleSet, build_rule_set, outside_anchor_positions
from .windows import TEAM_AWAY, TEAM_HOME, TEAM_OUTSIDE


class DataError(ValueError):
    pass


@dataclass
class Roster:
    """Canonical node ordering: home ids, away ids, then the outside names."""

    home: list
    away: list
    n_out: int = 4

    @property
    def n_players(self) -> int:
        return len(self.home) + len(self.away)

    @property
    def n_total(self) -> int:
        return self.n_players + self.n_out

    def node_names(self) -> list:
        return list(self.home) + list(self.away) + list(OUTSIDE_NAMES[: self.n_out])

    def node_index(self, player_id: str) -> int:
        try:
            return self.node_names().index(str(player_id))
        except ValueError:
            raise DataError(f"unknown player_id {player_id!r}") from None

    def team_of(self) -> np.ndarray:
        return np.concatenate(
            [
                np.full(len(self.home), TEAM_HOME),
                np.full(len(self.away), TEAM_AWAY),
                np.full(self.n_out, TEAM_OUTSIDE),
            ]
        )

    def rules(self) -> RuleSet:
        return build_rule_set(self.n_players, self.n_out, n_home=len(self.home))


def roster_from_tracking(df: pd.DataFrame, n_out: int = 4) -> Roster:
    players = df[df["player_id"] != "ball"]
    home = sorted(players.loc[players["team"] == "home", "player_id"].astype(str).unique())
    away = sorted(players.loc[players["team"] == "away", "player_id"].astype(str).unique())
    if not home and not away:
        raise DataError("tracking data contains no players")
    return Roster(home=home, away=away, n_out=n_out)


def load_tracking_csv(
    path,
    n_out: int = 4,
    pitch_length: float = 105.0,
    pitch_width: float = 68.0,
) -> tuple[dict[str, Episode], Roster]:
    path = Path(path)
    df = pd.read_csv(path, dtype={"player_id": str, "episode_id": str})
    required = {"episode_id", "frame", "time_s", "team", "player_id", "x_m", "y_m"}
    missing = required - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    roster = roster_from_tracking(df, n_out=n_out)
    names = roster.node_names()
    anchors = outside_anchor_positions(pitch_length, pitch_width)[:n_out]

    episodes = {}
    for eid, g in df.groupby("episode_id", sort=True):
        frames = np.sort(g["frame"].unique())
        times = g.drop_duplicates("frame").set_index("frame").loc[frames, "time_s"].to_numpy()
        if len(times) > 1:
            dts = np.diff(times)
            if np.ptp(dts) > 1e-6:
                raise DataError(f"{path}: episode {eid} has irregular frame times")
            rate = 1.0 / dts[0]
        else:
            rate = 25.0
        n_frames = len(frames)
        pos = np.full((n_frames, roster.n_total, 2), np.nan)
        pos[:, roster.n_players :, :] = anchors
        frame_pos = {f: i for i, f in enumerate(frames)}
        ball = None
        for pid, sub in g.groupby("player_id"):
            idx = sub["frame"].map(frame_pos).to_numpy()
            xy = sub[["x_m", "y_m"]].to_numpy()
            if pid == "ball":
                ball = np.full((n_frames, 2), np.nan)
                ball[idx] = xy
            else:
                pos[idx, names.index(str(pid))] = xy
        if np.isnan(pos[:, : roster.n_players]).any():
            bad = int(np.isnan(pos[:, : roster.n_players, 0]).sum())
            raise DataError(f"{path}: episode {eid} has {bad} missing player samples")
        episodes[str(eid)] = Episode(
            episode_id=str(eid),
            rate_hz=float(rate),
            positions=pos,
            team_of=roster.team_of(),
            ball=ball,
            start_time_s=float(times[0]),
            pitch_length=pitch_length,
            pitch_width=pitch_width,
        )
    return episodes, roster


def load_touches_csv(path, roster: Roster, episodes: dict[str, Episode]) -> None:
    """Attach touch records to already-loaded episodes (in place)."""
    path = Path(path)
    df = pd.read_csv(path, dtype={"player_id": str, "episode_id": str})
    required = {"episode_id", "frame", "time_s", "player_id", "kind"}
    missing = required - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    for row in df.itertuples(index=False):
        eid = str(row.episode_id)
        if eid not in episodes:
            raise DataError(f"{path}: touch references unknown episode {eid}")
        episodes[eid].touches.append(
            TouchRecord(
                time_s=float(row.time_s),
                frame=int(row.frame),
                player=roster.node_index(row.player_id),
                kind=str(row.kind),
            )
        )
    for ep in episodes.values():
        ep.touches.sort(key=lambda r: r.time_s)


def _ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_tracking_csv(path, episodes: list[Episode], roster: Roster) -> None:
    names = roster.node_names()
    team_name = {TEAM_HOME: "home", TEAM_AWAY: "away"}
    rows = []
    for ep in episodes:
        times = ep.frame_times()
        for f in range(ep.n_frames):
            for p in range(roster.n_players):
                rows.append(
                    (
                        ep.episode_id,
                        f,
                        round(times[f], 6),
                        team_name[int(ep.team_of[p])],
                        names[p],
                        round(ep.positions[f, p, 0], 4),
                        round(ep.positions[f, p, 1], 4),
                    )
                )
            if ep.ball is not None:
                rows.append(
                    (ep.episode_id, f, round(times[f], 6), "ball", "ball",
                     round(ep.ball[f, 0], 4), round(ep.ball[f, 1], 4))
                )
    pd.DataFrame(
        rows, columns=["episode_id", "frame", "time_s", "team", "player_id", "x_m", "y_m"]
    ).to_csv(_ensure_parent(path), index=False)


def write_touches_csv(path, episodes: list[Episode], roster: Roster) -> None:
    names = roster.node_names()
    rows = [
        (ep.episode_id, r.frame, round(r.time_s, 6), names[r.player], r.kind)
        for ep in episodes
        for r in ep.touches
    ]
    pd.DataFrame(rows, columns=["episode_id", "frame", "time_s", "player_id", "kind"]).to_csv(
        _ensure_parent(path), index=False
    )


def write_gold_csv(path, paths: dict[str, np.ndarray], roster: Roster) -> None:
    names = roster.node_names()
    n_total = roster.n_total
    rows = []
    for eid in sorted(paths):
        for step, edge in enumerate(np.asarray(paths[eid])):
            s, r = divmod(int(edge), n_total)
            rows.append((eid, step, names[s], names[r]))
    pd.DataFrame(rows, columns=["episode_id", "step", "sender_id", "receiver_id"]).to_csv(
        _ensure_parent(path), index=False
    )


def load_gold_csv(path, roster: Roster) -> dict[str, np.ndarray]:
    df = pd.read_csv(path, dtype={"episode_id": str, "sender_id": str, "receiver_id": str})
    n_total = roster.n_total
    names = {name: i for i, name in enumerate(roster.node_names())}
    out = {}
    for eid, g in df.groupby("episode_id", sort=True):
        g = g.sort_values("step")
        if not np.array_equal(g["step"].to_numpy(), np.arange(len(g))):
            raise DataError(f"{path}: episode {eid} has non-contiguous steps")
        out[str(eid)] = (
            g["sender_id"].map(names).to_numpy() * n_total + g["receiver_id"].map(names).to_numpy()
        ).astype(np.int64)
    return out


def write_events_csv(path, events_by_episode: dict[str, list], roster: Roster) -> None:
    names = roster.node_names()
    rows = []
    for eid in sorted(events_by_episode):
        for ev in events_by_episode[eid]:
            rows.append(
                (
                    eid,
                    ev.step,
                    round(ev.time_s, 6),
                    ev.kind,
                    names[ev.actor],
                    names[ev.target] if ev.target is not None else "",
                    round(ev.x, 4),
                    round(ev.y, 4),
                )
            )
    pd.DataFrame(
        rows,
        columns=["episode_id", "step", "time_s", "kind", "actor_id", "target_id", "x_m", "y_m"],
    ).to_csv(_ensure_parent(path), index=False)


def load_events_csv(path, roster: Roster) -> dict[str, list]:
    from .events import EventRecord

    df = pd.read_csv(
        path, dtype={"episode_id": str, "actor_id": str, "target_id": str}, keep_default_na=False
    )
    out: dict[str, list] = {}
    for row in df.itertuples(index=False):
        out.setdefault(str(row.episode_id), []).append(
            EventRecord(
                step=int(row.step),
                time_s=float(row.time_s),
                kind=str(row.kind),
                actor=roster.node_index(row.actor_id),
                target=roster.node_index(row.target_id) if row.target_id else None,
                x=float(row.x_m),
                y=float(row.y_m),
            )
        )
    return out
