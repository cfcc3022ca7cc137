"""Load tracking + gold-path CSVs into per-episode training tensors.

Tracking CSV columns: episode_id, frame, time_s, team, player_id, x_m, y_m
(long format; rows with player_id == "ball" are ignored here).  Gold CSV
columns: episode_id, step, sender_id, receiver_id, one row per step at the
working rate.  Node order is sorted home ids, sorted away ids, then the four
outside boundaries; tracking is decimated so its length matches the gold path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .graphrules import OUTSIDE_NAMES, EdgeRules, build_edge_rules

PITCH_LENGTH = 105.0
PITCH_WIDTH = 68.0
OUTSIDE_XY = np.array(
    [[0.0, PITCH_WIDTH / 2], [PITCH_LENGTH, PITCH_WIDTH / 2],
     [PITCH_LENGTH / 2, PITCH_WIDTH], [PITCH_LENGTH / 2, 0.0]]
)

F_IN = 7  # x, y, vx, vy, one-hot group (home, away, outside)


@dataclass
class EpisodeTensors:
    episode_id: str
    features: np.ndarray  # (T, n_total, F_IN)
    gold: np.ndarray  # (T,) edge ids

    @property
    def T(self) -> int:
        return self.features.shape[0]


@dataclass
class Dataset:
    episodes: list
    node_names: list
    rules: EdgeRules

    def windows(self, length: int = 50, stride: int = 5):
        out = []
        for ep in self.episodes:
            for start in range(0, ep.T - length + 1, stride):
                out.append(
                    EpisodeTensors(
                        episode_id=f"{ep.episode_id}w{start}",
                        features=ep.features[start : start + length],
                        gold=ep.gold[start : start + length],
                    )
                )
        return out


def _node_features(positions: np.ndarray, rate_hz: float, n_players: int, n_home: int) -> np.ndarray:
    T, N, _ = positions.shape
    vel = np.empty_like(positions)
    if T > 1:
        vel[:-1] = np.diff(positions, axis=0) * rate_hz
        vel[-1] = vel[-2]
    else:
        vel[:] = 0.0
    feats = np.zeros((T, N, F_IN))
    feats[:, :, 0] = positions[:, :, 0] / PITCH_LENGTH
    feats[:, :, 1] = positions[:, :, 1] / PITCH_WIDTH
    feats[:, :, 2] = vel[:, :, 0] / 10.0
    feats[:, :, 3] = vel[:, :, 1] / 10.0
    feats[:, :n_home, 4] = 1.0
    feats[:, n_home:n_players, 5] = 1.0
    feats[:, n_players:, 6] = 1.0
    return feats


def load_dataset(tracking_csv, gold_csv, n_out: int = 4) -> Dataset:
    df = pd.read_csv(tracking_csv, dtype={"player_id": str, "episode_id": str})
    players = df[df["player_id"] != "ball"]
    home = sorted(players.loc[players["team"] == "home", "player_id"].unique())
    away = sorted(players.loc[players["team"] == "away", "player_id"].unique())
    node_names = home + away + list(OUTSIDE_NAMES[:n_out])
    name_idx = {n: i for i, n in enumerate(node_names)}
    n_players = len(home) + len(away)
    n_total = n_players + n_out
    rules = build_edge_rules(n_players, n_out)

    gold_df = pd.read_csv(gold_csv, dtype={"episode_id": str, "sender_id": str, "receiver_id": str})
    golds = {}
    for eid, g in gold_df.groupby("episode_id"):
        g = g.sort_values("step")
        golds[str(eid)] = (
            g["sender_id"].map(name_idx).to_numpy() * n_total
            + g["receiver_id"].map(name_idx).to_numpy()
        ).astype(np.int64)

    episodes = []
    for eid, g in players.groupby("episode_id", sort=True):
        eid = str(eid)
        if eid not in golds:
            raise ValueError(f"episode {eid} has tracking but no gold path")
        frames = np.sort(g["frame"].unique())
        times = g.drop_duplicates("frame").set_index("frame").loc[frames, "time_s"].to_numpy()
        raw_rate = 1.0 / np.diff(times).mean() if len(times) > 1 else 25.0
        pos = np.full((len(frames), n_total, 2), np.nan)
        pos[:, n_players:] = OUTSIDE_XY[:n_out]
        frame_pos = {f: i for i, f in enumerate(frames)}
        for pid, sub in g.groupby("player_id"):
            idx = sub["frame"].map(frame_pos).to_numpy()
            pos[idx, name_idx[str(pid)]] = sub[["x_m", "y_m"]].to_numpy()
        if np.isnan(pos).any():
            raise ValueError(f"episode {eid} has missing tracking samples")

        T_gold = golds[eid].shape[0]
        k = len(frames) // T_gold
        if k < 1 or len(frames[::k]) < T_gold:
            raise ValueError(f"episode {eid}: cannot align {len(frames)} frames to {T_gold} steps")
        pos = pos[::k][:T_gold]
        work_rate = raw_rate / k
        episodes.append(
            EpisodeTensors(
                episode_id=eid,
                features=_node_features(pos, work_rate, n_players, len(home)),
                gold=golds[eid],
            )
        )
    return Dataset(episodes=episodes, node_names=node_names, rules=rules)
