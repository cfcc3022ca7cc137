"""Hand-crafted node and edge features computed from a tracking window.

These stand in for the learned edge embeddings of a neural backbone: cheap,
deterministic quantities that make possession states separable.  Node features
of outside nodes are zeroed except where noted; pair features are defined for
every directed edge including self-loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rules import RuleSet
from .windows import TEAM_AWAY, TEAM_HOME, TrackingWindow

NODE_FEATURES = (
    "speed",
    "accel",
    "dist_nearest_opponent",
    "dist_nearest_teammate",
    "dist_own_goal_line",
    "dist_opp_goal_line",
)

PAIR_FEATURES = (
    "pair_distance",
    "pair_distance_rate",
    "receiver_approach_cos",
    "sender_speed",
    "same_team",
    "self_loop",
    "receiver_outside",
    "signed_dx",
    "receiver_approach_speed",
    "sender_press_dist",
    # node-feature blocks of the two endpoints, so the emission can reason
    # about who plausibly holds or receives without a learned embedding
    *(f"sender_{name}" for name in NODE_FEATURES),
    *(f"receiver_{name}" for name in NODE_FEATURES),
)

F_NODE = len(NODE_FEATURES)
F_PAIR = len(PAIR_FEATURES)
# transition feature vector: prev-edge pair features at t-1, next-edge pair
# features at t, plus the identity-transition indicator
F_TRANS = 2 * F_PAIR + 1


@dataclass
class FeatureTables:
    node: np.ndarray  # (T, n_total, F_NODE)
    pair: np.ndarray  # (T, |E|, F_PAIR)


def extract_features(window: TrackingWindow, rules: RuleSet) -> FeatureTables:
    if window.n_total != rules.n_total:
        raise ValueError(
            f"window has {window.n_total} nodes, rules expect {rules.n_total}"
        )
    pos = window.positions
    vel = window.velocities
    if not np.all(np.isfinite(pos)):
        raise ValueError("NaN or infinite positions in tracking window")
    T, N, _ = pos.shape
    team = window.team_of

    speed = np.linalg.norm(vel, axis=2)
    accel = np.linalg.norm(np.gradient(vel, 1.0 / window.rate_hz, axis=0), axis=2)

    diff = pos[:, :, None, :] - pos[:, None, :, :]  # (T, N, N, 2)
    dist = np.linalg.norm(diff, axis=3)  # (T, sender, receiver)

    node = np.zeros((T, N, F_NODE))
    node[:, :, 0] = speed
    node[:, :, 1] = accel
    is_home = team == TEAM_HOME
    is_away = team == TEAM_AWAY
    is_player = is_home | is_away
    big = 1e9
    for t in range(T):
        d = dist[t] + np.where(np.eye(N, dtype=bool), big, 0.0)
        for mask_self, mask_other, col in (
            (is_home, is_away, 2),
            (is_away, is_home, 2),
            (is_home, is_home, 3),
            (is_away, is_away, 3),
        ):
            if mask_self.any() and mask_other.any():
                sub = d[np.ix_(mask_self, mask_other)]
                node[t, mask_self, col] = sub.min(axis=1)
    # goal lines: home defends x=0, away defends x=pitch_length
    x = pos[:, :, 0]
    node[:, is_home, 4] = x[:, is_home]
    node[:, is_home, 5] = window.pitch_length - x[:, is_home]
    node[:, is_away, 4] = window.pitch_length - x[:, is_away]
    node[:, is_away, 5] = x[:, is_away]
    node[:, ~is_player, 2:] = 0.0

    # pair features over all N*N directed edges, sender-major
    d_flat = dist.reshape(T, N * N)
    ddist = np.gradient(d_flat, 1.0 / window.rate_hz, axis=0)

    with np.errstate(invalid="ignore", divide="ignore"):
        direction = diff / dist[:, :, :, None]  # sender -> receiver... sign below
    direction = np.nan_to_num(direction)
    # diff is pos[sender] - pos[receiver]; flip to sender->receiver direction
    direction = -direction
    v_recv = vel[:, None, :, :]  # broadcast over senders
    recv_speed = speed[:, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        # positive when the receiver moves toward the sender
        cos = (-direction * v_recv).sum(axis=3) / recv_speed
    cos = np.nan_to_num(cos).reshape(T, N * N)

    sender_speed = np.repeat(speed, N, axis=1)
    same_team = (is_player[:, None] & is_player[None, :] & (team[:, None] == team[None, :]))
    self_loop = np.eye(N, dtype=bool)
    recv_out = np.broadcast_to(~is_player[None, :], (N, N))
    signed_dx = (pos[:, None, :, 0] - pos[:, :, None, 0]).reshape(T, N * N)

    pair = np.zeros((T, N * N, F_PAIR))
    pair[:, :, 0] = d_flat
    pair[:, :, 1] = ddist
    pair[:, :, 2] = cos
    pair[:, :, 3] = sender_speed
    pair[:, :, 4] = np.broadcast_to(same_team.reshape(1, -1), (T, N * N))
    pair[:, :, 5] = np.broadcast_to(self_loop.reshape(1, -1), (T, N * N))
    pair[:, :, 6] = np.broadcast_to(recv_out.reshape(1, -1), (T, N * N))
    pair[:, :, 7] = signed_dx
    # closing speed of the receiver toward the sender, in m/s (positive when
    # the receiver runs at the sender); complements the unit-normalized cosine
    pair[:, :, 8] = (-direction * v_recv).sum(axis=3).reshape(T, N * N)
    # how tightly the sender is pressed by the nearest opponent
    pair[:, :, 9] = np.repeat(node[:, :, 2], N, axis=1)
    pair[:, :, 10 : 10 + F_NODE] = np.repeat(node, N, axis=1)
    pair[:, :, 10 + F_NODE :] = np.tile(node, (1, N, 1))
    return FeatureTables(node=node, pair=pair)


@dataclass
class FeatureNormalizer:
    pair_mean: np.ndarray
    pair_std: np.ndarray
    node_mean: np.ndarray
    node_std: np.ndarray

    def apply(self, feats: FeatureTables) -> FeatureTables:
        return FeatureTables(
            node=(feats.node - self.node_mean) / self.node_std,
            pair=(feats.pair - self.pair_mean) / self.pair_std,
        )

    @staticmethod
    def identity() -> "FeatureNormalizer":
        return FeatureNormalizer(
            pair_mean=np.zeros(F_PAIR),
            pair_std=np.ones(F_PAIR),
            node_mean=np.zeros(F_NODE),
            node_std=np.ones(F_NODE),
        )

    @staticmethod
    def fit(tables: list[FeatureTables]) -> "FeatureNormalizer":
        pair = np.concatenate([t.pair.reshape(-1, F_PAIR) for t in tables])
        node = np.concatenate([t.node.reshape(-1, F_NODE) for t in tables])
        pstd = pair.std(axis=0)
        nstd = node.std(axis=0)
        return FeatureNormalizer(
            pair_mean=pair.mean(axis=0),
            pair_std=np.where(pstd > 1e-9, pstd, 1.0),
            node_mean=node.mean(axis=0),
            node_std=np.where(nstd > 1e-9, nstd, 1.0),
        )
