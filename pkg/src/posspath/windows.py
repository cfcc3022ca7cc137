"""Fixed-rate tracking windows over the extended node set."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rules import outside_anchor_positions

TEAM_HOME = 0
TEAM_AWAY = 1
TEAM_OUTSIDE = 2


@dataclass
class TrackingWindow:
    """Positions of all nodes (players + fixed outside anchors) over T steps."""

    positions: np.ndarray  # (T, n_total, 2) meters
    velocities: np.ndarray  # (T, n_total, 2) m/s
    team_of: np.ndarray  # (n_total,) in {TEAM_HOME, TEAM_AWAY, TEAM_OUTSIDE}
    rate_hz: float
    episode_id: str = ""
    window_id: int = 0
    start_step: int = 0
    pitch_length: float = 105.0
    pitch_width: float = 68.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        self.team_of = np.asarray(self.team_of, dtype=np.int64)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have the same shape")
        if self.positions.shape[1] != self.team_of.shape[0]:
            raise ValueError("team_of length must match node count")

    @property
    def T(self) -> int:
        return self.positions.shape[0]

    @property
    def n_total(self) -> int:
        return self.positions.shape[1]

    @property
    def start_time_s(self) -> float:
        return self.start_step / self.rate_hz

    def time_of_step(self, step: int) -> float:
        return (self.start_step + step) / self.rate_hz


def finite_difference_velocities(positions: np.ndarray, rate_hz: float) -> np.ndarray:
    """Forward-difference velocities (backward at the last frame).

    Forward differences keep each frame's kinematics aligned with the motion
    regime that begins at that frame, so features change exactly at touch
    frames instead of one frame early.
    """
    vel = np.empty_like(positions, dtype=np.float64)
    vel[:-1] = np.diff(positions, axis=0) * rate_hz
    vel[-1] = vel[-2]
    return vel


def make_window(
    player_positions: np.ndarray,
    team_of_players: np.ndarray,
    rate_hz: float,
    n_out: int = 4,
    pitch_length: float = 105.0,
    pitch_width: float = 68.0,
    **kwargs,
) -> TrackingWindow:
    """Append fixed outside anchors to player positions and build a window."""
    T, n_players, _ = player_positions.shape
    anchors = outside_anchor_positions(pitch_length, pitch_width)[:n_out]
    pos = np.concatenate(
        [player_positions, np.broadcast_to(anchors, (T, n_out, 2))], axis=1
    )
    vel = finite_difference_velocities(player_positions, rate_hz)
    vel = np.concatenate([vel, np.zeros((T, n_out, 2))], axis=1)
    team = np.concatenate([np.asarray(team_of_players), np.full(n_out, TEAM_OUTSIDE)])
    return TrackingWindow(
        positions=pos,
        velocities=vel,
        team_of=team,
        rate_hz=rate_hz,
        pitch_length=pitch_length,
        pitch_width=pitch_width,
        **kwargs,
    )
