"""Deterministic synthetic match generator.

Produces tracking episodes plus touch scripts with known gold paths, so the
whole pipeline can be exercised without real match data.  Player behavior is
deliberately informative for the hand-crafted features: the holder dribbles
slowly while the nearest opponent presses them, and a pass receiver runs to
meet the incoming ball.  A synthetic ball track (holder-attached, linear in
flight) is included for label-construction paths only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labeling import KIND_OUT, KIND_TOUCH, Episode, TouchRecord, build_gold_path, make_windows, resample
from .rules import RuleSet, build_rule_set, outside_anchor_positions
from .windows import TEAM_AWAY, TEAM_HOME, TEAM_OUTSIDE, TrackingWindow, finite_difference_velocities


@dataclass
class SynthConfig:
    seed: int = 0
    n_per_team: int = 3
    n_out: int = 4
    episode_s: float = 60.0
    rate_hz: float = 25.0
    hold_mean_s: float = 2.5
    hold_min_s: float = 0.8
    flight_speed: float = 16.0
    min_flight_s: float = 0.45
    dribble_speed: float = 2.0
    cruise_speed: float = 4.0
    press_speed: float = 1.5
    receiver_speed: float = 6.0
    noise_sigma: float = 0.0
    p_out: float = 0.03
    p_intercept: float = 0.10
    p_one_touch: float = 0.15
    pitch_length: float = 105.0
    pitch_width: float = 68.0
    label_hz: float = 5.0  # touch times snap to this grid so gold boundaries are crisp

    @property
    def n_players(self) -> int:
        return 2 * self.n_per_team


def _formation_anchors(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.n_per_team
    anchors = np.empty((2 * n, 2))
    xs = np.linspace(0.25, 0.75, n) * config.pitch_length
    for team in (0, 1):
        ys = (0.3 if team == 0 else 0.7) * config.pitch_width
        anchors[team * n : (team + 1) * n, 0] = xs
        anchors[team * n : (team + 1) * n, 1] = ys + rng.uniform(-6, 6, size=n)
    return anchors


def generate_episode(config: SynthConfig, rng: np.random.Generator, episode_id: str) -> Episode:
    dt = 1.0 / config.rate_hz
    n_frames = int(round(config.episode_s * config.rate_hz))
    n = config.n_players
    team_players = np.repeat([TEAM_HOME, TEAM_AWAY], config.n_per_team)

    anchors = _formation_anchors(config, rng)
    pos = anchors + rng.uniform(-4, 4, size=(n, 2))
    vel = np.zeros((n, 2))
    waypoints = pos + rng.uniform(-8, 8, size=(n, 2))
    out_anchors = outside_anchor_positions(config.pitch_length, config.pitch_width)[: config.n_out]

    positions = np.empty((n_frames, n, 2))
    ball = np.empty((n_frames, 2))
    touches: list[TouchRecord] = []

    grid = 1.0 / config.label_hz

    def snap_up(duration: float) -> float:
        return np.ceil(duration / grid - 1e-9) * grid

    holder = int(rng.integers(n))
    touches.append(TouchRecord(time_s=0.0, frame=0, player=holder))
    mode = "hold"
    hold_until = snap_up(max(config.hold_min_s, rng.exponential(config.hold_mean_s)))
    presser = _nearest_opponent(pos, holder, team_players)
    flight = None  # (sender, receiver or ("out", o), t_start, t_end)
    done_at = None
    dribble_dir = None

    def pick_receiver(u):
        mates = [p for p in range(n) if p != u and team_players[p] == team_players[u]]
        opps = [p for p in range(n) if team_players[p] != team_players[u]]
        pool = opps if (not mates or rng.random() < config.p_intercept) else mates
        return int(pool[rng.integers(len(pool))])

    def start_flight(u, t_now):
        nonlocal mode, flight, holder, presser
        if rng.random() < config.p_out:
            o = int(rng.integers(config.n_out))
            target_pos = out_anchors[o]
            dur = max(config.min_flight_s, float(np.linalg.norm(target_pos - pos[u]) / config.flight_speed))
            flight = (u, ("out", o), t_now, t_now + snap_up(dur))
        else:
            v = pick_receiver(u)
            dur = max(config.min_flight_s, float(np.linalg.norm(pos[v] - pos[u]) / config.flight_speed))
            flight = (u, v, t_now, t_now + snap_up(dur))
        mode = "flight"
        presser = None

    for f in range(n_frames):
        t = f * dt
        # script transitions
        if mode == "hold" and t >= hold_until - 1e-9:
            touches.append(TouchRecord(time_s=t, frame=f, player=holder))
            start_flight(holder, t)
        elif mode == "flight" and t >= flight[3] - 1e-9:
            sender, target, t0, t1 = flight
            if isinstance(target, tuple):
                o = target[1]
                touches.append(
                    TouchRecord(time_s=t, frame=f, player=config.n_players + o, kind=KIND_OUT)
                )
                mode = "dead"
                done_at = f + int(round(1.0 * config.rate_hz))
            else:
                holder = target
                touches.append(TouchRecord(time_s=t, frame=f, player=holder))
                if rng.random() < config.p_one_touch and t + 1.0 < config.episode_s:
                    start_flight(holder, t)
                else:
                    mode = "hold"
                    hold_until = t + snap_up(max(config.hold_min_s, rng.exponential(config.hold_mean_s)))
                    presser = _nearest_opponent(pos, holder, team_players)

        # movement
        for i in range(n):
            if mode == "hold" and i == holder:
                # persistent dribble heading so the holder moves at a steady,
                # recognisable speed instead of jittering in place
                if dribble_dir is None or rng.random() < dt / 1.0:
                    dribble_dir = _unit(rng.normal(size=2))
                target_v = dribble_dir * config.dribble_speed
            elif mode == "flight" and i == flight[0]:
                target_v = np.zeros(2)  # the kicker plants until the ball arrives
            elif mode == "flight" and not isinstance(flight[1], tuple) and i == flight[1]:
                target_v = _unit(pos[flight[0]] - pos[i]) * config.receiver_speed
            elif mode == "hold" and i == presser:
                gap = pos[holder] - pos[i]
                d = np.linalg.norm(gap)
                target_v = _unit(gap) * (config.press_speed if d > 3.0 else 0.2)
            else:
                if np.linalg.norm(waypoints[i] - pos[i]) < 1.0:
                    waypoints[i] = anchors[i] + rng.uniform(-10, 10, size=2)
                target_v = _unit(waypoints[i] - pos[i]) * config.cruise_speed
            vel[i] += (target_v - vel[i]) * min(1.0, dt / 0.3)
        speed = np.linalg.norm(vel, axis=1)
        cap = speed > 9.0
        vel[cap] *= (9.0 / speed[cap])[:, None]
        pos += vel * dt
        pos[:, 0] = np.clip(pos[:, 0], 0.5, config.pitch_length - 0.5)
        pos[:, 1] = np.clip(pos[:, 1], 0.5, config.pitch_width - 0.5)
        positions[f] = pos

        if mode == "flight":
            sender, target, t0, t1 = flight
            end = out_anchors[target[1]] if isinstance(target, tuple) else pos[target]
            start = positions[int(round(t0 / dt)) if t0 > 0 else 0, sender]
            ball[f] = start + (end - start) * np.clip((t - t0) / (t1 - t0), 0, 1)
        elif mode == "dead":
            ball[f] = ball[f - 1]
        else:
            ball[f] = pos[holder]

        if done_at is not None and f >= done_at:
            positions = positions[: f + 1]
            ball = ball[: f + 1]
            break

    n_frames = positions.shape[0]
    if config.noise_sigma > 0:
        positions = positions + rng.normal(scale=config.noise_sigma, size=positions.shape)

    full_pos = np.concatenate(
        [positions, np.broadcast_to(out_anchors, (n_frames, config.n_out, 2))], axis=1
    )
    team_of = np.concatenate([team_players, np.full(config.n_out, TEAM_OUTSIDE)])
    return Episode(
        episode_id=episode_id,
        rate_hz=config.rate_hz,
        positions=full_pos,
        team_of=team_of,
        touches=touches,
        ball=ball,
        pitch_length=config.pitch_length,
        pitch_width=config.pitch_width,
    )


def _unit(v: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(v)
    return v / d if d > 1e-9 else np.zeros_like(v)


def _nearest_opponent(pos, holder, team_players):
    opps = np.flatnonzero(team_players != team_players[holder])
    d = np.linalg.norm(pos[opps] - pos[holder], axis=1)
    return int(opps[np.argmin(d)])


@dataclass
class SynthMatch:
    episodes: list  # Episodes at the native rate
    rules: RuleSet


def generate_match(config: SynthConfig, n_episodes: int = 1, match_id: str = "m0") -> SynthMatch:
    rng = np.random.default_rng(config.seed)
    episodes = [
        generate_episode(config, rng, f"{match_id}e{k}") for k in range(n_episodes)
    ]
    rules = build_rule_set(config.n_players, config.n_out, n_home=config.n_per_team)
    return SynthMatch(episodes=episodes, rules=rules)


def episode_to_windows(
    episode: Episode,
    rules: RuleSet,
    gold: np.ndarray,
    length: int = 50,
    stride: int = 5,
) -> list[tuple[TrackingWindow, np.ndarray]]:
    """Slice an episode (already at the working rate) into training windows."""
    vel = finite_difference_velocities(episode.positions, episode.rate_hz)
    out = []
    for w, start in enumerate(make_windows(episode.n_frames, length, stride)):
        window = TrackingWindow(
            positions=episode.positions[start : start + length],
            velocities=vel[start : start + length],
            team_of=episode.team_of,
            rate_hz=episode.rate_hz,
            episode_id=episode.episode_id,
            window_id=w,
            start_step=start,
            pitch_length=episode.pitch_length,
            pitch_width=episode.pitch_width,
        )
        out.append((window, gold[start : start + length]))
    return out


def make_dataset(
    config: SynthConfig,
    n_matches: int = 1,
    to_hz: float = 5.0,
    window_length: int = 50,
    window_stride: int = 5,
):
    """Episodes resampled to the working rate, with gold paths and windows."""
    rules = build_rule_set(config.n_players, config.n_out, n_home=config.n_per_team)
    episodes, golds, windows = [], [], []
    for m in range(n_matches):
        cfg = SynthConfig(**{**config.__dict__, "seed": config.seed + 1000 * m})
        match = generate_match(cfg, match_id=f"m{m}")
        for ep in match.episodes:
            ep5 = resample(ep, config.rate_hz, to_hz)
            gold = build_gold_path(ep5, rules)
            episodes.append(ep5)
            golds.append(gold)
            windows.extend(episode_to_windows(ep5, rules, gold, window_length, window_stride))
    return rules, episodes, golds, windows
