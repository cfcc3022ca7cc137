"""Hand-crafted feature extraction: geometry, symmetry, and shapes."""

import numpy as np
import pytest

from posspath.features import (
    F_NODE,
    F_PAIR,
    FeatureNormalizer,
    NODE_FEATURES,
    PAIR_FEATURES,
    extract_features,
)
from posspath.rules import build_rule_set
from posspath.windows import TEAM_AWAY, TEAM_HOME, finite_difference_velocities, make_window


def pf(name):
    return PAIR_FEATURES.index(name)


def nf(name):
    return NODE_FEATURES.index(name)


def still_window(player_pos, teams, T=3, rate_hz=5.0, n_out=0):
    pos = np.broadcast_to(np.asarray(player_pos, dtype=float), (T, len(teams), 2)).copy()
    return make_window(pos, np.asarray(teams), rate_hz, n_out=n_out)


def test_shapes():
    rules = build_rule_set(4, 4)
    w = still_window(np.zeros((4, 2)) + [[10, 10], [20, 20], [30, 30], [40, 40]],
                     [TEAM_HOME, TEAM_HOME, TEAM_AWAY, TEAM_AWAY], n_out=4)
    f = extract_features(w, rules)
    assert f.node.shape == (3, 8, F_NODE)
    assert f.pair.shape == (3, 64, F_PAIR)
    assert np.all(np.isfinite(f.node)) and np.all(np.isfinite(f.pair))


def test_pair_distance_ten_meters_both_directions():
    rules = build_rule_set(2, 0)
    w = still_window([[10.0, 30.0], [20.0, 30.0]], [TEAM_HOME, TEAM_AWAY])
    f = extract_features(w, rules)
    col = pf("pair_distance")
    assert f.pair[0, rules.encode_edge(0, 1) if hasattr(rules, "encode_edge") else 1, col] == pytest.approx(10.0)
    assert f.pair[0, 1, col] == pytest.approx(10.0)  # 0 -> 1
    assert f.pair[0, 2, col] == pytest.approx(10.0)  # 1 -> 0


def test_self_loop_distance_zero_and_flag():
    rules = build_rule_set(3, 0)
    w = still_window([[5, 5], [50, 5], [80, 60]], [TEAM_HOME, TEAM_AWAY, TEAM_AWAY])
    f = extract_features(w, rules)
    for u in range(3):
        e = u * 3 + u
        assert f.pair[0, e, pf("pair_distance")] == 0.0
        assert f.pair[0, e, pf("self_loop")] == 1.0
    assert f.pair[0, 1, pf("self_loop")] == 0.0


def test_same_team_and_receiver_outside_flags():
    rules = build_rule_set(2, 1)
    w = still_window([[10, 10], [20, 20]], [TEAM_HOME, TEAM_HOME], n_out=1)
    f = extract_features(w, rules)
    n = 3
    assert f.pair[0, 0 * n + 1, pf("same_team")] == 1.0
    assert f.pair[0, 0 * n + 2, pf("same_team")] == 0.0  # outside never same team
    assert f.pair[0, 0 * n + 2, pf("receiver_outside")] == 1.0
    assert f.pair[0, 0 * n + 1, pf("receiver_outside")] == 0.0


def mirror_x(positions, pitch_length=105.0):
    out = positions.copy()
    out[..., 0] = pitch_length - out[..., 0]
    return out


def test_x_mirror_symmetry():
    """Reflecting the pitch about its vertical midline keeps distances and
    speeds unchanged and negates x-signed features."""
    rng = np.random.default_rng(11)
    rules = build_rule_set(4, 0)
    T, n = 6, 4
    pos = rng.uniform([10, 10], [95, 58], size=(T, n, 2))
    teams = np.array([TEAM_HOME, TEAM_HOME, TEAM_AWAY, TEAM_AWAY])
    # mirroring also swaps attack direction, so flip team labels to keep the
    # goal-line features comparable
    w = make_window(pos, teams, 5.0, n_out=0)
    wm = make_window(mirror_x(pos), 1 - teams, 5.0, n_out=0)
    f, fm = extract_features(w, rules), extract_features(wm, rules)

    for name in ("pair_distance", "pair_distance_rate", "sender_speed",
                 "receiver_approach_cos", "receiver_approach_speed"):
        np.testing.assert_allclose(fm.pair[..., pf(name)], f.pair[..., pf(name)],
                                   atol=1e-9)
    np.testing.assert_allclose(fm.pair[..., pf("signed_dx")],
                               -f.pair[..., pf("signed_dx")], atol=1e-9)
    for name in ("speed", "accel", "dist_own_goal_line", "dist_opp_goal_line"):
        np.testing.assert_allclose(fm.node[..., nf(name)], f.node[..., nf(name)],
                                   atol=1e-9)


def test_receiver_approach_speed_sign():
    """A receiver running straight at the sender has positive closing speed."""
    rules = build_rule_set(2, 0)
    T, rate = 5, 5.0
    pos = np.zeros((T, 2, 2))
    pos[:, 0] = [0.0, 0.0]
    # player 1 starts 20 m away and closes at 3 m/s
    pos[:, 1, 0] = 20.0 - 3.0 * np.arange(T) / rate
    w = make_window(pos, np.array([TEAM_HOME, TEAM_HOME]), rate, n_out=0)
    f = extract_features(w, rules)
    e01 = 0 * 2 + 1
    assert f.pair[0, e01, pf("receiver_approach_speed")] == pytest.approx(3.0)
    assert f.pair[0, e01, pf("receiver_approach_cos")] == pytest.approx(1.0)
    # distance is shrinking
    assert f.pair[1, e01, pf("pair_distance_rate")] < 0


def test_node_opponent_and_teammate_distances():
    rules = build_rule_set(4, 0)
    w = still_window([[0, 0], [3, 0], [10, 0], [14, 0]],
                     [TEAM_HOME, TEAM_HOME, TEAM_AWAY, TEAM_AWAY])
    f = extract_features(w, rules)
    assert f.node[0, 0, nf("dist_nearest_teammate")] == pytest.approx(3.0)
    assert f.node[0, 0, nf("dist_nearest_opponent")] == pytest.approx(10.0)
    assert f.node[0, 2, nf("dist_nearest_teammate")] == pytest.approx(4.0)
    assert f.node[0, 2, nf("dist_nearest_opponent")] == pytest.approx(7.0)


def test_goal_line_distances():
    rules = build_rule_set(2, 0)
    w = still_window([[30.0, 34.0], [30.0, 10.0]], [TEAM_HOME, TEAM_AWAY])
    f = extract_features(w, rules)
    assert f.node[0, 0, nf("dist_own_goal_line")] == pytest.approx(30.0)
    assert f.node[0, 0, nf("dist_opp_goal_line")] == pytest.approx(75.0)
    assert f.node[0, 1, nf("dist_own_goal_line")] == pytest.approx(75.0)
    assert f.node[0, 1, nf("dist_opp_goal_line")] == pytest.approx(30.0)


def test_outside_nodes_zero_velocity_features():
    rules = build_rule_set(2, 4)
    w = still_window([[10, 10], [90, 60]], [TEAM_HOME, TEAM_AWAY], n_out=4)
    f = extract_features(w, rules)
    assert np.all(f.node[:, 2:, nf("speed")] == 0.0)
    assert np.all(f.node[:, 2:, nf("dist_nearest_opponent"):] == 0.0)


def test_forward_difference_velocities():
    pos = np.zeros((4, 1, 2))
    pos[:, 0, 0] = [0.0, 1.0, 3.0, 6.0]
    vel = finite_difference_velocities(pos, 5.0)
    np.testing.assert_allclose(vel[:, 0, 0], [5.0, 10.0, 15.0, 15.0])
    np.testing.assert_allclose(vel[:, 0, 1], 0.0)


def test_normalizer_round_trip_and_identity():
    rng = np.random.default_rng(3)
    rules = build_rule_set(3, 0)
    windows = [
        make_window(rng.uniform(0, 100, size=(5, 3, 2)),
                    np.array([TEAM_HOME, TEAM_AWAY, TEAM_AWAY]), 5.0, n_out=0)
        for _ in range(4)
    ]
    tables = [extract_features(w, rules) for w in windows]
    norm = FeatureNormalizer.fit(tables)
    stacked = np.concatenate([norm.apply(t).pair.reshape(-1, F_PAIR) for t in tables])
    np.testing.assert_allclose(stacked.mean(axis=0), 0.0, atol=1e-9)
    live = stacked.std(axis=0) > 1e-9
    np.testing.assert_allclose(stacked.std(axis=0)[live], 1.0, atol=1e-9)

    ident = FeatureNormalizer.identity()
    same = ident.apply(tables[0])
    np.testing.assert_array_equal(same.pair, tables[0].pair)


def test_node_count_mismatch_rejected():
    rules = build_rule_set(3, 4)
    w = still_window([[0, 0], [1, 1]], [TEAM_HOME, TEAM_AWAY], n_out=4)
    with pytest.raises(ValueError, match="nodes"):
        extract_features(w, rules)


def test_nan_positions_rejected():
    rules = build_rule_set(2, 0)
    pos = np.zeros((3, 2, 2))
    pos[1, 0, 0] = np.nan
    w = make_window(pos, np.array([TEAM_HOME, TEAM_AWAY]), 5.0, n_out=0)
    with pytest.raises(ValueError, match="positions"):
        extract_features(w, rules)
