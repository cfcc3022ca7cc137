"""Downstream match analytics from possession paths and events.

Frame-level possession is attributed to the sender's team (the team that
played the ball keeps attribution through the flight); steps whose sender is
an outside node are excluded from the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import jensenshannon

from .events import KICK, EventRecord
from .rules import RuleSet
from .windows import TEAM_HOME


@dataclass
class PossessionStats:
    home_share: float
    attributed_steps: int
    out_of_play_steps: int
    timeline_minutes: np.ndarray  # bin start, minutes
    timeline_share: np.ndarray  # home share per bin (NaN where no attributed steps)


def possession_stats(
    path: np.ndarray,
    rules: RuleSet,
    team_of: np.ndarray,
    rate_hz: float,
    bin_minutes: float = 5.0,
) -> PossessionStats:
    path = np.asarray(path, dtype=np.int64)
    senders = path // rules.n_total
    sender_team = np.asarray(team_of)[senders]
    attributed = sender_team < 2
    home = attributed & (sender_team == TEAM_HOME)
    share = float(home.sum() / attributed.sum()) if attributed.any() else float("nan")

    steps_per_bin = int(round(bin_minutes * 60.0 * rate_hz))
    n_bins = int(np.ceil(path.shape[0] / steps_per_bin))
    shares = np.full(n_bins, np.nan)
    for b in range(n_bins):
        sl = slice(b * steps_per_bin, (b + 1) * steps_per_bin)
        att = attributed[sl]
        if att.any():
            shares[b] = home[sl].sum() / att.sum()
    return PossessionStats(
        home_share=share,
        attributed_steps=int(attributed.sum()),
        out_of_play_steps=int((~attributed).sum()),
        timeline_minutes=np.arange(n_bins) * bin_minutes,
        timeline_share=shares,
    )


@dataclass
class HeatGrid:
    density: np.ndarray  # (nx, ny), cell mass, sums to 1
    x_centers: np.ndarray
    y_centers: np.ndarray
    bandwidth_m: float


def kde_heatmap(
    points: np.ndarray,
    bandwidth_m: float = 4.0,
    pitch_length: float = 105.0,
    pitch_width: float = 68.0,
    cell_m: float = 1.0,
    scott: bool = False,
) -> HeatGrid:
    """Isotropic Gaussian KDE on a regular pitch grid, normalized to unit mass."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        raise ValueError("kde_heatmap needs at least one event location")
    if scott:
        n = points.shape[0]
        spread = points.std(axis=0).mean()
        bandwidth_m = max(float(spread) * n ** (-1.0 / 6.0), 1e-3)
    xc = np.arange(cell_m / 2, pitch_length, cell_m)
    yc = np.arange(cell_m / 2, pitch_width, cell_m)
    dx2 = (xc[:, None] - points[None, :, 0]) ** 2  # (nx, n)
    dy2 = (yc[:, None] - points[None, :, 1]) ** 2  # (ny, n)
    h2 = 2.0 * bandwidth_m**2
    gx = np.exp(-dx2 / h2)
    gy = np.exp(-dy2 / h2)
    density = gx @ gy.T  # (nx, ny), sum over events of separable kernels
    density /= density.sum()
    return HeatGrid(density=density, x_centers=xc, y_centers=yc, bandwidth_m=bandwidth_m)


@dataclass
class PassNetwork:
    team: int
    node_ids: list  # merged node keys, sorted
    positions: dict  # node -> mean (x, y) over that player's events
    edges: dict  # (passer, receiver) -> completed-pass count

    def out_degrees(self) -> dict:
        deg = {n: 0.0 for n in self.node_ids}
        for (p, _r), w in self.edges.items():
            deg[p] += w
        return deg


def build_pass_network(
    events: list[EventRecord],
    team_of: np.ndarray,
    team: int,
    substitution_map: dict | None = None,
) -> PassNetwork:
    """Completed passes of one team.

    A kick by a team player counts as completed iff the next touch event is by
    a same-team player who equals the kick's intended receiver.  Substituted
    player pairs are merged through ``substitution_map`` (player -> canonical).
    """
    sub = substitution_map or {}

    def canon(p):
        return sub.get(p, p)

    events = sorted(events, key=lambda e: e.time_s)
    team_of = np.asarray(team_of)
    edges: dict = {}
    pos_acc: dict = {}
    for k, ev in enumerate(events):
        if team_of[ev.actor] == team:
            pos_acc.setdefault(canon(ev.actor), []).append((ev.x, ev.y))
        if ev.kind != KICK or team_of[ev.actor] != team:
            continue
        if ev.target is None or ev.target >= team_of.shape[0] or team_of[ev.target] != team:
            continue
        nxt = events[k + 1] if k + 1 < len(events) else None
        if nxt is None or nxt.actor != ev.target or team_of[nxt.actor] != team:
            continue
        key = (canon(ev.actor), canon(ev.target))
        edges[key] = edges.get(key, 0) + 1
    nodes = sorted(pos_acc)
    positions = {n: tuple(np.mean(pos_acc[n], axis=0)) for n in nodes}
    return PassNetwork(team=team, node_ids=nodes, positions=positions, edges=edges)


@dataclass
class NetworkSimilarity:
    degree_mae: float
    weight_mae: float
    jsd: float
    spectral: float

    def as_dict(self) -> dict:
        return {
            "degree_mae": self.degree_mae,
            "weight_mae": self.weight_mae,
            "jsd": self.jsd,
            "spectral": self.spectral,
        }


def _weight_matrix(net: PassNetwork, nodes: list) -> np.ndarray:
    idx = {n: i for i, n in enumerate(nodes)}
    w = np.zeros((len(nodes), len(nodes)))
    for (p, r), c in net.edges.items():
        w[idx[p], idx[r]] = c
    return w


def network_similarity(a: PassNetwork, b: PassNetwork) -> NetworkSimilarity:
    """MAE over weighted out-degrees and edge weights, JSD (base 2) between the
    edge-weight distributions, and the L2 distance between sorted eigenvalues
    of the symmetric-normalized Laplacians divided by the node count."""
    nodes = sorted(set(a.node_ids) | set(b.node_ids))
    if not nodes:
        raise ValueError("cannot compare empty pass networks")
    wa = _weight_matrix(a, nodes)
    wb = _weight_matrix(b, nodes)

    degree_mae = float(np.abs(wa.sum(axis=1) - wb.sum(axis=1)).mean())
    union_edges = (wa != 0) | (wb != 0)
    weight_mae = float(np.abs(wa - wb)[union_edges].mean()) if union_edges.any() else 0.0

    pa, pb = wa.ravel(), wb.ravel()
    if pa.sum() == 0 or pb.sum() == 0:
        jsd = 0.0 if pa.sum() == pb.sum() else 1.0
    else:
        jsd = float(jensenshannon(pa / pa.sum(), pb / pb.sum(), base=2) ** 2)

    def laplacian_spectrum(w):
        sym = w + w.T
        deg = sym.sum(axis=1)
        with np.errstate(divide="ignore"):
            dinv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
        lap = np.diag((deg > 0).astype(float)) - dinv[:, None] * sym * dinv[None, :]
        return np.sort(np.linalg.eigvalsh(lap))

    spectral = float(
        np.linalg.norm(laplacian_spectrum(wa) - laplacian_spectrum(wb)) / len(nodes)
    )
    return NetworkSimilarity(degree_mae=degree_mae, weight_mae=weight_mae, jsd=jsd, spectral=spectral)
