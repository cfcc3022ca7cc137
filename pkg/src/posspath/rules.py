"""Possession-state graph: node roles, edge indexing and the allowed-transition system.

Nodes are ordered canonically: home players first, then away players, then the
four outside nodes in (left, right, top, bottom) order.  An edge (sender,
receiver) is a possession state; a self-loop means control, a directed edge
means the ball is in flight.  The allowed-transition relation is the union of
four disjoint subsets:

  identity    (u,v) -> (u,v)                         state continues
  kick        (u,u) -> (u,v)   u player, v != u      holder releases the ball
  reception   (u,v) -> (v,w)   u,v players, u != v   receiver controls or one-touches
  out         (u,o) -> (o,o)   u player, o outside   ball leaves the pitch

Outside self-loops are absorbing: their only successor is themselves.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

OUTSIDE_NAMES = ("left", "right", "top", "bottom")

ROLE_HOME = "home-player"
ROLE_AWAY = "away-player"
ROLE_OUTSIDE = "outside"


@dataclass(frozen=True)
class NodeId:
    index: int
    role: str


@dataclass(frozen=True)
class EdgeId:
    id: int
    sender: int
    receiver: int


def encode_edge(sender: int, receiver: int, n_total: int) -> int:
    if not (0 <= sender < n_total and 0 <= receiver < n_total):
        raise ValueError(f"node index out of range: ({sender}, {receiver}) with n_total={n_total}")
    return sender * n_total + receiver


def decode_edge(edge_id: int, n_total: int) -> tuple[int, int]:
    if not (0 <= edge_id < n_total * n_total):
        raise ValueError(f"edge id out of range: {edge_id} with n_total={n_total}")
    return divmod(edge_id, n_total)


@dataclass
class RuleSet:
    """Immutable transition-constraint system over the extended node set.

    All index arrays are precomputed once so that lattice kernels can run over
    the sparse allowed-transition layout without per-call bookkeeping.
    """

    n_players: int
    n_out: int
    n_home: int
    n_away: int
    # allowed (prev, next) edge-id pairs, sorted ascending by (prev, next)
    allowed_prev: np.ndarray = field(repr=False)
    allowed_next: np.ndarray = field(repr=False)
    # boolean |E| x |E| relation and pair -> position in allowed_list (-1 if absent)
    allowed_matrix: np.ndarray = field(repr=False)
    pair_index: np.ndarray = field(repr=False)
    # permutation of allowed_list sorted by (next, prev) plus group starts per next
    by_next_order: np.ndarray = field(repr=False)
    by_next_starts: np.ndarray = field(repr=False)
    subset_sizes: dict = field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return self.n_players + self.n_out

    @property
    def n_edges(self) -> int:
        return self.n_total * self.n_total

    @property
    def n_allowed(self) -> int:
        return int(self.allowed_prev.shape[0])

    def node_role(self, index: int) -> str:
        if index < self.n_home:
            return ROLE_HOME
        if index < self.n_players:
            return ROLE_AWAY
        return ROLE_OUTSIDE

    def is_player(self, index: int) -> bool:
        return index < self.n_players

    def is_outside(self, index: int) -> bool:
        return index >= self.n_players

    def encode(self, sender: int, receiver: int) -> int:
        return encode_edge(sender, receiver, self.n_total)

    def decode(self, edge_id: int) -> tuple[int, int]:
        return decode_edge(edge_id, self.n_total)

    def is_allowed(self, prev_edge: int, next_edge: int) -> bool:
        return bool(self.allowed_matrix[prev_edge, next_edge])

    def predecessors(self, edge_id: int) -> np.ndarray:
        """Allowed previous edges of ``edge_id``, ascending."""
        start = self.by_next_starts[edge_id]
        stop = self.by_next_starts[edge_id + 1]
        return self.allowed_prev[self.by_next_order[start:stop]]

    def successors(self, edge_id: int) -> np.ndarray:
        """Allowed next edges of ``edge_id``, ascending (allowed_list is prev-major)."""
        lo = np.searchsorted(self.allowed_prev, edge_id, side="left")
        hi = np.searchsorted(self.allowed_prev, edge_id, side="right")
        return self.allowed_next[lo:hi]

    def checksum(self) -> int:
        """CRC-32 of the canonical allowed_list; identifies the sparse layout."""
        pairs = np.stack([self.allowed_prev, self.allowed_next], axis=1).astype("<u4")
        return zlib.crc32(pairs.tobytes()) & 0xFFFFFFFF

    def violation_mask(self, path: np.ndarray) -> np.ndarray:
        """Boolean array over consecutive pairs of ``path``: True where illegal."""
        path = np.asarray(path)
        if path.shape[0] < 2:
            return np.zeros(0, dtype=bool)
        return ~self.allowed_matrix[path[:-1], path[1:]]


def build_rule_set(n_players: int, n_out: int = 4, n_home: int | None = None) -> RuleSet:
    """Construct the allowed-transition system for ``n_players`` + ``n_out`` nodes.

    The four subsets are generated directly from their definitions (not by
    testing all ordered pairs), then merged and sorted by (prev, next).
    """
    if n_players < 1:
        raise ValueError("n_players must be >= 1 (no valid possession states otherwise)")
    if n_out < 0:
        raise ValueError("n_out must be >= 0")
    if n_home is None:
        n_home = (n_players + 1) // 2
    if not (0 <= n_home <= n_players):
        raise ValueError("n_home out of range")

    n_total = n_players + n_out
    n_edges = n_total * n_total
    players = np.arange(n_players)
    everyone = np.arange(n_total)
    outside = np.arange(n_players, n_total)

    def eid(s, r):
        return s * n_total + r

    # identity: every edge to itself
    all_edges = np.arange(n_edges)
    id_prev, id_next = all_edges, all_edges

    # kick: (u,u) -> (u,v), u player, v != u
    u = np.repeat(players, n_total)
    v = np.tile(everyone, n_players)
    keep = u != v
    kick_prev = eid(u[keep], u[keep])
    kick_next = eid(u[keep], v[keep])

    # reception: (u,v) -> (v,w), u,v players, u != v, w anyone
    u = np.repeat(players, n_players * n_total)
    v = np.tile(np.repeat(players, n_total), n_players)
    w = np.tile(everyone, n_players * n_players)
    keep = u != v
    rec_prev = eid(u[keep], v[keep])
    rec_next = eid(v[keep], w[keep])

    # out: (u,o) -> (o,o), u player, o outside
    u = np.repeat(players, n_out)
    o = np.tile(outside, n_players)
    out_prev = eid(u, o)
    out_next = eid(o, o)

    prev = np.concatenate([id_prev, kick_prev, rec_prev, out_prev]).astype(np.int64)
    nxt = np.concatenate([id_next, kick_next, rec_next, out_next]).astype(np.int64)

    order = np.lexsort((nxt, prev))
    prev, nxt = prev[order], nxt[order]

    allowed_matrix = np.zeros((n_edges, n_edges), dtype=bool)
    allowed_matrix[prev, nxt] = True
    pair_index = np.full((n_edges, n_edges), -1, dtype=np.int64)
    pair_index[prev, nxt] = np.arange(prev.shape[0])

    by_next_order = np.lexsort((prev, nxt)).astype(np.int64)
    nxt_sorted = nxt[by_next_order]
    # every edge has at least one predecessor (its identity transition), so the
    # grouped layout covers all edge ids contiguously
    starts = np.searchsorted(nxt_sorted, np.arange(n_edges + 1)).astype(np.int64)

    return RuleSet(
        n_players=n_players,
        n_out=n_out,
        n_home=n_home,
        n_away=n_players - n_home,
        allowed_prev=prev,
        allowed_next=nxt,
        allowed_matrix=allowed_matrix,
        pair_index=pair_index,
        by_next_order=by_next_order,
        by_next_starts=starts,
        subset_sizes={
            "identity": int(id_prev.shape[0]),
            "kick": int(kick_prev.shape[0]),
            "reception": int(rec_prev.shape[0]),
            "out": int(out_prev.shape[0]),
        },
    )


def is_allowed(rules: RuleSet, prev_edge: int, next_edge: int) -> bool:
    return rules.is_allowed(prev_edge, next_edge)


def outside_anchor_positions(pitch_length: float = 105.0, pitch_width: float = 68.0) -> np.ndarray:
    """Fixed coordinates of the four outside nodes: boundary-line midpoints."""
    return np.array(
        [
            [0.0, pitch_width / 2.0],  # left
            [pitch_length, pitch_width / 2.0],  # right
            [pitch_length / 2.0, pitch_width],  # top
            [pitch_length / 2.0, 0.0],  # bottom
        ]
    )
