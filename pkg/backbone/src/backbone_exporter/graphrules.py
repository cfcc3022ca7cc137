"""Possession-edge indexing and the allowed-transition list.

Independent implementation of the exchange-format contract: nodes are ordered
home players, away players, then the outside boundaries (left, right, top,
bottom); an edge (sender, receiver) has id sender * n_total + receiver; the
allowed transitions are the union of identity, kick, reception and out-of-play
moves, sorted ascending by (prev, next).  The CRC-32 of that list written into
score-file headers lets the decoding engine verify both sides agree on the
layout.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

OUTSIDE_NAMES = ("left", "right", "top", "bottom")


@dataclass
class EdgeRules:
    n_players: int
    n_out: int
    allowed_prev: np.ndarray
    allowed_next: np.ndarray
    allowed_matrix: np.ndarray

    @property
    def n_total(self) -> int:
        return self.n_players + self.n_out

    @property
    def n_edges(self) -> int:
        return self.n_total * self.n_total

    @property
    def n_allowed(self) -> int:
        return int(self.allowed_prev.shape[0])

    def encode(self, sender: int, receiver: int) -> int:
        return sender * self.n_total + receiver

    def checksum(self) -> int:
        pairs = np.stack([self.allowed_prev, self.allowed_next], axis=1).astype("<u4")
        return zlib.crc32(pairs.tobytes()) & 0xFFFFFFFF

    def violation_mask(self, path: np.ndarray) -> np.ndarray:
        path = np.asarray(path)
        if path.shape[0] < 2:
            return np.zeros(0, dtype=bool)
        return ~self.allowed_matrix[path[:-1], path[1:]]


def build_edge_rules(n_players: int, n_out: int = 4) -> EdgeRules:
    n_total = n_players + n_out
    n_edges = n_total * n_total
    pairs = set()
    for e in range(n_edges):
        pairs.add((e, e))  # identity
    for u in range(n_players):
        for x in range(n_total):
            if x != u:
                pairs.add((u * n_total + u, u * n_total + x))  # kick
    for u in range(n_players):
        for v in range(n_players):
            if u == v:
                continue
            for w in range(n_total):
                pairs.add((u * n_total + v, v * n_total + w))  # reception
    for u in range(n_players):
        for o in range(n_players, n_total):
            pairs.add((u * n_total + o, o * n_total + o))  # out of play
    ordered = sorted(pairs)
    prev = np.array([p for p, _ in ordered], dtype=np.int64)
    nxt = np.array([q for _, q in ordered], dtype=np.int64)
    matrix = np.zeros((n_edges, n_edges), dtype=bool)
    matrix[prev, nxt] = True
    return EdgeRules(
        n_players=n_players, n_out=n_out,
        allowed_prev=prev, allowed_next=nxt, allowed_matrix=matrix,
    )
