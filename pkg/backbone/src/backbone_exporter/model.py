"""Set-attention possession backbone.

Two stacked socio-temporal encoders refine per-node embeddings from coarse to
fine.  Each encoder applies a social module — a partially permutation-
equivariant branch (one induced set attention block per node group: home,
away, outside) concatenated with a fully permutation-equivariant branch (a
single ISAB over all nodes) — followed by a temporal module of sinusoidal
positional encoding plus stacked set attention blocks over time.

Heads: an intermediate MLP projects first-encoder node embeddings to sender
and receiver logits (softmax across nodes); second-encoder node embeddings are
concatenated pairwise into directed-edge embeddings and projected to emission
logits over all |E| edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


class MAB(nn.Module):
    """Multihead attention block: LayerNorm residual attention + feed-forward."""

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, dim))

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x + self.attn(x, y, y, need_weights=False)[0])
        return self.norm2(h + self.ff(h))


class SAB(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.mab = MAB(dim, n_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mab(x, x)


class ISAB(nn.Module):
    """Induced set attention: attend a small learned seed set to the input,
    then attend the input back to the seeds (linear in the set size)."""

    def __init__(self, dim: int, n_heads: int, n_induced: int):
        super().__init__()
        self.induced = nn.Parameter(torch.randn(1, n_induced, dim) / math.sqrt(dim))
        self.mab1 = MAB(dim, n_heads)
        self.mab2 = MAB(dim, n_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.mab1(self.induced.expand(x.shape[0], -1, -1), x)
        return self.mab2(x, h)


class SocialModule(nn.Module):
    """[PPE(H); FPE(H)]: per-group ISABs concatenated with a global ISAB."""

    def __init__(self, dim: int, n_heads: int, n_induced: int):
        super().__init__()
        half = dim // 2
        self.group_proj = nn.ModuleList(nn.Linear(dim, half) for _ in range(3))
        self.group_isab = nn.ModuleList(ISAB(half, n_heads, n_induced) for _ in range(3))
        self.global_proj = nn.Linear(dim, half)
        self.global_isab = ISAB(half, n_heads, n_induced)

    def forward(self, x: torch.Tensor, groups: list[slice]) -> torch.Tensor:
        ppe = torch.empty(x.shape[0], x.shape[1], x.shape[2] // 2, dtype=x.dtype, device=x.device)
        for g, sl in enumerate(groups):
            if sl.stop > sl.start:
                ppe[:, sl] = self.group_isab[g](self.group_proj[g](x[:, sl]))
        fpe = self.global_isab(self.global_proj(x))
        return torch.cat([ppe, fpe], dim=-1)


class TemporalModule(nn.Module):
    """Sinusoidal positional encoding followed by stacked SABs over time."""

    def __init__(self, dim: int, n_heads: int, n_blocks: int = 2, max_len: int = 4096):
        super().__init__()
        self.blocks = nn.ModuleList(SAB(dim, n_heads) for _ in range(n_blocks))
        pe = torch.zeros(max_len, dim)
        pos = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
        div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
        pe[:, 0::2] = torch.sin(pos * div)
        pe[:, 1::2] = torch.cos(pos * div)
        self.register_buffer("pe", pe)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, T, dim)
        x = x + self.pe[: x.shape[1]].to(x.dtype)
        for block in self.blocks:
            x = block(x)
        return x


class EncoderBlock(nn.Module):
    def __init__(self, in_dim: int, dim: int, n_heads: int, n_induced: int):
        super().__init__()
        self.in_proj = nn.Linear(in_dim, dim)
        self.social = SocialModule(dim, n_heads, n_induced)
        self.temporal = TemporalModule(dim, n_heads)

    def forward(self, x: torch.Tensor, groups: list[slice]) -> torch.Tensor:
        # x: (T, N, in_dim); social mixes nodes per step, temporal mixes steps per node
        T, N, _ = x.shape
        h = self.social(self.in_proj(x), groups)  # (T, N, dim)
        h = self.temporal(h.transpose(0, 1))  # (N, T, dim)
        return h.transpose(0, 1)


@dataclass
class BackboneConfig:
    n_home: int
    n_away: int
    n_out: int = 4
    in_dim: int = 7
    dim: int = 64  # d: embedding width
    n_heads: int = 4
    n_induced: int = 2  # induced points per attention block
    seed: int = 0


class PossessionBackbone(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        torch.manual_seed(config.seed)
        self.config = config
        d = config.dim
        n_players = config.n_home + config.n_away
        self.groups = [
            slice(0, config.n_home),
            slice(config.n_home, n_players),
            slice(n_players, n_players + config.n_out),
        ]
        self.encoder1 = EncoderBlock(config.in_dim, d, config.n_heads, config.n_induced)
        self.encoder2 = EncoderBlock(d, d, config.n_heads, config.n_induced)
        self.mlp_coarse = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, 2))
        self.mlp_edge = nn.Sequential(nn.Linear(2 * d, d), nn.ReLU(), nn.Linear(d, d))
        self.mlp_emit = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, 1))

    def encode(self, x: torch.Tensor):
        """x: (T, N, in_dim) -> level-1/level-2 node embeddings, edge embeddings,
        emission logits (T, N*N), and sender/receiver logits (T, N)."""
        if x.dim() != 3 or x.shape[2] != self.config.in_dim:
            raise ValueError(
                f"expected (T, N, {self.config.in_dim}) input, got {tuple(x.shape)}"
            )
        h1 = self.encoder1(x, self.groups)
        h2 = self.encoder2(h1, self.groups)
        T, N, d = h2.shape

        coarse = self.mlp_coarse(h1)  # (T, N, 2)
        sender_logits, receiver_logits = coarse[..., 0], coarse[..., 1]

        send = h2.unsqueeze(2).expand(T, N, N, d)
        recv = h2.unsqueeze(1).expand(T, N, N, d)
        z = self.mlp_edge(torch.cat([send, recv], dim=-1)).reshape(T, N * N, d)
        emission = self.mlp_emit(z).squeeze(-1)  # (T, N*N)
        return h1, h2, z, emission, sender_logits, receiver_logits
