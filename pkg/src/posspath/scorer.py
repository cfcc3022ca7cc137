"""Trainable linear feature scorer producing ScoreTables.

Emission scores are linear in the pair features; dynamic transition scores are
linear in [phi(prev, t-1); phi(next, t); identity-indicator]; static mode keeps
a free |E| x |E| parameter matrix.  Two auxiliary linear heads produce
per-node sender/receiver logits for the coarse cross-entropy loss.

Training minimizes

    L = L_crf + lambda1 * (sender CE + receiver CE) + lambda2 * emission CE

with analytic gradients (the model is linear, so the chain rule is a couple of
einsums) and an Adam-style update.  All losses are sums over time steps.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import (
    F_NODE,
    F_PAIR,
    F_TRANS,
    NODE_FEATURES,
    PAIR_FEATURES,
    FeatureNormalizer,
    FeatureTables,
    extract_features,
)
from .lattice import DEFAULT_MASK_VALUE, ScoreTable, nll_and_gradients
from .rules import RuleSet
from .windows import TrackingWindow

logger = logging.getLogger(__name__)


@dataclass
class ScorerModel:
    n_players: int
    n_out: int
    trans_mode: str = "dynamic"  # none | dynamic | static
    masked: bool = True
    mask_value: float = DEFAULT_MASK_VALUE
    lambda1: float = 1.0
    lambda2: float = 1.0
    w_emit: np.ndarray = None
    w_trans: np.ndarray = None  # length F_TRANS = [prev block; next block; identity]
    static_trans: np.ndarray = None  # (E, E), static mode only
    w_sender: np.ndarray = None
    w_receiver: np.ndarray = None
    normalizer: FeatureNormalizer = None

    def __post_init__(self):
        n_total = self.n_players + self.n_out
        if self.w_emit is None:
            self.w_emit = np.zeros(F_PAIR)
        if self.w_trans is None:
            self.w_trans = np.zeros(F_TRANS)
        if self.static_trans is None and self.trans_mode == "static":
            self.static_trans = np.zeros((n_total * n_total, n_total * n_total))
        if self.w_sender is None:
            self.w_sender = np.zeros(F_NODE)
        if self.w_receiver is None:
            self.w_receiver = np.zeros(F_NODE)
        if self.normalizer is None:
            self.normalizer = FeatureNormalizer.identity()
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")

    def parameters(self) -> dict[str, np.ndarray]:
        params = {
            "w_emit": self.w_emit,
            "w_sender": self.w_sender,
            "w_receiver": self.w_receiver,
        }
        if self.trans_mode == "dynamic":
            params["w_trans"] = self.w_trans
        elif self.trans_mode == "static":
            params["static_trans"] = self.static_trans
        return params


def _split_w_trans(w: np.ndarray):
    return w[:F_PAIR], w[F_PAIR : 2 * F_PAIR], w[2 * F_PAIR]


def score_window(
    model: ScorerModel,
    window: TrackingWindow,
    rules: RuleSet,
    feats: FeatureTables | None = None,
) -> ScoreTable:
    if feats is None:
        feats = model.normalizer.apply(extract_features(window, rules))
    if feats.pair.shape[2] != model.w_emit.shape[0]:
        raise ValueError("pair feature dimension does not match model")
    emission = feats.pair @ model.w_emit  # (T, E)
    trans_dynamic = None
    trans_static = None
    if model.trans_mode == "dynamic":
        w_prev, w_next, w_id = _split_w_trans(model.w_trans)
        u = feats.pair @ w_prev  # (T, E) contribution of the previous edge
        q = feats.pair @ w_next
        ident = (rules.allowed_prev == rules.allowed_next).astype(np.float64)
        T = emission.shape[0]
        trans_dynamic = (
            u[: T - 1][:, rules.allowed_prev]
            + q[1:][:, rules.allowed_next]
            + w_id * ident[None, :]
        )
    elif model.trans_mode == "static":
        trans_static = model.static_trans
    return ScoreTable(
        emission=emission,
        trans_mode=model.trans_mode,
        trans_dynamic=trans_dynamic,
        trans_static=trans_static,
        masked=model.masked,
        mask_value=model.mask_value,
    )


def aux_logits(model: ScorerModel, feats: FeatureTables):
    """Sender and receiver logits per node per step."""
    return feats.node @ model.w_sender, feats.node @ model.w_receiver


def _softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def _ce_and_grad(logits: np.ndarray, targets: np.ndarray):
    """Summed cross-entropy over rows and its gradient w.r.t. the logits."""
    p = _softmax(logits)
    rows = np.arange(logits.shape[0])
    ce = -np.log(np.clip(p[rows, targets], 1e-300, None)).sum()
    g = p
    g[rows, targets] -= 1.0
    return ce, g


@dataclass
class WindowLoss:
    total: float
    crf: float
    coarse: float
    emit: float


def window_loss_and_grads(
    model: ScorerModel,
    window: TrackingWindow,
    gold: np.ndarray,
    rules: RuleSet,
    feats: FeatureTables | None = None,
    use_crf: bool = True,
) -> tuple[WindowLoss, dict[str, np.ndarray]]:
    if feats is None:
        feats = model.normalizer.apply(extract_features(window, rules))
    gold = np.asarray(gold, dtype=np.int64)
    table = score_window(model, window, rules, feats=feats)
    T = table.T

    grad_emission = np.zeros_like(table.emission)
    grads = {name: np.zeros_like(p) for name, p in model.parameters().items()}
    crf_loss = 0.0

    if use_crf:
        crf_loss, g = nll_and_gradients(table, rules, gold)
        grad_emission += g.emission
        if model.trans_mode == "dynamic" and g.trans_dynamic is not None:
            ident = (rules.allowed_prev == rules.allowed_next).astype(np.float64)
            w_a = np.zeros(F_PAIR)
            w_b = np.zeros(F_PAIR)
            w_id = 0.0
            for t in range(1, T):
                row = g.trans_dynamic[t - 1]
                c_prev = np.zeros(rules.n_edges)
                np.add.at(c_prev, rules.allowed_prev, row)
                c_next = np.zeros(rules.n_edges)
                np.add.at(c_next, rules.allowed_next, row)
                w_a += feats.pair[t - 1].T @ c_prev
                w_b += feats.pair[t].T @ c_next
                w_id += float(row @ ident)
            grads["w_trans"] += np.concatenate([w_a, w_b, [w_id]])
        elif model.trans_mode == "static" and g.trans_static is not None:
            grads["static_trans"] += g.trans_static

    emit_loss = 0.0
    if model.lambda2 > 0:
        emit_loss, g_emit = _ce_and_grad(table.emission.copy(), gold)
        grad_emission += model.lambda2 * g_emit

    grads["w_emit"] += np.einsum("tef,te->f", feats.pair, grad_emission)

    coarse_loss = 0.0
    if model.lambda1 > 0:
        senders, receivers = np.divmod(gold, rules.n_total)
        s_logits, r_logits = aux_logits(model, feats)
        ce_s, g_s = _ce_and_grad(s_logits, senders)
        ce_r, g_r = _ce_and_grad(r_logits, receivers)
        coarse_loss = ce_s + ce_r
        grads["w_sender"] += model.lambda1 * np.einsum("tnf,tn->f", feats.node, g_s)
        grads["w_receiver"] += model.lambda1 * np.einsum("tnf,tn->f", feats.node, g_r)

    total = crf_loss + model.lambda1 * coarse_loss + model.lambda2 * emit_loss
    return WindowLoss(total=total, crf=crf_loss, coarse=coarse_loss, emit=emit_loss), grads


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    objective: str = "crf"  # "crf" (full loss) or "ce" (auxiliary losses only)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1c = 1 - self.beta1**self.t
        b2c = 1 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def train(
    model: ScorerModel,
    dataset: list[tuple[TrackingWindow, np.ndarray]],
    rules: RuleSet,
    config: TrainConfig | None = None,
) -> tuple[ScorerModel, list[dict]]:
    """Train in place; returns the model and per-epoch loss records."""
    if not dataset:
        raise ValueError("empty training dataset")
    config = config or TrainConfig()
    use_crf = config.objective == "crf"

    raw_feats = [extract_features(w, rules) for w, _ in dataset]
    model.normalizer = FeatureNormalizer.fit(raw_feats)
    feats = [model.normalizer.apply(f) for f in raw_feats]

    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    history = []
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = np.zeros(3)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for i in batch:
                window, gold = dataset[i]
                loss, grads = window_loss_and_grads(
                    model, window, gold, rules, feats=feats[i], use_crf=use_crf
                )
                if not np.isfinite(loss.total):
                    raise RuntimeError(
                        f"training diverged: non-finite loss at epoch {epoch}, window "
                        f"{window.episode_id}/{window.window_id}"
                    )
                for k in acc:
                    acc[k] += grads[k] / len(batch)
                epoch_loss += [loss.crf, loss.coarse, loss.emit]
            opt.step(params, acc)
        record = {
            "epoch": epoch,
            "crf": epoch_loss[0] / n,
            "coarse": epoch_loss[1] / n,
            "emit": epoch_loss[2] / n,
            "total": (epoch_loss[0] + model.lambda1 * epoch_loss[1] + model.lambda2 * epoch_loss[2]) / n,
        }
        history.append(record)
        logger.info(
            "epoch %d: total %.4f (crf %.4f, coarse %.4f, emit %.4f)",
            epoch, record["total"], record["crf"], record["coarse"], record["emit"],
        )
    return model, history


def save_model(path, model: ScorerModel) -> None:
    doc = {
        "format": "posspath-scorer",
        "version": 1,
        "n_players": model.n_players,
        "n_out": model.n_out,
        "trans_mode": model.trans_mode,
        "masked": model.masked,
        "mask_value": model.mask_value,
        "lambda1": model.lambda1,
        "lambda2": model.lambda2,
        "pair_features": list(PAIR_FEATURES),
        "node_features": list(NODE_FEATURES),
        "w_emit": model.w_emit.tolist(),
        "w_trans": model.w_trans.tolist(),
        "w_sender": model.w_sender.tolist(),
        "w_receiver": model.w_receiver.tolist(),
        "static_trans": model.static_trans.tolist() if model.static_trans is not None else None,
        "normalizer": {
            "pair_mean": model.normalizer.pair_mean.tolist(),
            "pair_std": model.normalizer.pair_std.tolist(),
            "node_mean": model.normalizer.node_mean.tolist(),
            "node_std": model.normalizer.node_std.tolist(),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_model(path) -> ScorerModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "posspath-scorer":
        raise ValueError(f"{path}: not a scorer checkpoint")
    norm = doc["normalizer"]
    return ScorerModel(
        n_players=doc["n_players"],
        n_out=doc["n_out"],
        trans_mode=doc["trans_mode"],
        masked=doc["masked"],
        mask_value=doc["mask_value"],
        lambda1=doc["lambda1"],
        lambda2=doc["lambda2"],
        w_emit=np.asarray(doc["w_emit"]),
        w_trans=np.asarray(doc["w_trans"]),
        static_trans=np.asarray(doc["static_trans"]) if doc["static_trans"] is not None else None,
        w_sender=np.asarray(doc["w_sender"]),
        w_receiver=np.asarray(doc["w_receiver"]),
        normalizer=FeatureNormalizer(
            pair_mean=np.asarray(norm["pair_mean"]),
            pair_std=np.asarray(norm["pair_std"]),
            node_mean=np.asarray(norm["node_mean"]),
            node_std=np.asarray(norm["node_std"]),
        ),
    )
