"""Command-line pipeline: synth, prepare, train, decode, evaluate, report, matrix.

A run directory accumulates stages:
    config.yaml   echoed configuration
    manifest.json dataset counts from prepare
    data/         tracking/touch CSVs (synth) and prepared artifacts
    checkpoints/  trained model + loss history
    decodes/      decoded paths (and optional exported score files)
    events/       predicted and gold event CSVs
    metrics/      metric reports
    analytics/    possession, heatmaps, pass networks, relaxed recall

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import yaml

from . import analytics as an
from . import dataio
from .dataio import DataError, Roster
from .events import extract_events
from .evaluation import edge_metrics, match_events, relaxed_recall_curve
from .labeling import build_gold_path, resample
from .lattice import ScoreTable, greedy_decode, viterbi_decode
from .scorefile import ScoreFileError, load_score_table, save_score_table
from .scorer import ScorerModel, TrainConfig, load_model, save_model, score_window, train
from .synth import SynthConfig, episode_to_windows, generate_match
from .windows import TrackingWindow, finite_difference_velocities

logger = logging.getLogger("posspath")

DECODERS = ("argmax", "greedy", "gcd", "vcd", "viterbi")
TRANSITION_MODES = ("dynamic", "static", "none")

DEFAULT_CONFIG = {
    "seed": 0,
    "rates": {"raw_hz": 25.0, "working_hz": 5.0},
    "window": {"length": 50, "stride": 5},
    "paths": {"tracking": None, "touches": None},
    "synth": {"matches": 1, "episodes_per_match": 4, "n_per_team": 3, "episode_s": 60.0},
    "model": {
        "transition": "dynamic",
        "masked": True,
        "mask_value": -10000.0,
        "lambda1": 1.0,
        "lambda2": 1.0,
    },
    "train": {"epochs": 40, "lr": 0.1, "batch_size": 32, "objective": "crf"},
    "decode": {"decoder": "viterbi", "scores_dir": None, "export_scores": False},
    "evaluate": {
        "dt_max_s": 1.0,
        "relaxed_dt_s": [0.2, 0.5, 1.0, 2.0],
        "relaxed_dx_m": [1.0, 2.0, 5.0, 10.0],
    },
    "report": {"heatmap_cell_m": 2.0, "heatmap_bandwidth_m": 4.0, "merge_map": {}},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, seed_override=None) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        user = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    cfg = _merge(DEFAULT_CONFIG, user)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if cfg["decode"]["decoder"] not in DECODERS:
        raise ConfigError(f"decoder must be one of {DECODERS}")
    if cfg["model"]["transition"] not in TRANSITION_MODES:
        raise ConfigError(f"model.transition must be one of {TRANSITION_MODES}")
    if cfg["train"]["objective"] not in ("crf", "ce"):
        raise ConfigError("train.objective must be 'crf' or 'ce'")
    return cfg


def _echo_config(cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))


def _json_dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- stages


def cmd_synth(cfg: dict, out: Path) -> None:
    s = cfg["synth"]
    synth_cfg = SynthConfig(
        seed=int(cfg["seed"]),
        n_per_team=int(s["n_per_team"]),
        episode_s=float(s["episode_s"]),
        rate_hz=float(cfg["rates"]["raw_hz"]),
    )
    episodes = []
    for m in range(int(s["matches"])):
        match_cfg = SynthConfig(**{**synth_cfg.__dict__, "seed": synth_cfg.seed + 1000 * m})
        match = generate_match(match_cfg, n_episodes=int(s["episodes_per_match"]), match_id=f"m{m}")
        episodes.extend(match.episodes)
    n = synth_cfg.n_per_team
    roster = Roster(home=[f"H{i+1}" for i in range(n)], away=[f"A{i+1}" for i in range(n)])
    data = out / "data"
    data.mkdir(parents=True, exist_ok=True)
    dataio.write_tracking_csv(data / "tracking.csv", episodes, roster)
    dataio.write_touches_csv(data / "touches.csv", episodes, roster)
    logger.info("synthesized %d episodes -> %s", len(episodes), data)


def _load_prepared(cfg: dict, out: Path):
    """Episodes at the working rate, with gold paths, roster and rules."""
    tracking = cfg["paths"]["tracking"] or out / "data" / "tracking.csv"
    touches = cfg["paths"]["touches"] or out / "data" / "touches.csv"
    for p in (tracking, touches):
        if not Path(p).exists():
            raise DataError(f"missing input file: {p} (run synth or set paths.*)")
    episodes, roster = dataio.load_tracking_csv(tracking)
    dataio.load_touches_csv(touches, roster, episodes)
    rules = roster.rules()
    raw_hz = float(cfg["rates"]["raw_hz"])
    work_hz = float(cfg["rates"]["working_hz"])
    prepared, golds = {}, {}
    for eid in sorted(episodes):
        ep = resample(episodes[eid], raw_hz, work_hz)
        prepared[eid] = ep
        golds[eid] = build_gold_path(ep, rules)
    return prepared, golds, roster, rules


def cmd_prepare(cfg: dict, out: Path) -> None:
    prepared, golds, roster, rules = _load_prepared(cfg, out)
    length = int(cfg["window"]["length"])
    stride = int(cfg["window"]["stride"])
    n_windows = 0
    n_frames = 0
    n_touches = 0
    for eid, ep in prepared.items():
        n_frames += ep.n_frames
        n_touches += len(ep.touches)
        n_windows += len(episode_to_windows(ep, rules, golds[eid], length, stride))
    if any(rules.violation_mask(g).any() for g in golds.values()):
        raise DataError("gold paths contain disallowed transitions")
    dataio.write_gold_csv(out / "data" / "gold.csv", golds, roster)
    manifest = {
        "episodes": len(prepared),
        "frames": n_frames,
        "touch_events": n_touches,
        "windows": n_windows,
        "working_hz": float(cfg["rates"]["working_hz"]),
        "window_length": length,
        "window_stride": stride,
        "players": roster.node_names()[: roster.n_players],
    }
    _json_dump(out / "manifest.json", manifest)
    logger.info("prepared %s", manifest)


def _training_windows(cfg: dict, out: Path):
    prepared, golds, roster, rules = _load_prepared(cfg, out)
    length = int(cfg["window"]["length"])
    stride = int(cfg["window"]["stride"])
    windows = []
    for eid in sorted(prepared):
        windows.extend(episode_to_windows(prepared[eid], rules, golds[eid], length, stride))
    return windows, prepared, golds, roster, rules


def cmd_train(cfg: dict, out: Path) -> None:
    windows, _, _, roster, rules = _training_windows(cfg, out)
    if not windows:
        raise DataError("no training windows; check window length against episode length")
    m = cfg["model"]
    model = ScorerModel(
        n_players=roster.n_players,
        n_out=roster.n_out,
        trans_mode=m["transition"],
        masked=bool(m["masked"]),
        mask_value=float(m["mask_value"]),
        lambda1=float(m["lambda1"]),
        lambda2=float(m["lambda2"]),
    )
    t = cfg["train"]
    model, history = train(
        model,
        windows,
        rules,
        TrainConfig(
            epochs=int(t["epochs"]),
            lr=float(t["lr"]),
            batch_size=int(t["batch_size"]),
            seed=int(cfg["seed"]),
            objective=t["objective"],
        ),
    )
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    save_model(ckpt / "model.json", model)
    _json_dump(ckpt / "history.json", history)
    logger.info("trained %d epochs, final loss %.4f", len(history), history[-1]["total"])


def _episode_window(ep) -> TrackingWindow:
    return TrackingWindow(
        positions=ep.positions,
        velocities=finite_difference_velocities(ep.positions, ep.rate_hz),
        team_of=ep.team_of,
        rate_hz=ep.rate_hz,
        episode_id=ep.episode_id,
        window_id=0,
        start_step=0,
        pitch_length=ep.pitch_length,
        pitch_width=ep.pitch_width,
    )


def _decode_table(table: ScoreTable, rules, decoder: str) -> np.ndarray:
    if decoder == "argmax":
        return np.argmax(table.emission, axis=1).astype(np.int64)
    if decoder in ("greedy", "gcd"):
        return greedy_decode(table, rules, constrained=True)
    if decoder == "vcd":
        vcd_table = ScoreTable(
            emission=table.emission, trans_mode="none", masked=True, mask_value=table.mask_value
        )
        return viterbi_decode(vcd_table, rules)[0]
    return viterbi_decode(table, rules)[0]


def _decode_one(args):
    eid, table, rules, decoder = args
    return eid, _decode_table(table, rules, decoder)


def cmd_decode(cfg: dict, out: Path, jobs: int = 1) -> None:
    prepared, golds, roster, rules = _load_prepared(cfg, out)
    d = cfg["decode"]
    scores_dir = d["scores_dir"]
    tables = {}
    if scores_dir:
        scores_dir = Path(scores_dir)
        for eid in sorted(prepared):
            f = scores_dir / f"{eid}.pcrf"
            if not f.exists():
                raise DataError(f"missing score file {f}")
            tables[eid], _ = load_score_table(f, rules)
            if tables[eid].T != prepared[eid].n_frames:
                raise DataError(f"{f}: {tables[eid].T} steps but episode has {prepared[eid].n_frames}")
    else:
        model_path = out / "checkpoints" / "model.json"
        if not model_path.exists():
            raise DataError(f"missing checkpoint {model_path} (run train first)")
        model = load_model(model_path)
        for eid in sorted(prepared):
            tables[eid] = score_window(model, _episode_window(prepared[eid]), rules)

    work = [(eid, tables[eid], rules, d["decoder"]) for eid in sorted(tables)]
    if jobs > 1:
        with Pool(jobs) as pool:
            results = pool.map(_decode_one, work)
    else:
        results = [_decode_one(w) for w in work]
    paths = dict(results)

    dataio.write_gold_csv(out / "decodes" / "paths.csv", paths, roster)
    if d["export_scores"] and not scores_dir:
        sdir = out / "decodes" / "scores"
        sdir.mkdir(parents=True, exist_ok=True)
        for eid in sorted(tables):
            save_score_table(sdir / f"{eid}.pcrf", tables[eid], rules)

    pred_events = {
        eid: extract_events(paths[eid], _episode_window(prepared[eid]), rules)
        for eid in sorted(paths)
    }
    gold_events = {
        eid: extract_events(golds[eid], _episode_window(prepared[eid]), rules)
        for eid in sorted(golds)
    }
    dataio.write_events_csv(out / "events" / "pred.csv", pred_events, roster)
    dataio.write_events_csv(out / "events" / "gold.csv", gold_events, roster)
    logger.info("decoded %d episodes with %s", len(paths), d["decoder"])


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"missing artifact {path} (run {hint} first)")
    return path


def cmd_evaluate(cfg: dict, out: Path) -> None:
    prepared, golds, roster, rules = _load_prepared(cfg, out)
    paths = dataio.load_gold_csv(_require(out / "decodes" / "paths.csv", "decode"), roster)
    pred_events = dataio.load_events_csv(_require(out / "events" / "pred.csv", "decode"), roster)
    gold_events = dataio.load_events_csv(out / "events" / "gold.csv", roster)

    # aggregate per episode so episode junctions are not counted as transitions
    steps = acc = sacc = racc = viol = 0.0
    for eid in sorted(paths):
        m = edge_metrics(paths[eid], golds[eid], rules)
        steps += m.n_steps
        acc += m.edge_acc * m.n_steps
        sacc += m.sender_acc * m.n_steps
        racc += m.receiver_acc * m.n_steps
        viol += m.violation_rate * (m.n_steps - 1)
    edge_dict = {
        "edge_acc": acc / steps,
        "sender_acc": sacc / steps,
        "receiver_acc": racc / steps,
        "violation_rate": viol / (steps - len(paths)),
        "n_steps": int(steps),
    }

    dt_max = float(cfg["evaluate"]["dt_max_s"])
    counts = np.zeros(3)  # matched, detected, truth
    for eid in sorted(paths):
        rep = match_events(pred_events.get(eid, []), gold_events.get(eid, []), dt_max_s=dt_max)
        counts += [rep.matched, rep.detected, rep.truth]
    matched, n_pred, n_gold = counts
    precision = matched / n_pred if n_pred else 0.0
    recall = matched / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    metrics = {
        "edge": edge_dict,
        "events": {
            "n_pred": int(n_pred),
            "n_gold": int(n_gold),
            "n_matched": int(matched),
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "dt_max_s": dt_max,
        },
    }
    _json_dump(out / "metrics" / "metrics.json", metrics)
    logger.info("edge accuracy %.4f, event F1 %.4f", edge_dict["edge_acc"], f1)


def cmd_report(cfg: dict, out: Path) -> None:
    prepared, golds, roster, rules = _load_prepared(cfg, out)
    paths = dataio.load_gold_csv(_require(out / "decodes" / "paths.csv", "decode"), roster)
    pred_events = dataio.load_events_csv(_require(out / "events" / "pred.csv", "decode"), roster)
    gold_events = dataio.load_events_csv(out / "events" / "gold.csv", roster)
    adir = out / "analytics"
    adir.mkdir(parents=True, exist_ok=True)
    r = cfg["report"]

    # possession shares and timeline
    import pandas as pd

    rows = []
    for eid in sorted(paths):
        stats = an.possession_stats(
            paths[eid], rules, team_of=prepared[eid].team_of, rate_hz=prepared[eid].rate_hz
        )
        rows.append(
            (eid, stats.home_share, 1.0 - stats.home_share,
             stats.attributed_steps, stats.out_of_play_steps)
        )
    pd.DataFrame(
        rows,
        columns=["episode_id", "home_share", "away_share", "attributed_steps", "out_of_play_steps"],
    ).to_csv(adir / "possession.csv", index=False)

    # holder-position heatmaps per team
    n_total = roster.n_total
    pts = {"home": [], "away": []}
    for eid in sorted(paths):
        senders = paths[eid] // n_total
        for t, s in enumerate(senders):
            if s < roster.n_players:
                key = "home" if s < len(roster.home) else "away"
                pts[key].append(prepared[eid].positions[t, s])
    cell = float(r["heatmap_cell_m"])
    for key, p in pts.items():
        if p:
            grid = an.kde_heatmap(
                np.asarray(p),
                pitch_length=105.0,
                pitch_width=68.0,
                cell_m=cell,
                bandwidth_m=float(r["heatmap_bandwidth_m"]),
            )
            density = grid.density
        else:
            # a team that never held the ball gets an all-zero grid
            density = np.zeros((len(np.arange(cell / 2, 105.0, cell)),
                                len(np.arange(cell / 2, 68.0, cell))))
        np.savetxt(adir / f"heatmap_{key}.csv", density, delimiter=",")

    # pass networks from predicted events, compared against gold-event networks
    merge_map = {str(k): str(v) for k, v in (r["merge_map"] or {}).items()}
    name_of = roster.node_names()
    merge_idx = {name_of.index(k): name_of.index(v) for k, v in merge_map.items()}
    team_of = roster.team_of()
    nets = {}
    for key, events in (("pred", pred_events), ("gold", gold_events)):
        flat = [ev for eid in sorted(events) for ev in events[eid]]
        for side, team in (("home", 0), ("away", 1)):
            nets[f"{key}_{side}"] = an.build_pass_network(
                flat, team_of, team=team, substitution_map=merge_idx
            )
    network_json = {
        name: {
            "nodes": {name_of[k]: [round(float(x), 4) for x in v] for k, v in net.positions.items()},
            "edges": [
                [name_of[u], name_of[v], int(w)] for (u, v), w in sorted(net.edges.items())
            ],
        }
        for name, net in nets.items()
    }
    _json_dump(adir / "pass_networks.json", network_json)
    similarity = {}
    for side in ("home", "away"):
        pred_net, gold_net = nets[f"pred_{side}"], nets[f"gold_{side}"]
        if pred_net.node_ids or gold_net.node_ids:
            similarity[side] = an.network_similarity(pred_net, gold_net).as_dict()
        else:
            similarity[side] = None  # no events on this side in either source
    _json_dump(adir / "network_similarity.json", similarity)

    # relaxed recall over tolerance grids
    ev = cfg["evaluate"]
    flat_pred = [e for eid in sorted(pred_events) for e in pred_events[eid]]
    flat_gold = [e for eid in sorted(gold_events) for e in gold_events[eid]]
    dt_grid = [float(x) for x in ev["relaxed_dt_s"]]
    dx_grid = [float(x) for x in ev["relaxed_dx_m"]]
    curve = relaxed_recall_curve(flat_pred, flat_gold, dt_grid=dt_grid, dx_grid=dx_grid)
    pd.DataFrame(
        [(dt, dx, float(curve[a, b])) for a, dt in enumerate(dt_grid) for b, dx in enumerate(dx_grid)],
        columns=["dt_s", "dx_m", "recall"],
    ).to_csv(adir / "relaxed_recall.csv", index=False)
    logger.info("analytics bundle -> %s", adir)


BASELINE_MATRIX = {
    # name: (objective, decoder, transition, masked)
    "noncrf_argmax": ("ce", "argmax", "none", False),
    "noncrf_gcd": ("ce", "gcd", "none", True),
    "noncrf_vcd": ("ce", "vcd", "none", True),
    "static_dense_crf": ("crf", "viterbi", "static", False),
    "static_masked_crf": ("crf", "viterbi", "static", True),
    "dynamic_dense_crf": ("crf", "viterbi", "dynamic", False),
    "dynamic_masked_crf": ("crf", "viterbi", "dynamic", True),
}


def cmd_matrix(cfg: dict, out: Path, jobs: int = 1) -> None:
    for name, (objective, decoder, transition, masked) in BASELINE_MATRIX.items():
        sub = _merge(
            cfg,
            {
                "model": {"transition": transition, "masked": masked},
                "train": {"objective": objective},
                "decode": {"decoder": decoder},
            },
        )
        run_dir = out / name
        run_dir.mkdir(parents=True, exist_ok=True)
        # each cell reuses the shared prepared data from the parent run dir
        sub = _merge(
            sub,
            {
                "paths": {
                    "tracking": str(cfg["paths"]["tracking"] or out / "data" / "tracking.csv"),
                    "touches": str(cfg["paths"]["touches"] or out / "data" / "touches.csv"),
                }
            },
        )
        _echo_config(sub, run_dir)
        logger.info("matrix cell %s", name)
        cmd_train(sub, run_dir)
        cmd_decode(sub, run_dir, jobs=jobs)
        cmd_evaluate(sub, run_dir)
    summary = {}
    for name in BASELINE_MATRIX:
        m = json.loads((out / name / "metrics" / "metrics.json").read_text())
        summary[name] = {
            "edge_acc": m["edge"]["edge_acc"],
            "violation_rate": m["edge"]["violation_rate"],
            "event_precision": m["events"]["precision"],
            "event_f1": m["events"]["f1"],
        }
    _json_dump(out / "metrics" / "matrix.json", summary)
    logger.info("matrix summary -> %s", out / "metrics" / "matrix.json")


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posspath",
        description="Ball-possession path inference pipeline over player tracking data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default="run", help="run directory (default: ./run)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--jobs", type=int, default=1, help="decode parallelism")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        _echo_config(cfg, out)
        fn = COMMANDS[args.command]
        if args.command in ("decode", "matrix"):
            fn(cfg, out, jobs=max(1, args.jobs))
        else:
            fn(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ScoreFileError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "matrix": cmd_matrix,
}


if __name__ == "__main__":
    sys.exit(main())
