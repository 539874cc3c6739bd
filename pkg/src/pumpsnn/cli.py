"""Command-line entry point: ``pumpsnn <subcommand> [flags]``.

Every stage reads and writes files under a work directory. Paths come from,
in increasing priority: built-in defaults, the YAML config file, environment
variables ``PUMPSNN_WORKDIR`` / ``PUMPSNN_PATH_<NAME>``, and command flags.

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 stage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

import numpy as np
import yaml

from .corpus import load_wordlist, read_messages, tokenize
from .detector import LogRegConfig, LogRegModel
from .embed import EmbedConfig, EmbeddingTable, l1_norm_report, train_cbow, train_skipgram
from .errors import PumpError
from .evaluation import HR_KS, ranking_report, results_csv, results_table, run_experiment
from .events import read_events, read_sessions, sessionize, write_events, write_sessions
from .features import SampleSet, apply_normalizer, normalize, pending_samples, temporal_split
from .market import load_candles, load_listings, load_stats
from .pipeline import extract, score_messages, train_detector
from .snn import (Model, SNNConfig, export_attention_heatmap, l1_groups, predict, read_heatmap, render_heatmap,
                  train)
from .synth import WorldConfig, generate_world

log = logging.getLogger("pumpsnn")

EXIT_CONFIG, EXIT_MISSING, EXIT_STAGE = 2, 3, 4

DEFAULT_PATHS = {
    "world_dir": "world",
    "messages": "world/messages.jsonl",
    "candles": "world/candles.csv",
    "stats": "world/coin_stats.csv",
    "listings": "world/listings.csv",
    "ground_truth": "world/ground_truth.jsonl",
    "labeled": "world/labeled_messages.jsonl",
    "corpus": "world/embedding_corpus.txt",
    "lexicon": "world/lexicon.txt",
    "excluded": "world/excluded_coins.txt",
    "world_meta": "world/world.json",
    "pending": "world/pending.jsonl",
    "detector": "detector.json",
    "detector_report": "detector_report.json",
    "flags": "flags.jsonl",
    "sessions": "sessions.jsonl",
    "events": "events.jsonl",
    "review": "review_sessions.jsonl",
    "samples": "samples.npz",
    "split": "split.json",
    "embeddings": "embeddings.npz",
    "model": "model.npz",
    "train_log": "train_log.json",
    "attention": "attention.csv",
    "results_csv": "results.csv",
    "results_txt": "results.txt",
    "l1_report": "l1_report.json",
    "predictions": "predictions.csv",
}


class ConfigError(Exception):
    pass


class MissingInput(Exception):
    pass


class StageError(Exception):
    pass


@dataclass
class PipelineConfig:
    workdir: str = "run"
    seed: int = 0
    paths: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)
    embed: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    snn: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    def path(self, name: str) -> str:
        if name not in DEFAULT_PATHS:
            raise ConfigError(f"unknown path key {name!r}")
        env = os.environ.get(f"PUMPSNN_PATH_{name.upper()}")
        p = env or self.paths.get(name) or DEFAULT_PATHS[name]
        return p if os.path.isabs(p) else os.path.join(self.workdir, p)


SECTIONS = {f.name for f in fields(PipelineConfig)}


def load_config(path: str | None, overrides: dict) -> PipelineConfig:
    raw = {}
    if path:
        if not os.path.exists(path):
            raise MissingInput(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                raw = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = PipelineConfig(**raw)
    if os.environ.get("PUMPSNN_WORKDIR"):
        cfg.workdir = os.environ["PUMPSNN_WORKDIR"]
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg


def _build(cls, section: dict, what: str, **extra):
    known = {f.name for f in fields(cls)}
    bad = set(section) - known
    if bad:
        raise ConfigError(f"unknown {what} keys: {sorted(bad)}")
    try:
        return cls(**{**section, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what} config: {exc}") from exc


def _require(*paths):
    for p in paths:
        if not os.path.exists(p):
            raise MissingInput(f"required input not found: {p}")


def _ensure_dir(path):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)


def _write_json(path, obj):
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_jsonl(path, rows):
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")


def _parse_time(v) -> int:
    if isinstance(v, (int, float)):
        return int(v)
    try:
        return int(datetime.fromisoformat(str(v)).replace(tzinfo=timezone.utc).timestamp())
    except ValueError as exc:
        raise ConfigError(f"bad timestamp {v!r}") from exc


def _excluded(cfg):
    p = cfg.path("excluded")
    return sorted(load_wordlist(p)) if os.path.exists(p) else []


def _embed_table(cfg):
    p = cfg.path("embeddings")
    _require(p)
    return EmbeddingTable.load(p)


# -- subcommands -----------------------------------------------------------


def cmd_synth(cfg, args):
    wc = _build(WorldConfig, {"seed": cfg.seed, **cfg.synth}, "synth")
    world = generate_world(wc)
    out = cfg.path("world_dir")
    world.write(out)
    # announced-but-unreleased pumps for `predict`: one per channel, two days after its last pump
    last = {}
    for e in world.events:
        last[e.channel_id] = max(last.get(e.channel_id, 0), e.pump_time)
    pending = [{"channel_id": ch, "timestamp": t + 2 * 86400, "exchange": world.exchange,
                "pairing_coin": world.pairing} for ch, t in sorted(last.items())]
    _write_jsonl(cfg.path("pending"), pending)
    print(f"world: {len(world.messages)} messages, {len(world.events)} planted events -> {out}")


def cmd_detect_train(cfg, args):
    _require(cfg.path("labeled"))
    rows = _read_jsonl(cfg.path("labeled"))
    d = dict(cfg.detector)
    threshold = float(d.pop("threshold", 0.2))
    train_frac = float(d.pop("train_frac", 0.7))
    min_df = int(d.pop("min_df", 2))
    lr_cfg = _build(LogRegConfig, {"seed": cfg.seed, **d}, "detector")
    run = train_detector([r["text"] for r in rows], [int(r["label"]) for r in rows], lr_cfg, train_frac,
                         min_df, threshold)
    _ensure_dir(cfg.path("detector"))
    run.model.save(cfg.path("detector"))
    _write_json(cfg.path("detector_report"), run.report)
    print(f"detector AUC {run.report['auc']:.4f}  P {run.report['precision']:.3f}  R {run.report['recall']:.3f}")


def cmd_detect_score(cfg, args):
    _require(cfg.path("detector"), cfg.path("messages"))
    model = LogRegModel.load(cfg.path("detector"))
    msgs = read_messages(cfg.path("messages"))
    lex = load_wordlist(cfg.path("lexicon")) if os.path.exists(cfg.path("lexicon")) else None
    rows = score_messages(model, msgs, lex, float(cfg.detector.get("threshold", 0.2)))
    _write_jsonl(cfg.path("flags"), rows)
    print(f"scored {len(rows)} messages, {sum(r['flag'] for r in rows)} flagged")


def cmd_sessionize(cfg, args):
    _require(cfg.path("messages"))
    sessions = sessionize(read_messages(cfg.path("messages")))
    _ensure_dir(cfg.path("sessions"))
    write_sessions(cfg.path("sessions"), sessions)
    print(f"{len(sessions)} sessions")


def cmd_extract(cfg, args):
    _require(cfg.path("sessions"), cfg.path("flags"), cfg.path("listings"))
    events, review = extract(read_sessions(cfg.path("sessions")), _read_jsonl(cfg.path("flags")),
                             load_listings(cfg.path("listings")))
    _ensure_dir(cfg.path("events"))
    write_events(cfg.path("events"), events)
    write_sessions(cfg.path("review"), review)
    print(f"{len(events)} events, {len(review)} sessions set aside for review")


def _split_times(cfg):
    f = cfg.features
    if "t1" in f and "t2" in f:
        return _parse_time(f["t1"]), _parse_time(f["t2"])
    meta = cfg.path("world_meta")
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as fh:
            m = json.load(fh)
        return int(m["t1"]), int(m["t2"])
    raise ConfigError("features.t1 / features.t2 not set and no world metadata to take them from")


def cmd_featurize(cfg, args):
    from .features import build_samples

    _require(cfg.path("events"), cfg.path("listings"), cfg.path("stats"), cfg.path("candles"))
    f = cfg.features
    N = int(f.get("N", 40))
    t1, t2 = _split_times(cfg)
    ss = build_samples(read_events(cfg.path("events")), load_listings(cfg.path("listings")),
                       load_stats(cfg.path("stats")), load_candles(cfg.path("candles")), N,
                       exchange=f.get("exchange", "binance"), pairing=f.get("pairing", "BTC"),
                       exclude=_excluded(cfg))
    temporal_split(ss, t1, t2)  # validates leakage and non-empty parts before writing
    _ensure_dir(cfg.path("samples"))
    ss.save(cfg.path("samples"))
    _write_json(cfg.path("split"), {"t1": t1, "t2": t2, "N": N})
    print(f"{len(ss)} samples in {ss.n_lists} lists, N={N}")


def cmd_embed_train(cfg, args):
    _require(cfg.path("corpus"))
    e = dict(cfg.embed)
    algo = e.pop("algorithm", "skipgram")
    if algo not in ("skipgram", "cbow"):
        raise ConfigError("embed.algorithm must be skipgram or cbow")
    ec = _build(EmbedConfig, {"seed": cfg.seed, **e}, "embed")
    with open(cfg.path("corpus"), encoding="utf-8") as fh:
        corpus = [tokenize(line, frozenset()) for line in fh if line.strip()]
    coins = load_listings(cfg.path("listings")).coins() if os.path.exists(cfg.path("listings")) else []
    table = (train_skipgram if algo == "skipgram" else train_cbow)(corpus, ec, inject=coins)
    _ensure_dir(cfg.path("embeddings"))
    table.save(cfg.path("embeddings"))
    print(f"{algo}: {len(table.tokens)} tokens, d={table.d}")


def _load_split(cfg):
    _require(cfg.path("samples"), cfg.path("split"))
    ss = SampleSet.load(cfg.path("samples"))
    with open(cfg.path("split"), encoding="utf-8") as fh:
        sp = json.load(fh)
    return normalize(temporal_split(ss, sp["t1"], sp["t2"]))


def _snn_config(cfg, **extra) -> SNNConfig:
    return _build(SNNConfig, {"seed": cfg.seed, **cfg.snn, **{k: v for k, v in extra.items() if v is not None}},
                  "snn")


def cmd_train(cfg, args):
    sc = _snn_config(cfg, mode=args.mode, embedding_mode=args.embedding_mode, N=args.N)
    split = _load_split(cfg)
    if sc.N > split.train.N:
        raise ConfigError(f"N={sc.N} exceeds the featurized sequence length {split.train.N}")
    pre = _embed_table(cfg) if sc.embedding_mode == "pretrained" else None
    model, history = train(split.with_length(sc.N), sc, pretrained=pre)
    _ensure_dir(cfg.path("model"))
    model.save(cfg.path("model"))
    _write_json(cfg.path("train_log"), history)
    if "alpha" in model.params:
        export_attention_heatmap(model, cfg.path("attention"))
    best = max(h["val_auc"] for h in history)
    print(f"{sc.mode}/{sc.embedding_mode} N={sc.N}: best validation AUC {best:.4f} after {len(history)} epochs")


def cmd_evaluate(cfg, args):
    ev = cfg.eval
    ks = tuple(ev.get("ks", HR_KS))
    if args.model_only:
        _require(cfg.path("model"), cfg.path("samples"), cfg.path("split"))
        model = Model.load(cfg.path("model"))
        raw = SampleSet.load(cfg.path("samples"))
        with open(cfg.path("split"), encoding="utf-8") as fh:
            sp = json.load(fh)
        test = temporal_split(raw, sp["t1"], sp["t2"]).test.with_length(model.config.N)
        if model.normalizer is not None:
            test = apply_normalizer(test, model.normalizer)
        rep = ranking_report(test.list_ids, test.coin_symbols, predict(model, test), test.labels, ks)
        rows = [{"mode": model.config.mode, "embedding": model.config.embedding_mode, "N": model.config.N,
                 "seed": model.config.seed, **rep}]
    else:
        split = _load_split(cfg)
        base = _snn_config(cfg)
        embs = tuple(ev.get("embedding_modes", ("e2e",)))
        pre = _embed_table(cfg) if "pretrained" in embs else None
        lengths = tuple(int(n) for n in ev.get("lengths", (base.N,)))
        if max(lengths) > split.train.N:
            raise ConfigError(f"eval length {max(lengths)} exceeds featurized N={split.train.N}")
        rows = run_experiment(split, base, modes=tuple(ev.get("modes", ("dnn", "snn_v", "snn"))),
                              embedding_modes=embs, lengths=lengths,
                              seeds=tuple(int(s) for s in ev.get("seeds", (cfg.seed,))), pretrained=pre, ks=ks)
    _ensure_dir(cfg.path("results_csv"))
    with open(cfg.path("results_csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(results_csv(rows))
    with open(cfg.path("results_txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(results_table(rows, ks))
    print(results_table(rows, ks), end="")


def cmd_predict(cfg, args):
    _require(cfg.path("model"), cfg.path("events"), cfg.path("listings"), cfg.path("stats"),
             cfg.path("candles"), cfg.path("pending"))
    model = Model.load(cfg.path("model"))
    reqs = [(r["channel_id"], _parse_time(r["timestamp"]), r.get("exchange", "binance").lower(),
             r.get("pairing_coin", "BTC").upper()) for r in _read_jsonl(cfg.path("pending"))]
    ss = pending_samples(reqs, read_events(cfg.path("events")), load_listings(cfg.path("listings")),
                         load_stats(cfg.path("stats")), load_candles(cfg.path("candles")),
                         max(model.config.N, 0), exclude=_excluded(cfg))
    if model.normalizer is not None:
        ss = apply_normalizer(ss, model.normalizer)
    scores, info = predict(model, ss, return_info=True)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["event_ref", "rank", "coin", "probability"])
    for li, ref in enumerate(ss.list_refs):
        rows = np.flatnonzero(ss.sample_list == li)
        order = sorted(rows, key=lambda r: (-scores[r], ss.target_coin[r]))
        for rank, r in enumerate(order, 1):
            w.writerow([ref, rank, ss.target_coin[r], repr(float(scores[r]))])
    _ensure_dir(cfg.path("predictions"))
    with open(cfg.path("predictions"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(out.getvalue())
    print(f"ranked {len(ss)} candidates for {ss.n_lists} pending events "
          f"({info['unknown_coins']} unseen coin ids)")


def cmd_report(cfg, args):
    shown = False
    if os.path.exists(cfg.path("results_txt")):
        with open(cfg.path("results_txt"), encoding="utf-8") as fh:
            print(fh.read(), end="")
        shown = True
    if os.path.exists(cfg.path("attention")):
        with open(cfg.path("attention"), encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")[1:]
        print()
        print(render_heatmap(read_heatmap(cfg.path("attention")), header), end="")
        shown = True
    if os.path.exists(cfg.path("model")) and os.path.exists(cfg.path("samples")) and args.l1:
        model = Model.load(cfg.path("model"))
        raw = SampleSet.load(cfg.path("samples"))
        with open(cfg.path("split"), encoding="utf-8") as fh:
            sp = json.load(fh)
        split = temporal_split(raw, sp["t1"], sp["t2"])
        groups = l1_groups(model, split)
        rep = l1_norm_report(model.params["coin_emb"], groups)
        _write_json(cfg.path("l1_report"), rep)
        print()
        for name, r in rep.items():
            mean = "n/a" if r["mean"] is None else f"{r['mean']:.4f}"
            print(f"l1 {name:<22} n={r['count']:<5} mean={mean}")
        shown = True
    if not shown:
        raise MissingInput("nothing to report: run evaluate or train first")


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pumpsnn", description="Pump-and-dump target coin prediction pipeline")
    p.add_argument("--config", default=os.environ.get("PUMPSNN_CONFIG"), help="YAML config file")
    p.add_argument("--workdir", help="directory for all stage outputs (default: run)")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate a synthetic world of fixtures")
    det = sub.add_parser("detect", help="pump-message detector")
    dsub = det.add_subparsers(dest="detect_command", required=True)
    dsub.add_parser("train", help="fit the TF-IDF logistic-regression detector")
    dsub.add_parser("score", help="score and flag every message")
    sub.add_parser("sessionize", help="split channel streams at 24h gaps")
    sub.add_parser("extract-events", help="quintuple events from flagged sessions")
    sub.add_parser("featurize", help="build labelled candidate lists")
    emb = sub.add_parser("embed", help="word embeddings for coin symbols")
    esub = emb.add_subparsers(dest="embed_command", required=True)
    esub.add_parser("train", help="train skip-gram or CBoW on the corpus")
    tr = sub.add_parser("train", help="train the sequence model")
    tr.add_argument("--mode", choices=("dnn", "snn_v", "snn"))
    tr.add_argument("--embedding-mode", choices=("e2e", "pretrained"))
    tr.add_argument("--N", type=int)
    ev = sub.add_parser("evaluate", help="test-set AUC and HR@k")
    ev.add_argument("--model-only", action="store_true", help="score the trained model instead of the grid")
    sub.add_parser("predict", help="rank coins for pending announced pumps")
    rp = sub.add_parser("report", help="render results table and attention heat-map")
    rp.add_argument("--l1", action="store_true", help="also write the embedding l1-norm report")
    return p


COMMANDS = {
    ("synth",): cmd_synth,
    ("detect", "train"): cmd_detect_train,
    ("detect", "score"): cmd_detect_score,
    ("sessionize",): cmd_sessionize,
    ("extract-events",): cmd_extract,
    ("featurize",): cmd_featurize,
    ("embed", "train"): cmd_embed_train,
    ("train",): cmd_train,
    ("evaluate",): cmd_evaluate,
    ("predict",): cmd_predict,
    ("report",): cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    key = (args.command,) + tuple(v for v in (getattr(args, "detect_command", None),
                                              getattr(args, "embed_command", None)) if v)
    try:
        cfg = load_config(args.config, {"workdir": args.workdir, "seed": args.seed})
        COMMANDS[key](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (PumpError, StageError, ValueError, KeyError) as exc:
        print(f"stage error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
