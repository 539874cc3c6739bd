"""Stage functions shared by the command line, the demos and the tests.

Each function takes in-memory inputs and returns in-memory outputs; file
handling lives in :mod:`pumpsnn.cli`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Message, default_lexicon, fit_vocabulary, keyword_filter, tfidf_matrix, tokenize
from .detector import LogRegConfig, LogRegModel, classification_report, fit_logreg, predict_proba, stratified_split
from .events import PumpEvent, Session, extract_events, sessionize
from .features import DatasetSplit, build_samples, normalize, temporal_split
from .market import CandleStore, Listings, StatsTable

DEFAULT_EXCHANGES = ("binance", "yobit", "hotbit", "kucoin", "bittrex")
DEFAULT_PAIRINGS = ("BTC", "ETH", "USDT")


@dataclass
class DetectorRun:
    model: LogRegModel
    report: dict
    train_index: np.ndarray
    test_index: np.ndarray


def train_detector(texts: Sequence[str], labels: Sequence[int], config: LogRegConfig = LogRegConfig(),
                   train_frac: float = 0.7, min_df: int = 2, threshold: float = 0.2) -> DetectorRun:
    """Stratified split, vocabulary on the training part, logistic regression, held-out report."""
    labels = np.asarray(labels, dtype=np.int64)
    docs = [tokenize(t) for t in texts]
    tr, te = stratified_split(labels, train_frac, config.seed)
    vocab = fit_vocabulary([docs[i] for i in tr], min_df=min_df)
    X = tfidf_matrix(docs, vocab)
    model = fit_logreg(X[tr], labels[tr], config, vocab=vocab)
    scores = predict_proba(model, X[te])
    report = classification_report(scores >= threshold, labels[te], scores)
    report.update(n_train=int(tr.size), n_test=int(te.size), threshold=threshold)
    return DetectorRun(model, report, tr, te)


def score_messages(model: LogRegModel, messages: Sequence[Message], lexicon: Iterable[str] | None = None,
                   threshold: float = 0.2) -> list[dict]:
    """Detector probability and 0/1 flag per message.

    Messages that fail the keyword filter get score 0 and are never flagged.
    """
    lexicon = frozenset(lexicon) if lexicon is not None else default_lexicon()
    keep = [i for i, m in enumerate(messages) if keyword_filter(m, lexicon)]
    scores = np.zeros(len(messages))
    if keep:
        X = tfidf_matrix([tokenize(messages[i].text) for i in keep], model.vocab)
        scores[keep] = predict_proba(model, X)
    return [{"channel_id": m.channel_id, "message_id": m.message_id, "score": float(s),
             "flag": int(s >= threshold)} for m, s in zip(messages, scores)]


def flags_by_message(rows: Iterable[dict]) -> dict:
    return {(r["channel_id"], int(r["message_id"])): int(r["flag"]) for r in rows}


def extract(sessions: Sequence[Session], flag_rows: Iterable[dict], listings: Listings,
            exchanges: Iterable[str] = DEFAULT_EXCHANGES,
            pairings: Iterable[str] = DEFAULT_PAIRINGS) -> tuple[list[PumpEvent], list[Session]]:
    """Events from sessions; every coin ever listed counts as a known symbol."""
    return extract_events(sessions, flags_by_message(flag_rows), listings.coins(), exchanges, pairings)


def detect_events(messages: Sequence[Message], model: LogRegModel, listings: Listings,
                  lexicon: Iterable[str] | None = None, threshold: float = 0.2):
    """Score, sessionize and extract in one call."""
    rows = score_messages(model, messages, lexicon, threshold)
    return extract(sessionize(messages), rows, listings)


def make_split(events: Sequence[PumpEvent], listings: Listings, stats: StatsTable, store: CandleStore,
               N: int, t1: int, t2: int, exclude: Iterable[str] = (), exchange: str = "binance",
               pairing: str = "BTC") -> DatasetSplit:
    """Samples for one exchange/pairing, temporal split and train-fitted normalisation."""
    ss = build_samples(events, listings, stats, store, N, exchange=exchange, pairing=pairing, exclude=exclude)
    return normalize(temporal_split(ss, t1, t2))


def world_split(world, N: int = 20, events: Sequence[PumpEvent] | None = None) -> DatasetSplit:
    """Split built from a synthetic world's planted (or supplied) events."""
    return make_split(world.events if events is None else events, world.listings, world.stats, world.store,
                      N, world.t1, world.t2, exclude=world.excluded, exchange=world.exchange,
                      pairing=world.pairing)
