"""Sample assembly: candidate labelling, history sequences, temporal split, normalisation.

Samples are stored columnar. One *list* is a (pump event, channel) pair with
its channel features and history sequence; every list owns one positive and
many negative candidate coins. Sequences are shared by all samples of a list.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySplit, LeakageError, TargetNotListed
from .events import MergedEvent, PumpEvent, merge_events
from .market import (
    WINDOWS,
    CandleStore,
    Listings,
    StatsTable,
    window_feature_names,
    window_stats,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DAY = 86_400
STAT_NAMES = ("log_market_cap", "log_alexa_rank", "log_reddit", "log_twitter")
CHANNEL_NAMES = ("log_prior_pumps", "prior_log_market_cap", "log_days_since_last")
NO_HISTORY_DAYS = 365.0


def stat_vector(raw) -> np.ndarray:
    """Log-scaled coin statistics; NaNs when the record is missing."""
    if raw is None:
        return np.full(len(STAT_NAMES), np.nan)
    mcap, alexa, reddit, twitter = raw
    return np.array([np.log(max(mcap, 1.0)), np.log(alexa), np.log1p(reddit), np.log1p(twitter)])


def build_sequence(pump_time: int, history: Sequence[PumpEvent], N: int):
    """Most recent ``N`` events strictly before ``pump_time``, closest first.

    Returns ``(items, mask)`` where padded slots hold None and mask False.
    """
    prior = [e for e in history if e.pump_time < pump_time]
    prior.sort(key=lambda e: e.pump_time)
    items = prior[::-1][:N]
    mask = [True] * len(items) + [False] * (N - len(items))
    return items + [None] * (N - len(items)), np.array(mask, dtype=bool)


def eligible_coins(listed: Iterable[str], pairing: str, exclude: Iterable[str] = ()) -> list[str]:
    drop = {c.upper() for c in exclude} | {pairing.upper()}
    return sorted(c for c in listed if c.upper() not in drop)


def label_candidates(event: MergedEvent, listed: Iterable[str], exclude: Iterable[str] = ()) -> list[tuple[str, int]]:
    """One ``(coin, label)`` pair per eligible coin; the event target is the single positive."""
    coins = eligible_coins(listed, event.pairing_coin, exclude)
    if event.target_coin not in coins:
        raise TargetNotListed(f"{event.target_coin} not eligible on {event.exchange} at {event.pump_time}")
    return [(c, int(c == event.target_coin)) for c in coins]


@dataclass
class SampleSet:
    """Columnar samples.

    List-level arrays have a leading dimension L, sample-level arrays S.
    ``sample_list[s]`` indexes the list of sample ``s``. Symbols are stored
    as strings; models map them to embedding rows with their own vocabulary.
    """

    list_refs: np.ndarray          # (L,) str
    list_channel: np.ndarray       # (L,) str
    list_time: np.ndarray          # (L,) int64
    channel_numeric: np.ndarray    # (L, Xn)
    seq_coin: np.ndarray           # (L, N) str, "" for padding
    seq_numeric: np.ndarray        # (L, N, Kn)
    seq_mask: np.ndarray           # (L, N) bool
    seq_time: np.ndarray           # (L, N) int64, 0 for padding
    sample_list: np.ndarray        # (S,) int64
    target_coin: np.ndarray        # (S,) str
    target_numeric: np.ndarray     # (S, Yn)
    labels: np.ndarray             # (S,) int8
    channel_names: tuple = CHANNEL_NAMES
    target_names: tuple = ()
    seq_names: tuple = STAT_NAMES

    @property
    def N(self) -> int:
        return int(self.seq_mask.shape[1])

    def __len__(self):
        return int(self.labels.size)

    @property
    def n_lists(self) -> int:
        return int(self.list_refs.size)

    @property
    def list_ids(self) -> np.ndarray:
        return self.sample_list

    @property
    def coin_symbols(self) -> np.ndarray:
        return self.target_coin

    @property
    def sample_time(self) -> np.ndarray:
        return self.list_time[self.sample_list]

    def select_lists(self, keep) -> "SampleSet":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        new_index = np.full(self.n_lists, -1, dtype=np.int64)
        new_index[keep] = np.arange(keep.size)
        smask = new_index[self.sample_list] >= 0
        return replace(
            self,
            list_refs=self.list_refs[keep],
            list_channel=self.list_channel[keep],
            list_time=self.list_time[keep],
            channel_numeric=self.channel_numeric[keep],
            seq_coin=self.seq_coin[keep],
            seq_numeric=self.seq_numeric[keep],
            seq_mask=self.seq_mask[keep],
            seq_time=self.seq_time[keep],
            sample_list=new_index[self.sample_list[smask]],
            target_coin=self.target_coin[smask],
            target_numeric=self.target_numeric[smask],
            labels=self.labels[smask],
        )

    def select_samples(self, keep) -> "SampleSet":
        """Subset samples, keeping every list (used for negative downsampling)."""
        return replace(self, sample_list=self.sample_list[keep], target_coin=self.target_coin[keep],
                       target_numeric=self.target_numeric[keep], labels=self.labels[keep])

    def with_length(self, n: int) -> "SampleSet":
        """Truncate sequences to the ``n`` most recent positions."""
        if n > self.N:
            raise ValueError(f"cannot extend sequences from {self.N} to {n}")
        return replace(self, seq_coin=self.seq_coin[:, :n], seq_numeric=self.seq_numeric[:, :n],
                       seq_mask=self.seq_mask[:, :n], seq_time=self.seq_time[:, :n])

    def positives(self) -> int:
        return int(self.labels.sum())

    # -- serialisation ---------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "schema_version": SCHEMA_VERSION,
            "channel_names": list(self.channel_names),
            "target_names": list(self.target_names),
            "seq_names": list(self.seq_names),
        }
        np.savez(
            path,
            meta=np.array(json.dumps(meta, sort_keys=True)),
            list_refs=self.list_refs.astype(str),
            list_channel=self.list_channel.astype(str),
            list_time=self.list_time,
            channel_numeric=self.channel_numeric,
            seq_coin=self.seq_coin.astype(str),
            seq_numeric=self.seq_numeric,
            seq_mask=self.seq_mask,
            seq_time=self.seq_time,
            sample_list=self.sample_list,
            target_coin=self.target_coin.astype(str),
            target_numeric=self.target_numeric,
            labels=self.labels,
        )

    @classmethod
    def load(cls, path) -> "SampleSet":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta["schema_version"] != SCHEMA_VERSION:
                raise ValueError(f"unsupported sample schema {meta['schema_version']}")
            arrays = {k: z[k] for k in z.files if k != "meta"}
        return cls(**arrays, channel_names=tuple(meta["channel_names"]),
                   target_names=tuple(meta["target_names"]), seq_names=tuple(meta["seq_names"]))


def concat(sets: Sequence[SampleSet]) -> SampleSet:
    first = sets[0]
    offsets = np.cumsum([0] + [s.n_lists for s in sets[:-1]])
    cat = np.concatenate
    return replace(
        first,
        list_refs=cat([s.list_refs for s in sets]),
        list_channel=cat([s.list_channel for s in sets]),
        list_time=cat([s.list_time for s in sets]),
        channel_numeric=cat([s.channel_numeric for s in sets]),
        seq_coin=cat([s.seq_coin for s in sets]),
        seq_numeric=cat([s.seq_numeric for s in sets]),
        seq_mask=cat([s.seq_mask for s in sets]),
        seq_time=cat([s.seq_time for s in sets]),
        sample_list=cat([s.sample_list + o for s, o in zip(sets, offsets)]),
        target_coin=cat([s.target_coin for s in sets]),
        target_numeric=cat([s.target_numeric for s in sets]),
        labels=cat([s.labels for s in sets]),
    )


def build_samples(events: Sequence[PumpEvent], listings: Listings, stats: StatsTable,
                  store: CandleStore, N: int, exchange: str = "binance", pairing: str = "BTC",
                  exclude: Iterable[str] = (), merge_window: int = 3600,
                  windows: Sequence[int] = WINDOWS) -> SampleSet:
    """Assemble every (merged event, channel) candidate list for one exchange/pairing.

    Channel histories use all of a channel's extracted events, regardless of
    exchange. Target features use market data up to one hour before the
    merged (earliest) pump time.
    """
    exclude = tuple(exclude)
    merged = [m for m in merge_events(events, merge_window)
              if m.exchange == exchange and m.pairing_coin == pairing]
    specs = []
    for m in merged:
        cands = label_candidates(m, listings.listed(exchange, pairing, m.pump_time), exclude)
        for ch in sorted(m.channels):
            specs.append((f"{m.ref}@{ch}", ch, m.pump_time, cands))
    return _assemble(specs, events, stats, store, N, pairing, windows)


def pending_samples(requests: Sequence[tuple], events: Sequence[PumpEvent], listings: Listings,
                    stats: StatsTable, store: CandleStore, N: int, exclude: Iterable[str] = (),
                    windows: Sequence[int] = WINDOWS) -> SampleSet:
    """Candidate lists for announced pumps whose target is not known yet.

    ``requests`` holds ``(channel_id, pump_time, exchange, pairing)`` tuples;
    every eligible coin gets label 0. Only events strictly before each pump
    time enter the history.
    """
    exclude = tuple(exclude)
    by_pairing: dict = {}
    for ch, t, ex, pa in requests:
        coins = eligible_coins(listings.listed(ex, pa, int(t)), pa, exclude)
        by_pairing.setdefault(pa, []).append((f"{int(t)}:{ex}:{pa}:?@{ch}", ch, int(t), [(c, 0) for c in coins]))
    parts = [_assemble(specs, events, stats, store, N, pa, windows) for pa, specs in sorted(by_pairing.items())]
    if not parts:
        return _assemble([], events, stats, store, N, "BTC", windows)
    return concat(parts)


def _assemble(specs, events, stats, store, N, pairing, windows) -> SampleSet:
    """Shared builder; ``specs`` rows are (ref, channel, time, [(coin, label)])."""
    history: dict[str, list[PumpEvent]] = {}
    for e in sorted(events):
        history.setdefault(e.channel_id, []).append(e)

    seq_stats_cache: dict = {}

    def item_stats(ev: PumpEvent) -> np.ndarray:
        key = (ev.target_coin, ev.pump_time)
        if key not in seq_stats_cache:
            seq_stats_cache[key] = stat_vector(stats.before_pump(ev.target_coin, ev.pump_time))
        return seq_stats_cache[key]

    refs, chans, times, chnum, sq_coin, sq_num, sq_mask, sq_time = ([] for _ in range(8))
    s_list, s_coin, s_label, s_time = [], [], [], []
    for ref, ch, t_pump, cands in specs:
        li = len(refs)
        refs.append(ref)
        chans.append(ch)
        times.append(t_pump)
        items, mask = build_sequence(t_pump, history.get(ch, ()), N)
        prior = [e for e in history.get(ch, ()) if e.pump_time < t_pump]
        caps = [item_stats(e)[0] for e in prior]
        caps = [c for c in caps if np.isfinite(c)]
        days = (t_pump - prior[-1].pump_time) / DAY if prior else NO_HISTORY_DAYS
        chnum.append([np.log1p(len(prior)), np.mean(caps) if caps else 0.0, np.log1p(days)])
        sq_coin.append([e.target_coin if e is not None else "" for e in items])
        sq_time.append([e.pump_time if e is not None else 0 for e in items])
        sq_num.append([np.nan_to_num(item_stats(e)) if e is not None else np.zeros(len(STAT_NAMES))
                       for e in items] or np.zeros((0, len(STAT_NAMES))))
        sq_mask.append(mask)
        for coin, label in cands:
            s_list.append(li)
            s_coin.append(coin)
            s_label.append(label)
            s_time.append(t_pump)

    L = len(refs)
    S = len(s_list)
    s_coin_arr = np.array(s_coin, dtype=str) if S else np.zeros(0, dtype=str)
    s_time_arr = np.array(s_time, dtype=np.int64)
    # target features: coin stats + market windows, vectorised per coin
    wnames = window_feature_names(windows)
    tnum = np.zeros((S, len(STAT_NAMES) + 1 + len(wnames)))
    for coin in np.unique(s_coin_arr):
        idx = np.flatnonzero(s_coin_arr == coin)
        st = np.array([stat_vector(stats.before_pump(coin, int(t))) for t in s_time_arr[idx]])
        miss = np.isnan(st).any(axis=1)
        tnum[idx, : len(STAT_NAMES)] = np.nan_to_num(st)
        tnum[idx, len(STAT_NAMES)] = miss
        w = window_stats(store.get(coin, pairing), s_time_arr[idx], windows)
        w[:, :, 1] = np.log1p(w[:, :, 1])
        w[:, :, 2] = np.log1p(w[:, :, 2])
        tnum[idx, len(STAT_NAMES) + 1:] = w.reshape(idx.size, -1)
    target_names = STAT_NAMES + ("stats_missing",) + tuple(
        n.replace("vol_mean", "log_vol_mean").replace("vol_max", "log_vol_max") for n in wnames)

    return SampleSet(
        list_refs=np.array(refs, dtype=str) if L else np.zeros(0, dtype=str),
        list_channel=np.array(chans, dtype=str) if L else np.zeros(0, dtype=str),
        list_time=np.array(times, dtype=np.int64),
        channel_numeric=np.array(chnum, dtype=np.float64).reshape(L, len(CHANNEL_NAMES)),
        seq_coin=np.array(sq_coin, dtype=str).reshape(L, N) if L and N else np.zeros((L, N), dtype=str),
        seq_numeric=np.array(sq_num, dtype=np.float64).reshape(L, N, len(STAT_NAMES)),
        seq_mask=np.array(sq_mask, dtype=bool).reshape(L, N),
        seq_time=np.array(sq_time, dtype=np.int64).reshape(L, N),
        sample_list=np.array(s_list, dtype=np.int64),
        target_coin=s_coin_arr,
        target_numeric=tnum,
        labels=np.array(s_label, dtype=np.int8),
        target_names=target_names,
    )


def check_leakage(ss: SampleSet) -> int:
    """Raise LeakageError if any real sequence item is at or after its list's time."""
    bad = ss.seq_mask & (ss.seq_time >= ss.list_time[:, None])
    n = int(bad.sum())
    if n:
        raise LeakageError(f"{n} sequence items reference same-or-later events")
    return 0


@dataclass
class Normalizer:
    """Per-field z-score statistics fitted on the training split."""

    blocks: dict = field(default_factory=dict)   # name -> (mean, std, keep)

    def fit_block(self, name: str, values: np.ndarray, min_std: float = 1e-9) -> None:
        mean = values.mean(axis=0) if values.size else np.zeros(values.shape[-1])
        std = values.std(axis=0) if values.size else np.zeros(values.shape[-1])
        keep = std >= min_std
        self.blocks[name] = (mean, np.where(keep, std, 1.0), keep)

    def apply(self, name: str, values: np.ndarray) -> np.ndarray:
        mean, std, keep = self.blocks[name]
        return ((values - mean) / std)[..., keep]

    def invert(self, name: str, values: np.ndarray) -> np.ndarray:
        mean, std, keep = self.blocks[name]
        return values * std[keep] + mean[keep]

    def to_dict(self) -> dict:
        return {k: [m.tolist(), s.tolist(), kp.tolist()] for k, (m, s, kp) in self.blocks.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls({k: (np.array(m), np.array(s), np.array(kp, dtype=bool)) for k, (m, s, kp) in d.items()})


@dataclass
class DatasetSplit:
    train: SampleSet
    validation: SampleSet
    test: SampleSet
    t1: int
    t2: int
    normalizer: Normalizer | None = None

    def with_length(self, n: int) -> "DatasetSplit":
        return replace(self, train=self.train.with_length(n), validation=self.validation.with_length(n),
                       test=self.test.with_length(n))

    @property
    def parts(self):
        return {"train": self.train, "validation": self.validation, "test": self.test}


def temporal_split(ss: SampleSet, t1: int, t2: int) -> DatasetSplit:
    """Train before ``t1``, validation in [t1, t2), test from ``t2`` on."""
    if not t1 < t2:
        raise ValueError("t1 must precede t2")
    check_leakage(ss)
    t = ss.list_time
    split = DatasetSplit(ss.select_lists(t < t1), ss.select_lists((t >= t1) & (t < t2)),
                         ss.select_lists(t >= t2), int(t1), int(t2))
    for name, part in split.parts.items():
        if part.positives() == 0:
            raise EmptySplit(f"{name} split has no positive sample")
    return split


def normalize(split: DatasetSplit, min_std: float = 1e-9) -> DatasetSplit:
    """z-score every real-valued field with training statistics.

    Near-constant training fields are dropped from all parts. Padded sequence
    positions stay exactly zero.
    """
    tr = split.train
    if len(tr) == 0:
        raise ValueError("training split is empty")
    norm = Normalizer()
    norm.fit_block("channel", tr.channel_numeric, min_std)
    norm.fit_block("target", tr.target_numeric, min_std)
    norm.fit_block("seq", tr.seq_numeric[tr.seq_mask], min_std)
    for name, names in (("channel", tr.channel_names), ("target", tr.target_names), ("seq", tr.seq_names)):
        dropped = [n for n, k in zip(names, norm.blocks[name][2]) if not k]
        if dropped:
            log.info("dropping constant %s fields: %s", name, ", ".join(dropped))

    def apply(ss: SampleSet) -> SampleSet:
        return apply_normalizer(ss, norm)

    return DatasetSplit(apply(split.train), apply(split.validation), apply(split.test),
                        split.t1, split.t2, norm)


def apply_normalizer(ss: SampleSet, norm: Normalizer) -> SampleSet:
    """Apply fitted statistics; dropped fields are removed, padded positions stay zero."""
    seq = norm.apply("seq", ss.seq_numeric) * ss.seq_mask[..., None]
    keep_c, keep_t, keep_s = (norm.blocks[k][2] for k in ("channel", "target", "seq"))
    return replace(
        ss,
        channel_numeric=norm.apply("channel", ss.channel_numeric),
        target_numeric=norm.apply("target", ss.target_numeric),
        seq_numeric=seq,
        channel_names=tuple(n for n, k in zip(ss.channel_names, keep_c) if k),
        target_names=tuple(n for n, k in zip(ss.target_names, keep_t) if k),
        seq_names=tuple(n for n, k in zip(ss.seq_names, keep_s) if k),
    )


def downsample_negatives(ss: SampleSet, rate: float, seed: int = 0) -> SampleSet:
    """Keep every positive and a ``rate`` fraction of negatives."""
    rng = np.random.default_rng(seed)
    keep = (ss.labels == 1) | (rng.random(len(ss)) < rate)
    return ss.select_samples(keep)
