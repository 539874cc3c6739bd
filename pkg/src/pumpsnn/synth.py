"""Deterministic synthetic world: channels, coins, messages, candles and planted pumps.

The generator bakes in three behaviours seen in real pump channels:

* pumped coins sit in a channel-specific pool (similar market cap and
  category), and pools differ between channels;
* each pool slowly turns over, so recent pumps say more about the next
  target than old ones;
* organisers buy in during the ~57 hours before the pump, lifting price and
  volume of the target.

Everything is driven by one seed; two calls with the same config return
identical objects and write identical files.
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from .corpus import STOP_WORDS, Message, default_lexicon, write_messages
from .errors import InfeasibleConfig
from .events import PumpEvent
from .market import CandleSeries, CandleStore, Listings, StatsTable, dump_candles, dump_listings, dump_stats

HOUR = 3600
DAY = 86_400
MIN_GAP_DAYS = 4.0  # keeps consecutive sessions of one channel > 24h apart
EPOCH0 = 1_577_836_800  # 2020-01-01T00:00:00Z
EXCHANGE = "binance"
PAIRING = "BTC"
STABLECOINS = ("USDC", "BUSD")

CATEGORY_WORDS = (
    ("defi", "yield", "lending", "liquidity", "farming"),
    ("gaming", "play", "esports", "guild", "arcade"),
    ("meme", "doge", "community", "viral", "shiba"),
    ("privacy", "anonymous", "zk", "mixer", "stealth"),
    ("oracle", "datafeed", "bridge", "interoperability", "relay"),
    ("storage", "filesharing", "cloud", "ipfs", "archive"),
    ("metaverse", "virtual", "land", "avatar", "nft"),
    ("layer", "scaling", "rollup", "sharding", "throughput"),
    ("payments", "merchant", "remittance", "wallet", "transfer"),
    ("ai", "machine", "learning", "compute", "neural"),
)


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 0
    n_channels: int = 50
    n_coins: int = 300
    coins_per_channel_pool: int = 10
    events_per_channel: int = 16
    n_categories: int = 10
    categories_per_channel: int = 5
    pre_pump_drift: float = 0.03
    pre_pump_volume: float = 0.4
    price_noise: float = 0.01
    volume_noise: float = 0.3
    pool_turnover: float = 1.0
    category_drift: float = 0.0
    coin_cap_std: float = 1.5
    channel_cap_mean: float = 17.0
    channel_cap_std: float = 1.0
    cap_walk: float = 0.4
    walk_reversion: float = 0.97
    cap_affinity: float = 0.2
    social_affinity: float = 0.2
    history_noise_horizon: int | None = None
    cold_start_fraction: float = 0.3
    late_listing_fraction: float = 0.15
    split_fractions: tuple = (0.6, 0.75)
    min_spacing_days: float = 5.5
    max_spacing_days: float = 9.0
    activity_skew: float = 0.6
    message_noise: float = 0.0
    chatter_per_session: int = 2
    ambiguous_sessions: int = 0
    federation_rate: float = 0.0
    corpus_docs_per_coin: int = 12
    start: int = EPOCH0

    def __post_init__(self):
        for name in ("n_channels", "n_coins", "coins_per_channel_pool", "events_per_channel",
                     "n_categories", "categories_per_channel"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pre_pump_drift < 0 or self.pre_pump_volume < 0:
            raise ValueError("pre-pump drift and volume lift must be >= 0")
        for name in ("pool_turnover", "category_drift", "cold_start_fraction", "late_listing_fraction", "message_noise",
                     "federation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.activity_skew < 0:
            raise ValueError("activity_skew must be >= 0")
        if self.min_spacing_days < MIN_GAP_DAYS or self.max_spacing_days < self.min_spacing_days:
            raise ValueError(f"spacing must satisfy {MIN_GAP_DAYS} <= min_spacing_days <= max_spacing_days")
        if self.n_categories > len(CATEGORY_WORDS):
            raise ValueError(f"at most {len(CATEGORY_WORDS)} categories")
        object.__setattr__(self, "split_fractions", tuple(self.split_fractions))


@dataclass
class World:
    config: WorldConfig
    coins: tuple                  # symbols, uppercase
    categories: np.ndarray        # (n_coins,)
    channels: tuple
    messages: list
    store: CandleStore
    stats: StatsTable
    listings: Listings
    events: list                  # planted PumpEvents, time-ordered
    labeled_docs: list            # (text, label) pairs for the detector
    embedding_corpus: list        # raw texts for word-embedding pre-training
    t1: int
    t2: int
    ambiguous: list = field(default_factory=list)   # (channel, start, end) of review sessions
    channel_categories: dict = field(default_factory=dict)
    pool_history: dict = field(default_factory=dict)  # channel -> list of pool snapshots
    cohosted: int = 0

    @property
    def exchange(self) -> str:
        return EXCHANGE

    @property
    def pairing(self) -> str:
        return PAIRING

    @property
    def excluded(self) -> tuple:
        return STABLECOINS

    def write(self, out_dir) -> dict:
        """Write fixture files; returns the path of each."""
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "messages": os.path.join(out_dir, "messages.jsonl"),
            "candles": os.path.join(out_dir, "candles.csv"),
            "stats": os.path.join(out_dir, "coin_stats.csv"),
            "listings": os.path.join(out_dir, "listings.csv"),
            "events": os.path.join(out_dir, "ground_truth.jsonl"),
            "labeled": os.path.join(out_dir, "labeled_messages.jsonl"),
            "corpus": os.path.join(out_dir, "embedding_corpus.txt"),
            "lexicon": os.path.join(out_dir, "lexicon.txt"),
            "excluded": os.path.join(out_dir, "excluded_coins.txt"),
            "world": os.path.join(out_dir, "world.json"),
        }
        write_messages(paths["messages"], self.messages)
        dump_candles(self.store, paths["candles"])
        dump_stats(self.stats, paths["stats"])
        dump_listings(self.listings, paths["listings"])
        with open(paths["events"], "w", encoding="utf-8", newline="\n") as fh:
            for e in self.events:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
        with open(paths["labeled"], "w", encoding="utf-8", newline="\n") as fh:
            for text, label in self.labeled_docs:
                fh.write(json.dumps({"text": text, "label": label}, ensure_ascii=False) + "\n")
        with open(paths["corpus"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.embedding_corpus) + "\n")
        with open(paths["lexicon"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(sorted(default_lexicon(self.coins))) + "\n")
        with open(paths["excluded"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.excluded) + "\n")
        meta = {
            "config": asdict(self.config),
            "exchange": EXCHANGE,
            "pairing": PAIRING,
            "t1": self.t1,
            "t2": self.t2,
            "coins": list(self.coins),
            "categories": self.categories.tolist(),
            "channels": list(self.channels),
            "ambiguous_sessions": [list(a) for a in self.ambiguous],
            "cohosted_events": self.cohosted,
        }
        with open(paths["world"], "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return paths


# -- helpers ---------------------------------------------------------------


def _symbols(rng, n, taken) -> list[str]:
    banned = {w.upper() for w in STOP_WORDS} | {w.upper() for w in default_lexicon()} | set(taken)
    banned |= {w.upper() for words in CATEGORY_WORDS for w in words}
    banned |= {w.upper() for w in _TEMPLATE_WORDS}
    out = []
    letters = np.array(list(string.ascii_uppercase))
    while len(out) < n:
        k = int(rng.integers(3, 5))
        s = "".join(rng.choice(letters, size=k))
        if s in banned:
            continue
        banned.add(s)
        out.append(s)
    return out


def _handle(rng) -> str:
    letters = np.array(list(string.ascii_lowercase))
    return "".join(rng.choice(letters, size=8)) + "_pumps"


def _fmt_time(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%b %d at %H:%M GMT")


ANNOUNCE = (
    "📢 PUMP ANNOUNCEMENT 📢 Next pump: {when}. Exchange: {ex}. Pair: {pair}. Be ready!",
    "Attention! Our next big pump is scheduled for {when} on {ex}, pairing {pair}. Prepare your {pair}",
    "🚀 Pump signal announcement: {when}, exchange {ex}, pair {pair}. Huge gains expected",
)
COUNTDOWN = (
    "⏰ {n} hours left until the pump on {ex}!",
    "Only {n} hours remaining! Transfer your {pair} to {ex} now",
    "Reminder: pump starts in {n} hours. Buy fast and hold, do not sell early",
)
LAST_CALL = (
    "5 minutes left! The next message will be the coin name!",
    "Get ready, coin name comes in a few minutes. Buy fast and hold!",
)
RELEASE = ("{sym}", "${sym}", "🚀 {sym} 🚀", "#{sym}")
NOISY_RELEASE = (
    "The coin we pump today is {sym} buy now",
    "{sym} is the target, go go go",
)
REVIEW = (
    "Pump results: {sym} reached +{gain}%! Congratulations to everyone who held",
    "What a pump! {sym} peaked at {gain}% profit. Next pump coming soon",
)
CHATTER = (
    "Good morning everyone, have a nice day",
    "Market update: Bitcoin dominance rising, alts quiet today",
    "Stay tuned for more news and analysis",
    "Thanks for being part of this community",
    "Weekend is coming, markets look sleepy",
    "Do your own research and manage risk wisely",
    "Bitcoin price analysis: support looks strong around current levels",
    "New members welcome! Read the pinned rules",
)
NEWS = (
    "{sym} announces new {w1} partnership, {w2} community excited",
    "Analysts say {sym} could lead the {w1} sector this month",
    "{sym} and {sym2} trending in {w1} {w2} discussions",
    "Is {sym} undervalued? A look at {w1} fundamentals",
)
INVITE = ("Join our partner channel https://t.me/{handle} for more signals",
          "VIP access available: t.me/joinchat/{handle}")
_TEMPLATE_WORDS = {w.strip("!.,:?📢🚀⏰#$").lower() for t in (ANNOUNCE + COUNTDOWN + LAST_CALL + REVIEW
                                                         + CHATTER + NEWS + INVITE + NOISY_RELEASE)
                   for w in t.split() if "{" not in w}


def _embedding_docs(rng, coins, cats, cfg) -> list[str]:
    """Crypto chatter where coins co-occur with their category's vocabulary."""
    by_cat = [np.flatnonzero(cats == c) for c in range(cfg.n_categories)]
    docs = []
    for i, sym in enumerate(coins):
        words = CATEGORY_WORDS[cats[i]]
        peers = by_cat[cats[i]]
        for _ in range(cfg.corpus_docs_per_coin):
            w = rng.choice(words, size=3, replace=False)
            mate = coins[int(rng.choice(peers))]
            kind = int(rng.integers(0, 4))
            if kind == 0:
                docs.append(f"{sym} {w[0]} {w[1]} project update {mate}")
            elif kind == 1:
                docs.append(f"top {w[0]} coins: {sym} {mate} {w[2]}")
            elif kind == 2:
                docs.append(f"{w[0]} {sym} {w[1]} {w[2]} {mate}")
            else:
                docs.append(f"{sym} {mate} {w[0]} {w[2]} news")
    order = rng.permutation(len(docs))
    return [docs[i] for i in order]


def _labeled_docs(rng, coins, n=5000, pos_frac=0.4) -> list[tuple[str, int]]:
    """Pump templates (label 1) versus chatter and coin news (label 0)."""
    exs = ("Binance", "Yobit", "Hotbit", "Kucoin")
    out = []
    for _ in range(n):
        sym = coins[int(rng.integers(len(coins)))]
        sym2 = coins[int(rng.integers(len(coins)))]
        if rng.random() < pos_frac:
            kind = int(rng.integers(0, 5))
            ex = exs[int(rng.integers(len(exs)))]
            when = _fmt_time(EPOCH0 + int(rng.integers(0, 400)) * DAY + 17 * HOUR)
            if kind == 0:
                text = ANNOUNCE[int(rng.integers(len(ANNOUNCE)))].format(when=when, ex=ex, pair="BTC")
            elif kind == 1:
                text = COUNTDOWN[int(rng.integers(len(COUNTDOWN)))].format(n=int(rng.integers(1, 48)), ex=ex,
                                                                          pair="BTC")
            elif kind == 2:
                text = LAST_CALL[int(rng.integers(len(LAST_CALL)))]
            elif kind == 3:
                text = RELEASE[int(rng.integers(len(RELEASE)))].format(sym=sym)
            else:
                text = REVIEW[int(rng.integers(len(REVIEW)))].format(sym=sym, gain=int(rng.integers(20, 400)))
            out.append((text, 1))
        else:
            if rng.random() < 0.5:
                text = CHATTER[int(rng.integers(len(CHATTER)))]
            else:
                words = CATEGORY_WORDS[int(rng.integers(len(CATEGORY_WORDS)))]
                w = rng.choice(words, size=2, replace=False)
                text = NEWS[int(rng.integers(len(NEWS)))].format(sym=sym, sym2=sym2, w1=w[0], w2=w[1])
                if rng.random() < 0.3:
                    text += " Buy and hold long term, sell if support breaks"
            out.append((text, 0))
    return out


# -- main generator --------------------------------------------------------


def generate_world(config: WorldConfig = WorldConfig()) -> World:
    cfg = config
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17]))
    C = cfg.n_categories

    # coins: category, size, social reach
    coins = tuple(_symbols(rng, cfg.n_coins, STABLECOINS))
    cats = rng.integers(0, C, size=cfg.n_coins)
    log_cap0 = rng.normal(17.0, cfg.coin_cap_std, size=cfg.n_coins)
    social = rng.normal(0.0, 1.0, size=cfg.n_coins)

    # channels: favoured categories (some categories are more popular) and cap centre
    cat_pop = np.linspace(2.0, 0.5, C)
    cat_pop /= cat_pop.sum()
    channels = tuple(f"ch{idx:03d}_{_handle(rng)}" for idx in range(cfg.n_channels))
    chan_cats = {}
    chan_mu = {}
    chan_soc = {}
    for ch in channels:
        k = min(cfg.categories_per_channel, C)
        chan_cats[ch] = tuple(sorted(rng.choice(C, size=k, replace=False, p=cat_pop).tolist()))
        chan_mu[ch] = float(rng.normal(cfg.channel_cap_mean, cfg.channel_cap_std))
        chan_soc[ch] = float(rng.normal(0.0, 1.0))
        n_avail = int(np.isin(cats, chan_cats[ch]).sum())
        if cfg.coins_per_channel_pool * 2 > n_avail:
            raise InfeasibleConfig(
                f"pool of {cfg.coins_per_channel_pool} needs at least {2 * cfg.coins_per_channel_pool} coins "
                f"in the channel's categories, found {n_avail}")

    # event schedule per channel; busier channels pump more often over the same span
    rate = np.exp(rng.normal(0.0, cfg.activity_skew, size=cfg.n_channels))
    rate *= cfg.n_channels / rate.sum()
    mean_gap = 0.5 * (cfg.min_spacing_days + cfg.max_spacing_days)
    max_count = max(1, int(cfg.events_per_channel * mean_gap / MIN_GAP_DAYS))
    counts = np.clip(np.round(cfg.events_per_channel * rate).astype(int), 1, max_count)
    # hand events lost to clipping back to the next busiest channels with room
    deficit = cfg.n_channels * cfg.events_per_channel - int(counts.sum())
    for i in np.argsort(-rate, kind="stable"):
        if deficit == 0:
            break
        step = int(np.clip(deficit, counts[i] - max_count, max_count - counts[i]))
        step = max(step, 1 - counts[i])
        counts[i] += step
        deficit -= step
    schedules = {}
    for ch, count in zip(channels, counts):
        scale = cfg.events_per_channel / count
        t = cfg.start + int(rng.uniform(4, 12) * DAY)
        times = []
        for _ in range(count):
            t = (t // HOUR) * HOUR + int(rng.integers(12, 22)) * HOUR - (t % DAY // HOUR) * HOUR
            times.append(t)
            gap = max(MIN_GAP_DAYS, rng.uniform(cfg.min_spacing_days, cfg.max_spacing_days) * scale)
            t += int(gap * DAY)
        schedules[ch] = times
    first = min(min(v) for v in schedules.values())
    last = max(max(v) for v in schedules.values())
    f1, f2 = cfg.split_fractions
    t1 = int(first + f1 * (last - first)) // DAY * DAY
    t2 = int(first + f2 * (last - first)) // DAY * DAY

    # listings: most coins early, a fraction only after the training period
    list_day0 = (cfg.start - 30 * DAY) // DAY * DAY
    listed_at = np.full(cfg.n_coins, list_day0, dtype=np.int64)
    late = rng.random(cfg.n_coins) < cfg.late_listing_fraction
    late_days = rng.uniform(t1, t2 + 0.5 * (last - t2), size=cfg.n_coins)
    listed_at[late] = (late_days[late].astype(np.int64) // DAY) * DAY
    listings = Listings()
    for i, sym in enumerate(coins):
        listings.add(EXCHANGE, sym, PAIRING, int(listed_at[i]))
    for sym in STABLECOINS:
        listings.add(EXCHANGE, sym, PAIRING, int(list_day0))

    initial_cats = dict(chan_cats)

    # plan pumps in global time order so pools and cold-start choices are causal
    order = sorted((t, ch) for ch, ts in schedules.items() for t in ts)
    pools: dict[str, list[int]] = {ch: [] for ch in channels}
    pumped_before_t1 = np.zeros(cfg.n_coins, dtype=bool)
    pool_history = {ch: [] for ch in channels}
    n_done = {ch: 0 for ch in channels}
    events = []

    def candidates(ch, t, exclude=()):
        ok = np.isin(cats, chan_cats[ch]) & (listed_at <= t - 3 * DAY)
        for i in exclude:
            ok[i] = False
        return np.flatnonzero(ok)

    def draw(ch, t, exclude=(), only=None):
        idx = candidates(ch, t, exclude)
        if only is not None:
            idx = idx[only[idx]]
        if idx.size == 0:
            idx = candidates(ch, t, exclude)
        if idx.size == 0:
            # favoured categories exhausted: fall back to any listed coin
            ok = listed_at <= t - 3 * DAY
            ok[list(exclude)] = False
            idx = np.flatnonzero(ok)
        z = ((log_cap0[idx] - chan_mu[ch]) / cfg.cap_affinity) ** 2 + ((social[idx] - chan_soc[ch]) / cfg.social_affinity) ** 2
        w = np.exp(-0.5 * (z - z.min())) + 1e-9
        return int(rng.choice(idx, p=w / w.sum()))

    for t, ch in order:
        pool = pools[ch]
        if not pool:
            while len(pool) < cfg.coins_per_channel_pool:
                pool.append(draw(ch, t, exclude=pool))
        else:
            if rng.random() < cfg.category_drift:
                # the channel swaps one favoured category for another
                cur = list(chan_cats[ch])
                others = [c for c in range(C) if c not in cur]
                if others:
                    p_o = cat_pop[others] / cat_pop[others].sum()
                    cur[int(rng.integers(len(cur)))] = int(rng.choice(others, p=p_o))
                    chan_cats[ch] = tuple(sorted(cur))
            # mean-reverting walk of the channel's preferred size and reach
            r = cfg.walk_reversion
            chan_mu[ch] = cfg.channel_cap_mean + r * (chan_mu[ch] - cfg.channel_cap_mean) + float(rng.normal(0.0, cfg.cap_walk))
            chan_soc[ch] = r * chan_soc[ch] + float(rng.normal(0.0, cfg.cap_walk))
            for j in range(len(pool)):
                if rng.random() < cfg.pool_turnover:
                    pool[j] = draw(ch, t, exclude=pool)
        h = cfg.history_noise_horizon
        if h is not None and n_done[ch] > 0 and n_done[ch] % h == 0:
            # regime change: the channel abandons its pool and cap range
            chan_mu[ch] = float(rng.normal(cfg.channel_cap_mean, cfg.channel_cap_std))
            chan_soc[ch] = float(rng.normal(0.0, 1.0))
            pool[:] = []
            while len(pool) < cfg.coins_per_channel_pool:
                pool.append(draw(ch, t, exclude=pool))
        if t >= t2 and rng.random() < cfg.cold_start_fraction:
            fresh = draw(ch, t, exclude=pool, only=~pumped_before_t1)
            pool[int(rng.integers(len(pool)))] = fresh
            target = fresh
        else:
            target = pool[int(rng.integers(len(pool)))]
        if t < t1:
            pumped_before_t1[target] = True
        pool_history[ch].append(tuple(pool))
        n_done[ch] += 1
        events.append(PumpEvent(int(t), ch, EXCHANGE, PAIRING, coins[target]))

    # optional co-hosted pumps: a second channel posts the same coin minutes later
    cohosted = 0
    if cfg.federation_rate > 0:
        busy = {ch: sorted(schedules[ch]) for ch in channels}
        extra = []
        for e in list(events):
            if rng.random() >= cfg.federation_rate:
                continue
            other = channels[int(rng.integers(len(channels)))]
            if other == e.channel_id:
                continue
            if any(abs(s - e.pump_time) < 6 * DAY for s in busy[other]):
                continue
            t_co = e.pump_time + int(rng.integers(1, 10)) * 60
            busy[other].append(t_co)
            busy[other].sort()
            extra.append(PumpEvent(t_co, other, e.exchange, e.pairing_coin, e.target_coin))
        cohosted = len(extra)
        events.extend(extra)
    events.sort()

    # market data
    start_h = (cfg.start - 6 * DAY) // HOUR * HOUR
    end_h = (last + 3 * DAY) // HOUR * HOUR
    hours = np.arange(start_h, end_h + 1, HOUR, dtype=np.int64)
    store, stats = _market(rng, cfg, coins, log_cap0, social, listed_at, hours, events)

    # messages
    messages, ambiguous = _messages(rng, cfg, coins, cats, channels, events, schedules, listed_at)

    labeled = _labeled_docs(rng, coins)
    corpus = _embedding_docs(rng, coins, cats, cfg)
    return World(cfg, coins, cats, channels, messages, store, stats, listings, events, labeled, corpus,
                 t1, t2, ambiguous, initial_cats, pool_history, cohosted)


def _market(rng, cfg, coins, log_cap0, social, listed_at, hours, events):
    n, T = len(coins), hours.size
    steps = rng.normal(0.0, cfg.price_noise, size=(n, T))
    steps[:, 0] = 0.0
    log_price = np.cumsum(steps, axis=1) + rng.uniform(-12, -6, size=(n, 1))
    log_vol = (log_cap0[:, None] - 9.0) + rng.normal(0.0, cfg.volume_noise, size=(n, T))
    index = {s: i for i, s in enumerate(coins)}
    seen = set()
    for e in events:
        key = (e.target_coin, e.pump_time)
        if key in seen:
            continue
        seen.add(key)
        i = index[e.target_coin]
        k = int((e.pump_time - hours[0]) // HOUR)
        dt = k - np.arange(T)             # hours before pump
        ramp = np.clip((57.0 - dt) / 56.0, 0.0, 1.0) * (dt >= 1)
        shape = np.where(dt >= 1, ramp, 0.0)
        after = dt <= 0
        peak = np.log1p(cfg.pre_pump_drift) + np.log(rng.uniform(1.3, 2.0))
        decay = np.exp(dt.clip(max=0) / 3.0)
        bump = np.log1p(cfg.pre_pump_drift) * shape + np.where(after, peak * decay, 0.0)
        log_price[i] += bump
        log_vol[i] += cfg.pre_pump_volume * shape * (cfg.pre_pump_drift > 0) + np.where(after, 2.5 * decay, 0.0)
    close = np.exp(log_price)
    opn = np.concatenate([close[:, :1], close[:, :-1]], axis=1)
    wick = np.abs(rng.normal(0.0, cfg.price_noise / 2, size=(n, T, 2)))
    high = np.maximum(opn, close) * (1.0 + wick[:, :, 0])
    low = np.minimum(opn, close) * (1.0 - wick[:, :, 1])
    vol = np.exp(log_vol)
    store = CandleStore()
    for i, sym in enumerate(coins):
        ok = hours >= listed_at[i] - 3 * DAY
        store.add(sym, PAIRING, CandleSeries(hours[ok], opn[i, ok], high[i, ok], low[i, ok], close[i, ok],
                                             vol[i, ok]))

    # daily stats: slowly drifting cap, web rank and social reach tied to cap
    days = np.arange(hours[0] // DAY * DAY, hours[-1] + 1, DAY, dtype=np.int64)
    stats = StatsTable()
    drift = np.cumsum(rng.normal(0.0, 0.02, size=(n, days.size)), axis=1)
    for i, sym in enumerate(coins):
        lc = log_cap0[i] + drift[i]
        mcap = np.round(np.exp(lc), 2)
        alexa = np.maximum(1, np.round(np.exp(30.0 - lc + rng.normal(0.0, 0.3, size=days.size))))
        reddit = np.round(np.exp(lc - 8.0 + social[i]))
        twitter = np.round(np.exp(lc - 7.0 + social[i] + rng.normal(0.0, 0.05, size=days.size)))
        ok = days >= listed_at[i] - 30 * DAY
        stats.add_coin(sym, days[ok], np.stack([mcap, alexa, reddit, twitter], axis=1)[ok])
    return store, stats


def _messages(rng, cfg, coins, cats, channels, events, schedules, listed_at):
    msgs = []
    next_id = {ch: 1 for ch in channels}
    handles = {ch: ch.split("_", 1)[1] for ch in channels}

    def post(ch, t, text):
        msgs.append(Message(ch, next_id[ch], int(t), text))
        next_id[ch] += 1

    def chatter(ch, t):
        if rng.random() < 0.7:
            post(ch, t, CHATTER[int(rng.integers(len(CHATTER)))])
        elif rng.random() < 0.6:
            i, j = rng.integers(0, len(coins), size=2)
            words = CATEGORY_WORDS[cats[i]]
            w = rng.choice(words, size=2, replace=False)
            post(ch, t, NEWS[int(rng.integers(len(NEWS)))].format(sym=coins[i], sym2=coins[j], w1=w[0], w2=w[1]))
        else:
            other = channels[int(rng.integers(len(channels)))]
            post(ch, t, INVITE[int(rng.integers(len(INVITE)))].format(handle=handles[other]))

    # one uniform per planted event so higher noise corrupts a superset of releases
    noise_u = {(e.channel_id, e.pump_time): rng.random() for e in events}
    by_channel = {}
    for e in events:
        by_channel.setdefault(e.channel_id, []).append(e)
    for ch in channels:
        evs = sorted(by_channel.get(ch, []))
        for k, e in enumerate(evs):
            T = e.pump_time
            ex = e.exchange.capitalize()
            pair = e.pairing_coin
            cohost = T not in schedules[ch]
            if not cohost:
                post(ch, T - 60 * HOUR, ANNOUNCE[int(rng.integers(len(ANNOUNCE)))].format(
                    when=_fmt_time(T), ex=ex, pair=pair))
                for n_h, off in ((40, 40 * HOUR), (20, 20 * HOUR), (4, 4 * HOUR), (1, HOUR)):
                    post(ch, T - off, COUNTDOWN[int(rng.integers(len(COUNTDOWN)))].format(n=n_h, ex=ex, pair=pair))
                for _ in range(cfg.chatter_per_session):
                    chatter(ch, T - int(rng.uniform(4.5, 19.5) * HOUR))
            else:
                post(ch, T - 20 * HOUR, ANNOUNCE[int(rng.integers(len(ANNOUNCE)))].format(
                    when=_fmt_time(T), ex=ex, pair=pair))
            post(ch, T - 5 * 60, LAST_CALL[int(rng.integers(len(LAST_CALL)))])
            if noise_u[(ch, T)] < cfg.message_noise:
                post(ch, T, NOISY_RELEASE[int(rng.integers(len(NOISY_RELEASE)))].format(sym=e.target_coin))
            else:
                post(ch, T, RELEASE[int(rng.integers(len(RELEASE)))].format(sym=e.target_coin))
            post(ch, T + 20 * 60, REVIEW[int(rng.integers(len(REVIEW)))].format(
                sym=e.target_coin, gain=int(rng.integers(20, 400))))
            # quiet chatter session halfway to the next announcement
            if k + 1 < len(evs):
                gap_mid = (T + evs[k + 1].pump_time - 60 * HOUR) // 2
                if evs[k + 1].pump_time - 60 * HOUR - T > 3 * DAY:
                    chatter(ch, gap_mid)

    ambiguous = []
    if cfg.ambiguous_sessions:
        for _ in range(cfg.ambiguous_sessions):
            ch = channels[int(rng.integers(len(channels)))]
            evs = sorted(by_channel.get(ch, []))
            if len(evs) < 2:
                continue
            k = int(rng.integers(len(evs) - 1))
            lo, hi = evs[k].pump_time, evs[k + 1].pump_time - 60 * HOUR
            if hi - lo < 4 * DAY:
                continue
            mid = (lo + hi) // 2 + 6 * HOUR
            a, b = rng.choice(len(coins), size=2, replace=False)
            post(ch, mid, "Surprise flash pump on Binance, pair BTC! Coin name in 10 minutes")
            post(ch, mid + 600, RELEASE[0].format(sym=coins[a]))
            post(ch, mid + 900, RELEASE[0].format(sym=coins[b]))
            ambiguous.append((ch, mid, mid + 900))

    msgs.sort(key=lambda m: (m.timestamp, m.channel_id, m.message_id))
    return msgs, ambiguous


# -- audit -----------------------------------------------------------------


def ground_truth_audit(world: World, extracted: Sequence[PumpEvent], review_sessions: Sequence = ()) -> dict:
    """Compare extracted quintuples with the planted ones.

    Returns precision, recall, the unmatched events on both sides, and
    whether every injected ambiguous session landed in the review file.
    """
    planted = {(e.channel_id, e.pump_time, e.exchange, e.pairing_coin, e.target_coin) for e in world.events}
    got = {(e.channel_id, e.pump_time, e.exchange, e.pairing_coin, e.target_coin) for e in extracted}
    tp = len(planted & got)
    amb_in_review = all(any(s.channel_id == ch and s.start <= start and end <= s.end for s in review_sessions)
                        for ch, start, end in world.ambiguous)
    amb_in_events = sum(1 for e in extracted for ch, s, end in world.ambiguous
                        if e.channel_id == ch and s <= e.pump_time <= end)
    return {
        "planted": len(planted),
        "extracted": len(got),
        "precision": tp / len(got) if got else 1.0,
        "recall": tp / len(planted) if planted else 1.0,
        "missed": sorted(planted - got),
        "spurious": sorted(got - planted),
        "ambiguous_in_review": amb_in_review,
        "ambiguous_in_events": amb_in_events,
    }


def pool_overlap(world: World) -> tuple[float, float]:
    """Mean Jaccard overlap of pool snapshots within channels versus across channels."""
    def jac(a, b):
        a, b = set(a), set(b)
        return len(a & b) / len(a | b)

    within, across = [], []
    chans = [ch for ch in world.channels if world.pool_history[ch]]
    for ch in chans:
        snaps = world.pool_history[ch]
        within.extend(jac(a, b) for a, b in zip(snaps, snaps[1:]))
    for a_ch, b_ch in zip(chans, chans[1:]):
        across.append(jac(world.pool_history[a_ch][0], world.pool_history[b_ch][0]))
    return float(np.mean(within)) if within else 0.0, float(np.mean(across)) if across else 0.0
