"""OHLCV candles, daily coin statistics, listings and pre-pump window features."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedRow, MissingData, NonMonotonicTime

HOUR = 3600
WINDOWS = (1, 3, 6, 12, 24, 48, 60, 72)
TOLERANCE = 300
STATS_LAG = 72 * HOUR
WINDOW_FIELDS = ("ret", "vol_mean", "vol_max", "volatility", "missing")
CANDLE_HEADER = ("open_time", "open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class Candle:
    coin: str
    pairing: str
    open_time: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if not (self.low <= min(self.open, self.close) <= max(self.open, self.close) <= self.high):
            raise ValueError("candle violates low <= open/close <= high")
        if self.volume < 0:
            raise ValueError("negative volume")


@dataclass
class CandleSeries:
    """Column arrays for one (coin, pairing), sorted by strictly increasing open_time."""

    open_time: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __len__(self):
        return int(self.open_time.size)

    def nearest(self, t, tol: int = TOLERANCE):
        """Index of the candle nearest each time in ``t`` (-1 where none within ``tol``)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        ot = self.open_time
        if ot.size == 0:
            return np.full(t.shape, -1, dtype=np.int64)
        i = np.searchsorted(ot, t)
        lo = np.clip(i - 1, 0, ot.size - 1)
        hi = np.clip(i, 0, ot.size - 1)
        pick = np.where(np.abs(t - ot[lo]) <= np.abs(ot[hi] - t), lo, hi)
        return np.where(np.abs(ot[pick] - t) <= tol, pick, -1)

    def scaled(self, c: float) -> "CandleSeries":
        return CandleSeries(self.open_time, self.open * c, self.high * c, self.low * c,
                            self.close * c, self.volume)


@dataclass
class CandleStore:
    series: dict = field(default_factory=dict)
    gaps: dict = field(default_factory=dict)

    def __len__(self):
        return sum(len(s) for s in self.series.values())

    def get(self, coin: str, pairing: str) -> CandleSeries | None:
        return self.series.get((coin, pairing))

    def add(self, coin: str, pairing: str, s: CandleSeries) -> None:
        if s.open_time.size > 1 and np.any(np.diff(s.open_time) <= 0):
            raise NonMonotonicTime(f"{coin}/{pairing}: open_time not strictly increasing")
        self.series[(coin, pairing)] = s
        if s.open_time.size > 1:
            d = np.diff(s.open_time)
            step = np.min(d)
            self.gaps[(coin, pairing)] = int(np.sum(d > step))
        else:
            self.gaps[(coin, pairing)] = 0

    def candles(self, coin: str, pairing: str) -> Iterable[Candle]:
        s = self.series[(coin, pairing)]
        for k in range(len(s)):
            yield Candle(coin, pairing, int(s.open_time[k]), float(s.open[k]), float(s.high[k]),
                         float(s.low[k]), float(s.close[k]), float(s.volume[k]))


def _fmt(v: float) -> str:
    return repr(float(v))


def load_candles(path, coin: str | None = None, pairing: str | None = None) -> CandleStore:
    """Read a candle CSV into a store.

    The file either carries ``coin,pairing`` leading columns or holds a single
    pair, in which case ``coin`` and ``pairing`` must be given. Rows must
    satisfy the OHLC ordering and be strictly increasing in time per pair.
    """
    rows: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return CandleStore()
        header = [h.strip() for h in header]
        multi = header[:2] == ["coin", "pairing"]
        if (header[2:] if multi else header) != list(CANDLE_HEADER):
            raise MalformedRow(1, f"unexpected header {header}")
        if not multi and (coin is None or pairing is None):
            raise ValueError("single-pair candle file needs coin and pairing")
        for lineno, rec in enumerate(reader, 2):
            if not rec:
                continue
            key = (rec[0], rec[1]) if multi else (coin, pairing)
            vals = rec[2:] if multi else rec
            if len(vals) != 6:
                raise MalformedRow(lineno, f"expected 6 values, got {len(vals)}")
            try:
                t = int(vals[0])
                o, h, lo, c, v = (float(x) for x in vals[1:])
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from None
            if not all(math.isfinite(x) for x in (o, h, lo, c, v)):
                raise MalformedRow(lineno, "non-finite value")
            if not (lo <= min(o, c) <= max(o, c) <= h):
                raise MalformedRow(lineno, "OHLC ordering violated (need low <= open,close <= high)")
            if v < 0:
                raise MalformedRow(lineno, "negative volume")
            buf = rows.setdefault(key, [])
            if buf and t <= buf[-1][0]:
                raise NonMonotonicTime(f"line {lineno}: {key[0]}/{key[1]} time {t} after {buf[-1][0]}")
            buf.append((t, o, h, lo, c, v))
    store = CandleStore()
    for key, buf in rows.items():
        a = np.array(buf, dtype=np.float64)
        store.add(key[0], key[1], CandleSeries(a[:, 0].astype(np.int64), a[:, 1], a[:, 2], a[:, 3],
                                               a[:, 4], a[:, 5]))
    return store


def dump_candles(store: CandleStore, path) -> None:
    """Write every series in (coin, pairing) order with the multi-pair header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("coin,pairing," + ",".join(CANDLE_HEADER) + "\n")
        for coin, pairing in sorted(store.series):
            s = store.series[(coin, pairing)]
            for k in range(len(s)):
                fh.write(f"{coin},{pairing},{int(s.open_time[k])},{_fmt(s.open[k])},{_fmt(s.high[k])},"
                         f"{_fmt(s.low[k])},{_fmt(s.close[k])},{_fmt(s.volume[k])}\n")


def window_return(store: CandleStore, coin: str, pairing: str, pump_time: int, x: int) -> float:
    """Return from ``x + 1`` hours before the pump to 1 hour before it."""
    s = store.get(coin, pairing)
    if s is None:
        raise MissingData(f"no candles for {coin}/{pairing}")
    i_s, i_e = s.nearest([pump_time - (x + 1) * HOUR, pump_time - HOUR])
    if i_s < 0 or i_e < 0:
        raise MissingData(f"{coin}/{pairing}: window endpoint missing for x={x} at t={pump_time}")
    return float((s.close[i_e] - s.close[i_s]) / s.close[i_s])


@dataclass(frozen=True)
class WindowFeatures:
    """Per-window market movement ending one hour before the pump.

    Each attribute is an array aligned with ``windows``. ``volatility`` is the
    root mean square of consecutive close-to-close log returns in the window.
    """

    windows: tuple
    ret: np.ndarray
    vol_mean: np.ndarray
    vol_max: np.ndarray
    volatility: np.ndarray
    missing: np.ndarray

    @property
    def imputed(self) -> int:
        return int(self.missing.sum())

    def vector(self) -> np.ndarray:
        return np.stack([self.ret, self.vol_mean, self.vol_max, self.volatility,
                         self.missing.astype(np.float64)], axis=1).ravel()


def window_feature_names(windows: Sequence[int] = WINDOWS) -> list[str]:
    return [f"{f}_{x}h" for x in windows for f in WINDOW_FIELDS]


def window_stats(series: CandleSeries | None, pump_times, windows: Sequence[int] = WINDOWS) -> np.ndarray:
    """Window features of one series at many pump times.

    Returns an array of shape (len(pump_times), len(windows), 5) with columns
    ``WINDOW_FIELDS``; missing windows are zero with the flag set.
    """
    t = np.atleast_1d(np.asarray(pump_times, dtype=np.int64))
    out = np.zeros((t.size, len(windows), len(WINDOW_FIELDS)))
    out[:, :, 4] = 1.0
    if series is None or len(series) == 0 or t.size == 0:
        return out
    close, vol = series.close, series.volume
    logret = np.diff(np.log(close))
    i_e = series.nearest(t - HOUR)
    for w, x in enumerate(windows):
        i_s = series.nearest(t - (x + 1) * HOUR)
        ok = (i_s >= 0) & (i_e >= 0) & (i_s < i_e)
        if not ok.any():
            continue
        s, e = i_s[ok], i_e[ok]
        out[ok, w, 0] = (close[e] - close[s]) / close[s]
        span = e - s + 1
        grid = s[:, None] + np.arange(span.max())[None, :]
        inside = grid <= e[:, None]
        g = np.where(inside, grid, 0)
        v = np.where(inside, vol[g], 0.0)
        out[ok, w, 1] = v.sum(axis=1) / span
        out[ok, w, 2] = np.where(inside, vol[g], -np.inf).max(axis=1)
        r_inside = grid[:, :-1] < e[:, None] if grid.shape[1] > 1 else np.zeros((s.size, 0), bool)
        r = np.where(r_inside, logret[np.where(r_inside, grid[:, :-1], 0)], 0.0)
        out[ok, w, 3] = np.sqrt((r * r).sum(axis=1) / (span - 1))
        out[ok, w, 4] = 0.0
    return out


def compute_window_features(store: CandleStore, coin: str, pairing: str, pump_time: int,
                            windows: Sequence[int] = WINDOWS) -> WindowFeatures:
    a = window_stats(store.get(coin, pairing), [pump_time], windows)[0]
    return WindowFeatures(tuple(windows), a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4].astype(bool))


# -- coin statistics -------------------------------------------------------

STATS_FIELDS = ("market_cap", "alexa_rank", "reddit_subscribers", "twitter_followers")


@dataclass(frozen=True)
class CoinStats:
    coin: str
    as_of: int
    market_cap: float
    alexa_rank: int
    reddit_subscribers: int
    twitter_followers: int

    def __post_init__(self):
        if self.alexa_rank < 1:
            raise ValueError("alexa_rank must be >= 1")
        if min(self.market_cap, self.reddit_subscribers, self.twitter_followers) < 0:
            raise ValueError("negative count in coin stats")


def _day(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%d")


def _parse_day(s: str) -> int:
    return int(datetime.strptime(s, "%Y-%m-%d").replace(tzinfo=timezone.utc).timestamp())


@dataclass
class StatsTable:
    """Daily records per coin; lookups snap to the latest record at or before a time."""

    days: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    def add_coin(self, coin: str, days: np.ndarray, values: np.ndarray) -> None:
        order = np.argsort(days, kind="stable")
        self.days[coin] = np.asarray(days, dtype=np.int64)[order]
        self.values[coin] = np.asarray(values, dtype=np.float64)[order]

    def lookup(self, coin: str, t: int) -> np.ndarray | None:
        d = self.days.get(coin)
        if d is None:
            return None
        i = np.searchsorted(d, t, side="right") - 1
        if i < 0:
            return None
        return self.values[coin][i]

    def before_pump(self, coin: str, pump_time: int) -> np.ndarray | None:
        """Record in force three days before ``pump_time``."""
        return self.lookup(coin, pump_time - STATS_LAG)

    def records(self) -> Iterable[CoinStats]:
        for coin in sorted(self.days):
            for d, v in zip(self.days[coin], self.values[coin]):
                yield CoinStats(coin, int(d), float(v[0]), int(v[1]), int(v[2]), int(v[3]))


def load_stats(path) -> StatsTable:
    """CSV with header ``coin,date,market_cap,alexa_rank,reddit_subscribers,twitter_followers``."""
    by_coin: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, rec in enumerate(reader, 2):
            try:
                cs = CoinStats(rec["coin"], _parse_day(rec["date"]), float(rec["market_cap"]),
                               int(rec["alexa_rank"]), int(rec["reddit_subscribers"]),
                               int(rec["twitter_followers"]))
            except (KeyError, ValueError) as exc:
                raise MalformedRow(lineno, str(exc)) from None
            by_coin.setdefault(cs.coin, []).append(cs)
    table = StatsTable()
    for coin, recs in by_coin.items():
        table.add_coin(coin, np.array([r.as_of for r in recs]),
                       np.array([[r.market_cap, r.alexa_rank, r.reddit_subscribers, r.twitter_followers]
                                 for r in recs]))
    return table


def dump_stats(table: StatsTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("coin,date," + ",".join(STATS_FIELDS) + "\n")
        for r in table.records():
            fh.write(f"{r.coin},{_day(r.as_of)},{_fmt(r.market_cap)},{r.alexa_rank},"
                     f"{r.reddit_subscribers},{r.twitter_followers}\n")


# -- exchange listings -----------------------------------------------------


@dataclass
class Listings:
    """Listing intervals per (exchange, coin, pairing); ``delisted_at`` of None means still listed."""

    rows: list = field(default_factory=list)

    def add(self, exchange: str, coin: str, pairing: str, listed_at: int, delisted_at: int | None = None):
        self.rows.append((exchange, coin, pairing, int(listed_at), delisted_at))

    def listed(self, exchange: str, pairing: str, t: int) -> list[str]:
        """Coins tradable against ``pairing`` on ``exchange`` at time ``t``, sorted."""
        return sorted({c for ex, c, p, a, d in self.rows
                       if ex == exchange and p == pairing and a <= t and (d is None or t < d)})

    def coins(self) -> list[str]:
        return sorted({r[1] for r in self.rows})


def load_listings(path) -> Listings:
    """CSV with header ``exchange,coin,pairing,listed_date,delisted_date`` (dates YYYY-MM-DD)."""
    out = Listings()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.DictReader(fh), 2):
            try:
                d = rec.get("delisted_date") or ""
                out.add(rec["exchange"], rec["coin"], rec["pairing"], _parse_day(rec["listed_date"]),
                        _parse_day(d) if d else None)
            except (KeyError, ValueError) as exc:
                raise MalformedRow(lineno, str(exc)) from None
    return out


def dump_listings(listings: Listings, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("exchange,coin,pairing,listed_date,delisted_date\n")
        for ex, c, p, a, d in sorted(listings.rows, key=lambda r: (r[0], r[1], r[2], r[3])):
            fh.write(f"{ex},{c},{p},{_day(a)},{_day(d) if d is not None else ''}\n")


def replay(store: CandleStore, messages: Sequence = ()) -> Iterable[tuple]:
    """Yield ``("candle", Candle)`` and ``("message", Message)`` items in time order.

    Ties go to candles first, then by (coin, pairing) / (channel, message id).
    """
    streams = []
    for coin, pairing in sorted(store.series):
        streams.append(((c.open_time, 0, coin, pairing, "candle", c) for c in store.candles(coin, pairing)))
    msgs = sorted(messages, key=lambda m: (m.timestamp, m.channel_id, m.message_id))
    streams.append(((m.timestamp, 1, m.channel_id, m.message_id, "message", m) for m in msgs))
    for item in heapq.merge(*streams, key=lambda r: r[:4]):
        yield item[4], item[5]
