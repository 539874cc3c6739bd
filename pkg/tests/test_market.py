"""Candle and stats ingestion, window returns and window features."""

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pumpsnn.corpus import Message
from pumpsnn.errors import MalformedRow, MissingData, NonMonotonicTime
from pumpsnn.market import (
    HOUR,
    WINDOWS,
    CandleSeries,
    CandleStore,
    Listings,
    StatsTable,
    compute_window_features,
    dump_candles,
    dump_listings,
    dump_stats,
    load_candles,
    load_listings,
    load_stats,
    replay,
    window_return,
)

T = 1_600_000_000 // HOUR * HOUR


def _series(closes, t_end=T, vol=None):
    c = np.asarray(closes, dtype=float)
    n = c.size
    times = t_end - HOUR * np.arange(n - 1, -1, -1, dtype=np.int64)
    o = np.concatenate([c[:1], c[:-1]])
    v = np.ones(n) if vol is None else np.asarray(vol, dtype=float)
    return CandleSeries(times, o, np.maximum(o, c) * 1.01, np.minimum(o, c) * 0.99, c, v)


def _store(closes, **kw):
    st_ = CandleStore()
    st_.add("AAA", "BTC", _series(closes, **kw))
    return st_


def _write(path, rows, header="open_time,open,high,low,close,volume"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")


class TestLoadCandles:
    def test_three_rows(self, tmp_path):
        _write(tmp_path / "c.csv", ["0,1,2,0.5,1.5,10", "60,1.5,2,1,1.2,3", "120,1.2,1.3,1.1,1.25,0"])
        assert len(load_candles(tmp_path / "c.csv", "AAA", "BTC")) == 3

    def test_high_below_low(self, tmp_path):
        _write(tmp_path / "c.csv", ["0,1,2,0.5,1.5,10", "60,1,0.5,2,1,3"])
        with pytest.raises(MalformedRow) as exc:
            load_candles(tmp_path / "c.csv", "AAA", "BTC")
        assert exc.value.line == 3

    def test_non_monotonic(self, tmp_path):
        _write(tmp_path / "c.csv", ["60,1,2,0.5,1.5,10", "0,1,2,0.5,1.5,10"])
        with pytest.raises(NonMonotonicTime):
            load_candles(tmp_path / "c.csv", "AAA", "BTC")

    def test_gaps_recorded(self, tmp_path):
        _write(tmp_path / "c.csv", ["0,1,1,1,1,1", "60,1,1,1,1,1", "300,1,1,1,1,1"])
        assert load_candles(tmp_path / "c.csv", "AAA", "BTC").gaps[("AAA", "BTC")] == 1

    def test_round_trip_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        store = CandleStore()
        for coin in ("AAA", "BBB"):
            store.add(coin, "BTC", _series(np.exp(rng.normal(0, 0.1, 50).cumsum()), vol=rng.random(50)))
        dump_candles(store, tmp_path / "a.csv")
        dump_candles(load_candles(tmp_path / "a.csv"), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestWindowReturn:
    def test_arithmetic(self):
        closes = np.full(80, 50.0)
        closes[-61] = 100.0   # t - 61h (series ends at t - 1h)
        closes[-1] = 110.0
        store = _store(closes, t_end=T - HOUR)
        assert window_return(store, "AAA", "BTC", T, 60) == pytest.approx(0.10)

    @pytest.mark.parametrize("x", WINDOWS)
    def test_flat(self, x):
        assert window_return(_store(np.full(100, 3.0)), "AAA", "BTC", T + HOUR, x) == 0.0

    def test_tolerance(self):
        store = _store(np.arange(1, 101, dtype=float))
        # endpoints 4 minutes off still resolve; 6 minutes off do not
        assert window_return(store, "AAA", "BTC", T + HOUR + 240, 3) == pytest.approx(3 / 97)
        with pytest.raises(MissingData):
            window_return(store, "AAA", "BTC", T + HOUR + 1800, 3)

    def test_missing_series(self):
        with pytest.raises(MissingData):
            window_return(CandleStore(), "AAA", "BTC", T, 1)

    @given(st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
    @settings(max_examples=30)
    def test_scale_invariant(self, c, seed):
        rng = np.random.default_rng(seed)
        s = _series(np.exp(rng.normal(0, 0.05, 100).cumsum()))
        a, b = CandleStore(), CandleStore()
        a.add("AAA", "BTC", s)
        b.add("AAA", "BTC", s.scaled(c))
        for x in WINDOWS:
            ra = window_return(a, "AAA", "BTC", T + HOUR, x)
            rb = window_return(b, "AAA", "BTC", T + HOUR, x)
            assert rb == pytest.approx(ra, rel=1e-12, abs=1e-15)


def _oracle_features(path, t):
    """Independent loop-based recomputation from the CSV rows."""
    rows = {}
    with open(path) as fh:
        for r in csv.DictReader(fh):
            rows[int(r["open_time"])] = (float(r["close"]), float(r["volume"]))
    out = []
    for x in WINDOWS:
        a, b = t - (x + 1) * HOUR, t - HOUR
        if a not in rows or b not in rows:
            out.append((0.0, 0.0, 0.0, 0.0, 1.0))
            continue
        closes = [rows[k][0] for k in range(a, b + 1, HOUR)]
        vols = [rows[k][1] for k in range(a, b + 1, HOUR)]
        lr = [math.log(closes[i + 1] / closes[i]) for i in range(len(closes) - 1)]
        out.append(((closes[-1] - closes[0]) / closes[0], sum(vols) / len(vols), max(vols),
                    math.sqrt(sum(r * r for r in lr) / len(lr)), 0.0))
    return np.array(out)


class TestWindowFeatures:
    def test_full_store_no_flags(self):
        f = compute_window_features(_store(np.linspace(1, 2, 100)), "AAA", "BTC", T + HOUR)
        assert f.imputed == 0 and np.all(np.isfinite(f.vector()))

    def test_empty_store_all_flags(self):
        f = compute_window_features(CandleStore(), "AAA", "BTC", T)
        assert f.imputed == len(WINDOWS)
        assert np.all(f.ret == 0) and np.all(f.vol_mean == 0) and np.all(f.volatility == 0)

    def test_short_history_partial_flags(self):
        f = compute_window_features(_store(np.linspace(1, 2, 30)), "AAA", "BTC", T + HOUR)
        assert f.missing.tolist() == [x + 1 > 29 for x in WINDOWS]

    def test_recompute_oracle(self, tmp_path):
        rng = np.random.default_rng(11)
        s = _series(np.exp(rng.normal(0, 0.03, 90).cumsum()), vol=rng.random(90) * 100)
        with open(tmp_path / "c.csv", "w") as fh:
            fh.write("open_time,open,high,low,close,volume\n")
            for k in range(len(s)):
                vals = [float(a[k]) for a in (s.open, s.high, s.low, s.close, s.volume)]
                fh.write(f"{s.open_time[k]}," + ",".join(repr(v) for v in vals) + "\n")
        store = load_candles(tmp_path / "c.csv", "AAA", "BTC")
        for t in (T + HOUR, T - 5 * HOUR):
            f = compute_window_features(store, "AAA", "BTC", t)
            got = np.stack([f.ret, f.vol_mean, f.vol_max, f.volatility, f.missing], axis=1)
            np.testing.assert_allclose(got, _oracle_features(tmp_path / "c.csv", t), rtol=1e-12, atol=1e-12)

    @given(st.integers(0, 2**31 - 1), st.booleans())
    @settings(max_examples=30)
    def test_volatility_zero_iff_constant(self, seed, constant):
        rng = np.random.default_rng(seed)
        closes = np.full(80, 2.5) if constant else np.exp(rng.normal(0, 0.02, 80).cumsum())
        f = compute_window_features(_store(closes), "AAA", "BTC", T + HOUR)
        assert np.all(f.volatility >= 0)
        assert np.all(f.volatility == 0) == constant


class TestStats:
    def test_round_trip_and_lag(self, tmp_path):
        t = StatsTable()
        days = np.array([0, 1, 2, 3, 4]) * 86_400 + 1_600_041_600
        t.add_coin("AAA", days, np.column_stack([np.arange(5) + 1e6, [9, 8, 7, 6, 5], [1] * 5, [2] * 5]))
        dump_stats(t, tmp_path / "s.csv")
        back = load_stats(tmp_path / "s.csv")
        # three days before day 4 at noon is day 1
        assert back.before_pump("AAA", int(days[4]) + 43_200)[0] == 1e6 + 1
        assert back.lookup("AAA", int(days[0]) - 1) is None

    def test_bad_alexa_rank(self, tmp_path):
        (tmp_path / "s.csv").write_text(
            "coin,date,market_cap,alexa_rank,reddit_subscribers,twitter_followers\nAAA,2020-01-01,1,0,1,1\n")
        with pytest.raises(MalformedRow):
            load_stats(tmp_path / "s.csv")


class TestListings:
    def test_snapshot(self, tmp_path):
        ls = Listings()
        ls.add("binance", "AAA", "BTC", 1_577_836_800)
        ls.add("binance", "BBB", "BTC", 1_580_515_200, 1_583_020_800)
        ls.add("binance", "CCC", "ETH", 1_577_836_800)
        dump_listings(ls, tmp_path / "l.csv")
        back = load_listings(tmp_path / "l.csv")
        assert back.listed("binance", "BTC", 1_581_000_000) == ["AAA", "BBB"]
        assert back.listed("binance", "BTC", 1_584_000_000) == ["AAA"]


class TestReplay:
    def test_time_order(self):
        store = _store([1.0, 1.0, 1.0])
        msgs = [Message("c", 1, int(T - HOUR), "hi"), Message("c", 2, int(T - 30 * 60), "yo")]
        kinds = [(k, getattr(x, "open_time", getattr(x, "timestamp", None))) for k, x in replay(store, msgs)]
        times = [t for _, t in kinds]
        assert times == sorted(times)
        assert kinds[1:3] == [("candle", T - HOUR), ("message", T - HOUR)]
