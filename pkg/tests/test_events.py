"""Sessions, quintuple extraction and cross-channel merging."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pumpsnn.corpus import Message
from pumpsnn.errors import AmbiguousEvent
from pumpsnn.events import (
    PumpEvent,
    Session,
    extract_event,
    merge_events,
    read_events,
    read_sessions,
    sessionize,
    write_events,
    write_sessions,
)

H = 3600
T0 = 1_600_000_000
LISTED = {"nas", "fic", "eth", "btc"}
EXCHANGES = {"binance", "yobit"}
PAIRINGS = {"btc", "eth"}


def _msgs(hours, ch="c"):
    return [Message(ch, i + 1, T0 + int(h * H), f"m{i}") for i, h in enumerate(hours)]


def _session(texts, ch="c", step=600):
    return Session(ch, tuple(Message(ch, i + 1, T0 + i * step, t) for i, t in enumerate(texts)))


class TestSessionize:
    def test_split_on_long_gap(self):
        s = sessionize(_msgs([0, 10, 40]))
        assert [[m.timestamp for m in x.messages] for x in s] == [[T0, T0 + 10 * H], [T0 + 40 * H]]

    def test_chain_of_short_gaps(self):
        assert len(sessionize(_msgs([0, 23.9, 47.8]))) == 1

    def test_exact_day_splits(self):
        assert len(sessionize(_msgs([0, 24]))) == 2

    def test_empty(self):
        assert sessionize([]) == []

    @given(st.lists(st.floats(0, 500), min_size=1, max_size=40),
           st.lists(st.sampled_from(["a", "b", "c"]), min_size=40, max_size=40))
    def test_partition(self, hours, chans):
        msgs = [Message(ch, i + 1, T0 + int(h * H), "x") for i, (h, ch) in enumerate(zip(hours, chans))]
        sessions = sessionize(msgs)
        flat = [m for s in sessions for m in s.messages]
        assert sorted(flat, key=id) == sorted(msgs, key=id) and len(flat) == len(msgs)
        for ch in set(chans[:len(hours)]):
            mine = [s for s in sessions if s.channel_id == ch]
            stream = sorted((m for m in msgs if m.channel_id == ch), key=lambda m: (m.timestamp, m.message_id))
            assert [m for s in mine for m in s.messages] == stream
            for s in mine:
                gaps = np.diff([m.timestamp for m in s.messages])
                assert np.all(gaps < 24 * H)
            for a, b in zip(mine, mine[1:]):
                assert b.start - a.end >= 24 * H


class TestExtract:
    def test_nas_example(self):
        s = _session(["pump on Binance, pair BTC", "next message is the coin", "NAS"])
        ev = extract_event(s, [1, 1, 0], LISTED, EXCHANGES, PAIRINGS)
        assert ev == PumpEvent(T0 + 1200, "c", "binance", "BTC", "NAS")

    def test_no_release(self):
        s = _session(["pump on binance pair btc", "get ready", "holding strong"])
        assert extract_event(s, [1, 1, 0], LISTED, EXCHANGES, PAIRINGS) is None

    def test_release_needs_prior_flag(self):
        s = _session(["NAS", "pump on binance pair btc"])
        assert extract_event(s, [0, 1], LISTED, EXCHANGES, PAIRINGS) is None

    def test_lowercase_is_not_release(self):
        s = _session(["pump on binance pair btc", "nas"])
        assert extract_event(s, [1, 0], LISTED, EXCHANGES, PAIRINGS) is None

    def test_pairing_symbol_not_target(self):
        s = _session(["pump on binance pair btc", "BTC", "FIC"])
        assert extract_event(s, [1, 0, 0], LISTED, EXCHANGES, PAIRINGS).target_coin == "FIC"

    def test_ambiguous(self):
        s = _session(["pump on binance pair btc", "NAS", "FIC"])
        with pytest.raises(AmbiguousEvent) as exc:
            extract_event(s, [1, 0, 0], LISTED, EXCHANGES, PAIRINGS)
        assert exc.value.symbols == ["FIC", "NAS"]

    def test_repeat_same_symbol_ok(self):
        s = _session(["pump on yobit pairing eth", "$FIC", "🚀 FIC 🚀"])
        ev = extract_event(s, [1, 0, 0], LISTED, EXCHANGES, PAIRINGS)
        assert (ev.exchange, ev.pairing_coin, ev.target_coin, ev.pump_time) == ("yobit", "ETH", "FIC", T0 + 600)

    def test_misaligned_flags(self):
        with pytest.raises(ValueError):
            extract_event(_session(["a", "b"]), [1], LISTED, EXCHANGES, PAIRINGS)


class TestMerge:
    def test_two_channels_minutes_apart(self):
        evs = [PumpEvent(T0 + 120, "b", "binance", "BTC", "NAS"), PumpEvent(T0, "a", "binance", "BTC", "NAS")]
        (m,) = merge_events(evs)
        assert m.pump_time == T0 and m.channels == {"a", "b"}
        assert m.channel_time("b") == T0 + 120

    def test_days_apart(self):
        evs = [PumpEvent(T0, "a", "binance", "BTC", "NAS"), PumpEvent(T0 + 72 * H, "b", "binance", "BTC", "NAS")]
        assert len(merge_events(evs)) == 2

    def test_different_coin_not_merged(self):
        evs = [PumpEvent(T0, "a", "binance", "BTC", "NAS"), PumpEvent(T0, "b", "binance", "BTC", "FIC")]
        assert len(merge_events(evs)) == 2

    @given(st.lists(st.tuples(st.integers(0, 20 * H), st.sampled_from("abcd"), st.sampled_from(["NAS", "FIC"])),
                    max_size=30))
    def test_cover_and_count(self, raw):
        evs = [PumpEvent(T0 + t, ch, "binance", "BTC", c) for t, ch, c in raw]
        merged = merge_events(evs)
        assert len(merged) <= len(evs)
        members = [e for m in merged for e in m.members]
        assert sorted(members) == sorted(evs)
        for m in merged:
            assert m.channels and m.pump_time == min(e.pump_time for e in m.members)

    def test_federation_rate_ground_truth(self):
        from pumpsnn.synth import WorldConfig, generate_world
        w = generate_world(WorldConfig(seed=4, n_channels=12, n_coins=120, events_per_channel=8,
                                       federation_rate=0.3, corpus_docs_per_coin=1))
        assert w.cohosted > 0
        merged = merge_events(w.events)
        # every co-hosted copy folds into its original; unrelated same-coin pumps
        # that happen to fall within the hour can merge too
        assert len(merged) <= len(w.events) - w.cohosted
        assert all(max(e.pump_time for e in m.members) - m.pump_time <= 3600 for m in merged)


class TestIO:
    def test_events_round_trip(self, tmp_path):
        evs = [PumpEvent(T0, "a", "binance", "BTC", "NAS")]
        write_events(tmp_path / "e.jsonl", evs)
        assert read_events(tmp_path / "e.jsonl") == evs

    def test_sessions_round_trip(self, tmp_path):
        s = sessionize(_msgs([0, 1, 50]))
        write_sessions(tmp_path / "s.jsonl", s)
        assert read_sessions(tmp_path / "s.jsonl") == s
