"""Session aggregation and pump-event extraction from channel messages."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Message, TOKEN_RE, URL_RE, tokenize
from .errors import AmbiguousEvent

DAY = 86_400
SESSION_GAP = DAY
PAIR_WORDS = ("pair", "pairing", "paired", "pairs")


@dataclass(frozen=True)
class Session:
    channel_id: str
    messages: tuple

    @property
    def start(self) -> int:
        return self.messages[0].timestamp

    @property
    def end(self) -> int:
        return self.messages[-1].timestamp


@dataclass(frozen=True, order=True)
class PumpEvent:
    pump_time: int
    channel_id: str
    exchange: str
    pairing_coin: str
    target_coin: str

    def __post_init__(self):
        if self.target_coin == self.pairing_coin:
            raise ValueError(f"target and pairing coin are both {self.target_coin}")

    def to_dict(self) -> dict:
        return {
            "channel_id": self.channel_id,
            "timestamp": self.pump_time,
            "exchange": self.exchange,
            "pairing_coin": self.pairing_coin,
            "target_coin": self.target_coin,
        }

    @classmethod
    def from_dict(cls, d) -> "PumpEvent":
        return cls(int(d["timestamp"]), str(d["channel_id"]), d["exchange"], d["pairing_coin"], d["target_coin"])


@dataclass(frozen=True)
class MergedEvent:
    pump_time: int
    channels: frozenset
    exchange: str
    pairing_coin: str
    target_coin: str
    members: tuple = field(default=(), compare=False, repr=False)

    @property
    def ref(self) -> str:
        return f"{self.pump_time}:{self.exchange}:{self.pairing_coin}:{self.target_coin}"

    def channel_time(self, channel_id: str) -> int:
        """Announce time of ``channel_id``'s own member event."""
        return min(e.pump_time for e in self.members if e.channel_id == channel_id)


def sessionize(msgs: Iterable[Message], gap: int = SESSION_GAP) -> list[Session]:
    """Split each channel's stream wherever adjacent messages are ``gap`` or more apart.

    Sessions are returned ordered by (channel, start time).
    """
    by_channel = defaultdict(list)
    for m in msgs:
        by_channel[m.channel_id].append(m)
    out = []
    for ch in sorted(by_channel):
        stream = sorted(by_channel[ch], key=lambda m: (m.timestamp, m.message_id))
        cur = [stream[0]]
        for prev, m in zip(stream, stream[1:]):
            if m.timestamp - prev.timestamp >= gap:
                out.append(Session(ch, tuple(cur)))
                cur = []
            cur.append(m)
        out.append(Session(ch, tuple(cur)))
    return out


def _raw_tokens(text: str) -> list[str]:
    return TOKEN_RE.findall(URL_RE.sub(" ", text))


def release_symbol(text: str, listed: frozenset[str], pairing_coins: frozenset[str] = frozenset()):
    """The coin symbol if ``text`` is a bare uppercase release like ``"$NAS"``."""
    toks = tokenize(text)
    if len(toks) != 1:
        return None
    sym = toks[0]
    if sym not in listed or sym in pairing_coins:
        return None
    raw = _raw_tokens(text)
    if len(raw) != 1 or not raw[0].isupper():
        return None
    return sym.upper()


def parse_announcement(texts: Sequence[str], exchanges: frozenset[str],
                       pairing_coins: frozenset[str]) -> tuple[str | None, str | None]:
    """First exchange name and pairing coin mentioned across ``texts``.

    A coin right after "pair"/"pairing" wins over a bare mention.
    """
    exchange = pairing = bare_pairing = None
    for text in texts:
        toks = tokenize(text)
        for i, t in enumerate(toks):
            if exchange is None and t in exchanges:
                exchange = t
            if t in pairing_coins:
                if pairing is None and i > 0 and toks[i - 1] in PAIR_WORDS:
                    pairing = t
                if bare_pairing is None:
                    bare_pairing = t
    return exchange, pairing or bare_pairing


def extract_event(session: Session, flags: Sequence[int], listed: Iterable[str],
                  exchanges: Iterable[str], pairing_coins: Iterable[str]) -> PumpEvent | None:
    """Quintuple for the session's pump, or None if no coin release is found.

    A release is a bare listed symbol posted after at least one message the
    detector flagged. Exchange and pairing coin come from earlier flagged
    messages, falling back to any earlier message.
    """
    if len(flags) != len(session.messages):
        raise ValueError("flags must align with session messages")
    listed = frozenset(s.lower() for s in listed)
    exchanges = frozenset(s.lower() for s in exchanges)
    pairing_coins = frozenset(s.lower() for s in pairing_coins)

    seen_flag = False
    releases = []
    for i, (m, f) in enumerate(zip(session.messages, flags)):
        if seen_flag:
            sym = release_symbol(m.text, listed, pairing_coins)
            if sym is not None:
                releases.append((i, sym))
        seen_flag = seen_flag or bool(f)
    if not releases:
        return None
    symbols = {s for _, s in releases}
    if len(symbols) > 1:
        raise AmbiguousEvent(session.channel_id, symbols)
    first, target = releases[0]
    before = session.messages[:first]
    flagged = [m.text for m, f in zip(before, flags) if f]
    exchange, pairing = parse_announcement(flagged, exchanges, pairing_coins)
    if exchange is None or pairing is None:
        ex2, pa2 = parse_announcement([m.text for m in before], exchanges, pairing_coins)
        exchange, pairing = exchange or ex2, pairing or pa2
    return PumpEvent(
        session.messages[first].timestamp,
        session.channel_id,
        exchange or "unknown",
        (pairing or "unknown").upper(),
        target,
    )


def extract_events(sessions: Sequence[Session], flags_by_message: dict, listed, exchanges,
                   pairing_coins) -> tuple[list[PumpEvent], list[Session]]:
    """Run :func:`extract_event` over sessions; ambiguous ones are set aside.

    ``flags_by_message`` maps (channel_id, message_id) to a 0/1 flag.
    """
    events, review = [], []
    for s in sessions:
        flags = [flags_by_message.get((m.channel_id, m.message_id), 0) for m in s.messages]
        try:
            ev = extract_event(s, flags, listed, exchanges, pairing_coins)
        except AmbiguousEvent:
            review.append(s)
            continue
        if ev is not None:
            events.append(ev)
    events.sort()
    return events, review


def merge_events(events: Iterable[PumpEvent], window: int = 3600) -> list[MergedEvent]:
    """Merge same-coin pumps whose times fall within ``window`` of the earliest one."""
    groups = defaultdict(list)
    for e in events:
        groups[(e.exchange, e.pairing_coin, e.target_coin)].append(e)
    out = []
    for key, evs in groups.items():
        evs.sort()
        cluster = [evs[0]]
        for e in evs[1:]:
            if e.pump_time - cluster[0].pump_time <= window:
                cluster.append(e)
            else:
                out.append(_merged(key, cluster))
                cluster = [e]
        out.append(_merged(key, cluster))
    out.sort(key=lambda m: (m.pump_time, m.target_coin))
    return out


def _merged(key, cluster) -> MergedEvent:
    exchange, pairing, target = key
    return MergedEvent(
        cluster[0].pump_time,
        frozenset(e.channel_id for e in cluster),
        exchange,
        pairing,
        target,
        tuple(cluster),
    )


def write_events(path, events: Iterable[PumpEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def read_events(path) -> list[PumpEvent]:
    with open(path, encoding="utf-8") as fh:
        return [PumpEvent.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_sessions(path, sessions: Iterable[Session]) -> None:
    """JSON-Lines, one session per line with its messages inline."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            rec = {
                "channel_id": s.channel_id,
                "start": s.start,
                "end": s.end,
                "messages": [json.loads(m.to_json()) for m in s.messages],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_sessions(path) -> list[Session]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            msgs = tuple(Message(m["channel_id"], int(m["message_id"]), int(m["timestamp"]), m["text"])
                         for m in rec["messages"])
            out.append(Session(rec["channel_id"], msgs))
    return out
