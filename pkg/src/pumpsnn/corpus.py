"""Message ingestion, text cleaning, keyword filtering and TF-IDF features."""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyCorpus

URL_RE = re.compile(r"(?:https?://|t\.me/|telegram\.me/|www\.)\S*", re.IGNORECASE)
TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
INVITE_RE = re.compile(
    r"(?:https?://)?(?:t\.me|telegram\.me)/(?:joinchat/|\+)?([A-Za-z0-9_\-]+)",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Message:
    channel_id: str
    message_id: int
    timestamp: int
    text: str

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be positive, got {self.timestamp}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "channel_id": self.channel_id,
                "message_id": self.message_id,
                "timestamp": self.timestamp,
                "text": self.text,
            },
            ensure_ascii=False,
        )


def _read_wordlist(name: str) -> frozenset[str]:
    text = resources.files("pumpsnn.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


STOP_WORDS = _read_wordlist("stopwords.txt")


def load_wordlist(path) -> frozenset[str]:
    """Read a UTF-8 newline-delimited word file, lowercased, blanks skipped."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


def default_lexicon(coin_symbols: Iterable[str] = ()) -> frozenset[str]:
    """Pump keywords and exchange names shipped with the package, plus coins."""
    words = _read_wordlist("keywords.txt") | _read_wordlist("exchanges.txt")
    words |= _read_wordlist("pairing_coins.txt")
    return words | {s.lower() for s in coin_symbols}


def read_messages(path) -> list[Message]:
    """Load a JSON-Lines message dump. Duplicate (channel, message_id) pairs raise."""
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            msg = Message(
                channel_id=str(rec["channel_id"]),
                message_id=int(rec["message_id"]),
                timestamp=int(rec["timestamp"]),
                text=str(rec["text"]),
            )
            key = (msg.channel_id, msg.message_id)
            if key in seen:
                raise ValueError(f"line {lineno}: duplicate message id {key}")
            seen.add(key)
            out.append(msg)
    return out


def write_messages(path, msgs: Iterable[Message]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in msgs:
            fh.write(m.to_json() + "\n")


def tokenize(text: str, stop_words: frozenset[str] = STOP_WORDS) -> list[str]:
    """Lowercase alphanumeric tokens with URLs, emoji, punctuation and stop words removed.

    >>> tokenize("Buy $FIC now!! https://t.me/x")
    ['buy', 'fic', 'now']
    """
    text = URL_RE.sub(" ", text.lower())
    return [t for t in TOKEN_RE.findall(text) if t not in stop_words]


def keyword_filter(msg: Message | str, lexicon: frozenset[str]) -> bool:
    """True if the message should be kept for classification."""
    text = msg.text if isinstance(msg, Message) else msg
    return any(tok in lexicon for tok in TOKEN_RE.findall(URL_RE.sub(" ", text.lower())))


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if idx.shape != w.shape:
            raise ValueError("indices and weights differ in length")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        if np.any(w == 0):
            raise ValueError("zero-weight entries are not stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls) -> "SparseVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    def __len__(self):
        return int(self.indices.size)

    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.weights.tolist()))

    def dot(self, dense: np.ndarray) -> float:
        return float(np.dot(dense[self.indices], self.weights))

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.weights, self.weights)))


@dataclass(frozen=True)
class TfidfVocabulary:
    term_to_index: Mapping[str, int]
    doc_freq: np.ndarray
    n_docs: int
    idf: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.term_to_index)

    @property
    def terms(self) -> list[str]:
        return sorted(self.term_to_index, key=self.term_to_index.__getitem__)

    def digest(self) -> str:
        """Stable hash of terms and document frequencies, stored with models."""
        h = hashlib.sha256()
        for t in self.terms:
            h.update(t.encode("utf-8") + b"\0")
        h.update(np.asarray(self.doc_freq, dtype="<i8").tobytes())
        h.update(str(self.n_docs).encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {"terms": self.terms, "doc_freq": self.doc_freq.tolist(), "n_docs": self.n_docs}

    @classmethod
    def from_dict(cls, d: dict) -> "TfidfVocabulary":
        return _make_vocab(d["terms"], d["doc_freq"], d["n_docs"])


def _make_vocab(terms, doc_freq, n_docs) -> TfidfVocabulary:
    df = np.asarray(doc_freq, dtype=np.int64)
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    return TfidfVocabulary({t: i for i, t in enumerate(terms)}, df, int(n_docs), idf)


def fit_vocabulary(docs: Sequence[Sequence[str]], min_df: int = 2) -> TfidfVocabulary:
    """Document frequencies over ``docs``; terms below ``min_df`` are dropped.

    Column indices follow lexicographic term order so fitting is deterministic.
    """
    if len(docs) == 0:
        raise EmptyCorpus("cannot fit a vocabulary on zero documents")
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df = Counter()
    for doc in docs:
        df.update(set(doc))
    terms = sorted(t for t, c in df.items() if c >= min_df)
    return _make_vocab(terms, [df[t] for t in terms], len(docs))


def tfidf_transform(doc: Sequence[str], vocab: TfidfVocabulary) -> SparseVector:
    """L2-normalised tf-idf with tf = count / len(doc); OOV tokens are ignored."""
    if not doc:
        return SparseVector.empty()
    counts = Counter(t for t in doc if t in vocab.term_to_index)
    if not counts:
        return SparseVector.empty()
    n = len(doc)
    items = sorted((vocab.term_to_index[t], c / n * vocab.idf[vocab.term_to_index[t]])
                   for t, c in counts.items())
    idx = np.array([i for i, _ in items], dtype=np.int64)
    w = np.array([v for _, v in items])
    w /= math.sqrt(float(np.dot(w, w)))
    return SparseVector(idx, w)


def tfidf_matrix(docs: Sequence[Sequence[str]], vocab: TfidfVocabulary):
    """Stack transformed docs into a scipy CSR matrix (rows = docs)."""
    from scipy import sparse

    indptr = [0]
    indices = []
    data = []
    for doc in docs:
        v = tfidf_transform(doc, vocab)
        indices.append(v.indices)
        data.append(v.weights)
        indptr.append(indptr[-1] + len(v))
    return sparse.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.asarray(indptr),
        ),
        shape=(len(docs), len(vocab)),
    )


def extract_invite_links(msgs: Iterable[Message | str]) -> set[str]:
    """Channel handles from t.me links, including joinchat and ``+`` invite forms."""
    handles = set()
    for m in msgs:
        text = m.text if isinstance(m, Message) else m
        handles.update(INVITE_RE.findall(text))
    return handles


def snowball(seed_channels: Iterable[str], dumps: Mapping[str, Sequence[Message]],
             max_rounds: int = 10) -> list[set[str]]:
    """Breadth-first channel discovery over offline message dumps.

    ``dumps`` maps a channel handle to its messages; channels without a dump are
    discovered but cannot be expanded. Returns the frontier added in each round,
    starting with the seed set.
    """
    seen = set(seed_channels)
    rounds = [set(seen)]
    frontier = set(seen)
    for _ in range(max_rounds):
        found = set()
        for ch in sorted(frontier):
            found |= extract_invite_links(dumps.get(ch, ()))
        frontier = found - seen
        if not frontier:
            break
        seen |= frontier
        rounds.append(frontier)
    return rounds
