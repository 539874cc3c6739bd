"""Word embeddings (skip-gram and CBoW with negative sampling) for coin symbols."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyCorpus, UnknownSymbol

TABLE_VERSION = 1


@dataclass(frozen=True)
class EmbedConfig:
    d: int = 32
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    seed: int = 0
    min_count: int = 1
    batch: int = 256


@dataclass
class EmbeddingTable:
    tokens: tuple
    vectors: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.vectors.setflags(write=False)

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, token) -> bool:
        return str(token).lower() in self.index

    def vector(self, symbol: str) -> np.ndarray:
        return coin_embedding(self, symbol)

    def save(self, path) -> None:
        np.savez(path, meta=np.array(json.dumps({"version": TABLE_VERSION, **self.meta}, sort_keys=True)),
                 tokens=np.array(self.tokens, dtype=str), vectors=self.vectors, counts=self.counts)

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.pop("version") != TABLE_VERSION:
                raise ValueError("unsupported embedding table version")
            return cls(tuple(z["tokens"].tolist()), z["vectors"].copy(), z["counts"].copy(), meta)

    def dump_text(self, path) -> None:
        """word2vec text format: header line then ``token v1 v2 ...``."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(self.tokens)} {self.d}\n")
            for t, v in zip(self.tokens, self.vectors):
                fh.write(t + " " + " ".join(repr(float(x)) for x in v) + "\n")


def build_vocab(corpus: Sequence[Sequence[str]], min_count: int = 1, inject: Iterable[str] = ()):
    """Tokens with count >= min_count plus every injected symbol (lowercased).

    Ordered by descending count, then token, so ids are deterministic.
    """
    counts = Counter(t for doc in corpus for t in doc)
    keep = {t for t, c in counts.items() if c >= min_count}
    keep |= {s.lower() for s in inject}
    tokens = sorted(keep, key=lambda t: (-counts.get(t, 0), t))
    return tuple(tokens), np.array([counts.get(t, 0) for t in tokens], dtype=np.int64)


def negative_distribution(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    w = np.asarray(counts, dtype=np.float64) ** power
    if w.sum() == 0:
        w = np.ones_like(w)
    return w / w.sum()


class NegativeSampler:
    def __init__(self, counts, rng: np.random.Generator, power: float = 0.75):
        self.p = negative_distribution(counts, power)
        self.cdf = np.cumsum(self.p)
        self.cdf[-1] = 1.0
        self.rng = rng

    def draw(self, size) -> np.ndarray:
        u = self.rng.random(size)
        return np.minimum(np.searchsorted(self.cdf, u, side="right"), self.cdf.size - 1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def pair_objective(v, u_pos, u_neg):
    """Negative-sampling loss for one centre vector and its gradients.

    loss = -log s(u_pos.v) - sum_k log s(-u_neg[k].v)
    Returns (loss, d/dv, d/du_pos, d/du_neg).
    """
    sp = u_pos @ v
    sn = u_neg @ v
    loss = np.logaddexp(0.0, -sp) + np.sum(np.logaddexp(0.0, sn))
    gp = _sigmoid(sp) - 1.0
    gn = _sigmoid(sn)
    return float(loss), gp * u_pos + gn @ u_neg, gp * v, np.outer(gn, v)


def _encode(corpus, index):
    return [np.array([index[t] for t in doc if t in index], dtype=np.int64) for doc in corpus]


def _context_offsets(window):
    return [o for o in range(-window, window + 1) if o != 0]


def _skipgram_pairs(docs, window):
    centers, contexts = [], []
    for ids in docs:
        n = ids.size
        for o in _context_offsets(window):
            if n <= abs(o):
                continue
            lo, hi = max(0, -o), min(n, n - o)
            centers.append(ids[lo:hi])
            contexts.append(ids[lo + o: hi + o])
    if not centers:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _cbow_rows(docs, window):
    """Centre ids and padded context matrix (-1 = empty slot)."""
    offs = _context_offsets(window)
    centers, ctx = [], []
    for ids in docs:
        n = ids.size
        if n < 2:
            continue
        pos = np.arange(n)[:, None] + np.array(offs)[None, :]
        ok = (pos >= 0) & (pos < n)
        centers.append(ids)
        ctx.append(np.where(ok, ids[np.clip(pos, 0, n - 1)], -1))
    if not centers:
        return np.zeros(0, np.int64), np.zeros((0, len(offs)), np.int64)
    return np.concatenate(centers), np.concatenate(ctx)


def _train(corpus, config: EmbedConfig, inject, algorithm: str) -> EmbeddingTable:
    if len(corpus) == 0 or not any(len(d) for d in corpus):
        raise EmptyCorpus("embedding corpus is empty")
    tokens, counts = build_vocab(corpus, config.min_count, inject)
    index = {t: i for i, t in enumerate(tokens)}
    V, d = len(tokens), config.d
    rng = np.random.default_rng(config.seed)
    w_in = (rng.random((V, d)) - 0.5) / d
    w_out = np.zeros((V, d))
    sampler = NegativeSampler(counts, rng)
    docs = _encode(corpus, index)
    if algorithm == "skipgram":
        src, tgt = _skipgram_pairs(docs, config.window)
    else:
        tgt, ctx = _cbow_rows(docs, config.window)
        src = np.arange(tgt.size)
    n_rows = src.size
    total = max(1, config.epochs * n_rows)
    done = 0
    k = config.negatives
    for _ in range(config.epochs):
        order = rng.permutation(n_rows)
        for s in range(0, n_rows, config.batch):
            rows = order[s: s + config.batch]
            lr = config.lr * max(1e-4, 1.0 - done / total)
            done += rows.size
            if algorithm == "skipgram":
                centre = src[rows]
                h = w_in[centre]
            else:
                c = ctx[src[rows]]
                m = c >= 0
                cnt = m.sum(axis=1, keepdims=True)
                h = (w_in[np.where(m, c, 0)] * m[:, :, None]).sum(axis=1) / cnt
            out_pos = tgt[rows]
            neg = sampler.draw((rows.size, k))
            u = w_out[out_pos]
            un = w_out[neg]
            gp = _sigmoid(np.einsum("bd,bd->b", u, h)) - 1.0
            gn = _sigmoid(np.einsum("bkd,bd->bk", un, h))
            dh = gp[:, None] * u + np.einsum("bk,bkd->bd", gn, un)
            np.add.at(w_out, out_pos, -lr * gp[:, None] * h)
            np.add.at(w_out, neg.ravel(), (-lr * gn[:, :, None] * h[:, None, :]).reshape(-1, d))
            if algorithm == "skipgram":
                np.add.at(w_in, centre, -lr * dh)
            else:
                share = (-lr * dh / cnt)[:, None, :] * m[:, :, None]
                np.add.at(w_in, np.where(m, c, 0).ravel(), share.reshape(-1, d))
    meta = {"algorithm": algorithm, **asdict(config)}
    return EmbeddingTable(tokens, w_in, counts, meta)


def train_skipgram(corpus: Sequence[Sequence[str]], config: EmbedConfig = EmbedConfig(),
                   inject: Iterable[str] = ()) -> EmbeddingTable:
    """Skip-gram with negative sampling; symbols in ``inject`` are always in the vocabulary."""
    return _train(corpus, config, inject, "skipgram")


def train_cbow(corpus: Sequence[Sequence[str]], config: EmbedConfig = EmbedConfig(),
               inject: Iterable[str] = ()) -> EmbeddingTable:
    """CBoW with negative sampling: the mean context vector predicts the centre word."""
    return _train(corpus, config, inject, "cbow")


def coin_embedding(table: EmbeddingTable, symbol: str) -> np.ndarray:
    key = symbol.lower()
    if key not in table.index:
        raise UnknownSymbol(symbol)
    return table.vectors[table.index[key]]


def cosine(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def expected_l1_normal(d: int, std: float) -> float:
    """E|x|_1 for x ~ N(0, std^2 I_d)."""
    return d * std * np.sqrt(2.0 / np.pi)


def expected_l1_uniform(d: int, half_width: float) -> float:
    """E|x|_1 for x ~ U(-a, a)^d."""
    return d * half_width / 2.0


def l1_norm_report(vectors: np.ndarray, groups: Mapping[str, Sequence[int]]) -> dict:
    """Per-group l1-norm summary (count, mean, std, deciles) over rows of ``vectors``."""
    norms = np.abs(np.asarray(vectors)).sum(axis=1)
    out = {}
    for name, rows in groups.items():
        rows = np.asarray(list(rows), dtype=np.int64)
        if rows.size == 0:
            out[name] = {"count": 0, "mean": None, "std": None, "deciles": [], "histogram": []}
            continue
        v = norms[rows]
        hist, edges = np.histogram(v, bins=10)
        out[name] = {
            "count": int(v.size),
            "mean": float(v.mean()),
            "std": float(v.std()),
            "deciles": np.quantile(v, np.linspace(0.1, 0.9, 9)).tolist(),
            "histogram": [hist.tolist(), edges.tolist()],
        }
    return out


def _pair_sims(vecs: np.ndarray) -> np.ndarray:
    if len(vecs) < 2:
        return np.zeros(0)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    unit = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)
    sims = unit @ unit.T
    iu = np.triu_indices(len(vecs), k=1)
    return sims[iu]


def semantic_similarity_study(table: EmbeddingTable, histories: Mapping[str, Sequence[str]],
                              all_coins: Sequence[str]) -> dict:
    """Cosine-similarity distributions of coin pairs under three selection strategies.

    ``histories`` maps channel -> pumped coin symbols. Pairs are distinct coins
    (a) within one channel, (b) among all pumped coins, (c) among all coins.
    """
    def vecs(symbols):
        return np.array([coin_embedding(table, s) for s in sorted(set(symbols))]).reshape(-1, table.d)

    within = [_pair_sims(vecs(h)) for h in histories.values() if len(set(h)) >= 2]
    within = np.concatenate(within) if within else np.zeros(0)
    pumped = _pair_sims(vecs([c for h in histories.values() for c in h]))
    every = _pair_sims(vecs(all_coins))
    dists = {"same_channel": within, "pumped": pumped, "all": every}
    return {"distributions": dists,
            "means": {k: float(v.mean()) if v.size else float("nan") for k, v in dists.items()}}
