"""Ranking metrics (AUC, HR@k) and the experiment harness for model grids."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import SingleClassData

log = logging.getLogger(__name__)

HR_KS = (1, 3, 5, 10, 20, 30)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with tied scores counted as half a win.

    Uses average ranks, so the numerator is an exact multiple of 0.5 and the
    result matches the pairwise count bit for bit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassData("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pairwise(scores, labels) -> float:
    """O(P*N) brute force used as an oracle for :func:`auc`."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise SingleClassData("AUC needs at least one positive and one negative")
    diff = pos[:, None] - neg[None, :]
    wins = float(np.count_nonzero(diff > 0)) + 0.5 * float(np.count_nonzero(diff == 0))
    return wins / (pos.size * neg.size)


@dataclass(frozen=True)
class RankedList:
    event_ref: str
    coins: tuple
    scores: tuple
    positive_rank: int

    def top(self, k: int) -> list:
        return list(self.coins[:k])


def rank_list(event_ref: str, coins: Sequence[str], scores, labels) -> RankedList:
    """Sort one candidate list by score descending, ties by ascending symbol."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if labels.sum() != 1:
        raise ValueError(f"list {event_ref!r} has {int(labels.sum())} positives, expected 1")
    if not np.all(np.isfinite(scores)):
        raise ValueError(f"list {event_ref!r} has non-finite scores")
    coins = [str(c) for c in coins]
    order = sorted(range(len(coins)), key=lambda i: (-scores[i], coins[i]))
    pos_rank = 1 + order.index(int(np.flatnonzero(labels)[0]))
    return RankedList(
        event_ref,
        tuple(coins[i] for i in order),
        tuple(float(scores[i]) for i in order),
        pos_rank,
    )


def build_ranked_lists(list_ids, coins, scores, labels) -> list[RankedList]:
    """Group flat per-sample arrays into one RankedList per list id."""
    list_ids = np.asarray(list_ids)
    coins = np.asarray(coins)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(list_ids, kind="stable")
    bounds = np.flatnonzero(np.diff(list_ids[order])) + 1
    out = []
    for grp in np.split(order, bounds):
        if grp.size == 0:
            continue
        out.append(rank_list(str(list_ids[grp[0]]), coins[grp], scores[grp], labels[grp]))
    return out


def hit_ratio(lists: Sequence[RankedList], k: int) -> float:
    """Fraction of lists whose positive coin is within the top ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not lists:
        return 0.0
    return float(np.mean([rl.positive_rank <= k for rl in lists]))


def ranking_report(list_ids, coins, scores, labels, ks=HR_KS) -> dict:
    lists = build_ranked_lists(list_ids, coins, scores, labels)
    out = {"auc": auc(scores, labels), "n_lists": len(lists)}
    for k in ks:
        out[f"hr@{k}"] = hit_ratio(lists, k)
    return out


# -- experiment harness ----------------------------------------------------


@dataclass(frozen=True)
class Cell:
    mode: str
    embedding_mode: str
    N: int
    seed: int

    @property
    def name(self) -> str:
        emb = "" if self.embedding_mode == "e2e" else f"[{self.embedding_mode}]"
        return f"{self.mode}{emb}(N={self.N})"


def run_experiment(split, base_config, modes=("dnn", "snn_v", "snn"),
                   embedding_modes=("e2e",), lengths=(20,), seeds=(0,),
                   pretrained=None, ks=HR_KS) -> list[dict]:
    """Train and evaluate every (mode, embedding mode, N, seed) cell on one split.

    ``split`` is a :class:`~pumpsnn.features.DatasetSplit` built with the
    largest N in ``lengths``; shorter lengths are obtained by truncation.
    ``pretrained`` is the frozen coin table for the ``pretrained`` mode.
    Returns one row per cell with test AUC and HR@k.
    """
    from .snn import train, predict

    rows = []
    cache = {}
    for seed in seeds:
        for emb in embedding_modes:
            for mode in modes:
                for n in lengths:
                    n_eff = 0 if mode == "dnn" else n
                    key = ("dnn" if n_eff == 0 else mode, emb, n_eff, seed)
                    cell = Cell(mode, emb, n, seed)
                    if key not in cache:
                        cfg = replace(base_config, mode=key[0], embedding_mode=emb, N=n_eff, seed=seed)
                        part = split.with_length(n_eff)
                        params, _ = train(part, cfg, pretrained=pretrained if emb == "pretrained" else None)
                        test = part.test
                        scores = predict(params, test)
                        rep = ranking_report(test.list_ids, test.coin_symbols, scores, test.labels, ks)
                        cache[key] = (rep, params)
                    rep, params = cache[key]
                    row = {"mode": mode, "embedding": emb, "N": n, "seed": seed}
                    row.update(rep)
                    rows.append(row)
                    log.info("%s seed=%d auc=%.4f hr@3=%.3f", cell.name, seed, rep["auc"], rep.get("hr@3", float("nan")))
    return rows


def results_csv(rows: Iterable[dict]) -> str:
    rows = list(rows)
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def results_table(rows: Sequence[dict], ks=HR_KS) -> str:
    """Metrics as rows and models as columns, averaged over seeds."""
    groups: dict[str, list[dict]] = {}
    for r in rows:
        name = r["mode"].upper()
        if r["embedding"] != "e2e":
            name += f"[{r['embedding']}]"
        if r["mode"] != "dnn":
            name += f"(N={r['N']})"
        groups.setdefault(name, []).append(r)
    names = list(groups)
    metrics = ["auc"] + [f"hr@{k}" for k in ks]
    width = max(10, *(len(n) + 2 for n in names))
    lines = ["Metric".ljust(8) + "|" + "".join(n.rjust(width) for n in names)]
    lines.append("-" * len(lines[0]))
    for m in metrics:
        vals = [np.mean([r[m] for r in groups[n]]) for n in names]
        label = m.upper()
        lines.append(label.ljust(8) + "|" + "".join(f"{v:.3f}".rjust(width) for v in vals))
    return "\n".join(lines) + "\n"
