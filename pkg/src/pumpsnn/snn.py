"""Sequence-based pump predictor with positional attention, in plain numpy.

The network concatenates three blocks and feeds them to a ReLU MLP:

* channel block: channel id embedding and channel numeric fields,
* target block: coin id embedding and target numeric fields,
* sequence block: per-field attention pooling over the channel's most recent
  pumped coins (coin id embedding plus their numeric stats).

Attention weights are ``exp(alpha[i, j])`` for position ``i`` and field ``j``,
normalised over unmasked positions. ``alpha`` is a free parameter matrix, not
a function of the input. Mode ``snn_v`` keeps ``alpha`` at zero (mean
pooling) and mode ``dnn`` drops the sequence block.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import Divergence, IdOutOfRange
from .evaluation import auc
from .features import DatasetSplit, Normalizer, SampleSet, downsample_negatives

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
EPS = 1e-7
Z_CLAMP = float(np.log((1.0 - EPS) / EPS))   # logit of 1 - EPS
PAD, UNK = 0, 1
MODES = ("dnn", "snn_v", "snn")
EMBEDDING_MODES = ("e2e", "pretrained")


@dataclass(frozen=True)
class SNNConfig:
    mode: str = "snn"
    embedding_mode: str = "e2e"
    N: int = 20
    hidden: tuple = (128, 64, 32)
    channel_dim: int = 8
    coin_dim: int = 32
    lr: float = 1e-3
    batch: int = 256
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    negative_rate: float | None = None
    emb_init_std: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ValueError(f"embedding_mode must be one of {EMBEDDING_MODES}")
        if self.mode == "dnn" and self.N != 0:
            object.__setattr__(self, "N", 0)
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def uses_sequence(self) -> bool:
        return self.mode != "dnn" and self.N > 0

    @property
    def learn_alpha(self) -> bool:
        return self.mode == "snn"


@dataclass
class Model:
    """Parameters plus everything needed to score a raw :class:`SampleSet`."""

    config: SNNConfig
    params: dict
    coins: tuple                   # row r >= 2 of coin_emb is coins[r - 2]
    channels: tuple                # row r >= 2 of channel_emb is channels[r - 2]
    channel_names: tuple
    target_names: tuple
    seq_names: tuple
    normalizer: Normalizer | None = None
    log: list = field(default_factory=list)

    @property
    def frozen(self) -> set:
        out = set()
        if self.config.embedding_mode == "pretrained":
            out.add("coin_emb")
        if not self.config.learn_alpha:
            out.add("alpha")
        return out

    @property
    def seq_fields(self) -> tuple:
        return ("coin_id",) + tuple(self.seq_names)

    def copy(self) -> "Model":
        return replace(self, params={k: v.copy() for k, v in self.params.items()}, log=list(self.log))

    # -- checkpoint ------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "coins": list(self.coins),
            "channels": list(self.channels),
            "channel_names": list(self.channel_names),
            "target_names": list(self.target_names),
            "seq_names": list(self.seq_names),
            "normalizer": self.normalizer.to_dict() if self.normalizer else None,
            "log": self.log,
        }
        np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)),
                 **{f"param_{k}": v for k, v in self.params.items()})

    @classmethod
    def load(cls, path) -> "Model":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            params = {k[len("param_"):]: z[k] for k in z.files if k.startswith("param_")}
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg = meta["config"]
        cfg["hidden"] = tuple(cfg["hidden"])
        return cls(
            SNNConfig(**cfg), params, tuple(meta["coins"]), tuple(meta["channels"]),
            tuple(meta["channel_names"]), tuple(meta["target_names"]), tuple(meta["seq_names"]),
            Normalizer.from_dict(meta["normalizer"]) if meta["normalizer"] else None, meta["log"],
        )


# -- parameter initialisation ----------------------------------------------


def _glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_model(config: SNNConfig, coins: Sequence[str], channels: Sequence[str], channel_names,
               target_names, seq_names, pretrained: np.ndarray | None = None,
               normalizer: Normalizer | None = None) -> Model:
    """Draw initial parameters; the draw order is fixed so modes share streams.

    ``pretrained`` (shape ``(len(coins), coin_dim)``) replaces the coin table
    in ``pretrained`` embedding mode. Rows 0 and 1 are the padding and
    unknown ids.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    p = {}
    p["channel_emb"] = rng.normal(0.0, config.emb_init_std, size=(len(channels) + 2, config.channel_dim))
    coin_emb = rng.normal(0.0, config.emb_init_std, size=(len(coins) + 2, config.coin_dim))
    if config.embedding_mode == "pretrained":
        if pretrained is None:
            raise ValueError("pretrained embedding mode needs a coin table")
        pretrained = np.asarray(pretrained, dtype=np.float64)
        if pretrained.shape != (len(coins), config.coin_dim):
            raise ValueError(f"pretrained table shape {pretrained.shape} != {(len(coins), config.coin_dim)}")
        coin_emb = np.vstack([np.zeros((2, config.coin_dim)), pretrained])
    coin_emb[PAD] = 0.0
    p["coin_emb"] = coin_emb
    p["channel_emb"][PAD] = 0.0
    n_fields = 1 + len(seq_names)
    if config.uses_sequence:
        p["alpha"] = np.zeros((config.N, n_fields))
    d_in = config.channel_dim + len(channel_names) + config.coin_dim + len(target_names)
    if config.uses_sequence:
        d_in += config.coin_dim + len(seq_names)
    sizes = (d_in,) + config.hidden + (1,)
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        p[f"W{i}"] = _glorot(rng, a, b)
        p[f"b{i}"] = np.zeros(b)
    return Model(config, p, tuple(coins), tuple(channels), tuple(channel_names), tuple(target_names),
                 tuple(seq_names), normalizer)


# -- encoding --------------------------------------------------------------


@dataclass
class Encoded:
    """Integer-id view of a SampleSet for one model's vocabularies."""

    ch: np.ndarray        # (L,)
    ch_num: np.ndarray    # (L, Xn)
    seq: np.ndarray       # (L, N)
    seq_num: np.ndarray   # (L, N, Kn)
    mask: np.ndarray      # (L, N)
    sample_list: np.ndarray
    tg: np.ndarray        # (S,)
    tg_num: np.ndarray    # (S, Yn)
    y: np.ndarray         # (S,)
    unknown_coins: int = 0
    unknown_channels: int = 0

    def __len__(self):
        return int(self.y.size)


def _lookup(vocab: Sequence[str], symbols: np.ndarray, pad_empty: bool = False):
    index = {s: i + 2 for i, s in enumerate(vocab)}
    flat = symbols.ravel()
    ids = np.fromiter((index.get(s, UNK) for s in flat), dtype=np.int64, count=flat.size)
    if pad_empty:
        ids[flat == ""] = PAD
    unknown = int(np.sum((ids == UNK) & ~((flat == "") if pad_empty else False)))
    return ids.reshape(symbols.shape), unknown


def encode(model: Model, ss: SampleSet, strict: bool = False) -> Encoded:
    """Map symbols to embedding rows; unseen ids go to the reserved unknown row.

    With ``strict`` an unseen id raises :class:`IdOutOfRange` instead.
    """
    for got, want, what in ((ss.channel_names, model.channel_names, "channel"),
                            (ss.target_names, model.target_names, "target"),
                            (ss.seq_names, model.seq_names, "sequence")):
        if tuple(got) != tuple(want):
            raise ValueError(f"{what} fields {tuple(got)} do not match the model's {tuple(want)}")
    n = model.config.N
    if model.config.uses_sequence and ss.N < n:
        raise ValueError(f"samples carry N={ss.N} positions, model needs {n}")
    ch, unk_ch = _lookup(model.channels, ss.list_channel)
    tg, unk_tg = _lookup(model.coins, ss.target_coin)
    seq, unk_seq = _lookup(model.coins, ss.seq_coin[:, :n], pad_empty=True)
    mask = ss.seq_mask[:, :n]
    seq = np.where(mask, seq, PAD)
    unknown = unk_tg + unk_seq
    if unknown or unk_ch:
        if strict:
            raise IdOutOfRange(f"{unknown} coin and {unk_ch} channel ids are outside the model vocabulary")
        log.info("mapped %d coin and %d channel ids to the unknown row", unknown, unk_ch)
    return Encoded(ch, ss.channel_numeric, seq, ss.seq_numeric[:, :n], mask, ss.sample_list, tg,
                   ss.target_numeric, ss.labels.astype(np.float64), unknown, unk_ch)


# -- forward / backward ----------------------------------------------------


def attention_weights(alpha: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Normalised per-field weights, shape (B, N, K); all-masked rows are zero."""
    if alpha.shape[0] == 0:
        return np.zeros(mask.shape + alpha.shape[1:])
    e = np.exp(alpha - alpha.max(axis=0, keepdims=True))            # (N, K)
    w = mask[:, :, None] * e[None, :, :]                              # (B, N, K)
    z = w.sum(axis=1, keepdims=True)
    return np.divide(w, z, out=np.zeros_like(w), where=z > 0)


def positional_attention(E: np.ndarray, X: np.ndarray, mask: np.ndarray, alpha: np.ndarray):
    """Pool a sequence into one vector with one weight column per field.

    ``E`` (B, N, d) holds the coin embeddings (field 0, all d dimensions share
    a weight) and ``X`` (B, N, K-1) the numeric fields. Returns the pooled
    coin vector (B, d), pooled numeric fields (B, K-1) and the weights P.
    """
    P = attention_weights(alpha, mask)
    h_coin = np.einsum("bn,bnd->bd", P[:, :, 0], E)
    h_num = (P[:, :, 1:] * X).sum(axis=1)
    return h_coin, h_num, P


def _scatter_rows(n_rows: int, index: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum ``values`` rows into an (n_rows, D) array at ``index`` (duplicates add up)."""
    index = index.ravel()
    values = values.reshape(index.size, values.shape[-1])
    out = np.zeros((n_rows, values.shape[1]), dtype=values.dtype)
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    idx = index[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    out[idx[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def _trim(batch: dict) -> int:
    """Number of leading positions that hold at least one real item in the batch."""
    used = np.flatnonzero(batch["mask"].any(axis=0))
    return int(used[-1]) + 1 if used.size else 0


def _gather(enc: Encoded, rows: np.ndarray):
    li = enc.sample_list[rows]
    return dict(ch=enc.ch[li], ch_num=enc.ch_num[li], seq=enc.seq[li], seq_num=enc.seq_num[li],
                mask=enc.mask[li], tg=enc.tg[rows], tg_num=enc.tg_num[rows], y=enc.y[rows])


def forward(model: Model, batch: dict, keep: bool = True):
    """Predicted probabilities for a gathered batch and, if ``keep``, the trace."""
    p = model.params
    cfg = model.config
    h_c = np.concatenate([p["channel_emb"][batch["ch"]], batch["ch_num"]], axis=1)
    h_t = np.concatenate([p["coin_emb"][batch["tg"]], batch["tg_num"]], axis=1)
    blocks = [h_c, h_t]
    trace = {}
    if cfg.uses_sequence:
        # trailing all-padding positions carry zero weight; skip them
        n = _trim(batch)
        E = p["coin_emb"][batch["seq"][:, :n]]
        X = batch["seq_num"][:, :n]
        h_coin, h_num, P = positional_attention(E, X, batch["mask"][:, :n], p["alpha"][:n])
        blocks += [h_coin, h_num]
        trace.update(E=E, h_coin=h_coin, h_num=h_num, P=P)
    a = np.concatenate(blocks, axis=1)
    acts = [a]
    n_layers = len(cfg.hidden) + 1
    for i in range(n_layers):
        z = a @ p[f"W{i}"] + p[f"b{i}"]
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(a)
    logit = acts[-1][:, 0]
    yhat = expit(logit)
    if not keep:
        return yhat, None
    trace.update(acts=acts, yhat=yhat, logit=logit)
    return yhat, trace


def bce(yhat, y) -> np.ndarray:
    """Per-sample negative log-likelihood with predictions clamped to [EPS, 1 - EPS]."""
    q = np.clip(yhat, EPS, 1.0 - EPS)
    return -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))


def batch_loss(yhat, y) -> float:
    return float(np.mean(bce(yhat, y)))


def bce_logits(logit, y) -> np.ndarray:
    """:func:`bce` evaluated from the logit.

    Clipping the logit at ``logit(1 - EPS)`` is the same clamp as in
    :func:`bce`, but ``1 - yhat`` is never formed, so confident predictions
    keep full relative precision.
    """
    z = np.clip(logit, -Z_CLAMP, Z_CLAMP)
    return np.logaddexp(0.0, z) - y * z


def logit_loss(logit, y) -> float:
    return float(np.mean(bce_logits(logit, y)))


def backward(model: Model, batch: dict, trace: dict) -> dict:
    """Exact gradients of :func:`logit_loss` for every parameter.

    Embedding gradients are scatter-added into the touched rows; frozen tables
    get an all-zero gradient.
    """
    p = model.params
    cfg = model.config
    y = batch["y"]
    yhat = trace["yhat"]
    B = y.size
    inside = np.abs(trace["logit"]) < Z_CLAMP
    g = np.where(inside, (yhat - y) / B, 0.0)[:, None]   # dL/dlogit
    acts = trace["acts"]
    grads = {}
    n_layers = len(cfg.hidden) + 1
    for i in reversed(range(n_layers)):
        grads[f"W{i}"] = acts[i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ p[f"W{i}"].T
        if i > 0:
            g = g * (acts[i] > 0)
    d_in = g
    cd, xd = cfg.channel_dim, len(model.channel_names)
    kd, yd = cfg.coin_dim, len(model.target_names)
    g_ch = d_in[:, :cd]
    g_tg = d_in[:, cd + xd: cd + xd + kd]

    grads["channel_emb"] = _scatter_rows(p["channel_emb"].shape[0], batch["ch"], g_ch)
    g_coin = _scatter_rows(p["coin_emb"].shape[0], batch["tg"], g_tg)

    if cfg.uses_sequence:
        off = cd + xd + kd + yd
        gc = d_in[:, off: off + kd]                        # d loss / d pooled coin vector
        gx = d_in[:, off + kd:]                            # d loss / d pooled numeric fields
        P, E = trace["P"], trace["E"]
        n = P.shape[1]
        X = batch["seq_num"][:, :n]
        h_coin, h_num = trace["h_coin"], trace["h_num"]
        g_coin += _scatter_rows(g_coin.shape[0], batch["seq"][:, :n], P[:, :, :1] * gc[:, None, :])
        # d h / d alpha_i = P_i (H_i - h) through the normalised weights
        s_coin = np.einsum("bnd,bd->bn", E, gc) - (h_coin * gc).sum(axis=1, keepdims=True)
        g_alpha = np.zeros_like(p["alpha"])
        g_alpha[:n, 0] = (P[:, :, 0] * s_coin).sum(axis=0)
        g_alpha[:n, 1:] = (P[:, :, 1:] * gx[:, None, :] * (X - h_num[:, None, :])).sum(axis=0)
        grads["alpha"] = g_alpha
    g_coin[PAD] = 0.0
    grads["channel_emb"][PAD] = 0.0
    grads["coin_emb"] = g_coin
    for name in model.frozen:
        if name in grads:
            grads[name] = np.zeros_like(grads[name])
    return grads


def loss_and_grads(model: Model, batch: dict):
    _, trace = forward(model, batch)
    return logit_loss(trace["logit"], batch["y"]), backward(model, batch, trace)


# -- training --------------------------------------------------------------


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8, skip=()):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.skip = set(skip)
        self.m = {k: np.zeros_like(v) for k, v in params.items() if k not in self.skip}
        self.v = {k: np.zeros_like(v) for k, v in params.items() if k not in self.skip}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in self.m:
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def model_for(split: DatasetSplit, config: SNNConfig, pretrained=None, coins=None, channels=None) -> Model:
    """Initialise a model whose vocabularies cover every coin and channel in ``split``.

    ``pretrained`` is either a ``(len(coins), d)`` array aligned with ``coins``
    or a mapping symbol -> vector.
    """
    parts = (split.train, split.validation, split.test)
    if coins is None:
        found = set()
        for ss in parts:
            found.update(ss.target_coin.tolist())
            found.update(ss.seq_coin[ss.seq_mask].tolist())
        coins = sorted(found)
    if channels is None:
        channels = sorted(set().union(*(ss.list_channel.tolist() for ss in parts)))
    table = None
    if pretrained is not None and config.embedding_mode == "pretrained":
        if hasattr(pretrained, "vector"):
            table = np.array([pretrained.vector(c) for c in coins])
        elif isinstance(pretrained, dict):
            table = np.array([pretrained[c] for c in coins])
        else:
            table = np.asarray(pretrained)
    tr = split.train
    return init_model(config, coins, channels, tr.channel_names, tr.target_names, tr.seq_names,
                      pretrained=table, normalizer=split.normalizer)


def predict_encoded(model: Model, enc: Encoded, batch: int = 8192) -> np.ndarray:
    out = np.empty(len(enc))
    for s in range(0, len(enc), batch):
        rows = np.arange(s, min(s + batch, len(enc)))
        out[rows], _ = forward(model, _gather(enc, rows), keep=False)
    return out


def train(split: DatasetSplit, config: SNNConfig = SNNConfig(), pretrained=None, coins=None,
          channels=None, model: Model | None = None) -> tuple[Model, list]:
    """Mini-batch Adam on the training part; keeps the epoch with the best validation AUC.

    Returns the best model and the per-epoch log
    (``{"epoch", "train_loss", "val_auc"}`` dicts).
    """
    if model is None:
        model = model_for(split, config, pretrained, coins, channels)
    train_ss = split.train
    if config.negative_rate is not None:
        train_ss = downsample_negatives(train_ss, config.negative_rate, config.seed)
    enc_tr = encode(model, train_ss)
    enc_va = encode(model, split.validation)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    opt = Adam(model.params, config.lr, skip=model.frozen)
    best, best_auc, stale = model.copy(), -np.inf, 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(enc_tr))
        total = 0.0
        for s in range(0, order.size, config.batch):
            rows = order[s: s + config.batch]
            batch = _gather(enc_tr, rows)
            loss, grads = loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise Divergence(f"non-finite loss at epoch {epoch}, step {s // config.batch}")
            opt.step(model.params, grads)
            total += loss * rows.size
        val_auc = auc(predict_encoded(model, enc_va), enc_va.y)
        rec = {"epoch": epoch, "train_loss": total / len(enc_tr), "val_auc": val_auc}
        history.append(rec)
        log.debug("epoch %d loss %.5f val_auc %.4f", epoch, rec["train_loss"], val_auc)
        if val_auc > best_auc:
            best, best_auc, stale = model.copy(), val_auc, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    best.log = history
    return best, history


def predict(model: Model, ss: SampleSet, return_info: bool = False):
    """Pump probability for every sample in ``ss`` (already normalised)."""
    enc = encode(model, ss)
    out = predict_encoded(model, enc)
    if return_info:
        return out, {"unknown_coins": enc.unknown_coins, "unknown_channels": enc.unknown_channels}
    return out


def l1_groups(model: Model, split) -> dict:
    """Embedding-row groups: train positive, train negative, untrained, unseen test positive."""
    index = {c: i + 2 for i, c in enumerate(model.coins)}
    tr, te = split.train, split.test
    tr_pos = set(tr.target_coin[tr.labels == 1])
    tr_all = set(tr.target_coin) | set(tr.seq_coin[tr.seq_mask])
    te_pos = set(te.target_coin[te.labels == 1])
    return {
        "train_positive": sorted(index[c] for c in tr_pos if c in index),
        "train_negative": sorted(index[c] for c in tr_all - tr_pos if c in index),
        "untrained": sorted(index[c] for c in model.coins if c not in tr_all),
        "test_positive_unseen": sorted(index[c] for c in te_pos - tr_pos if c in index),
    }


def export_attention_heatmap(model: Model, path=None) -> tuple[np.ndarray, str]:
    """Raw alpha as CSV (rows = positions 1..N, columns = sequence fields)."""
    if "alpha" not in model.params:
        raise ValueError("model has no sequence block")
    alpha = model.params["alpha"]
    lines = ["position," + ",".join(model.seq_fields)]
    for i, row in enumerate(alpha, 1):
        lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return alpha.copy(), text


def read_heatmap(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 1:]


def render_heatmap(alpha: np.ndarray, fields: Sequence[str]) -> str:
    """Text rendering: fields as rows, positions as columns, shaded by value."""
    shades = " .:-=+*#%@"
    lo, hi = float(alpha.min()), float(alpha.max())
    span = hi - lo if hi > lo else 1.0
    width = max(len(f) for f in fields)
    lines = [" " * width + " " + "".join(f"{i + 1:>3}" for i in range(alpha.shape[0]))]
    for j, f in enumerate(fields):
        cells = "".join(f"  {shades[int((alpha[i, j] - lo) / span * (len(shades) - 1))]}"
                        for i in range(alpha.shape[0]))
        lines.append(f.rjust(width) + " " + cells)
    lines.append(f"alpha range [{lo:.4f}, {hi:.4f}]")
    return "\n".join(lines) + "\n"


def gradient_check(model: Model, batch: dict, n_coords: int = 20, step: float = 1e-5,
                   rng: np.random.Generator | None = None, floor: float = 1e-6) -> dict:
    """Largest relative gap between analytic and central-difference gradients per parameter.

    Checks ``n_coords`` random entries of every trainable tensor; for embedding
    tables the entries are drawn from rows the batch actually touches.
    Relative error is ``|num - ana| / max(|num|, |ana|, floor)``.
    """
    rng = rng or np.random.default_rng(0)
    _, grads = loss_and_grads(model, batch)
    touched = {
        "coin_emb": np.unique(np.concatenate([batch["tg"], batch["seq"][batch["mask"]]])),
        "channel_emb": np.unique(batch["ch"]),
    }
    worst = {}
    for name, value in model.params.items():
        if name in model.frozen:
            continue
        if name in touched:
            rows = rng.choice(touched[name], size=n_coords)
            cols = rng.integers(0, value.shape[1], size=n_coords)
            coords = list(zip(rows.tolist(), cols.tolist()))
        else:
            flat = rng.choice(value.size, size=min(n_coords, value.size), replace=False)
            coords = [np.unravel_index(i, value.shape) for i in flat]
        err = 0.0
        for ix in coords:
            old = value[ix]
            value[ix] = old + step
            up = logit_loss(forward(model, batch)[1]["logit"], batch["y"])
            value[ix] = old - step
            down = logit_loss(forward(model, batch)[1]["logit"], batch["y"])
            value[ix] = old
            num, ana = (up - down) / (2 * step), grads[name][ix]
            err = max(err, abs(num - ana) / max(abs(num), abs(ana), floor))
        worst[name] = err
    return worst
