"""Logistic-regression pump-message detector over TF-IDF vectors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .corpus import SparseVector, TfidfVocabulary
from .errors import SingleClassData
from .evaluation import auc

MODEL_VERSION = 1


@dataclass(frozen=True)
class LabeledDoc:
    vector: SparseVector
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class LogRegConfig:
    lr: float = 0.5
    epochs: int = 500
    l2: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray
    bias: float
    config: LogRegConfig = field(default_factory=LogRegConfig)
    trace: tuple = ()
    vocab: TfidfVocabulary | None = None

    def save(self, path) -> None:
        doc = {
            "version": MODEL_VERSION,
            "vocab_digest": self.vocab.digest() if self.vocab is not None else None,
            "vocab": self.vocab.to_dict() if self.vocab is not None else None,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "config": asdict(self.config),
            "trace": [list(t) for t in self.trace],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "LogRegModel":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported detector model version {doc.get('version')}")
        vocab = TfidfVocabulary.from_dict(doc["vocab"]) if doc["vocab"] else None
        if vocab is not None and vocab.digest() != doc["vocab_digest"]:
            raise ValueError("vocabulary digest mismatch")
        return cls(
            np.asarray(doc["weights"], dtype=np.float64),
            float(doc["bias"]),
            LogRegConfig(**doc["config"]),
            tuple(tuple(t) for t in doc["trace"]),
            vocab,
        )


def _as_csr(X, n_features=None):
    if sparse.issparse(X):
        return X.tocsr()
    if len(X) and isinstance(X[0], SparseVector):
        indptr = np.cumsum([0] + [len(v) for v in X])
        idx = np.concatenate([v.indices for v in X])
        val = np.concatenate([v.weights for v in X])
        if n_features is None:
            n_features = int(idx.max()) + 1 if idx.size else 0
        return sparse.csr_matrix((val, idx, indptr), shape=(len(X), n_features))
    return sparse.csr_matrix(np.asarray(X, dtype=np.float64))


def loss_and_grad(w, b, X, y, l2):
    """Mean binary cross-entropy plus ``l2 * |w|^2 / 2`` and its gradient."""
    z = X @ w + b
    # log(1 + e^z) - y z, stable for large |z|
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
    r = (_sigmoid(z) - y) / y.size
    return loss, X.T @ r + l2 * w, float(r.sum())


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_logreg(data, config: LogRegConfig = LogRegConfig(), vocab: TfidfVocabulary | None = None,
                 n_features=None) -> LogRegModel:
    """Fit on a list of :class:`LabeledDoc` by full-batch gradient descent."""
    X = [d.vector for d in data]
    y = [d.label for d in data]
    return fit_logreg(X, y, config, n_features=n_features, vocab=vocab)


def fit_logreg(X, y, config: LogRegConfig = LogRegConfig(), n_features=None,
               vocab: TfidfVocabulary | None = None) -> LogRegModel:
    """Full-batch gradient descent from zero weights.

    ``X`` is a CSR matrix, dense array or list of SparseVector rows.
    """
    if len(y) == 0:
        raise ValueError("no training data")
    X = _as_csr(X, n_features if n_features is not None else (len(vocab) if vocab else None))
    y = np.asarray(y, dtype=np.float64)
    if np.unique(y).size < 2:
        raise SingleClassData("logistic regression needs both labels present")
    w = np.zeros(X.shape[1])
    b = 0.0
    trace = []
    for epoch in range(config.epochs):
        loss, gw, gb = loss_and_grad(w, b, X, y, config.l2)
        trace.append((epoch, loss))
        w = w - config.lr * gw
        b = b - config.lr * gb
    return LogRegModel(w, b, config, tuple(trace), vocab)


def predict_proba(model: LogRegModel, x) -> np.ndarray | float:
    """sigmoid(w.x + b) for one SparseVector or a batch (CSR / list of vectors)."""
    if isinstance(x, SparseVector):
        return float(_sigmoid(x.dot(model.weights) + model.bias))
    X = _as_csr(x, model.weights.size)
    return _sigmoid(X @ model.weights + model.bias)


def classify(model: LogRegModel, x, threshold: float = 0.2):
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p = predict_proba(model, x)
    if np.isscalar(p):
        return int(p >= threshold)
    return (p >= threshold).astype(np.int64)


def classification_report(preds, labels, scores=None) -> dict:
    """Precision, recall and F1 of hard predictions; AUC over ``scores``.

    When ``scores`` is omitted the AUC is computed from the hard predictions.
    """
    preds = np.asarray(preds).astype(bool)
    labels = np.asarray(labels).astype(bool)
    tp = int(np.sum(preds & labels))
    fp = int(np.sum(preds & ~labels))
    fn = int(np.sum(~preds & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "auc": auc(preds.astype(float) if scores is None else scores, labels),
    }


def stratified_split(labels, train_frac: float = 0.7, seed: int = 0):
    """Index arrays (train, test) preserving the label ratio in each part."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        cut = int(round(train_frac * idx.size))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
