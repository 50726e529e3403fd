"""Level-specific prediction heads and the point / pair / list ranking losses.

All losses are computed for a single question group and return a scalar
:class:`~hierrank.diffcore.Tensor`; the training loop averages them over the
questions of a batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

LEVELS = ("point", "pair", "list")
LOG_EPS = 1e-12

ALL_PAIRS = "all-pairs"
MAX_NEGATIVE = "max-negative"


class HeadParams:
    """Two-layer perceptron: in_dim -> hidden (ReLU) -> out_dim."""

    def __init__(self, in_dim: int, out_dim: int, hidden: int, rng: np.random.Generator,
                 dtype=np.float32, prefix: str = "head"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        lim1 = np.sqrt(6.0 / (in_dim + hidden))
        lim2 = np.sqrt(6.0 / (hidden + out_dim))
        self.W1 = dc.parameter(rng.uniform(-lim1, lim1, (in_dim, hidden)), dtype, f"{prefix}.W1")
        self.b1 = dc.parameter(np.zeros(hidden), dtype, f"{prefix}.b1")
        self.W2 = dc.parameter(rng.uniform(-lim2, lim2, (hidden, out_dim)), dtype, f"{prefix}.W2")
        self.b2 = dc.parameter(np.zeros(out_dim), dtype, f"{prefix}.b2")
        self.prefix = prefix

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"{self.prefix}: expected features of length {self.in_dim}, got {x.shape[-1]}")
        return dc.relu(x @ self.W1 + self.b1) @ self.W2 + self.b2

    def named(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.W1, self.b1, self.W2, self.b2)}


@dataclass(frozen=True)
class PairGenConfig:
    method: str = ALL_PAIRS
    margin: float = 0.8
    sigmoid_normalize: bool = True

    def __post_init__(self):
        if self.method not in (ALL_PAIRS, MAX_NEGATIVE):
            raise ValueError(f"unknown pair generation method {self.method!r}")
        if self.margin <= 0:
            raise ValueError("margin must be positive")


def point_loss(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class over the candidates.

    Probabilities are clamped at ``LOG_EPS`` before the log.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise ValueError(f"point_loss: probs {probs.shape} vs {len(labels)} labels")
    flat = dc.reshape(probs, (-1,))
    picked = dc.take(flat, np.arange(len(labels)) * probs.shape[-1] + labels)
    return dc.scale(dc.sum(dc.log(picked, eps=LOG_EPS)), -1.0 / len(labels))


def generate_pairs(scores, labels, cfg: PairGenConfig | str = ALL_PAIRS) -> list[tuple[int, int]]:
    """(positive, negative) candidate-index pairs for the margin loss.

    ``max-negative`` pairs every positive with the single highest-scoring
    negative (first one on ties); the scores are only read, never differentiated.
    """
    method = cfg.method if isinstance(cfg, PairGenConfig) else cfg
    scores = np.asarray(scores.data if isinstance(scores, Tensor) else scores, dtype=float)
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(neg) == 0:
        return []
    if method == ALL_PAIRS:
        return [(int(p), int(n)) for p in pos for n in neg]
    if method == MAX_NEGATIVE:
        hardest = int(neg[np.argmax(scores[neg])])
        return [(int(p), hardest) for p in pos]
    raise ValueError(f"unknown pair generation method {method!r}")


def pair_loss(scores: Tensor, pairs: list[tuple[int, int]], cfg: PairGenConfig) -> Tensor:
    """Mean hinge ``max(0, margin - (s+ - s-))`` over the pairs; 0 for no pairs."""
    if not pairs:
        return dc.tensor(np.zeros((), dtype=scores.dtype))
    s = dc.reshape(scores, (-1,))
    if cfg.sigmoid_normalize:
        s = dc.sigmoid(s)
    idx = np.asarray(pairs, dtype=np.intp)
    gap = dc.take(s, idx[:, 0]) - dc.take(s, idx[:, 1])
    hinge = dc.relu(dc.scale(gap, -1.0) + cfg.margin)
    return dc.mean(hinge)


def normalize_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=float)
    total = y.sum()
    if total <= 0:
        raise ValueError("normalize_labels: no positive label")
    return y / total


def list_loss(scores: Tensor, labels) -> Tensor:
    """KL(normalized labels || softmax(scores)) divided by the list length.

    Terms with a zero label contribute nothing.
    """
    target = normalize_labels(labels)
    s = dc.reshape(scores, (-1,))
    logp = dc.log_softmax(s)
    nz = target > 0
    const = float(np.sum(target[nz] * np.log(target[nz])))
    cross = dc.sum(dc.mul(logp, target.astype(s.dtype)))
    return dc.scale(dc.scale(cross, -1.0) + const, 1.0 / len(target))


def predict_scores(head_output, level: str) -> np.ndarray:
    """Sorting scores from a head's raw output for one question group."""
    out = np.asarray(head_output.data if isinstance(head_output, Tensor) else head_output, dtype=float)
    if level == "point":
        z = out - out.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return (e / e.sum(axis=-1, keepdims=True))[:, 1]
    out = out.reshape(-1)
    if level == "pair":
        return out
    if level == "list":
        e = np.exp(out - out.max())
        return e / e.sum()
    raise ValueError(f"unknown level {level!r}")
