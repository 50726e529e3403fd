"""Compare-aggregate backbone: gated encoding, co-attention, comparison, CNN aggregation.

All functions accept either a single sequence ``[len, h]`` or a stack of
candidate sequences ``[c, len, h]``; leading dimensions broadcast. Padded
answer positions are described by boolean masks (True = real token).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    kmax_enabled: bool = False
    k: int = 10

    def __post_init__(self):
        if self.kmax_enabled and self.k < 1:
            raise ValueError("k-max attention needs k >= 1")


class EncoderParams:
    """Gate and candidate projections shared by question and answer."""

    def __init__(self, emb_dim: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        limit = np.sqrt(6.0 / (emb_dim + hidden))
        self.W1 = dc.parameter(rng.uniform(-limit, limit, (emb_dim, hidden)), dtype, "enc.W1")
        self.b1 = dc.parameter(np.zeros(hidden), dtype, "enc.b1")
        self.W2 = dc.parameter(rng.uniform(-limit, limit, (emb_dim, hidden)), dtype, "enc.W2")
        self.b2 = dc.parameter(np.zeros(hidden), dtype, "enc.b2")

    def named(self, prefix: str = "enc") -> dict[str, Tensor]:
        return {f"{prefix}.W1": self.W1, f"{prefix}.b1": self.b1,
                f"{prefix}.W2": self.W2, f"{prefix}.b2": self.b2}


class AggregatorParams:
    """One-layer CNN: per kernel size a filter bank [size, in_dim, channels] and a bias."""

    def __init__(self, in_dim: int, channels: int, kernel_sizes: Sequence[int],
                 rng: np.random.Generator, dtype=np.float32):
        self.in_dim = in_dim
        self.channels = channels
        self.kernel_sizes = tuple(kernel_sizes)
        self.filters: dict[int, Tensor] = {}
        self.biases: dict[int, Tensor] = {}
        for s in self.kernel_sizes:
            limit = 1.0 / np.sqrt(s * in_dim)
            self.filters[s] = dc.parameter(rng.uniform(-limit, limit, (s, in_dim, channels)), dtype)
            self.biases[s] = dc.parameter(np.zeros(channels), dtype)

    @property
    def out_dim(self) -> int:
        """Length of the pooled vector for one side."""
        return self.channels * len(self.kernel_sizes)

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for s in self.kernel_sizes:
            out[f"{prefix}.conv{s}.W"] = self.filters[s]
            out[f"{prefix}.conv{s}.b"] = self.biases[s]
        return out


def gated_projection(E: Tensor, params: EncoderParams) -> Tensor:
    """H = sigmoid(E W1 + b1) * tanh(E W2 + b2), applied per token."""
    if E.shape[-2] == 0:
        raise ValueError("gated_projection: empty sentence")
    if E.shape[-1] != params.W1.shape[0]:
        raise ValueError(f"gated_projection: embedding dim {E.shape[-1]} != {params.W1.shape[0]}")
    gate = dc.sigmoid(E @ params.W1 + params.b1)
    cand = dc.tanh(E @ params.W2 + params.b2)
    return gate * cand


def kmax_mask(scores: np.ndarray, k: int, valid: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask keeping the k largest valid entries of every row (last axis).

    Ties are resolved toward the lower index.
    """
    if valid is None:
        valid = np.ones(scores.shape, dtype=bool)
    valid = np.broadcast_to(valid, scores.shape)
    if k >= scores.shape[-1]:
        return valid.copy()
    ranked = np.where(valid, scores, -np.inf)
    order = np.argsort(-ranked, axis=-1, kind="stable")[..., :k]
    keep = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(keep, order, True, axis=-1)
    return keep & valid


def attend_align(Hq: Tensor, Ha: Tensor, cfg: AttentionConfig = AttentionConfig(),
                 q_mask: np.ndarray | None = None, a_mask: np.ndarray | None = None):
    """Co-attention and soft alignment.

    Returns ``(Hq_aligned, Ha_aligned, M)`` with ``M = Hq Ha^T``. ``q_mask`` and
    ``a_mask`` flag real tokens (shape ``[..., n]`` / ``[..., m]``).
    """
    if Hq.shape[-2] == 0 or Ha.shape[-2] == 0:
        raise ValueError("attend_align: empty sequence")
    if Hq.shape[-1] != Ha.shape[-1]:
        raise ValueError(f"attend_align: hidden dims differ, {Hq.shape} vs {Ha.shape}")
    M = Hq @ dc.swapaxes(Ha)
    n, m = M.shape[-2], M.shape[-1]
    lead = M.shape[:-2]
    q_ok = np.ones(lead + (n,), bool) if q_mask is None else np.broadcast_to(q_mask, lead + (n,))
    a_ok = np.ones(lead + (m,), bool) if a_mask is None else np.broadcast_to(a_mask, lead + (m,))
    row_mask = np.broadcast_to(a_ok[..., None, :], M.shape)    # question rows attend over answer
    col_mask = np.broadcast_to(q_ok[..., None, :], lead + (m, n))
    Mt = dc.swapaxes(M)
    if cfg.kmax_enabled:
        row_mask = kmax_mask(M.data, cfg.k, row_mask)
        col_mask = kmax_mask(Mt.data, cfg.k, col_mask)
    Hq_aligned = dc.softmax(M, axis=-1, mask=row_mask) @ Ha
    Ha_aligned = dc.softmax(Mt, axis=-1, mask=col_mask) @ Hq
    return Hq_aligned, Ha_aligned, M


def compare(aligned: Tensor, H: Tensor) -> Tensor:
    """Element-wise comparison of an aligned sequence with the original."""
    if aligned.shape[-2:] != H.shape[-2:]:
        raise ValueError(f"compare: shape mismatch {aligned.shape} vs {H.shape}")
    return aligned * H


def _pool_side(C: Tensor, lengths: np.ndarray, params: AggregatorParams,
               activation: str | None) -> Tensor:
    length = C.shape[-2]
    pad_to = max(length, max(params.kernel_sizes))
    if pad_to > length:
        zeros = dc.tensor(np.zeros(C.shape[:-2] + (pad_to - length, C.shape[-1]), dtype=C.dtype))
        C = dc.concat([C, zeros], axis=-2)
    pooled = []
    for s in params.kernel_sizes:
        W = dc.reshape(params.filters[s], (s * params.in_dim, params.channels))
        conv = dc.unfold(C, s) @ W + params.biases[s]
        if activation == "tanh":
            conv = dc.tanh(conv)
        # positions whose window starts inside the real (or zero-padded-to-s) sequence
        n_valid = np.maximum(lengths - s + 1, 1)
        positions = np.arange(conv.shape[-2])
        pooled.append(dc.max_over_time(conv, positions < n_valid[..., None]))
    return dc.concat(pooled, axis=-1)


def aggregate(Cq: Tensor, Ca: Tensor, params: AggregatorParams,
              q_len: np.ndarray | int | None = None, a_len: np.ndarray | int | None = None,
              activation: str | None = "tanh") -> Tensor:
    """CNN over each comparison sequence, max-pooled over time, then ``[r_q ; r_a]``.

    Sequences shorter than a kernel are zero-padded up to it. ``q_len``/``a_len``
    give the real length of each (padded) sequence; default is the full length.
    """
    lead = np.broadcast_shapes(Cq.shape[:-2], Ca.shape[:-2])
    q_len = np.broadcast_to(Cq.shape[-2] if q_len is None else q_len, lead)
    a_len = np.broadcast_to(Ca.shape[-2] if a_len is None else a_len, lead)
    if np.any(q_len < 1) or np.any(a_len < 1):
        raise ValueError("aggregate: empty sequence")
    if Cq.shape[:-2] != lead:
        Cq = Cq + dc.tensor(np.zeros(lead + (1, 1), dtype=Cq.dtype))
    if Ca.shape[:-2] != lead:
        Ca = Ca + dc.tensor(np.zeros(lead + (1, 1), dtype=Ca.dtype))
    rq = _pool_side(Cq, q_len, params, activation)
    ra = _pool_side(Ca, a_len, params, activation)
    return dc.concat([rq, ra], axis=-1)
