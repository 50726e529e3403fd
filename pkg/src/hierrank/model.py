"""The hierarchical ranking network: shared bottom, level-specific branches and heads."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import diffcore as dc
from .backbone import (AggregatorParams, AttentionConfig, EncoderParams, aggregate,
                       attend_align, compare, gated_projection)
from .data import EmbeddingMatrix, QuestionGroup, Vocabulary
from .diffcore import Tensor
from .ranking import (HeadParams, PairGenConfig, generate_pairs, list_loss, pair_loss,
                      point_loss, predict_scores)
from .schemes import SchemeConfig, build_features, feature_dims, joint_loss


@dataclass(frozen=True)
class ModelConfig:
    emb_dim: int = 300
    hidden: int = 300
    channels: int = 150
    kernel_sizes: tuple[int, ...] = (1, 2, 3, 4, 5)
    head_hidden: int = 300
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    pairgen: PairGenConfig = field(default_factory=PairGenConfig)
    conv_activation: str | None = "tanh"
    dtype: str = "float32"

    @property
    def match_dim(self) -> int:
        """Length of one raw level feature ``[r_q ; r_a]``."""
        return 2 * self.channels * len(self.kernel_sizes)


class GroupInputs(NamedTuple):
    q_ids: np.ndarray      # [n]
    a_ids: np.ndarray      # [c, m], 0-padded
    a_len: np.ndarray      # [c]
    labels: np.ndarray     # [c]


class Forward(NamedTuple):
    raw: dict
    features: dict
    outputs: dict


def encode_group(group: QuestionGroup, vocab: Vocabulary) -> GroupInputs:
    a_len = np.array([len(c.tokens) for c in group.candidates], dtype=np.intp)
    a_ids = np.zeros((len(a_len), int(a_len.max())), dtype=np.intp)
    for i, c in enumerate(group.candidates):
        a_ids[i, :a_len[i]] = vocab.encode(c.tokens)
    return GroupInputs(vocab.encode(group.question), a_ids, a_len, group.labels)


class HierRankModel:
    """Compare-aggregate ranker with one branch and head per active ranking level."""

    def __init__(self, model_cfg: ModelConfig, scheme: SchemeConfig, vocab: Vocabulary,
                 embeddings: EmbeddingMatrix, seed: int = 0):
        self.cfg = model_cfg
        self.scheme = scheme
        self.vocab = vocab
        dtype = np.dtype(model_cfg.dtype)
        if embeddings.vectors.shape != (len(vocab), model_cfg.emb_dim):
            raise ValueError(f"embedding matrix {embeddings.vectors.shape} does not match "
                             f"vocab size {len(vocab)} x emb_dim {model_cfg.emb_dim}")
        self.embeddings = Tensor(embeddings.vectors.astype(dtype), requires_grad=embeddings.trainable,
                                 name="emb")
        rng = np.random.default_rng(seed)
        self.encoder = EncoderParams(model_cfg.emb_dim, model_cfg.hidden, rng, dtype)
        self.aggregators = {lvl: AggregatorParams(model_cfg.hidden, model_cfg.channels,
                                                  model_cfg.kernel_sizes, rng, dtype)
                            for lvl in scheme.levels}
        self.feature_dims = feature_dims(scheme, model_cfg.match_dim)
        self.heads = {}
        for lvl in scheme.levels:
            out_dim = 2 if scheme.loss_kind(lvl) == "point" else 1
            self.heads[lvl] = HeadParams(self.feature_dims[lvl], out_dim, model_cfg.head_hidden,
                                         rng, dtype, prefix=f"head_{lvl}")
        self._cache: dict[int, tuple[QuestionGroup, GroupInputs]] = {}

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        """Every tensor that is saved in a checkpoint, by name."""
        params = {"emb": self.embeddings}
        params.update(self.encoder.named("enc"))
        for lvl, agg in self.aggregators.items():
            params.update(agg.named(f"agg_{lvl}"))
        for head in self.heads.values():
            params.update(head.named())
        return params

    def trainable(self) -> dict[str, Tensor]:
        return {k: p for k, p in self.parameters().items() if p.requires_grad}

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(state) != set(params):
            raise KeyError(f"parameter names differ: {sorted(set(state) ^ set(params))}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=p.dtype)

    # -- forward ------------------------------------------------------------

    def inputs(self, group: QuestionGroup) -> GroupInputs:
        hit = self._cache.get(id(group))
        if hit is not None and hit[0] is group:
            return hit[1]
        enc = encode_group(group, self.vocab)
        self._cache[id(group)] = (group, enc)
        return enc

    def forward(self, group: QuestionGroup) -> Forward:
        x = self.inputs(group)
        Eq = dc.take(self.embeddings, x.q_ids, axis=0)           # [n, e]
        Ea = dc.take(self.embeddings, x.a_ids.reshape(-1), axis=0)
        Ea = dc.reshape(Ea, x.a_ids.shape + (self.cfg.emb_dim,))  # [c, m, e]
        Hq = gated_projection(Eq, self.encoder)
        Ha = gated_projection(Ea, self.encoder)
        a_mask = np.arange(x.a_ids.shape[1]) < x.a_len[:, None]
        Hq_al, Ha_al, _ = attend_align(Hq, Ha, self.cfg.attention, a_mask=a_mask)
        Ha_real = Ha * a_mask[..., None].astype(Ha.dtype)
        q_len = np.full(len(x.a_len), len(x.q_ids))
        # comparison has no parameters, so the level-specific branches share it
        Cq = compare(Hq_al, Hq)
        Ca = compare(Ha_al, Ha_real)
        raw = {}
        for lvl, agg in self.aggregators.items():
            raw[lvl] = aggregate(Cq, Ca, agg, q_len, x.a_len, self.cfg.conv_activation)
        features = build_features(raw, self.scheme)
        outputs = {lvl: self.heads[lvl](features[lvl]) for lvl in self.scheme.levels}
        return Forward(raw, features, outputs)

    def losses(self, group: QuestionGroup, fwd: Forward | None = None) -> dict[str, Tensor]:
        fwd = self.forward(group) if fwd is None else fwd
        labels = group.labels
        out = {}
        for lvl in self.scheme.levels:
            head_out = fwd.outputs[lvl]
            kind = self.scheme.loss_kind(lvl)
            if kind == "point":
                out[lvl] = point_loss(dc.softmax(head_out, axis=-1), labels)
            elif kind == "pair":
                pairs = generate_pairs(head_out.data.reshape(-1), labels, self.cfg.pairgen)
                out[lvl] = pair_loss(head_out, pairs, self.cfg.pairgen)
            else:
                out[lvl] = list_loss(head_out, labels)
        return out

    def loss(self, group: QuestionGroup) -> tuple[Tensor, dict[str, Tensor]]:
        parts = self.losses(group)
        return joint_loss(parts, self.scheme), parts

    def score(self, group: QuestionGroup) -> np.ndarray:
        """Main-head sorting scores for every candidate of ``group``."""
        with dc.no_grad():
            fwd = self.forward(group)
        main = self.scheme.main_level
        return predict_scores(fwd.outputs[main].data, self.scheme.loss_kind(main))
