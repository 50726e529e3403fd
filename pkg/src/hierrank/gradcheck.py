"""Finite-difference verification of the analytic gradients of the joint loss."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .data import Candidate, EmbeddingMatrix, QuestionGroup, Vocabulary
from .model import HierRankModel
from .config import make_config, RunConfig

# (scheme, ablation) combinations covered by a full check
DEFAULT_CASES = (
    ("MTL", "none"), ("RI_point", "none"), ("RI_pair", "none"), ("RI_list", "none"),
    ("PRI_point", "none"), ("PRI_list", "none"),
    ("PRI_list", "no_point"), ("PRI_list", "no_pair"), ("PRI_list", "all_list"),
)

TINY = dict(emb_dim=6, hidden=8, channels=4, kernel_sizes=[1, 2], head_hidden=8,
            dtype="float64", kmax_k=3)
TINY_VOCAB = 20


@dataclass
class CaseResult:
    name: str
    max_rel_error: float
    n_checked: int
    passed: bool


@dataclass
class GradCheckReport:
    cases: list[CaseResult] = field(default_factory=list)
    tolerance: float = 1e-3
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    @property
    def max_rel_error(self) -> float:
        return max(c.max_rel_error for c in self.cases)


def tiny_config(**overrides) -> RunConfig:
    values = dict(TINY)
    values.update(overrides)
    return make_config("synthetic", **values)


def tiny_batch(rng: np.random.Generator, n_groups: int = 3) -> tuple[list[QuestionGroup], Vocabulary]:
    """Random groups over a 19-token vocabulary, with answers as short as one token."""
    vocab = Vocabulary(f"v{i}" for i in range(1, TINY_VOCAB))
    words = vocab.itos[1:]

    def sentence(lo, hi):
        return tuple(words[i] for i in rng.integers(0, len(words), int(rng.integers(lo, hi + 1))))

    groups = []
    for gi in range(n_groups):
        n_cand = int(rng.integers(3, 5))
        labels = np.zeros(n_cand, dtype=int)
        labels[rng.choice(n_cand, size=int(rng.integers(1, n_cand)), replace=False)] = 1
        cands = tuple(Candidate(sentence(1, 4), int(y)) for y in labels)
        groups.append(QuestionGroup(f"tiny-{gi}", sentence(3, 5), cands))
    return groups, vocab


def batch_loss(model: HierRankModel, groups: list[QuestionGroup]) -> dc.Tensor:
    total = None
    for g in groups:
        term = dc.scale(model.loss(g)[0], 1.0 / len(groups))
        total = term if total is None else total + term
    return total


def check_model(model: HierRankModel, groups: list[QuestionGroup], rng: np.random.Generator,
                step: float = 1e-4, per_tensor: int = 6) -> tuple[float, int]:
    """Max relative error between backprop and central differences on sampled entries."""
    model.zero_grad()
    batch_loss(model, groups).backward()
    worst, count = 0.0, 0
    for name, p in model.trainable().items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        picks = set(rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False).tolist())
        picks.add(int(np.argmax(np.abs(analytic))))
        for i in sorted(picks):
            orig = flat[i]
            flat[i] = orig + step
            with dc.no_grad():
                up = float(batch_loss(model, groups).data)
            flat[i] = orig - step
            with dc.no_grad():
                down = float(batch_loss(model, groups).data)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-7)
            worst = max(worst, err)
            count += 1
    return worst, count


def grad_check(cases=DEFAULT_CASES, seed: int = 0, step: float = 1e-4, tol: float = 1e-3,
               **overrides) -> GradCheckReport:
    """Check every (scheme, ablation) case on the tiny double-precision profile."""
    t0 = time.perf_counter()
    report = GradCheckReport(tolerance=tol)
    for scheme, ablation in cases:
        rng = np.random.default_rng(seed)
        groups, vocab = tiny_batch(rng)
        cfg = tiny_config(scheme=scheme, ablation=ablation, **overrides)
        emb = EmbeddingMatrix(rng.standard_normal((len(vocab), cfg.emb_dim)), trainable=True)
        emb.vectors[0] = 0.0
        model = HierRankModel(cfg.model_config(), cfg.scheme_config(), vocab, emb, seed)
        worst, n = check_model(model, groups, rng, step)
        report.cases.append(CaseResult(model.scheme.name, worst, n, worst < tol))
    report.seconds = time.perf_counter() - t0
    return report
