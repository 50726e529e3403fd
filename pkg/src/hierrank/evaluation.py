"""MAP / MRR and per-run ranking reports."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .schemes import rank_order


def _ranked_labels(scores, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.sum() <= 0:
        raise ValueError("ranking metric undefined: no positive label")
    return labels[rank_order(scores)] > 0


def average_precision(scores, labels) -> float:
    """Mean over positives of precision at that positive's rank."""
    rel = _ranked_labels(scores, labels)
    ranks = np.flatnonzero(rel) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def reciprocal_rank(scores, labels) -> float:
    rel = _ranked_labels(scores, labels)
    return 1.0 / (int(np.argmax(rel)) + 1)


@dataclass
class QuestionResult:
    qid: str
    order: list[int]
    scores: list[float]
    labels: list[int]
    ap: float
    rr: float


@dataclass
class RankReport:
    questions: list[QuestionResult]
    map: float
    mrr: float
    n_questions: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def evaluate_corpus(groups: Sequence, model, metadata: dict | None = None) -> RankReport:
    """Score every group with the model's main head and average AP / RR."""
    if not groups:
        raise ValueError("evaluate_corpus: empty corpus")
    results = []
    for g in groups:
        scores = model.score(g)
        labels = g.labels
        results.append(QuestionResult(
            qid=g.qid,
            order=[int(i) for i in rank_order(scores)],
            scores=[float(s) for s in scores],
            labels=[int(y) for y in labels],
            ap=average_precision(scores, labels),
            rr=reciprocal_rank(scores, labels),
        ))
    return RankReport(
        questions=results,
        map=float(np.mean([r.ap for r in results])),
        mrr=float(np.mean([r.rr for r in results])),
        n_questions=len(results),
        metadata=dict(metadata or {}),
    )
