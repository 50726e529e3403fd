"""Corpus loading, vocabulary, embeddings, batching and a synthetic corpus."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PAD_ID = 0
PAD_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class CorpusError(ValueError):
    """Malformed corpus or embedding input."""


def tokenize(text: str) -> list[str]:
    """Lowercase, then split into word runs and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Candidate:
    tokens: tuple[str, ...]
    label: int


@dataclass(frozen=True)
class QuestionGroup:
    """A question with its complete, ordered, labelled candidate list."""

    qid: str
    question: tuple[str, ...]
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise CorpusError(f"question {self.qid!r} has no candidates")
        if not self.question:
            raise CorpusError(f"question {self.qid!r} is empty")
        for c in self.candidates:
            if not c.tokens:
                raise CorpusError(f"question {self.qid!r} has an empty candidate")
            if c.label not in (0, 1):
                raise CorpusError(f"question {self.qid!r}: label must be 0 or 1, got {c.label!r}")

    @property
    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.candidates], dtype=np.int64)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self.candidates) - self.n_pos

    def to_record(self) -> dict:
        return {
            "qid": self.qid,
            "question": " ".join(self.question),
            "candidates": [{"text": " ".join(c.tokens), "label": c.label} for c in self.candidates],
        }


def group_from_record(record: dict) -> QuestionGroup:
    cands = record["candidates"]
    if not isinstance(cands, list):
        raise CorpusError("'candidates' must be a list")
    return QuestionGroup(
        qid=str(record["qid"]),
        question=tuple(tokenize(record["question"])),
        candidates=tuple(Candidate(tuple(tokenize(c["text"])), int(c["label"])) for c in cands),
    )


def load_corpus(path: str | Path, split: str = "train") -> list[QuestionGroup]:
    """Read a JSON-lines corpus; questions with no positive candidate are dropped."""
    path = Path(path)
    groups: list[QuestionGroup] = []
    dropped = 0
    n_lines = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                group = group_from_record(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, CorpusError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record ({exc})") from exc
            if group.n_pos == 0:
                dropped += 1
                continue
            groups.append(group)
    if n_lines == 0:
        raise CorpusError(f"{path}: empty corpus file")
    n_pairs = sum(len(g.candidates) for g in groups)
    logger.info("%s split %s: %d questions, %d pairs, %d dropped (no positive)",
                path, split, len(groups), n_pairs, dropped)
    return groups


def save_corpus(groups: Iterable[QuestionGroup], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for g in groups:
            fh.write(json.dumps(g.to_record(), ensure_ascii=False) + "\n")


class Vocabulary:
    """Token <-> id map. Id 0 is shared by padding and unknown tokens."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD_TOKEN]
        self.stoi: dict[str, int] = {}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = len(self.itos)
            self.stoi[token] = idx
            self.itos.append(token)
        return idx

    @classmethod
    def build(cls, groups: Iterable[QuestionGroup]) -> "Vocabulary":
        vocab = cls()
        for g in groups:
            for tok in g.question:
                vocab.add(tok)
            for c in g.candidates:
                for tok in c.tokens:
                    vocab.add(tok)
        return vocab

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.stoi.get(t, PAD_ID) for t in tokens], dtype=np.intp)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    trainable: bool = True
    loaded: np.ndarray = field(default=None)  # per-row: True if taken from a file

    def __post_init__(self):
        if self.loaded is None:
            self.loaded = np.zeros(len(self.vectors), dtype=bool)

    @property
    def coverage(self) -> float:
        n = len(self.vectors) - 1
        return float(self.loaded[1:].sum() / n) if n else 0.0


def load_embeddings(path: str | Path, vocab: Vocabulary, dim: int = 300,
                    trainable: bool = True) -> EmbeddingMatrix:
    """Fill a [len(vocab) x dim] matrix from a GloVe-style text file.

    Tokens are case-folded the same way as the corpus. Rows for tokens the
    file does not cover stay zero.
    """
    vectors = np.zeros((len(vocab), dim), dtype=np.float32)
    loaded = np.zeros(len(vocab), dtype=bool)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) <= 1:
                continue
            if len(parts) - 1 != dim:
                raise CorpusError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0].lower())
            if idx is None or loaded[idx]:
                continue
            vectors[idx] = np.asarray(parts[1:], dtype=np.float32)
            loaded[idx] = True
    emb = EmbeddingMatrix(vectors, trainable=trainable, loaded=loaded)
    logger.info("embeddings %s: coverage %.3f of %d tokens", path, emb.coverage, len(vocab) - 1)
    return emb


def random_embeddings(vocab: Vocabulary, dim: int, seed: int, trainable: bool = True) -> EmbeddingMatrix:
    """Standard normal rows (padding row zero), for corpora without a vector file."""
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((len(vocab), dim)).astype(np.float32)
    vectors[PAD_ID] = 0.0
    return EmbeddingMatrix(vectors, trainable=trainable)


@dataclass(frozen=True)
class BatchCounts:
    point_items: int
    all_pairs: int
    max_negative_pairs: int
    lists: int


def batch_counts(batch: Sequence[QuestionGroup]) -> BatchCounts:
    """Training-item accounting for one batch at each ranking level."""
    ks = [g.n_pos for g in batch]
    ts = [g.n_neg for g in batch]
    return BatchCounts(
        point_items=sum(k + t for k, t in zip(ks, ts)),
        all_pairs=sum(k * t for k, t in zip(ks, ts)),
        max_negative_pairs=sum(k for k, t in zip(ks, ts) if t > 0),
        lists=len(batch),
    )


def make_batches(groups: Sequence[QuestionGroup], batch_size: int,
                 seed: int) -> list[list[QuestionGroup]]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(groups))
    shuffled = [groups[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


# -- synthetic corpus -------------------------------------------------------

_N_TOPICS = 40
_KEYWORDS_PER_TOPIC = 6
_N_FILLERS = 30


def keyword_vocabulary() -> set[str]:
    return {f"t{t}k{j}" for t in range(_N_TOPICS) for j in range(_KEYWORDS_PER_TOPIC)}


def synth_corpus(n_questions: int, seed: int = 0) -> tuple[list[QuestionGroup], ...]:
    """Deterministic toy answer-selection corpus split 5:2:2 into train/dev/test.

    Each question draws keywords from one topic. Positive candidates repeat at
    least two of the question's keywords, negatives at most one, padded with
    keywords from other topics and filler words.
    """
    if n_questions < 10:
        raise ValueError("synth_corpus needs at least 10 questions")
    rng = np.random.default_rng(seed)
    fillers = [f"w{j}" for j in range(_N_FILLERS)]

    def kw(topic: int, j: int) -> str:
        return f"t{topic}k{j}"

    def fill(n: int) -> list[str]:
        return [fillers[i] for i in rng.integers(0, _N_FILLERS, size=n)]

    def distractors(topic: int, n: int) -> list[str]:
        out = []
        for _ in range(n):
            other = int(rng.integers(0, _N_TOPICS - 1))
            other += other >= topic
            out.append(kw(other, int(rng.integers(0, _KEYWORDS_PER_TOPIC))))
        return out

    groups = []
    for qi in range(n_questions):
        topic = int(rng.integers(0, _N_TOPICS))
        q_kws = [kw(topic, j) for j in rng.choice(_KEYWORDS_PER_TOPIC, size=3, replace=False)]
        question = q_kws + fill(int(rng.integers(2, 5)))
        rng.shuffle(question)
        k = int(rng.integers(1, 3))
        t = int(rng.integers(2, 5))
        cands = []
        for _ in range(k):
            shared = list(map(str, rng.choice(q_kws, size=int(rng.integers(2, 4)), replace=False)))
            toks = shared + distractors(topic, int(rng.integers(0, 2))) + fill(int(rng.integers(2, 6)))
            rng.shuffle(toks)
            cands.append(Candidate(tuple(toks), 1))
        for _ in range(t):
            shared = list(map(str, rng.choice(q_kws, size=int(rng.integers(0, 2)), replace=False)))
            toks = shared + distractors(topic, int(rng.integers(2, 4))) + fill(int(rng.integers(2, 6)))
            rng.shuffle(toks)
            cands.append(Candidate(tuple(toks), 0))
        order = rng.permutation(len(cands))
        groups.append(QuestionGroup(f"synth-{seed}-{qi}", tuple(question),
                                    tuple(cands[i] for i in order)))
    n_dev = n_test = round(n_questions * 2 / 9)
    n_train = n_questions - n_dev - n_test
    return groups[:n_train], groups[n_train:n_train + n_dev], groups[n_train + n_dev:]


def keyword_overlap_scores(group: QuestionGroup, keywords: set[str] | None = None) -> np.ndarray:
    """Bag-of-words baseline: number of distinct topic keywords shared with the question."""
    keywords = keyword_vocabulary() if keywords is None else keywords
    q = set(group.question) & keywords
    return np.array([len(q & set(c.tokens)) for c in group.candidates], dtype=float)
