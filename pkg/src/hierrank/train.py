"""Training loop with dev-MAP early stopping, checkpoints and multi-seed runs."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import diffcore as dc
from .config import RunConfig, make_config
from .data import (EmbeddingMatrix, QuestionGroup, Vocabulary, load_corpus, load_embeddings, make_batches,
                   random_embeddings, synth_corpus)
from .evaluation import evaluate_corpus
from .model import HierRankModel
from .ranking import LEVELS

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class EpochRecord:
    epoch: int
    losses: dict[str, float | None]      # per level, None when the level is absent
    joint: float
    dev_map: float
    dev_mrr: float
    train_map: float | None = None
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainTrace:
    scheme: str
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]

    def to_dict(self, with_time: bool = False) -> dict:
        d = asdict(self)
        if not with_time:
            for e in d["epochs"]:
                e.pop("wall_time")
        return d


class EarlyStopping:
    """Tracks the best dev MAP; signals a stop after ``patience`` epochs without a strict gain."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, value: float) -> bool:
        """Record one epoch's value. Returns True when training should stop."""
        self.epoch += 1
        if value > self.best:
            self.best = value
            self.best_epoch = self.epoch
            return False
        return self.epoch - self.best_epoch >= self.patience

    @property
    def improved(self) -> bool:
        return self.best_epoch == self.epoch


@dataclass
class Corpora:
    train: list[QuestionGroup]
    dev: list[QuestionGroup]
    test: list[QuestionGroup]


def load_corpora(cfg: RunConfig) -> Corpora:
    if cfg.profile == "synthetic" and not cfg.train_path:
        return Corpora(*synth_corpus(cfg.synth_questions, cfg.synth_seed))
    return Corpora(load_corpus(cfg.train_path, "train"), load_corpus(cfg.dev_path, "dev"),
                   load_corpus(cfg.test_path, "test"))


def build_model(cfg: RunConfig, corpora: Corpora, seed: int,
                vocab: Vocabulary | None = None) -> HierRankModel:
    vocab = vocab or Vocabulary.build(corpora.train + corpora.dev + corpora.test)
    if cfg.embedding_path:
        emb = load_embeddings(cfg.embedding_path, vocab, cfg.emb_dim, cfg.embeddings_trainable)
    else:
        emb = random_embeddings(vocab, cfg.emb_dim, seed, cfg.embeddings_trainable)
    return HierRankModel(cfg.model_config(), cfg.scheme_config(), vocab, emb, seed)


def _make_optimizer(model: HierRankModel, cfg: RunConfig) -> dc.Adam:
    opt = dc.Adam()
    for name, p in model.trainable().items():
        opt.add(name, p, cfg.lr_embeddings if name == "emb" else cfg.lr_model)
    return opt


def train(cfg: RunConfig, seed: int | None = None, corpora: Corpora | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[HierRankModel, TrainTrace]:
    """Train one replicate; the returned model holds the best-dev-MAP parameters."""
    seed = cfg.seeds[0] if seed is None else seed
    corpora = corpora or load_corpora(cfg)
    model = build_model(cfg, corpora, seed)
    opt = _make_optimizer(model, cfg)
    params = model.trainable()
    scheme = model.scheme
    trace = TrainTrace(scheme.name, seed)
    stopper = EarlyStopping(cfg.early_stop_patience)
    best_state = model.state_dict()

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        sums = {lvl: 0.0 for lvl in scheme.levels}
        joint_sum = 0.0
        batches = make_batches(corpora.train, cfg.batch_questions, seed * 100_003 + epoch)
        for b, batch in enumerate(batches):
            model.zero_grad()
            for group in batch:
                joint, parts = model.loss(group)
                if not np.isfinite(joint.data):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b} "
                                           f"(question {group.qid})")
                if joint.requires_grad:
                    dc.scale(joint, 1.0 / len(batch)).backward()
                joint_sum += float(joint.data)
                for lvl, v in parts.items():
                    sums[lvl] += float(v.data)
            opt.step(params)
        n = len(corpora.train)
        dev = evaluate_corpus(corpora.dev, model)
        record = EpochRecord(
            epoch=epoch,
            losses={lvl: (sums[lvl] / n if lvl in sums else None) for lvl in LEVELS},
            joint=joint_sum / n,
            dev_map=dev.map,
            dev_mrr=dev.mrr,
            train_map=evaluate_corpus(corpora.train, model).map if cfg.eval_train else None,
        )
        record.wall_time = time.perf_counter() - t0
        trace.epochs.append(record)
        stop = stopper.update(dev.map)
        if stopper.improved:
            best_state = model.state_dict()
        logger.info("%s seed %d epoch %d joint %.4f dev MAP %.4f MRR %.4f", scheme.name, seed,
                    epoch, record.joint, dev.map, dev.mrr)
        if on_epoch is not None:
            on_epoch(record)
        if stop:
            break

    trace.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    return model, trace


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model: HierRankModel, cfg: RunConfig, path: str | Path) -> None:
    """Versioned npz: ``param/<name>`` arrays plus config and vocabulary metadata."""
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    arrays["meta/version"] = np.array(CHECKPOINT_VERSION)
    arrays["meta/config"] = np.array(json.dumps(cfg.to_dict(), sort_keys=True))
    arrays["meta/vocab"] = np.array(model.vocab.itos, dtype=object).astype(str)
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[HierRankModel, RunConfig]:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["meta/version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        values = json.loads(str(z["meta/config"]))
        itos = [str(t) for t in z["meta/vocab"]]
        state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    profile = values.pop("profile")
    cfg = make_config(profile, **values)
    vocab = Vocabulary(itos[1:])
    model = HierRankModel(cfg.model_config(), cfg.scheme_config(), vocab,
                          _placeholder_embeddings(vocab, cfg), seed=0)
    model.load_state_dict(state)
    return model, cfg


def _placeholder_embeddings(vocab: Vocabulary, cfg: RunConfig):
    return EmbeddingMatrix(np.zeros((len(vocab), cfg.emb_dim), dtype=np.float32),
                           trainable=cfg.embeddings_trainable)


# -- full runs --------------------------------------------------------------

def write_trace_json(trace: TrainTrace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(trace.to_dict(), indent=2, sort_keys=True))


def run_single(cfg: RunConfig, seed: int, corpora: Corpora | None = None,
               out_dir: str | Path | None = None) -> dict:
    """Train one seed, evaluate on test, and write checkpoint / trace / report."""
    corpora = corpora or load_corpora(cfg)
    model, trace = train(cfg, seed, corpora)
    test = evaluate_corpus(corpora.test, model,
                           {"scheme": trace.scheme, "seed": seed, "epoch": trace.best_epoch})
    result = {"seed": seed, "best_epoch": trace.best_epoch, "epochs_run": len(trace.epochs),
              "dev_map": trace.best.dev_map, "dev_mrr": trace.best.dev_mrr,
              "test_map": test.map, "test_mrr": test.mrr}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, cfg, out / f"model_seed{seed}.npz")
        write_trace_json(trace, out / f"trace_seed{seed}.json")
        test.save(out / f"report_seed{seed}.json")
    return result


def run_seeds(cfg: RunConfig, seeds: Sequence[int] | None = None,
              out_dir: str | Path | None = None) -> dict:
    """Train and test every seed; report per-seed and mean test MAP / MRR."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("run_seeds needs at least one seed")
    corpora = load_corpora(cfg)
    runs, failures = [], []
    for seed in seeds:
        try:
            runs.append(run_single(cfg, seed, corpora, out_dir))
        except (TrainingDiverged, FloatingPointError) as exc:
            logger.error("seed %d failed: %s", seed, exc)
            failures.append({"seed": seed, "error": str(exc)})
    summary = {
        "scheme": cfg.scheme_config().name,
        "profile": cfg.profile,
        "per_seed": runs,
        "failed": failures,
        "partial": bool(failures),
        "mean_test_map": float(np.mean([r["test_map"] for r in runs])) if runs else None,
        "mean_test_mrr": float(np.mean([r["test_mrr"] for r in runs])) if runs else None,
    }
    if out_dir is not None:
        Path(out_dir, "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
