"""Run configuration, dataset profiles and config-file loading."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .backbone import AttentionConfig
from .model import ModelConfig
from .ranking import ALL_PAIRS, MAX_NEGATIVE, PairGenConfig
from .schemes import SchemeConfig

PROFILES = ("wikiqa-like", "trecqa-like", "synthetic")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    profile: str = "synthetic"
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    embedding_path: str | None = None
    synth_questions: int = 90
    synth_seed: int = 0

    scheme: str = "PRI_list"
    main_level: str | None = None
    lambda_point: float = 1.0
    lambda_pair: float = 1.0
    lambda_list: float = 1.0
    ablation: str = "none"
    detach_aux: bool = False

    emb_dim: int = 300
    hidden: int = 300
    channels: int = 150
    kernel_sizes: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    head_hidden: int = 300
    conv_activation: str | None = "tanh"
    dtype: str = "float32"
    kmax_enabled: bool = False
    kmax_k: int = 10
    pair_method: str = ALL_PAIRS
    margin: float = 1.0
    sigmoid_normalize: bool = False

    lr_model: float = 5e-4
    lr_embeddings: float | None = None      # None: embeddings frozen
    batch_questions: int = 30
    early_stop_patience: int = 10
    max_epochs: int = 100
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    eval_train: bool = False
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if self.pair_method not in (ALL_PAIRS, MAX_NEGATIVE):
            raise ConfigError(f"unknown pair_method {self.pair_method!r}")
        if self.profile != "synthetic" and not self.train_path:
            raise ConfigError(f"profile {self.profile} needs train_path/dev_path/test_path")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.batch_questions < 1 or self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ConfigError("batch_questions, max_epochs and early_stop_patience must be >= 1")
        self.kernel_sizes = [int(k) for k in self.kernel_sizes]
        self.seeds = [int(s) for s in self.seeds]
        self.scheme_config()  # validates scheme fields

    @property
    def embeddings_trainable(self) -> bool:
        return self.lr_embeddings is not None and self.lr_embeddings > 0

    def scheme_config(self) -> SchemeConfig:
        try:
            return SchemeConfig(self.scheme, self.main_level, self.lambda_point, self.lambda_pair,
                                self.lambda_list, self.ablation, self.detach_aux)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            emb_dim=self.emb_dim, hidden=self.hidden, channels=self.channels,
            kernel_sizes=tuple(self.kernel_sizes), head_hidden=self.head_hidden,
            attention=AttentionConfig(self.kmax_enabled, self.kmax_k),
            pairgen=PairGenConfig(self.pair_method, self.margin, self.sigmoid_normalize),
            conv_activation=self.conv_activation, dtype=self.dtype,
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


PROFILE_DEFAULTS: dict[str, dict[str, Any]] = {
    "wikiqa-like": dict(
        lr_embeddings=5e-5, kmax_enabled=True, kmax_k=10, pair_method=ALL_PAIRS,
        margin=0.8, sigmoid_normalize=True, lambda_point=2.0, lambda_pair=1.0,
        lambda_list=1.0, max_epochs=100,
    ),
    "trecqa-like": dict(
        lr_embeddings=None, kmax_enabled=False, pair_method=MAX_NEGATIVE,
        margin=1.0, sigmoid_normalize=False, lambda_point=1.0, lambda_pair=1.0,
        lambda_list=1.0, max_epochs=100,
    ),
    # desk-scale: wikiqa-style ranking settings on a small network; 50 training
    # questions need smaller batches and a larger step to train in a few epochs
    "synthetic": dict(
        emb_dim=32, hidden=32, channels=16, kernel_sizes=[1, 2, 3], head_hidden=32,
        lr_model=2e-3, batch_questions=5, lr_embeddings=5e-5, kmax_enabled=True, kmax_k=10,
        pair_method=ALL_PAIRS, margin=0.8, sigmoid_normalize=True, lambda_point=2.0, lambda_pair=1.0,
        lambda_list=1.0, max_epochs=500,
    ),
}

_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def make_config(profile: str = "synthetic", **overrides) -> RunConfig:
    """Profile defaults with ``overrides`` applied on top."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    unknown = set(overrides) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values = dict(PROFILE_DEFAULTS[profile])
    values.update(overrides)
    values["profile"] = profile
    return RunConfig(**values)


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a YAML/JSON key-value file; ``overrides`` (e.g. CLI flags) win."""
    values: dict[str, Any] = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    profile = values.pop("profile", "synthetic")
    return make_config(profile, **values)
