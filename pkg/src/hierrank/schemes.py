"""Integration schemes: how the three level features are wired into the heads.

Each scheme is a table giving, for every head, the ordered list of raw level
features concatenated into that head's input. MTL feeds every head its own
feature; RI concatenates both auxiliary features onto the main one; PRI chains
them progressively (point -> pair -> list, or the reverse).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .ranking import LEVELS

SCHEMES = ("MTL", "RI_point", "RI_pair", "RI_list", "PRI_point", "PRI_list")
ABLATIONS = ("none", "no_point", "no_pair", "all_list")

WIRING: dict[str, dict[str, tuple[str, ...]]] = {
    "MTL": {"point": ("point",), "pair": ("pair",), "list": ("list",)},
    "RI_point": {"point": ("pair", "list", "point"), "pair": ("pair",), "list": ("list",)},
    "RI_pair": {"point": ("point",), "pair": ("point", "list", "pair"), "list": ("list",)},
    "RI_list": {"point": ("point",), "pair": ("pair",), "list": ("point", "pair", "list")},
    # r_pair' = [r_point ; r_pair], r_list' = [r_pair' ; r_list]
    "PRI_list": {"point": ("point",), "pair": ("point", "pair"), "list": ("point", "pair", "list")},
    "PRI_point": {"list": ("list",), "pair": ("list", "pair"), "point": ("list", "pair", "point")},
}


class SchemeError(ValueError):
    """Inconsistent scheme configuration."""


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "PRI_list"
    main_level: str | None = None
    lambda_point: float = 1.0
    lambda_pair: float = 1.0
    lambda_list: float = 1.0
    ablation: str = "none"
    detach_aux: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SchemeError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.ablation not in ABLATIONS:
            raise SchemeError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")
        fixed = None if self.scheme == "MTL" else self.scheme.split("_")[1]
        main = self.main_level or fixed or "list"
        if fixed is not None and main != fixed:
            raise SchemeError(f"{self.scheme} predicts with the {fixed} head, not {main}")
        if main not in LEVELS:
            raise SchemeError(f"unknown level {main!r}")
        object.__setattr__(self, "main_level", main)
        for lvl in LEVELS:
            if self.weight(lvl) < 0:
                raise SchemeError(f"lambda_{lvl} must be non-negative")
        if self.ablation == f"no_{main}":
            raise SchemeError(f"ablation {self.ablation} removes the main level {main}")

    @classmethod
    def single_level(cls, level: str) -> "SchemeConfig":
        """A plain compare-aggregate model trained on one ranking level only."""
        lam = {f"lambda_{lvl}": float(lvl == level) for lvl in LEVELS}
        return cls(scheme="MTL", main_level=level, **lam)

    @property
    def name(self) -> str:
        if self.scheme == "MTL":
            if self.levels == (self.main_level,):
                return f"CA({self.main_level})"
            base = f"MTL({self.main_level})"
        else:
            kind, lvl = self.scheme.split("_")
            base = f"{kind}({lvl})"
        return base if self.ablation == "none" else f"{base}[{self.ablation}]"

    def weight(self, level: str) -> float:
        return getattr(self, f"lambda_{level}")

    @property
    def levels(self) -> tuple[str, ...]:
        """Levels whose branch and head are built."""
        out = []
        for lvl in LEVELS:
            if self.ablation == f"no_{lvl}":
                continue
            # an MTL head with zero weight is never used for training or prediction
            if self.scheme == "MTL" and lvl != self.main_level and self.weight(lvl) == 0:
                continue
            out.append(lvl)
        return tuple(out)

    def sources(self, level: str) -> tuple[str, ...]:
        """Raw features concatenated, in order, into ``level``'s head input."""
        active = self.levels
        return tuple(s for s in WIRING[self.scheme][level] if s in active)

    def loss_kind(self, level: str) -> str:
        return "list" if self.ablation == "all_list" else level

    def with_updates(self, **kw) -> "SchemeConfig":
        return replace(self, **kw)


def feature_dims(cfg: SchemeConfig, base_dim: int) -> dict[str, int]:
    """Length of each head's (possibly enhanced) input feature."""
    return {lvl: base_dim * len(cfg.sources(lvl)) for lvl in cfg.levels}


def build_features(raw: dict[str, Tensor], cfg: SchemeConfig) -> dict[str, Tensor]:
    """Concatenate the raw level features into each head's input per the wiring."""
    missing = [lvl for lvl in cfg.levels if lvl not in raw]
    if missing:
        raise SchemeError(f"missing raw features for {missing}")
    out = {}
    for lvl in cfg.levels:
        parts = []
        for src in cfg.sources(lvl):
            f = raw[src]
            if cfg.detach_aux and src != lvl:
                f = dc.tensor(f.data)
            parts.append(f)
        out[lvl] = dc.concat(parts, axis=-1)
    return out


def joint_loss(losses: dict[str, Tensor], cfg: SchemeConfig) -> Tensor:
    """Weighted sum of the per-level losses; absent (ablated) levels add nothing."""
    total = None
    for lvl in cfg.levels:
        if lvl not in losses:
            continue
        value = losses[lvl]
        if not isinstance(value, Tensor):
            value = dc.tensor(value)
        term = dc.scale(value, cfg.weight(lvl))
        total = term if total is None else total + term
    if total is None:
        return dc.tensor(np.zeros(()))
    return total


def rank_order(scores) -> np.ndarray:
    """Candidate indices by descending score; ties keep the original order."""
    scores = np.asarray(scores, dtype=float)
    return np.argsort(-scores, kind="stable")


def rank_question(group, model) -> list[tuple[int, float]]:
    """``(candidate index, score)`` pairs in ranked order using the main head."""
    scores = model.score(group)
    return [(int(i), float(scores[i])) for i in rank_order(scores)]
