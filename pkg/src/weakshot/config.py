"""Configuration objects for corpus generation and pipeline training.

Both configs mirror their JSON file format field-for-field, so a config file
is just the dataclass serialized with ``json.dumps``. Validation raises
:class:`ConfigError` carrying the offending field name, which the CLI maps to
exit code 2.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the bad entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


DEFAULT_BASE_CATEGORIES = [
    "circle_red",
    "square_green",
    "triangle_blue",
    "ellipse_yellow",
    "bar_magenta",
    "diamond_cyan",
    "cross_orange",
    "ring_purple",
    "pentagon_teal",
    "star_pink",
]

# Each novel category shares its shape and/or color with some base category,
# except hblock_gray which deliberately shares nothing (the hard-transfer case).
DEFAULT_NOVEL_CATEGORIES = [
    "circle_green",
    "ellipse_green",
    "square_blue",
    "diamond_blue",
    "hblock_gray",
]


@dataclass
class CorpusConfig:
    seed: int = 222
    n_source: int = 500
    n_target: int = 200
    n_test: int = 200
    image_size: int = 64
    base_categories: list = field(default_factory=lambda: list(DEFAULT_BASE_CATEGORIES))
    novel_categories: list = field(default_factory=lambda: list(DEFAULT_NOVEL_CATEGORIES))
    objects_per_image: tuple = (1, 3)
    distractor_rate: float = 0.5
    source_val_fraction: float = 0.1
    # Fraction of target images that also contain one unlabeled base-category
    # object, so that target pixels are not purely novel.
    base_in_target_rate: float = 0.25

    def validate(self) -> "CorpusConfig":
        for name in ("n_source", "n_target", "n_test"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(name, "image count must be non-negative")
        if self.image_size < 32:
            raise ConfigError("image_size", "must be at least 32 pixels")
        if not self.base_categories or not self.novel_categories:
            raise ConfigError("base_categories", "category lists must be non-empty")
        overlap = set(self.base_categories) & set(self.novel_categories)
        if overlap:
            raise ConfigError("novel_categories", f"overlap with base categories: {sorted(overlap)}")
        lo, hi = self.objects_per_image
        if not (1 <= lo <= hi):
            raise ConfigError("objects_per_image", "range must satisfy 1 <= min <= max")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigError("distractor_rate", "must lie in [0, 1]")
        if not 0.0 <= self.source_val_fraction < 1.0:
            raise ConfigError("source_val_fraction", "must lie in [0, 1)")
        if not 0.0 <= self.base_in_target_rate <= 1.0:
            raise ConfigError("base_in_target_rate", "must lie in [0, 1]")
        return self


@dataclass
class TrainingConfig:
    # Loss composition coefficients.
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 1.0
    # Refinement iterations after the initial detector + MIL training.
    T: int = 4
    # Two-phase SGD schedule: lr_initial for the first part of each step's
    # epoch budget, then lr_final.
    lr_initial: float = 8e-3
    lr_final: float = 8e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 16
    seed: int = 222
    # SimNet batch construction: K categories x M boxes.
    K: int = 8
    M: int = 8
    candidate_thresh: float = 0.05
    mining_thresh: float = 0.8
    source_iou_filter: float = 0.1
    # Where the coarse mask is concatenated: "b1" = final backbone map,
    # "b2" = penultimate map (the last block then consumes the widened map).
    attach: str = "b1"
    use_mask: bool = True
    # Pseudo-box denoising weights: "simnet", "cosine", or "none" (all 1.0).
    weight_mode: str = "simnet"
    mine_base_in_target: bool = False
    # Desk-scale epoch budgets; refinement iterations warm-start, so they use
    # the (smaller) refine budgets.
    step1_epochs: int = 6
    step2_epochs: int = 5
    refine_step1_epochs: int = 3
    refine_step2_epochs: int = 3
    step3_batches: int = 160
    proposal_count: int = 64
    eval_nms_thresh: float = 0.5
    ap_protocol: str = "area"

    def validate(self) -> "TrainingConfig":
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "loss coefficient must be non-negative")
        if self.T < 0:
            raise ConfigError("T", "iteration count must be non-negative")
        for name in ("candidate_thresh", "mining_thresh", "source_iou_filter"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(name, "threshold must lie in (0, 1)")
        if self.attach not in ("b1", "b2"):
            raise ConfigError("attach", "must be 'b1' or 'b2'")
        if self.weight_mode not in ("simnet", "cosine", "none"):
            raise ConfigError("weight_mode", "must be 'simnet', 'cosine', or 'none'")
        if self.ap_protocol not in ("area", "voc2007"):
            raise ConfigError("ap_protocol", "must be 'area' or 'voc2007'")
        for name in ("K", "M", "batch_size", "proposal_count"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be at least 1")
        for name in ("step1_epochs", "step2_epochs", "refine_step1_epochs",
                     "refine_step2_epochs", "step3_batches"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "epoch budget must be at least 1")
        return self


# CLI ablation name -> config overrides, mirroring the six-row ablation grid:
# plain / mask on the last map / mask on the penultimate map / cosine weights /
# similarity weights only / the full method.
ABLATIONS = {
    "full": {"use_mask": True, "attach": "b1", "weight_mode": "simnet"},
    "plain": {"use_mask": False, "weight_mode": "none"},
    "no-mask": {"use_mask": False, "weight_mode": "simnet"},
    "no-sim": {"use_mask": True, "attach": "b1", "weight_mode": "none"},
    "cosine-sim": {"use_mask": False, "weight_mode": "cosine"},
    "mask-b2": {"use_mask": True, "attach": "b2", "weight_mode": "none"},
}


def apply_ablation(cfg: TrainingConfig, name: str) -> TrainingConfig:
    if name not in ABLATIONS:
        raise ConfigError("ablation", f"unknown ablation {name!r}; choices: {sorted(ABLATIONS)}")
    return dataclasses.replace(cfg, **ABLATIONS[name])


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _to_jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, tuple):
        return list(obj)
    return obj


def config_to_json(cfg) -> str:
    return json.dumps(_to_jsonable(cfg), indent=2, sort_keys=True)


def config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(_to_jsonable(cfg), sort_keys=True).encode()).hexdigest()


def _from_dict(cls, data: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config field")
    kwargs = dict(data)
    if "objects_per_image" in kwargs and kwargs["objects_per_image"] is not None:
        kwargs["objects_per_image"] = tuple(kwargs["objects_per_image"])
    return cls(**kwargs).validate()


def load_corpus_config(path) -> CorpusConfig:
    with open(path) as fh:
        return _from_dict(CorpusConfig, json.load(fh))


def load_training_config(path) -> TrainingConfig:
    with open(path) as fh:
        return _from_dict(TrainingConfig, json.load(fh))
