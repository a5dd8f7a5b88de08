"""Training configuration: a strict, JSON-round-trippable schema.

Unknown keys are rejected with the offending path named, so a config file
drives a run completely and reproducibly.  ``total_steps`` is the only
required key; everything else has documented defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ValidationError
from .losses import LossWeights


@dataclass
class DataConfig:
    root: str = "data/toy"
    split_fraction: float = 0.70
    split_seed: int = 0


@dataclass
class DiffusionConfig:
    t_max: int = 64
    t_min: int = 4
    beta_min: float = 0.02
    beta_max: float = 0.20
    sigma: float = 0.5
    d_target: float = 0.6
    c_step: int = 1
    update_interval: int = 4
    pi_kind: str = "uniform"


@dataclass
class ModelConfig:
    image_size: int = 32
    channels: int = 1
    num_domains: int = 3
    d_z: int = 128
    d_w: int = 128
    e_base: int = 24
    g_base: int = 96
    d_base: int = 32
    t_emb_dim: int = 32
    source_emb_dim: int = 8
    target_emb_dim: int = 16
    phi_base: int = 16
    phi_seed: int = 0
    domain_head: bool = True


@dataclass
class LossConfig:
    lambda_adv: float = 1.0
    lambda_domain: float = 1.0
    lambda_recon: float = 10.0
    lambda_lpips: float = 1.0
    lambda_inr: float = 5.0
    lambda_mix: float = 1.0
    lambda_path: float = 2.0
    saturating_adv: bool = False
    literal_eq10: bool = False
    style_mixing: bool = True
    mixing_prob: float = 0.9
    path_reg: bool = True

    def weights(self) -> LossWeights:
        return LossWeights(
            lambda_adv=self.lambda_adv,
            lambda_domain=self.lambda_domain,
            lambda_recon=self.lambda_recon,
            lambda_lpips=self.lambda_lpips,
            lambda_inr=self.lambda_inr,
            lambda_mix=self.lambda_mix,
            lambda_path=self.lambda_path,
        )


@dataclass
class TrainConfig:
    total_steps: int = 0  # required; 0 means "missing"
    seed: int = 0
    batch_size: int = 32
    lr_d: float = 2e-4
    lr_ge: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    checkpoint_interval: int = 0  # 0 disables intermediate checkpoints
    eval_interval: int = 0        # 0 disables sample grids during training
    ppl_batch: int = 8
    deterministic: bool = True
    run_dir: str = ""
    data: DataConfig = field(default_factory=DataConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    losses: LossConfig = field(default_factory=LossConfig)

    def validate(self) -> "TrainConfig":
        if self.total_steps < 1:
            raise ValidationError("missing required key: total_steps (must be >= 1)")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("lr_d", "lr_ge"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("optimizer moment coefficients must lie in [0, 1)")
        if not (0.0 <= self.losses.mixing_prob <= 1.0):
            raise ValidationError("mixing_prob must lie in [0, 1]")
        self.losses.weights()  # raises on bad lambdas
        return self


_SECTIONS = {"data": DataConfig, "diffusion": DiffusionConfig,
             "model": ModelConfig, "losses": LossConfig}


def _from_dict(cls, d: dict, path: str = "") -> Any:
    if not isinstance(d, dict):
        raise ValidationError(f"config section {path or '<root>'} must be an object, got {type(d).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        key = sorted(unknown)[0]
        full = f"{path}.{key}" if path else key
        raise ValidationError(f"unknown config key: {full}")
    kwargs = {}
    for name in fields:
        if name not in d:
            continue
        value = d[name]
        if name in _SECTIONS and cls is TrainConfig:
            value = _from_dict(_SECTIONS[name], value, f"{path}.{name}" if path else name)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(d: dict) -> TrainConfig:
    return _from_dict(TrainConfig, d).validate()


def config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path: str | Path, overrides: dict | None = None) -> TrainConfig:
    """Parse a JSON config file; ``overrides`` (top-level key -> value) win over
    file values.  Unknown keys anywhere are rejected."""
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    try:
        with open(p) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from exc
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            raw[key] = value
    return config_from_dict(raw)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
