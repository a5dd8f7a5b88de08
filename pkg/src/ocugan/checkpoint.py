"""Versioned checkpoint archive: a flat key -> array NPZ container.

Key groups (see docs/formats.md):

- ``meta.version`` / ``meta.config_json`` / ``meta.step``
- ``param.<module>.<tensor>``: all network parameters, frozen pyramid included
- ``optim.<side>.<index>.<slot>``: Adam moments per trainable tensor
- ``train.*``: path-length EMA, overfit-metric sign buffer
- ``diffusion.*``: adaptive timestep state
- ``rng.*`` / ``sampler.*``: generator states so a resumed run replays the
  exact loss sequence of an uninterrupted one
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, config_from_dict
from .errors import ValidationError

CHECKPOINT_VERSION = 1


@dataclass
class CheckpointData:
    config: TrainConfig
    step: int
    params: dict[str, dict[str, np.ndarray]]
    optim: dict[str, dict[int, dict[str, np.ndarray | float]]]
    t_current: int
    r_d_last: float
    rd_values: np.ndarray
    pl_mean: float
    torch_rng: np.ndarray
    sampler_state: dict


def _optimizer_entries(opt: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    state = opt.state_dict()["state"]
    for idx, slots in state.items():
        for slot, value in slots.items():
            if isinstance(value, torch.Tensor):
                arr = value.detach().cpu().numpy()
            else:
                arr = np.asarray(float(value))
            out[f"{idx}.{slot}"] = arr
    return out


def save_checkpoint(
    path: str | Path,
    *,
    config: TrainConfig,
    step: int,
    bundle,
    opt_d: torch.optim.Optimizer,
    opt_ge: torch.optim.Optimizer,
    t_current: int,
    r_d_last: float,
    rd_values: list[float],
    pl_mean: float,
    torch_rng: torch.Generator,
    sampler_state: dict,
) -> Path:
    from .config import config_to_dict

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {
        "meta.version": np.asarray(CHECKPOINT_VERSION),
        "meta.config_json": np.asarray(json.dumps(config_to_dict(config), sort_keys=True)),
        "meta.step": np.asarray(step),
        "diffusion.t_current": np.asarray(t_current),
        "diffusion.r_d_last": np.asarray(r_d_last),
        "train.rd_values": np.asarray(rd_values, dtype=np.float64),
        "train.pl_mean": np.asarray(pl_mean),
        "rng.torch_train": torch_rng.get_state().numpy(),
        "sampler.state_json": np.asarray(json.dumps(sampler_state)),
    }
    for mod_name, module in bundle.all_modules().items():
        for pname, p in module.state_dict().items():
            arrays[f"param.{mod_name}.{pname}"] = p.detach().cpu().numpy()
    for side, opt in (("d", opt_d), ("ge", opt_ge)):
        for key, arr in _optimizer_entries(opt).items():
            arrays[f"optim.{side}.{key}"] = arr
    np.savez_compressed(path, **arrays)
    return path


def load_checkpoint(path: str | Path) -> CheckpointData:
    path = Path(path)
    if not path.exists():
        raise IOError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as zf:
        arrays = {k: zf[k] for k in zf.files}
    version = int(arrays.pop("meta.version"))
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    config = config_from_dict(json.loads(str(arrays.pop("meta.config_json"))))
    step = int(arrays.pop("meta.step"))

    params: dict[str, dict[str, np.ndarray]] = {}
    optim: dict[str, dict[int, dict[str, np.ndarray | float]]] = {"d": {}, "ge": {}}
    t_current = int(arrays.pop("diffusion.t_current"))
    r_d_last = float(arrays.pop("diffusion.r_d_last"))
    rd_values = arrays.pop("train.rd_values")
    pl_mean = float(arrays.pop("train.pl_mean"))
    torch_rng = arrays.pop("rng.torch_train")
    sampler_state = json.loads(str(arrays.pop("sampler.state_json")))

    for key, arr in arrays.items():
        if key.startswith("param."):
            _, mod_name, pname = key.split(".", 2)
            params.setdefault(mod_name, {})[pname] = arr
        elif key.startswith("optim."):
            _, side, idx, slot = key.split(".", 3)
            optim[side].setdefault(int(idx), {})[slot] = arr
        else:
            raise ValidationError(f"unknown checkpoint key {key!r}")

    return CheckpointData(
        config=config, step=step, params=params, optim=optim,
        t_current=t_current, r_d_last=r_d_last, rd_values=np.asarray(rd_values, dtype=np.float64),
        pl_mean=pl_mean, torch_rng=np.asarray(torch_rng, dtype=np.uint8),
        sampler_state=sampler_state,
    )


def restore_optimizer(opt: torch.optim.Optimizer, entries: dict[int, dict[str, np.ndarray | float]]) -> None:
    skeleton = opt.state_dict()
    state = {}
    for idx, slots in entries.items():
        rebuilt = {}
        for slot, arr in slots.items():
            arr = np.asarray(arr)
            if arr.ndim == 0 and slot == "step":
                rebuilt[slot] = torch.tensor(float(arr))
            else:
                rebuilt[slot] = torch.from_numpy(arr.copy())
        state[idx] = rebuilt
    skeleton["state"] = state
    opt.load_state_dict(skeleton)


def checkpoint_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
