import numpy as np
import pytest
import torch

from ocugan.config import ModelConfig, TrainConfig
from ocugan.data import ToyDomainSpec, generate_toy_dataset, split_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    """Small 3-domain toy dataset shared across tests: 40 images per domain."""
    root = tmp_path_factory.mktemp("toy") / "data"
    generate_toy_dataset(ToyDomainSpec(seed=7), 40, out_dir=root)
    return root


@pytest.fixture(scope="session")
def toy_split(toy_root):
    return split_dataset(toy_root, 0.70, seed=0)


def mini_model_config(**kw) -> ModelConfig:
    """Miniature network config for fast/gradient tests (image_size 8, d_z 8)."""
    defaults = dict(image_size=8, channels=1, num_domains=3, d_z=8, d_w=8,
                    e_base=8, g_base=16, d_base=8, t_emb_dim=8,
                    source_emb_dim=4, target_emb_dim=4, phi_base=4, phi_seed=0)
    defaults.update(kw)
    return ModelConfig(**defaults)


def small_train_config(root, **kw) -> TrainConfig:
    """Fast-but-real training config on 32px data for trainer tests."""
    cfg = TrainConfig(
        total_steps=kw.pop("total_steps", 8),
        seed=kw.pop("seed", 0),
        batch_size=kw.pop("batch_size", 8),
    )
    cfg.data.root = str(root)
    cfg.model = ModelConfig(d_z=32, d_w=32, e_base=12, g_base=32, d_base=16,
                            source_emb_dim=4, target_emb_dim=8, phi_base=16)
    cfg.ppl_batch = 4
    for key, value in kw.items():
        setattr(cfg, key, value)
    return cfg


def rand_images(n: int, channels: int = 1, size: int = 8, seed: int = 0,
                dtype=torch.float32) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return (torch.rand((n, channels, size, size), generator=g, dtype=dtype) * 2.0 - 1.0) * 0.95
