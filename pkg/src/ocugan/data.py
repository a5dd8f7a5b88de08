"""Procedural toy ocular datasets: generation, on-disk layout, splits, batching.

Three stand-in domains mimic the structure of a live-eye / printed-eye /
cosmetic-lens corpus:

- ``bonafide``: dark pupil disc, radially textured iris annulus, bright sclera;
- ``print``: the same base composited with a regular halftone dot grid plus
  contrast compression;
- ``lens``: the base with a concentric ring texture over the annulus.

Every image's random stream is derived from ``(seed, domain_index, image_index)``,
so generation is reproducible byte-for-byte and may be parallelized without
changing the output.

Disk layout: ``<root>/<domain_name>/<index>.png`` (8-bit PNG) plus
``<root>/manifest.json`` recording the generation parameters.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ValidationError

# Effect assignment by conventional domain name; names outside this table fall
# back to the ToyDomainSpec.domain_effect field.
EFFECT_BY_NAME = {
    "bonafide": "none",
    "print": "halftone_overlay",
    "lens": "ring_overlay",
}

_EFFECTS = ("none", "halftone_overlay", "ring_overlay")
_SUPERSAMPLE = 4  # render at 4x and box-downsample for soft edges


@dataclass(frozen=True)
class DomainLabel:
    """A dataset domain: a stable integer index and a human-readable name."""

    index: int
    name: str

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"domain index must be >= 0, got {self.index}")
        if not self.name:
            raise ValidationError("domain name must be nonempty")


def default_domains() -> list[DomainLabel]:
    return [DomainLabel(0, "bonafide"), DomainLabel(1, "print"), DomainLabel(2, "lens")]


@dataclass(frozen=True)
class ToyDomainSpec:
    """Rendering parameters for one toy domain.

    ``pupil_radius_range`` is a fraction of image width; texture frequency is
    in cycles around the iris annulus.  A fixed ``seed`` makes the rendered
    dataset byte-identical across runs.
    """

    image_size: int = 32
    channels: int = 1
    pupil_radius_range: tuple[float, float] = (0.10, 0.18)
    iris_texture_frequency_range: tuple[float, float] = (6.0, 14.0)
    domain_effect: str = "none"
    effect_strength: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 8:
            raise ValidationError(f"image_size must be >= 8, got {self.image_size}")
        if self.channels not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.channels}")
        for name, rng_ in (
            ("pupil_radius_range", self.pupil_radius_range),
            ("iris_texture_frequency_range", self.iris_texture_frequency_range),
        ):
            lo, hi = rng_
            if not (lo <= hi) or lo <= 0:
                raise ValidationError(f"{name} must be a nonempty positive range, got {rng_}")
        lo, hi = self.pupil_radius_range
        if hi >= 0.5:
            raise ValidationError(
                f"pupil_radius_range must stay within (0, 0.5) of image extent, got {self.pupil_radius_range}"
            )
        if self.domain_effect not in _EFFECTS:
            raise ValidationError(f"unknown domain_effect {self.domain_effect!r}, expected one of {_EFFECTS}")
        if not (0.0 <= self.effect_strength <= 1.0):
            raise ValidationError(f"effect_strength must lie in [0,1], got {self.effect_strength}")


def spec_for_domain(spec: ToyDomainSpec, domain: DomainLabel) -> ToyDomainSpec:
    """Per-domain rendering spec: effect chosen by domain name convention."""
    effect = EFFECT_BY_NAME.get(domain.name, spec.domain_effect)
    return dataclasses.replace(spec, domain_effect=effect)


def sample_rng(spec: ToyDomainSpec, domain_index: int, image_index: int) -> np.random.Generator:
    """Independent, order-insensitive random stream for one image."""
    return np.random.default_rng([spec.seed, domain_index, image_index])


def render_toy_image(spec: ToyDomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Render one toy ocular image as float32 in [0, 1], shape (H, W) or (H, W, 3).

    Geometry draws happen before the domain effect is applied and the effect
    consumes no randomness, so re-rendering with a different effect/strength
    but the same stream keeps the geometry fixed.
    """
    size = spec.image_size
    n = size * _SUPERSAMPLE

    cx = 0.5 + rng.uniform(-0.06, 0.06)
    cy = 0.5 + rng.uniform(-0.06, 0.06)
    r_pupil = rng.uniform(*spec.pupil_radius_range)
    r_iris = min(0.46, r_pupil * rng.uniform(2.3, 2.9))
    freq = rng.uniform(*spec.iris_texture_frequency_range)
    rotation = rng.uniform(0.0, 2.0 * math.pi)
    sclera = rng.uniform(0.78, 0.88)
    iris_base = rng.uniform(0.40, 0.50)
    iris_amp = rng.uniform(0.12, 0.20)
    pupil_val = rng.uniform(0.04, 0.10)

    coords = (np.arange(n, dtype=np.float64) + 0.5) / n
    xx, yy = np.meshgrid(coords, coords)
    dx, dy = xx - cx, yy - cy
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)

    img = sclera - 0.10 * r**2  # mild vignette
    spokes = iris_base + iris_amp * np.sin(freq * theta + rotation)
    img = np.where(r < r_iris, spokes, img)
    img = np.where(r < r_pupil, pupil_val, img)

    s = spec.effect_strength
    if spec.domain_effect == "halftone_overlay" and s > 0:
        # regular dot lattice, period 4 final pixels, plus contrast compression
        period = 4 * _SUPERSAMPLE
        px = (np.arange(n) % period) - period / 2 + 0.5
        gx, gy = np.meshgrid(px, px)
        dots = (gx**2 + gy**2) < (0.30 * period) ** 2
        img = img * (1.0 - 0.5 * s * dots)
        img = 0.5 + (img - 0.5) * (1.0 - 0.35 * s)
    elif spec.domain_effect == "ring_overlay" and s > 0:
        # concentric rings over the annulus, period 2.5 final pixels
        ring = np.sin(2.0 * math.pi * r * size / 2.5)
        band = (r >= r_pupil) & (r < r_iris + 2.0 / size)
        img = img + 0.22 * s * ring * band

    img = img.reshape(size, _SUPERSAMPLE, size, _SUPERSAMPLE).mean(axis=(1, 3))
    img = img + rng.normal(0.0, 0.015, size=img.shape)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)

    if spec.channels == 3:
        img = np.stack([img, img * 0.97, img * 0.94], axis=-1)
        img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return img


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(img * 255.0).astype(np.uint8)


def generate_toy_dataset(
    spec: ToyDomainSpec,
    per_domain_count: int,
    domains: list[DomainLabel] | None = None,
    out_dir: str | Path = "data/toy",
) -> Path:
    """Write ``per_domain_count`` images per domain under ``out_dir`` and a manifest.

    Regeneration with the same spec is byte-identical.
    """
    if per_domain_count < 1:
        raise ValidationError(f"per_domain_count must be >= 1, got {per_domain_count}")
    domains = default_domains() if domains is None else domains
    if len(domains) < 2:
        raise ValidationError("need at least 2 domains")
    if len({d.index for d in domains}) != len(domains):
        raise ValidationError("domain indices must be unique")

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": spec.seed,
        "image_size": spec.image_size,
        "channels": spec.channels,
        "count_per_domain": per_domain_count,
        "pupil_radius_range": list(spec.pupil_radius_range),
        "iris_texture_frequency_range": list(spec.iris_texture_frequency_range),
        "effect_strength": spec.effect_strength,
        "domains": [],
    }
    for dom in domains:
        dspec = spec_for_domain(spec, dom)
        manifest["domains"].append({"index": dom.index, "name": dom.name, "effect": dspec.domain_effect})
        ddir = root / dom.name
        ddir.mkdir(parents=True, exist_ok=True)
        for i in range(per_domain_count):
            img = render_toy_image(dspec, sample_rng(spec, dom.index, i))
            mode = "L" if spec.channels == 1 else "RGB"
            Image.fromarray(_to_uint8(img), mode=mode).save(ddir / f"{i:05d}.png")

    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return root


def read_manifest(root: str | Path) -> dict | None:
    path = Path(root) / "manifest.json"
    if not path.exists():
        return None
    with open(path) as fh:
        return json.load(fh)


def dataset_domains(root: str | Path) -> list[DomainLabel]:
    """Domain labels of an on-disk dataset (manifest order, else sorted dirs)."""
    manifest = read_manifest(root)
    if manifest and "domains" in manifest:
        return [DomainLabel(d["index"], d["name"]) for d in sorted(manifest["domains"], key=lambda d: d["index"])]
    dirs = sorted(p.name for p in Path(root).iterdir() if p.is_dir())
    if not dirs:
        raise ValidationError(f"no domain directories under {root}")
    return [DomainLabel(i, name) for i, name in enumerate(dirs)]


def list_domain_images(root: str | Path, domain: DomainLabel) -> list[Path]:
    ddir = Path(root) / domain.name
    if not ddir.is_dir():
        raise ValidationError(f"missing domain directory {ddir}")
    return sorted(p for p in ddir.iterdir() if p.suffix.lower() in (".png", ".bmp", ".jpg", ".jpeg"))


@dataclass
class DatasetSplit:
    """Stratified train/test partition; items are (path, DomainLabel) pairs."""

    train: list[tuple[Path, DomainLabel]]
    test: list[tuple[Path, DomainLabel]]
    split_fraction: float = 0.70
    domains: list[DomainLabel] = field(default_factory=list)


def split_dataset(root: str | Path, fraction: float = 0.70, seed: int = 0) -> DatasetSplit:
    """Per-domain stratified split, deterministic under a fixed seed.

    Rounding rule: each domain contributes ``floor(n * fraction)`` training
    images; the remaining images form the test set (so a 3-image domain splits
    2 train + 1 test at fraction 0.70).
    """
    if not (0.0 < fraction < 1.0):
        raise ValidationError(f"fraction must lie in (0,1), got {fraction}")
    domains = dataset_domains(root)
    train: list[tuple[Path, DomainLabel]] = []
    test: list[tuple[Path, DomainLabel]] = []
    for dom in domains:
        files = list_domain_images(root, dom)
        if len(files) < 2:
            raise ValidationError(f"domain {dom.name!r} has {len(files)} image(s); need at least 2 to split")
        order = np.random.default_rng([seed, dom.index]).permutation(len(files))
        n_train = int(math.floor(len(files) * fraction))
        train.extend((files[i], dom) for i in order[:n_train])
        test.extend((files[i], dom) for i in order[n_train:])
    return DatasetSplit(train=train, test=test, split_fraction=fraction, domains=domains)


@dataclass
class ImageBatch:
    """A rank-4 float tensor (B, C, H, W) in [-1, 1] with per-sample domain labels."""

    data: torch.Tensor
    labels: torch.Tensor

    def validate(self) -> "ImageBatch":
        if self.data.ndim != 4 or self.data.shape[0] < 1:
            raise ValidationError(f"batch must be rank-4 with B >= 1, got shape {tuple(self.data.shape)}")
        if self.data.shape[1] not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.data.shape[1]}")
        if self.labels.shape[0] != self.data.shape[0]:
            raise ValidationError("labels/data batch size mismatch")
        if not torch.isfinite(self.data).all():
            raise ValidationError("batch contains NaN/Inf")
        if self.data.min() < -1.0 or self.data.max() > 1.0:
            raise ValidationError("batch values must lie in [-1, 1]")
        return self

    def __len__(self) -> int:
        return self.data.shape[0]


def load_image(path: str | Path, channels: int = 1) -> np.ndarray:
    """Decode an image file to float32 (C, H, W) in [-1, 1]; 255 -> +1, 0 -> -1."""
    try:
        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            arr = np.asarray(im, dtype=np.float32)
    except Exception as exc:
        raise IOError(f"cannot decode image file {path}: {exc}") from exc
    if channels == 1:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return arr / 127.5 - 1.0


def load_batch(items: list[tuple[Path, DomainLabel]], channels: int = 1) -> ImageBatch:
    data = np.stack([load_image(p, channels) for p, _ in items])
    labels = np.array([d.index for _, d in items], dtype=np.int64)
    return ImageBatch(torch.from_numpy(data), torch.from_numpy(labels)).validate()


class EpochSampler:
    """Without-replacement batch iterator, reshuffled each epoch.

    Single-consumer; state (permutation, cursor, RNG) is exposed for exact
    checkpoint/resume. Decoded images are cached in memory: toy corpora only.
    """

    def __init__(
        self,
        items: list[tuple[Path, DomainLabel]],
        batch_size: int,
        rng: np.random.Generator | int = 0,
        channels: int = 1,
    ):
        if batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
        if batch_size > len(items):
            raise ValidationError(f"batch_size {batch_size} exceeds train set size {len(items)}")
        self.items = list(items)
        self.batch_size = batch_size
        self.channels = channels
        self.rng = np.random.default_rng(rng) if isinstance(rng, int) else rng
        self._perm: np.ndarray | None = None
        self._pos = 0
        self._cache: dict[int, np.ndarray] = {}

    def _image(self, i: int) -> np.ndarray:
        if i not in self._cache:
            self._cache[i] = load_image(self.items[i][0], self.channels)
        return self._cache[i]

    def next_batch(self) -> ImageBatch:
        """Next batch of the current epoch; the final batch of an epoch may be short."""
        if self._perm is None or self._pos >= len(self.items):
            self._perm = self.rng.permutation(len(self.items))
            self._pos = 0
        take = min(self.batch_size, len(self.items) - self._pos)
        idx = self._perm[self._pos : self._pos + take]
        self._pos += take
        data = np.stack([self._image(int(i)) for i in idx])
        labels = np.array([self.items[int(i)][1].index for i in idx], dtype=np.int64)
        return ImageBatch(torch.from_numpy(data), torch.from_numpy(labels)).validate()

    def state_dict(self) -> dict:
        return {
            "rng_state": json.dumps(self.rng.bit_generator.state),
            "perm": self._perm.tolist() if self._perm is not None else None,
            "pos": self._pos,
        }

    def load_state_dict(self, state: dict) -> None:
        self.rng.bit_generator.state = json.loads(state["rng_state"])
        self._perm = None if state["perm"] is None else np.asarray(state["perm"], dtype=np.int64)
        self._pos = int(state["pos"])
