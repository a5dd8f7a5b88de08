"""Model zoo: encoder E(x, s), style-based generator G(z, c), timestep-conditioned
discriminator D(y, t) with realness + domain heads, and a frozen random feature
pyramid used for perceptual distances and corpus embedding.

Desk-scale choices: plain nearest-neighbor upsampling (no filtered/alias-free
layers), a 2-layer mapping network, modulated 3x3 convolutions with
demodulation, and fixed coordinate channels (including period-4 sin/cos) fed to
every synthesis block so globally phase-coherent textures are easy to form.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ValidationError

_REALNESS_EPS = 1e-6  # keeps realness in [eps, 1-eps]; exact at 0.5


def _lrelu(x: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(x, 0.2)


def _n_down(image_size: int) -> int:
    # number of stride-2 stages from image_size down to 4
    return int(round(math.log2(image_size / 4)))


def validate_image_size(image_size: int) -> None:
    if image_size < 8 or image_size & (image_size - 1) != 0:
        raise ValidationError(f"image_size must be a power of two >= 8 (4 * 2^k), got {image_size}")


class SinusoidalEmbedding(nn.Module):
    """Classic sin/cos positional embedding of an integer timestep."""

    def __init__(self, dim: int, max_period: float = 10_000.0):
        super().__init__()
        if dim % 2 != 0:
            raise ValidationError("embedding dim must be even")
        half = dim // 2
        freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
        self.register_buffer("freqs", freqs)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        args = t.to(self.freqs.dtype)[:, None] * self.freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class Encoder(nn.Module):
    """Deterministic image-to-latent encoder conditioned on the source domain.

    The source label enters as a learned embedding broadcast to a spatial map
    and concatenated to the image channels.
    """

    def __init__(self, image_size: int, channels: int, num_domains: int, d_z: int,
                 base: int = 24, emb_dim: int = 8):
        super().__init__()
        validate_image_size(image_size)
        self.num_domains = num_domains
        self.embed = nn.Embedding(num_domains, emb_dim)
        convs = []
        in_ch = channels + emb_dim
        ch = base
        for _ in range(_n_down(image_size)):
            convs.append(nn.Conv2d(in_ch, ch, 3, stride=2, padding=1))
            in_ch, ch = ch, min(2 * ch, 256)
        self.convs = nn.ModuleList(convs)
        self.fc = nn.Linear(in_ch * 4 * 4, d_z)

    def forward(self, x: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        if s.min() < 0 or s.max() >= self.num_domains:
            raise ValidationError(f"source label out of range [0, {self.num_domains})")
        e = self.embed(s)[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        h = torch.cat([x, e.to(x.dtype)], dim=1)
        for conv in self.convs:
            h = _lrelu(conv(h))
        return self.fc(h.flatten(1))


class ModulatedConv2d(nn.Module):
    """3x3 convolution whose input channels are scaled by a per-sample style,
    with weight demodulation for stable magnitudes."""

    def __init__(self, in_ch: int, out_ch: int, d_w: int, demodulate: bool = True):
        super().__init__()
        self.out_ch = out_ch
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, 3, 3) / math.sqrt(in_ch * 9))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        # random affine weights keep the output genuinely style-dependent at init
        self.affine = nn.Linear(d_w, in_ch)
        nn.init.ones_(self.affine.bias)
        self.demodulate = demodulate

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        # scale inputs / demodulate outputs: algebraically the per-sample
        # weight form, but with a single shared-weight convolution
        style = self.affine(w)
        out = F.conv2d(x * style[:, :, None, None], self.weight, padding=1)
        if self.demodulate:
            norm2 = self.weight.pow(2).sum(dim=(2, 3))  # (out, in)
            d = torch.rsqrt(style.pow(2) @ norm2.T + 1e-8)
            out = out * d[:, :, None, None]
        return out + self.bias[None, :, None, None]


N_COORD_FEATURES = 9


def _coordinate_bank(res: int, image_size: int) -> torch.Tensor:
    """Fixed coordinate channels at a synthesis resolution, in final-pixel units.

    Cartesian positions, sin/cos at period-4 lattice harmonics, and radial
    harmonics around the image center, so globally phase-coherent periodic
    textures (dot grids, concentric rings) are cheap to synthesize.
    """
    pix = (torch.arange(res, dtype=torch.float32) + 0.5) * (image_size / res)
    gy, gx = torch.meshgrid(pix, pix, indexing="ij")
    two_pi = 2.0 * math.pi
    radius = torch.hypot(gx - image_size / 2.0, gy - image_size / 2.0)
    feats = [
        gx / image_size * 2.0 - 1.0,
        gy / image_size * 2.0 - 1.0,
        torch.sin(two_pi * gx / 4.0),
        torch.cos(two_pi * gx / 4.0),
        torch.sin(two_pi * gy / 4.0),
        torch.cos(two_pi * gy / 4.0),
        radius / image_size,
        torch.sin(two_pi * radius / 2.5),
        torch.cos(two_pi * radius / 2.5),
    ]
    return torch.stack(feats)


class SynthesisBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, d_w: int, res: int, image_size: int, up: bool):
        super().__init__()
        self.up = up
        self.register_buffer("coords", _coordinate_bank(res, image_size))
        self.conv = ModulatedConv2d(in_ch + N_COORD_FEATURES, out_ch, d_w)

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        if self.up:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        c = self.coords[None].expand(x.shape[0], -1, -1, -1).to(x.dtype)
        return _lrelu(self.conv(torch.cat([x, c], dim=1), w))


class Generator(nn.Module):
    """Style-based synthesis from a latent code and a target-domain label.

    The target embedding is concatenated to the latent before a 2-layer
    mapping network; each synthesis block consumes one style vector, so a
    (B, L, d_w) style tensor fully determines the output and supports
    crossover-style mixing.
    """

    def __init__(self, image_size: int, channels: int, num_domains: int, d_z: int,
                 d_w: int = 128, base: int = 96, target_emb_dim: int = 16):
        super().__init__()
        validate_image_size(image_size)
        self.image_size = image_size
        self.num_domains = num_domains
        self.d_w = d_w
        self.embed_target = nn.Embedding(num_domains, target_emb_dim)
        self.map1 = nn.Linear(d_z + target_emb_dim, d_w)
        self.map2 = nn.Linear(d_w, d_w)

        n_up = _n_down(image_size)
        self.num_layers = n_up + 1
        widths = [max(16, base >> i) for i in range(self.num_layers)]
        self.const = nn.Parameter(torch.randn(1, widths[0], 4, 4))
        blocks = [SynthesisBlock(widths[0], widths[0], d_w, 4, image_size, up=False)]
        res = 4
        for i in range(n_up):
            res *= 2
            blocks.append(SynthesisBlock(widths[i], widths[i + 1], d_w, res, image_size, up=True))
        self.blocks = nn.ModuleList(blocks)
        self.to_out = nn.Conv2d(widths[-1], channels, 1)

    def map_latent(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        if c.min() < 0 or c.max() >= self.num_domains:
            raise ValidationError(f"target label out of range [0, {self.num_domains})")
        h = torch.cat([z, self.embed_target(c).to(z.dtype)], dim=1)
        return self.map2(_lrelu(self.map1(h)))

    def synthesize(self, w_layers: torch.Tensor) -> torch.Tensor:
        """Render from a per-layer style tensor (B, L, d_w); output in (-1, 1)."""
        if w_layers.ndim != 3 or w_layers.shape[1] != self.num_layers:
            raise ValidationError(f"expected styles shaped (B, {self.num_layers}, d_w)")
        h = self.const.expand(w_layers.shape[0], -1, -1, -1).to(w_layers.dtype)
        for i, block in enumerate(self.blocks):
            h = block(h, w_layers[:, i])
        return torch.tanh(self.to_out(h))

    def forward(
        self,
        z: torch.Tensor,
        c: torch.Tensor,
        mix: tuple[torch.Tensor, int] | None = None,
    ) -> torch.Tensor:
        w1 = self.map_latent(z, c)
        if mix is None:
            w = w1[:, None, :].repeat(1, self.num_layers, 1)
        else:
            z2, crossover = mix
            if not (0 <= crossover <= self.num_layers):
                raise ValidationError(
                    f"crossover must lie in [0, {self.num_layers}], got {crossover}"
                )
            w2 = self.map_latent(z2, c)
            parts = [w1[:, None, :]] * crossover + [w2[:, None, :]] * (self.num_layers - crossover)
            w = torch.cat(parts, dim=1) if parts else w1[:, None, :]
        return self.synthesize(w)


@dataclass
class DiscriminatorOutput:
    realness: torch.Tensor                # (B,), strictly inside (0, 1)
    domain_logits: torch.Tensor | None    # (B, num_domains) or None if head disabled


class Discriminator(nn.Module):
    """Shared conv trunk with a realness head and an optional domain head.

    The timestep enters as a sinusoidal embedding projected to a channel bias
    added after the first trunk stage, so D(y, t) genuinely depends on t.
    """

    def __init__(self, image_size: int, channels: int, num_domains: int,
                 base: int = 32, t_emb_dim: int = 32, domain_head: bool = True):
        super().__init__()
        validate_image_size(image_size)
        convs = []
        in_ch, ch = channels, base
        for _ in range(_n_down(image_size)):
            convs.append(nn.Conv2d(in_ch, ch, 3, stride=2, padding=1))
            in_ch, ch = ch, min(2 * ch, 256)
        self.convs = nn.ModuleList(convs)
        self.t_embed = SinusoidalEmbedding(t_emb_dim)
        inject_ch = self.convs[min(1, len(self.convs) - 1)].out_channels
        self.t_proj = nn.Sequential(nn.Linear(t_emb_dim, 64), nn.LeakyReLU(0.2), nn.Linear(64, inject_ch))
        self._inject_at = min(1, len(self.convs) - 1)
        flat = in_ch * 4 * 4
        self.realness_head = nn.Linear(flat, 1)
        # a small MLP head holds its class boundary steady while the shared
        # trunk shifts under the adversarial game
        self.domain_head = (
            nn.Sequential(nn.Linear(flat, 64), nn.LeakyReLU(0.2), nn.Linear(64, num_domains))
            if domain_head else None
        )

    def forward(self, y: torch.Tensor, t: torch.Tensor) -> DiscriminatorOutput:
        temb = self.t_proj(self.t_embed(t).to(y.dtype))
        h = y
        for i, conv in enumerate(self.convs):
            h = _lrelu(conv(h))
            if i == self._inject_at:
                h = h + temb[:, :, None, None]
        flat = h.flatten(1)
        logit = self.realness_head(flat).squeeze(1)
        realness = _REALNESS_EPS + (1.0 - 2.0 * _REALNESS_EPS) * torch.sigmoid(logit)
        logits = self.domain_head(flat) if self.domain_head is not None else None
        return DiscriminatorOutput(realness=realness, domain_logits=logits)


class FeatureExtractor(nn.Module):
    """Three-stage random conv pyramid, frozen at a recorded seed.

    Serves both the multi-layer perceptual distance and the pooled corpus
    embedding; its parameters never change after construction.
    """

    def __init__(self, channels: int, base: int = 16, seed: int = 0):
        super().__init__()
        self.seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.stage1 = nn.Conv2d(channels, base, 3, stride=2, padding=1)
            self.stage2 = nn.Conv2d(base, base * 2, 3, stride=2, padding=1)
            self.stage3 = nn.Conv2d(base * 2, base * 4, 3, stride=2, padding=1)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        f1 = _lrelu(self.stage1(x))
        f2 = _lrelu(self.stage2(f1))
        f3 = _lrelu(self.stage3(f2))
        return [f1, f2, f3]

    def embed_pooled(self, x: torch.Tensor) -> torch.Tensor:
        """Globally average-pooled final-stage features, (B, d_e)."""
        return self.forward(x)[-1].mean(dim=(2, 3))

    @property
    def embed_dim(self) -> int:
        return self.stage3.out_channels


def param_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameters in a canonical order."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@dataclass
class ModelBundle:
    """Everything trainable plus the frozen feature extractor."""

    encoder: Encoder
    generator: Generator
    discriminator: Discriminator
    phi: FeatureExtractor
    image_size: int
    channels: int
    num_domains: int
    d_z: int

    @property
    def num_layers(self) -> int:
        return self.generator.num_layers

    def trainable_modules(self) -> dict[str, nn.Module]:
        return {"encoder": self.encoder, "generator": self.generator, "discriminator": self.discriminator}

    def all_modules(self) -> dict[str, nn.Module]:
        return {**self.trainable_modules(), "phi": self.phi}

    def param_count(self) -> int:
        return sum(p.numel() for m in self.trainable_modules().values() for p in m.parameters())

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, m in sorted(self.all_modules().items()):
            h.update(name.encode())
            h.update(param_checksum(m).encode())
        return h.hexdigest()

    def to_double(self) -> "ModelBundle":
        for m in self.all_modules().values():
            m.double()
        return self

    def train_mode(self, flag: bool = True) -> "ModelBundle":
        for m in self.trainable_modules().values():
            m.train(flag)
        self.phi.eval()
        return self


def init_bundle(cfg, seed: int) -> ModelBundle:
    """Deterministic construction of all networks under a fixed seed."""
    validate_image_size(cfg.image_size)
    if cfg.channels not in (1, 3):
        raise ValidationError(f"channels must be 1 or 3, got {cfg.channels}")
    if cfg.num_domains < 2:
        raise ValidationError(f"num_domains must be >= 2, got {cfg.num_domains}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        encoder = Encoder(cfg.image_size, cfg.channels, cfg.num_domains, cfg.d_z,
                          base=cfg.e_base, emb_dim=cfg.source_emb_dim)
        generator = Generator(cfg.image_size, cfg.channels, cfg.num_domains, cfg.d_z,
                              d_w=cfg.d_w, base=cfg.g_base, target_emb_dim=cfg.target_emb_dim)
        discriminator = Discriminator(cfg.image_size, cfg.channels, cfg.num_domains,
                                      base=cfg.d_base, t_emb_dim=cfg.t_emb_dim,
                                      domain_head=cfg.domain_head)
    phi = FeatureExtractor(cfg.channels, base=cfg.phi_base, seed=cfg.phi_seed)
    return ModelBundle(
        encoder=encoder, generator=generator, discriminator=discriminator, phi=phi,
        image_size=cfg.image_size, channels=cfg.channels,
        num_domains=cfg.num_domains, d_z=cfg.d_z,
    )


def encode(x: torch.Tensor, s: torch.Tensor, bundle: ModelBundle) -> torch.Tensor:
    return bundle.encoder(x, s)


def generate(z: torch.Tensor, c: torch.Tensor, bundle: ModelBundle,
             mix: tuple[torch.Tensor, int] | None = None) -> torch.Tensor:
    return bundle.generator(z, c, mix=mix)


def discriminate(y: torch.Tensor, t: torch.Tensor, bundle: ModelBundle) -> DiscriminatorOutput:
    return bundle.discriminator(y, t)


def perceptual_features(x: torch.Tensor, bundle: ModelBundle) -> list[torch.Tensor]:
    return bundle.phi(x)
