"""Training objectives as pure differentiable functions of model outputs.

Two sides share the adversarial game: the discriminator minimizes a binary
cross-entropy on corrupted real vs. corrupted generated images plus a
source-domain classification term on reals; the generator/encoder side
minimizes a nonsaturating adversarial term, a target-domain classification
term on fakes, pixel reconstruction, multi-layer perceptual distance, an
in-domain identity term, an optional literal style-mixing penalty, and a
path-length penalty.  All L2-style terms are normalized by element count so
weights are resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch.nn import functional as F

from .errors import NanLossError, ValidationError
from .networks import DiscriminatorOutput


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 1.0
    lambda_domain: float = 1.0
    lambda_recon: float = 10.0
    lambda_lpips: float = 1.0
    lambda_inr: float = 5.0
    lambda_mix: float = 1.0
    lambda_path: float = 2.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (v >= 0.0 and v == v and v != float("inf")):
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class LossReport:
    """Named scalar terms plus the weighted total for one optimization side.

    ``total`` always equals sum(weight * term) over ``terms``; ``tensor``
    carries the differentiable weighted total for the backward pass.
    """

    terms: dict[str, float]
    total: float
    tensor: torch.Tensor | None = field(default=None, repr=False, compare=False)


def adv_loss_d(real_out: DiscriminatorOutput, fake_out: DiscriminatorOutput) -> torch.Tensor:
    """Discriminator binary cross-entropy: -[E log D(y,t) + E log(1 - D(y_g,t))]."""
    return -(torch.log(real_out.realness).mean() + torch.log1p(-fake_out.realness).mean())


def adv_loss_g(fake_out: DiscriminatorOutput, saturating: bool = False) -> torch.Tensor:
    """Generator adversarial term.

    Default is the nonsaturating form -E log D(y_g,t); ``saturating`` switches
    to the literal min-max side +E log(1 - D(y_g,t)).
    """
    if saturating:
        return torch.log1p(-fake_out.realness).mean()
    return -torch.log(fake_out.realness).mean()


def domain_loss_real(domain_logits: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """Mean NLL of the true source domain under softmax(logits), on corrupted reals."""
    if domain_logits is None:
        raise ValidationError("domain head is disabled; no domain logits available")
    return F.cross_entropy(domain_logits, s)


def domain_loss_synth(domain_logits_on_fake: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    """Mean NLL of the target domain on corrupted generated images."""
    if domain_logits_on_fake is None:
        raise ValidationError("domain head is disabled; no domain logits available")
    return F.cross_entropy(domain_logits_on_fake, c)


def domain_loss_total(real_term: torch.Tensor | float, synth_term: torch.Tensor | float):
    """Combined domain transfer loss: real-side plus synthetic-side terms."""
    return real_term + synth_term


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def recon_loss(x: torch.Tensor, x_rec: torch.Tensor) -> torch.Tensor:
    """Content preservation: element-count-normalized squared distance."""
    _check_same_shape(x, x_rec)
    return F.mse_loss(x_rec, x)


def lpips_loss(x: torch.Tensor, x_rec: torch.Tensor, phi) -> torch.Tensor:
    """Perceptual distance: per-layer mean squared feature distance, summed over layers."""
    _check_same_shape(x, x_rec)
    feats_x = phi(x)
    feats_r = phi(x_rec)
    return sum(F.mse_loss(fr, fx) for fr, fx in zip(feats_r, feats_x))


def identity_loss(x: torch.Tensor, x_same: torch.Tensor) -> torch.Tensor:
    """In-domain identity: same kernel as reconstruction, applied to the
    translation of an image into its own domain."""
    return recon_loss(x, x_same)


def style_mix_loss(out_1: torch.Tensor, out_2: torch.Tensor, num_layers: int) -> torch.Tensor:
    """Literal layer-summed penalty between two translations sharing a target:
    the summand carries no layer index, so it reduces to L * MSE."""
    _check_same_shape(out_1, out_2)
    return num_layers * F.mse_loss(out_1, out_2)


def path_length_penalty(
    images: torch.Tensor,
    w_layers: torch.Tensor,
    pl_mean: float,
    noise: torch.Tensor | None = None,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, float]:
    """Penalize deviation of the style-space Jacobian-vector-product norm from
    its running mean; returns (penalty, batch mean path length for the EMA).

    ``noise`` fixes the probe direction for finite-difference checks.
    """
    b, _, h, w = images.shape
    if noise is None:
        noise = torch.empty_like(images).normal_(generator=rng)
    u = noise / float(h * w) ** 0.5
    (grads,) = torch.autograd.grad((images * u).sum(), w_layers, create_graph=True)
    # tiny floor keeps the sqrt differentiable if a sample's JVP vanishes
    lengths = (grads.pow(2).sum(dim=2).mean(dim=1) + 1e-12).sqrt()
    penalty = (lengths - pl_mean).pow(2).mean()
    return penalty, float(lengths.detach().mean())


_D_WEIGHT_BY_TERM = {"adv_d": "lambda_adv", "domain_real": "lambda_domain"}
_G_WEIGHT_BY_TERM = {
    "adv_g": "lambda_adv",
    "domain_synth": "lambda_domain",
    "recon": "lambda_recon",
    "lpips": "lambda_lpips",
    "identity": "lambda_inr",
    "mix": "lambda_mix",
    "path": "lambda_path",
}


def _aggregate(terms: dict[str, torch.Tensor], weight_map: dict[str, str], weights: LossWeights) -> LossReport:
    total_tensor = None
    term_floats: dict[str, float] = {}
    total = 0.0
    for name, value in terms.items():
        if name not in weight_map:
            raise ValidationError(f"unknown loss term {name!r}")
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise NanLossError(name)
        lam = getattr(weights, weight_map[name])
        v = value if isinstance(value, torch.Tensor) else torch.as_tensor(float(value))
        term_floats[name] = float(v.detach())
        total += lam * term_floats[name]
        contrib = lam * v
        total_tensor = contrib if total_tensor is None else total_tensor + contrib
    return LossReport(terms=term_floats, total=total, tensor=total_tensor)


def total_losses(
    d_terms: dict[str, torch.Tensor],
    g_terms: dict[str, torch.Tensor],
    weights: LossWeights,
) -> tuple[LossReport, LossReport]:
    """Weighted aggregation for both sides; raises :class:`NanLossError`
    naming the first non-finite term."""
    return (
        _aggregate(d_terms, _D_WEIGHT_BY_TERM, weights),
        _aggregate(g_terms, _G_WEIGHT_BY_TERM, weights),
    )
