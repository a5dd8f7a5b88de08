import math

import pytest
import torch

from ocugan.errors import NanLossError, ValidationError
from ocugan.losses import (
    LossWeights,
    adv_loss_d,
    adv_loss_g,
    domain_loss_real,
    domain_loss_synth,
    domain_loss_total,
    identity_loss,
    lpips_loss,
    recon_loss,
    style_mix_loss,
    total_losses,
)
from ocugan.networks import DiscriminatorOutput, FeatureExtractor


def _out(realness_value: float, n: int = 4) -> DiscriminatorOutput:
    p = torch.full((n,), realness_value, dtype=torch.float64)
    return DiscriminatorOutput(realness=p, domain_logits=None)


class TestAdversarial:
    def test_equilibrium_values(self):
        assert adv_loss_d(_out(0.5), _out(0.5)).item() == pytest.approx(2 * math.log(2), abs=1e-9)
        assert adv_loss_g(_out(0.5)).item() == pytest.approx(math.log(2), abs=1e-9)

    def test_confident_discriminator(self):
        loss = adv_loss_d(_out(0.9), _out(0.1))
        assert loss.item() == pytest.approx(-2 * math.log(0.9), abs=1e-9)

    def test_d_loss_minimized_at_correct_extremes(self):
        sweep = [0.05, 0.25, 0.5, 0.75, 0.95]
        best = min((adv_loss_d(_out(r), _out(f)).item(), r, f) for r in sweep for f in sweep)
        assert (best[1], best[2]) == (0.95, 0.05)

    def test_g_loss_vanishes_as_fakes_fool(self):
        assert adv_loss_g(_out(1.0 - 1e-12)).item() == pytest.approx(0.0, abs=1e-9)

    def test_nonsaturating_gradient_magnitudes(self):
        # d/dp of -ln p is -1/p: magnitude 10 at p=0.1, ~1.01 at p=0.99
        for p_val, expect in ((0.1, 10.0), (0.99, 1.0101010101)):
            p = torch.tensor([p_val], dtype=torch.float64, requires_grad=True)
            out = DiscriminatorOutput(realness=p, domain_logits=None)
            (g,) = torch.autograd.grad(adv_loss_g(out), p)
            assert g.abs().item() == pytest.approx(expect, rel=1e-9)

    def test_saturating_variant(self):
        assert adv_loss_g(_out(0.5), saturating=True).item() == pytest.approx(-math.log(2), abs=1e-9)


class TestDomainLosses:
    def test_uniform_logits_give_log_k(self):
        logits = torch.zeros(5, 3, dtype=torch.float64)
        s = torch.tensor([0, 1, 2, 0, 1])
        assert domain_loss_real(logits, s).item() == pytest.approx(math.log(3), abs=1e-9)
        assert domain_loss_synth(logits, s).item() == pytest.approx(math.log(3), abs=1e-9)

    def test_perfect_classification(self):
        logits = torch.full((4, 3), -300.0, dtype=torch.float64)
        s = torch.tensor([0, 1, 2, 0])
        logits[torch.arange(4), s] = 300.0
        assert domain_loss_real(logits, s).item() == pytest.approx(0.0, abs=1e-12)

    def test_half_probability(self):
        logits = torch.tensor([[math.log(2), 0.0, 0.0]], dtype=torch.float64)
        # p(true) = 2/(2+1+1) = 0.5
        assert domain_loss_real(logits, torch.tensor([0])).item() == pytest.approx(math.log(2), abs=1e-9)

    def test_total_is_sum(self):
        assert domain_loss_total(0.2, 0.3) == pytest.approx(0.5)

    def test_disabled_head_rejected(self):
        with pytest.raises(ValidationError):
            domain_loss_real(None, torch.tensor([0]))


class TestReconstructionFamily:
    def test_zero_at_fixed_point(self):
        x = torch.randn(2, 1, 8, 8, dtype=torch.float64)
        phi = FeatureExtractor(1, base=4, seed=0).double()
        assert recon_loss(x, x.clone()).item() == 0.0
        assert identity_loss(x, x.clone()).item() == 0.0
        assert lpips_loss(x, x.clone(), phi).item() == 0.0
        assert style_mix_loss(x, x.clone(), 4).item() == 0.0

    def test_extreme_images(self):
        x = torch.full((2, 1, 4, 4), -1.0)
        assert recon_loss(x, torch.full_like(x, 1.0)).item() == pytest.approx(4.0)

    def test_single_pixel_normalization(self):
        x = torch.zeros(1, 1, 32, 32, dtype=torch.float64)
        y = x.clone()
        y[0, 0, 3, 7] = 0.5
        assert recon_loss(x, y).item() == pytest.approx(0.25 / 1024, rel=1e-12)

    def test_identity_shares_recon_kernel(self):
        a = torch.randn(3, 1, 8, 8, dtype=torch.float64)
        b = torch.randn(3, 1, 8, 8, dtype=torch.float64)
        assert identity_loss(a, b).item() == recon_loss(a, b).item()

    def test_mix_zero_for_identical_inputs_through_networks(self):
        # same (x, s) encoded and rendered twice gives identical outputs
        from conftest import mini_model_config, rand_images
        from ocugan.networks import init_bundle

        b = init_bundle(mini_model_config(), seed=2)
        x = rand_images(3, size=8, seed=7)
        s = torch.tensor([0, 1, 2])
        c = torch.tensor([1, 1, 1])
        out1 = b.generator(b.encoder(x, s), c)
        out2 = b.generator(b.encoder(x, s), c)
        assert style_mix_loss(out1, out2, b.num_layers).item() == 0.0

    def test_mix_scales_with_layer_count(self):
        out1 = torch.zeros(1, 1, 2, 2)
        out2 = torch.full_like(out1, math.sqrt(0.5))  # per-image MSE 0.5
        assert style_mix_loss(out1, out2, 4).item() == pytest.approx(2.0, rel=1e-6)

    def test_nonnegative(self):
        g = torch.Generator().manual_seed(0)
        phi = FeatureExtractor(1, base=4, seed=0)
        for _ in range(5):
            a = torch.rand(2, 1, 8, 8, generator=g) * 2 - 1
            b = torch.rand(2, 1, 8, 8, generator=g) * 2 - 1
            assert recon_loss(a, b).item() >= 0
            assert lpips_loss(a, b, phi).item() >= 0
            assert style_mix_loss(a, b, 4).item() >= 0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            recon_loss(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 8, 8))

    def test_lpips_positive_on_distinct_domains(self, toy_split):
        from ocugan.data import load_batch

        phi = FeatureExtractor(1, base=16, seed=0)
        b0 = load_batch([it for it in toy_split.train if it[1].index == 0][:6])
        b1 = load_batch([it for it in toy_split.train if it[1].index == 1][:6])
        assert lpips_loss(b0.data, b1.data, phi).item() > 0


class TestAggregation:
    def test_zero_weights_zero_total(self):
        w = LossWeights(0, 0, 0, 0, 0, 0, 0)
        d, g = total_losses({"adv_d": torch.tensor(1.3)}, {"recon": torch.tensor(2.0)}, w)
        assert d.total == 0.0 and g.total == 0.0

    def test_single_weighted_term(self):
        w = LossWeights(lambda_adv=0, lambda_domain=0, lambda_recon=3.0,
                        lambda_lpips=0, lambda_inr=0, lambda_mix=0, lambda_path=0)
        _, g = total_losses({}, {"recon": torch.tensor(2.0)}, w)
        assert g.total == pytest.approx(6.0)

    def test_report_total_matches_recomputation(self):
        w = LossWeights()
        terms = {"adv_g": torch.tensor(0.31), "domain_synth": torch.tensor(1.7),
                 "recon": torch.tensor(0.02), "lpips": torch.tensor(0.4),
                 "identity": torch.tensor(0.011), "mix": torch.tensor(0.0),
                 "path": torch.tensor(1.25)}
        _, g = total_losses({}, terms, w)
        weight_of = {"adv_g": w.lambda_adv, "domain_synth": w.lambda_domain,
                     "recon": w.lambda_recon, "lpips": w.lambda_lpips,
                     "identity": w.lambda_inr, "mix": w.lambda_mix, "path": w.lambda_path}
        assert g.total == sum(weight_of[k] * v for k, v in g.terms.items())

    def test_nan_term_named(self):
        with pytest.raises(NanLossError, match="recon"):
            total_losses({}, {"recon": torch.tensor(float("nan"))}, LossWeights())

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            LossWeights(lambda_adv=-1.0)
