"""Shared machinery for central finite-difference checks of loss gradients.

Builds a miniature double-precision environment (8px images, 8-dim latents)
with every stochastic input frozen, and exposes a registry of scalar-valued
term pipelines keyed by loss name.
"""

import numpy as np
import torch

from conftest import mini_model_config, rand_images
from ocugan import losses as L
from ocugan.diffusion import build_schedule, diffuse
from ocugan.networks import init_bundle

N_COORDS = 20
REL_TOL = 1e-4


def build_env() -> dict:
    torch.set_num_threads(1)
    bundle = init_bundle(mini_model_config(), seed=5).to_double()
    g = torch.Generator().manual_seed(9)
    x = rand_images(3, size=8, seed=11, dtype=torch.float64)
    x2 = rand_images(3, size=8, seed=12, dtype=torch.float64)
    fake_const = rand_images(3, size=8, seed=13, dtype=torch.float64)
    env = dict(
        bundle=bundle, x=x, x2=x2, fake_const=fake_const,
        s=torch.tensor([0, 1, 2]), s2=torch.tensor([2, 0, 1]), c=torch.tensor([1, 2, 0]),
        t=torch.tensor([2, 5, 7]), sched=build_schedule(8, 0.05, 0.3, 0.5),
        eps_r=torch.randn(x.shape, generator=g, dtype=torch.float64),
        eps_f=torch.randn(x.shape, generator=g, dtype=torch.float64),
        probe=torch.randn(x.shape, generator=g, dtype=torch.float64),
    )
    return env


def _adv_d(env):
    b = env["bundle"]
    y_r = diffuse(env["x"], env["t"], env["sched"], noise=env["eps_r"])
    y_f = diffuse(env["fake_const"], env["t"], env["sched"], noise=env["eps_f"])
    return L.adv_loss_d(b.discriminator(y_r, env["t"]), b.discriminator(y_f, env["t"]))


def _fakes(env):
    b = env["bundle"]
    return b.generator(b.encoder(env["x"], env["s"]), env["c"])


def _adv_g(env):
    b = env["bundle"]
    y = diffuse(_fakes(env), env["t"], env["sched"], noise=env["eps_f"])
    return L.adv_loss_g(b.discriminator(y, env["t"]))


def _adv_g_saturating(env):
    b = env["bundle"]
    y = diffuse(_fakes(env), env["t"], env["sched"], noise=env["eps_f"])
    return L.adv_loss_g(b.discriminator(y, env["t"]), saturating=True)


def _domain_real(env):
    b = env["bundle"]
    y_r = diffuse(env["x"], env["t"], env["sched"], noise=env["eps_r"])
    return L.domain_loss_real(b.discriminator(y_r, env["t"]).domain_logits, env["s"])


def _domain_synth(env):
    b = env["bundle"]
    y = diffuse(_fakes(env), env["t"], env["sched"], noise=env["eps_f"])
    return L.domain_loss_synth(b.discriminator(y, env["t"]).domain_logits, env["c"])


def _recon(env):
    return L.recon_loss(env["x"], _fakes(env))


def _lpips(env):
    return L.lpips_loss(env["x"], _fakes(env), env["bundle"].phi)


def _identity(env):
    b = env["bundle"]
    return L.identity_loss(env["x"], b.generator(b.encoder(env["x"], env["s"]), env["s"]))


def _style_mix(env):
    b = env["bundle"]
    out2 = b.generator(b.encoder(env["x2"], env["s2"]), env["c"])
    return L.style_mix_loss(_fakes(env), out2, b.num_layers)


def _mixed_crossover(env):
    b = env["bundle"]
    z1 = b.encoder(env["x"], env["s"])
    z2 = b.encoder(env["x2"], env["s2"])
    return L.recon_loss(env["x"], b.generator(z1, env["c"], mix=(z2, 1)))


def _path(env):
    b = env["bundle"]
    z = b.encoder(env["x"], env["s"])
    w = b.generator.map_latent(z, env["c"])
    w_layers = w[:, None, :].repeat(1, b.num_layers, 1)
    y = b.generator.synthesize(w_layers)
    penalty, _ = L.path_length_penalty(y, w_layers, pl_mean=0.3, noise=env["probe"])
    return penalty


TERMS = {
    "adv_d": (_adv_d, 101),
    "adv_g": (_adv_g, 102),
    "adv_g_saturating": (_adv_g_saturating, 103),
    "domain_real": (_domain_real, 104),
    "domain_synth": (_domain_synth, 105),
    "recon": (_recon, 106),
    "lpips": (_lpips, 107),
    "identity": (_identity, 108),
    "style_mix": (_style_mix, 109),
    "mixed_crossover": (_mixed_crossover, 110),
    "path": (_path, 111),
}


def _params(bundle):
    out = []
    for mod_name, module in bundle.trainable_modules().items():
        for pname, p in module.named_parameters():
            out.append((f"{mod_name}.{pname}", p))
    return out


def check_term(env, term: str) -> float:
    """Compare autograd and central differences on N_COORDS coordinates with
    non-negligible analytic gradient; returns the worst relative error."""
    fn_builder, seed = TERMS[term]
    bundle = env["bundle"]
    params = _params(bundle)
    value = fn_builder(env)
    grads = torch.autograd.grad(value, [p for _, p in params], allow_unused=True)

    candidates = []
    for (name, p), grad in zip(params, grads):
        if grad is None:
            continue
        flat = grad.reshape(-1)
        idx = torch.nonzero(flat.abs() > 1e-6).reshape(-1)
        candidates.extend((name, p, int(i), float(flat[i])) for i in idx.tolist())
    assert len(candidates) >= N_COORDS, f"{term}: too few live gradient coordinates"

    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=N_COORDS, replace=False)
    worst = 0.0
    for k in picks:
        name, p, i, analytic = candidates[k]
        flat = p.data.reshape(-1)
        orig = float(flat[i])
        h = 1e-5 * max(1.0, abs(orig))
        flat[i] = orig + h
        f_plus = float(fn_builder(env).detach())
        flat[i] = orig - h
        f_minus = float(fn_builder(env).detach())
        flat[i] = orig
        fd = (f_plus - f_minus) / (2.0 * h)
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-8)
        worst = max(worst, rel)
        assert rel < REL_TOL, f"{term} {name}[{i}]: analytic {analytic:.3e} vs fd {fd:.3e} (rel {rel:.2e})"
    return worst
