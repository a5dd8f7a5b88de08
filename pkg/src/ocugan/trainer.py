"""Alternating optimization loop binding data, diffusion, networks and losses.

Step anatomy (fixed order):

1. sample a target domain per sample, encode, synthesize fakes (crossover
   style mixing with configured probability);
2. corrupt reals and detached fakes at freshly sampled timesteps;
3. discriminator update on adversarial + source-domain terms;
4. resample timesteps, generator/encoder update on the full objective
   (adversarial, target-domain, reconstruction, perceptual, in-domain
   identity, optional literal mixing penalty, path-length penalty);
5. every ``update_interval`` steps, recompute the overfit metric from the
   discriminator outputs accumulated on corrupted reals and move the
   timestep budget.

All randomness flows through explicit generators that are checkpointed, so a
fixed (config, seed) pair reproduces the metrics stream bit-for-bit in
single-threaded mode and a resumed run replays an uninterrupted one exactly.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import diffusion as dfn
from . import losses as L
from .checkpoint import (
    checkpoint_sha256,
    load_checkpoint,
    restore_optimizer,
    save_checkpoint,
)
from .config import TrainConfig, config_to_dict
from .data import DatasetSplit, EpochSampler, ImageBatch, dataset_domains, list_domain_images, load_image, split_dataset
from .errors import NanLossError, TrainingDiverged, ValidationError
from .networks import ModelBundle, init_bundle


def derive_seed(seed: int, tag: str) -> int:
    """Independent 63-bit stream seed for a named purpose."""
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


class MetricsWriter:
    """Append-only JSONL metrics stream; one record per training step."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a")
        else:
            self._fh = None
        self.records: list[dict] = []

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


class Trainer:
    def __init__(self, config: TrainConfig, split: DatasetSplit, run_dir: str | Path | None = None):
        config.validate()
        if config.deterministic:
            torch.set_num_threads(1)
        self.config = config
        self.split = split
        self.run_dir = Path(run_dir) if run_dir else None

        self.bundle: ModelBundle = init_bundle(config.model, derive_seed(config.seed, "init"))
        self.bundle.train_mode(True)
        ge_params = list(self.bundle.encoder.parameters()) + list(self.bundle.generator.parameters())
        betas = (config.beta1, config.beta2)
        self.opt_d = torch.optim.Adam(self.bundle.discriminator.parameters(), lr=config.lr_d, betas=betas)
        self.opt_ge = torch.optim.Adam(ge_params, lr=config.lr_ge, betas=betas)

        d = config.diffusion
        self.schedule = dfn.build_schedule(d.t_max, d.beta_min, d.beta_max, d.sigma)
        self.diff_state = dfn.AdaptiveDiffusionState(
            t_current=d.t_min, d_target=d.d_target, c_step=d.c_step,
            t_min=d.t_min, t_max=d.t_max, update_interval=d.update_interval,
            pi_kind=d.pi_kind,
        )

        self.gen = torch.Generator().manual_seed(derive_seed(config.seed, "train"))
        self.sampler = EpochSampler(
            split.train, config.batch_size,
            rng=np.random.default_rng(derive_seed(config.seed, "data")),
            channels=config.model.channels,
        )

        self.step = 0
        self.rd_values: list[float] = []  # raw D outputs on corrupted reals
        self.pl_mean = 0.0
        self.weights = config.losses.weights()
        self.recent_reports: list[dict] = []

    # ------------------------------------------------------------------ steps

    def _maybe_mix(self, z: torch.Tensor) -> tuple[torch.Tensor, int] | None:
        lc = self.config.losses
        if not lc.style_mixing or self.bundle.num_layers < 2:
            return None
        coin = torch.rand((), generator=self.gen).item()
        if coin >= lc.mixing_prob:
            return None
        crossover = int(torch.randint(1, self.bundle.num_layers, (1,), generator=self.gen).item())
        perm = torch.randperm(z.shape[0], generator=self.gen)
        return z[perm], crossover

    def train_step(self, batch: ImageBatch) -> tuple[L.LossReport, L.LossReport]:
        cfg, lc = self.config, self.config.losses
        bundle = self.bundle
        x, s = batch.data, batch.labels
        b = x.shape[0]

        # (1) target domains, one shared fake synthesis graph
        c = torch.randint(0, bundle.num_domains, (b,), generator=self.gen)
        z = bundle.encoder(x, s)
        fakes = bundle.generator(z, c, mix=self._maybe_mix(z))

        # (2)-(3) discriminator update on corrupted reals/fakes
        dist = self.diff_state.distribution()
        t_d = dfn.sample_timesteps(dist, b, self.gen)
        y_real = dfn.diffuse(x, t_d, self.schedule, rng=self.gen)
        y_fake = dfn.diffuse(fakes.detach(), t_d, self.schedule, rng=self.gen)
        out_real = bundle.discriminator(y_real, t_d)
        out_fake = bundle.discriminator(y_fake, t_d)
        d_terms = {"adv_d": L.adv_loss_d(out_real, out_fake)}
        if bundle.discriminator.domain_head is not None:
            d_terms["domain_real"] = L.domain_loss_real(out_real.domain_logits, s)
        self.rd_values.extend(float(v) for v in out_real.realness.detach())

        try:
            d_report, _ = L.total_losses(d_terms, {}, self.weights)
        except NanLossError as exc:
            raise TrainingDiverged(exc.term, self.step + 1) from exc
        self.opt_d.zero_grad(set_to_none=True)
        d_report.tensor.backward()
        self.opt_d.step()

        # (4) generator/encoder update through the updated discriminator
        t_g = dfn.sample_timesteps(dist, b, self.gen)
        y_fake_g = dfn.diffuse(fakes, t_g, self.schedule, rng=self.gen)
        out_fake_g = bundle.discriminator(y_fake_g, t_g)

        g_terms: dict[str, torch.Tensor] = {"adv_g": L.adv_loss_g(out_fake_g, saturating=lc.saturating_adv)}
        if bundle.discriminator.domain_head is not None:
            g_terms["domain_synth"] = L.domain_loss_synth(out_fake_g.domain_logits, c)
        g_terms["recon"] = L.recon_loss(x, fakes)
        g_terms["lpips"] = L.lpips_loss(x, fakes, bundle.phi)
        x_same = bundle.generator(bundle.encoder(x, s), s)
        g_terms["identity"] = L.identity_loss(x, x_same)
        if lc.literal_eq10:
            perm = torch.randperm(b, generator=self.gen)
            out_2 = bundle.generator(bundle.encoder(x[perm], s[perm]), c)
            g_terms["mix"] = L.style_mix_loss(fakes, out_2, bundle.num_layers)
        else:
            g_terms["mix"] = torch.zeros((), dtype=x.dtype)
        pl_batch = None
        if lc.path_reg:
            m = min(cfg.ppl_batch, b)
            w_pl = bundle.generator.map_latent(z[:m], c[:m])
            w_layers = w_pl[:, None, :].repeat(1, bundle.num_layers, 1)
            y_pl = bundle.generator.synthesize(w_layers)
            penalty, pl_batch = L.path_length_penalty(y_pl, w_layers, self.pl_mean, rng=self.gen)
            g_terms["path"] = penalty
        else:
            g_terms["path"] = torch.zeros((), dtype=x.dtype)

        try:
            _, g_report = L.total_losses({}, g_terms, self.weights)
        except NanLossError as exc:
            raise TrainingDiverged(exc.term, self.step + 1) from exc
        self.opt_ge.zero_grad(set_to_none=True)
        g_report.tensor.backward()
        self.opt_ge.step()

        if pl_batch is not None:
            self.pl_mean += 0.01 * (pl_batch - self.pl_mean)

        # (5) self-paced timestep budget, once per update_interval minibatches
        self.step += 1
        if self.step % self.diff_state.update_interval == 0:
            r_d = dfn.overfit_metric(np.asarray(self.rd_values))
            dfn.update_T(self.diff_state, r_d)
            self.rd_values.clear()
        return d_report, g_report

    # ------------------------------------------------------------------ loop

    _METRIC_KEYS = {"adv_d": "d_adv", "domain_real": "d_domain", "adv_g": "g_adv",
                    "domain_synth": "g_domain", "recon": "g_recon", "lpips": "g_lpips",
                    "identity": "g_identity", "mix": "g_mix", "path": "g_path"}

    def _metrics_record(self, d_report: L.LossReport, g_report: L.LossReport, wall: float) -> dict:
        rec = {"step": self.step, "wall_time_s": wall}
        for name, v in {**d_report.terms, **g_report.terms}.items():
            rec[self._METRIC_KEYS[name]] = v
        rec["d_total"] = d_report.total
        rec["g_total"] = g_report.total
        rec["r_d"] = self.diff_state.r_d_last
        rec["t_current"] = self.diff_state.t_current
        return rec

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(
            path,
            config=self.config, step=self.step, bundle=self.bundle,
            opt_d=self.opt_d, opt_ge=self.opt_ge,
            t_current=self.diff_state.t_current, r_d_last=self.diff_state.r_d_last,
            rd_values=self.rd_values, pl_mean=self.pl_mean,
            torch_rng=self.gen, sampler_state=self.sampler.state_dict(),
        )

    @classmethod
    def from_checkpoint(cls, path: str | Path, split: DatasetSplit | None = None,
                        run_dir: str | Path | None = None) -> "Trainer":
        data = load_checkpoint(path)
        cfg = data.config
        if split is None:
            split = split_dataset(cfg.data.root, cfg.data.split_fraction, cfg.data.split_seed)
        trainer = cls(cfg, split, run_dir=run_dir)
        for mod_name, module in trainer.bundle.all_modules().items():
            tensors = {k: torch.from_numpy(v.copy()) for k, v in data.params[mod_name].items()}
            module.load_state_dict(tensors)
        restore_optimizer(trainer.opt_d, data.optim["d"])
        restore_optimizer(trainer.opt_ge, data.optim["ge"])
        trainer.step = data.step
        trainer.diff_state.t_current = data.t_current
        trainer.diff_state.r_d_last = data.r_d_last
        trainer.rd_values = [float(v) for v in data.rd_values]
        trainer.pl_mean = data.pl_mean
        trainer.gen.set_state(torch.from_numpy(data.torch_rng.copy()))
        trainer.sampler.load_state_dict(data.sampler_state)
        return trainer

    def _write_sample_grid(self) -> None:
        if not self.run_dir:
            return
        probe = self.split.train[: min(8, len(self.split.train))]
        from .data import load_batch

        batch = load_batch(probe, self.config.model.channels)
        rows = []
        with torch.no_grad():
            for dom in range(self.bundle.num_domains):
                c = torch.full((len(batch),), dom, dtype=torch.long)
                out = self.bundle.generator(self.bundle.encoder(batch.data, batch.labels), c)
                rows.append(torch.cat(list(out[:, 0]), dim=1))
        grid = torch.cat(rows, dim=0)
        arr = ((grid.numpy() + 1.0) * 127.5).round().clip(0, 255).astype(np.uint8)
        out_dir = self.run_dir / "samples"
        out_dir.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr, mode="L").save(out_dir / f"step_{self.step:06d}.png")

    def fit(self) -> Path:
        cfg = self.config
        metrics = MetricsWriter(self.run_dir / "metrics" / "metrics.jsonl" if self.run_dir else None)
        ckpt_dir = (self.run_dir / "checkpoints") if self.run_dir else Path("checkpoints")
        try:
            while self.step < cfg.total_steps:
                batch = self.sampler.next_batch()
                start = time.perf_counter()
                try:
                    d_report, g_report = self.train_step(batch)
                except TrainingDiverged as exc:
                    self._dump_divergence(exc)
                    raise
                wall = time.perf_counter() - start
                metrics.write(self._metrics_record(d_report, g_report, wall))
                self.recent_reports = metrics.records[-16:]
                if cfg.checkpoint_interval and self.step % cfg.checkpoint_interval == 0:
                    self.save(ckpt_dir / f"step_{self.step:06d}.npz")
                if cfg.eval_interval and self.step % cfg.eval_interval == 0:
                    self._write_sample_grid()
            final = self.save(ckpt_dir / f"step_{self.step:06d}.npz")
        finally:
            metrics.close()
        return final

    def _dump_divergence(self, exc: TrainingDiverged) -> None:
        if not self.run_dir:
            return
        out = self.run_dir / "reports"
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "diverged.json", "w") as fh:
            json.dump({"term": exc.term, "step": exc.step, "recent": self.recent_reports}, fh, indent=2)


def fit(config: TrainConfig, split: DatasetSplit | None = None,
        run_dir: str | Path | None = None, resume: str | Path | None = None) -> Path:
    """Run (or resume) a full training; returns the final checkpoint path."""
    if split is None:
        split = split_dataset(config.data.root, config.data.split_fraction, config.data.split_seed)
    if resume:
        trainer = Trainer.from_checkpoint(resume, split=split, run_dir=run_dir)
        trainer.config.total_steps = config.total_steps
    else:
        trainer = Trainer(config, split, run_dir=run_dir)
    return trainer.fit()


def load_bundle(ckpt_path: str | Path) -> tuple[ModelBundle, TrainConfig]:
    """Frozen evaluation copy of the networks stored in a checkpoint."""
    data = load_checkpoint(ckpt_path)
    bundle = init_bundle(data.config.model, derive_seed(data.config.seed, "init"))
    for mod_name, module in bundle.all_modules().items():
        tensors = {k: torch.from_numpy(v.copy()) for k, v in data.params[mod_name].items()}
        module.load_state_dict(tensors)
    bundle.train_mode(False)
    for m in bundle.all_modules().values():
        for p in m.parameters():
            p.requires_grad_(False)
    return bundle, data.config


def translate_corpus(
    ckpt: str | Path,
    source_dir: str | Path,
    source_domain: int,
    target_domain: int,
    count: int,
    out_dir: str | Path,
    batch_size: int = 64,
) -> Path:
    """Translate ``count`` images from one domain into another and write them
    as 8-bit PNGs plus a manifest recording the checkpoint hash.

    Sources are consumed in sorted order and cycled if ``count`` exceeds them;
    the translation itself is deterministic, so reruns are byte-identical.
    """
    bundle, _ = load_bundle(ckpt)
    src = Path(source_dir)
    files = sorted(p for p in src.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise ValidationError(f"no source images in {src}")
    if not (0 <= source_domain < bundle.num_domains and 0 <= target_domain < bundle.num_domains):
        raise ValidationError("domain index out of range")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written = 0
    with torch.no_grad():
        while written < count:
            take = min(batch_size, count - written)
            paths = [files[(written + i) % len(files)] for i in range(take)]
            data = torch.from_numpy(np.stack([load_image(p, bundle.channels) for p in paths]))
            s = torch.full((take,), source_domain, dtype=torch.long)
            c = torch.full((take,), target_domain, dtype=torch.long)
            imgs = bundle.generator(bundle.encoder(data, s), c)
            arr = ((imgs.numpy() + 1.0) * 127.5).round().clip(0, 255).astype(np.uint8)
            for i in range(take):
                frame = arr[i, 0] if bundle.channels == 1 else arr[i].transpose(1, 2, 0)
                mode = "L" if bundle.channels == 1 else "RGB"
                Image.fromarray(frame, mode=mode).save(out / f"{written + i:05d}.png")
            written += take

    manifest = {
        "checkpoint_sha256": checkpoint_sha256(ckpt),
        "source_domain": int(source_domain),
        "target_domain": int(target_domain),
        "count": int(count),
        "source_dir": str(src),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def build_synthetic_corpus(
    ckpt: str | Path,
    source_root: str | Path,
    out_root: str | Path,
    per_domain: int,
    items: list | None = None,
) -> Path:
    """Translate a real corpus into every domain, producing a dataset-shaped
    directory ``<out_root>/<domain>/*.png`` with per-domain manifests.

    Sources for each target domain are drawn from all domains of
    ``source_root`` (interleaved, sorted order) so the synthetic set inherits
    the source variety.
    """
    bundle, _ = load_bundle(ckpt)
    domains = dataset_domains(source_root)
    pool: list[tuple[Path, int]] = []
    per_dom_files = {d.index: list_domain_images(source_root, d) for d in domains}
    longest = max(len(v) for v in per_dom_files.values())
    for i in range(longest):
        for d in domains:
            files = per_dom_files[d.index]
            if i < len(files):
                pool.append((files[i], d.index))

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        for dom in domains:
            ddir = out_root / dom.name
            ddir.mkdir(parents=True, exist_ok=True)
            for j in range(per_domain):
                path, s_idx = pool[j % len(pool)]
                data = torch.from_numpy(load_image(path, bundle.channels))[None]
                s = torch.tensor([s_idx], dtype=torch.long)
                c = torch.tensor([dom.index], dtype=torch.long)
                img = bundle.generator(bundle.encoder(data, s), c)[0]
                arr = ((img.numpy() + 1.0) * 127.5).round().clip(0, 255).astype(np.uint8)
                frame = arr[0] if bundle.channels == 1 else arr.transpose(1, 2, 0)
                Image.fromarray(frame, mode="L" if bundle.channels == 1 else "RGB").save(ddir / f"{j:05d}.png")
    manifest = {
        "checkpoint_sha256": checkpoint_sha256(ckpt),
        "per_domain": per_domain,
        "source_root": str(source_root),
        "domains": [{"index": d.index, "name": d.name} for d in domains],
    }
    with open(out_root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out_root
