"""Realism and detector-utility metrics.

Corpus realism is measured as the Frechet distance between Gaussians fitted
to pooled features of the frozen pyramid.  The embedding is NOT a pretrained
classifier, so absolute values are not comparable to published
full-resolution numbers; only orderings and ratios are meaningful here.

Detector scores are summarized as TDR@FDR: the fraction of attack samples
caught at the smallest threshold whose bonafide false-flag rate stays within
the target.  Comparisons use >= on scores (higher score = more attack-like).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import dataset_domains, list_domain_images, load_image
from .errors import NumericalError, ValidationError

_EIG_CLIP = 1e-6  # eigenvalues in (-1e-6, 0) are rounding noise and clip to 0


@dataclass
class GaussianStats:
    """Sufficient statistics of an embedded image set: mean, covariance, count."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.n < 2:
            raise ValidationError(f"need at least 2 samples, got {self.n}")
        if self.sigma.shape != (self.mu.size, self.mu.size):
            raise ValidationError("covariance shape does not match mean dimension")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-10):
            raise ValidationError("covariance must be symmetric")
        w = np.linalg.eigvalsh(self.sigma)
        if w.min() < -1e-8:
            raise ValidationError(f"covariance not PSD within tolerance (min eigenvalue {w.min():.3e})")


def embed(batches, phi) -> GaussianStats:
    """Fit a Gaussian to pooled final-stage features of an image stream.

    ``batches`` yields (B, C, H, W) tensors/arrays in [-1, 1]; covariance uses
    the unbiased estimator and is symmetrized.
    """
    feats = []
    with torch.no_grad():
        for batch in batches:
            x = torch.as_tensor(np.asarray(batch), dtype=torch.float32)
            feats.append(phi.embed_pooled(x).numpy().astype(np.float64))
    if not feats:
        raise ValidationError("empty image stream")
    f = np.concatenate(feats, axis=0)
    if f.shape[0] < 2:
        raise ValidationError(f"need at least 2 images, got {f.shape[0]}")
    mu = f.mean(axis=0)
    sigma = np.cov(f, rowvar=False, ddof=1)
    sigma = np.atleast_2d(sigma)
    sigma = (sigma + sigma.T) / 2.0
    return GaussianStats(mu=mu, sigma=sigma, n=f.shape[0])


def embed_features(features: np.ndarray) -> GaussianStats:
    """Gaussian fit of an already-computed (N, d) feature matrix."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValidationError("need a (N>=2, d) feature matrix")
    sigma = np.atleast_2d(np.cov(f, rowvar=False, ddof=1))
    return GaussianStats(mu=f.mean(axis=0), sigma=(sigma + sigma.T) / 2.0, n=f.shape[0])


def pooled_features(paths, phi, channels: int = 1, batch_size: int = 256) -> np.ndarray:
    """Pooled embedding of image files, (N, d_e) float64."""
    out = []
    with torch.no_grad():
        for i in range(0, len(paths), batch_size):
            chunk = paths[i : i + batch_size]
            x = torch.from_numpy(np.stack([load_image(p, channels) for p in chunk]))
            out.append(phi.embed_pooled(x).numpy().astype(np.float64))
    if not out:
        raise ValidationError("no images to embed")
    return np.concatenate(out, axis=0)


def embed_directory(directory: str | Path, phi, channels: int = 1) -> GaussianStats:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
    if len(paths) < 2:
        raise ValidationError(f"need at least 2 images in {directory}")
    return embed_features(pooled_features(paths, phi, channels))


def _psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(sigma)
    if w.min() < -_EIG_CLIP:
        raise NumericalError(f"eigenvalue {w.min():.3e} below -{_EIG_CLIP} in matrix square root")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def fid(r: GaussianStats, s: GaussianStats) -> float:
    """Frechet distance between two embedded-feature Gaussians.

    ``|mu_r - mu_s|^2 + tr(S_r + S_s - 2 sqrt(S_r S_s))`` with the square root
    taken through the symmetric product form ``A S_s A`` (A = sqrt(S_r)), via
    eigendecomposition with small negative eigenvalues clipped to zero.
    """
    if r.mu.shape != s.mu.shape:
        raise ValidationError(f"dimension mismatch: {r.mu.shape} vs {s.mu.shape}")
    a = _psd_sqrt(r.sigma)
    m = a @ s.sigma @ a
    m = (m + m.T) / 2.0
    w = np.linalg.eigvalsh(m)
    if w.min() < -_EIG_CLIP:
        raise NumericalError(f"eigenvalue {w.min():.3e} below -{_EIG_CLIP} in matrix square root")
    trace_sqrt = np.sqrt(np.clip(w, 0.0, None)).sum()
    delta = r.mu - s.mu
    value = float(delta @ delta + np.trace(r.sigma) + np.trace(s.sigma) - 2.0 * trace_sqrt)
    if value < -_EIG_CLIP:
        raise NumericalError(f"negative distance {value:.3e} beyond rounding tolerance")
    return max(value, 0.0)


def bootstrap_fids(real_feats: np.ndarray, synth_feats: np.ndarray,
                   n_boot: int = 32, seed: int = 0) -> np.ndarray:
    """Distance of bootstrap resamples of the synthetic features to the real fit."""
    rng = np.random.default_rng(seed)
    real_stats = embed_features(real_feats)
    out = np.empty(n_boot)
    n = synth_feats.shape[0]
    for i in range(n_boot):
        idx = rng.integers(0, n, size=n)
        out[i] = fid(real_stats, embed_features(synth_feats[idx]))
    return out


def realism_report(
    real_root: str | Path,
    synth_root: str | Path,
    phi,
    channels: int = 1,
    out_dir: str | Path | None = None,
    n_boot: int = 32,
    hist_bins: int = 16,
) -> dict:
    """Per-domain and average Frechet distances plus bootstrap histogram data.

    Expects both roots to hold matching ``<domain>/*.png`` layouts; writes
    ``report.json`` and ``histograms.png`` when ``out_dir`` is given.
    """
    domains = dataset_domains(real_root)
    synth_names = {d.name for d in dataset_domains(synth_root)}
    rows = {}
    hist_data = {}
    for dom in domains:
        if dom.name not in synth_names:
            raise ValidationError(f"synthetic set is missing domain {dom.name!r}")
        real_paths = list_domain_images(real_root, dom)
        synth_paths = sorted(p for p in (Path(synth_root) / dom.name).iterdir() if p.suffix.lower() == ".png")
        if not real_paths or not synth_paths:
            raise ValidationError(f"empty domain directory for {dom.name!r}")
        rf = pooled_features(real_paths, phi, channels)
        sf = pooled_features(synth_paths, phi, channels)
        rows[dom.name] = fid(embed_features(rf), embed_features(sf))
        boots = bootstrap_fids(rf, sf, n_boot=n_boot, seed=dom.index)
        counts, edges = np.histogram(boots, bins=hist_bins)
        hist_data[dom.name] = {"counts": counts.tolist(), "edges": edges.tolist(),
                               "samples": boots.tolist()}
    report = {
        "per_domain_fid": rows,
        "average_fid": float(np.mean(list(rows.values()))),
        "histograms": hist_data,
        "note": "embedding is a frozen random pyramid; values are comparable only within this package. "
                "Histograms are over bootstrap resamples of the synthetic features: a per-image distance "
                "is not well-defined, so spread is shown at the corpus level.",
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        _plot_histograms(hist_data, out / "histograms.png")
    return report


def _plot_histograms(hist_data: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, max(len(hist_data), 1), figsize=(4 * len(hist_data), 3))
    if len(hist_data) == 1:
        axes = [axes]
    for ax, (name, h) in zip(np.atleast_1d(axes), sorted(hist_data.items())):
        edges = np.asarray(h["edges"])
        ax.bar(edges[:-1], h["counts"], width=np.diff(edges), align="edge")
        ax.set_title(name)
        ax.set_xlabel("bootstrap distance")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


@dataclass
class ScoreSet:
    """Detector scores split by ground truth; higher score = more attack-like."""

    bonafide_scores: np.ndarray
    pa_scores: np.ndarray

    def __post_init__(self):
        self.bonafide_scores = np.asarray(self.bonafide_scores, dtype=np.float64)
        self.pa_scores = np.asarray(self.pa_scores, dtype=np.float64)
        if self.bonafide_scores.size == 0 or self.pa_scores.size == 0:
            raise ValidationError("both score populations must be nonempty")
        if not (np.isfinite(self.bonafide_scores).all() and np.isfinite(self.pa_scores).all()):
            raise ValidationError("scores must be finite")


def tdr_at_fdr(scores: ScoreSet, fdr_targets: list[float] | None = None) -> list[float]:
    """True-detection rate at each false-detection-rate target.

    The threshold for target f is the smallest candidate (pooled score values,
    with -inf/+inf sentinels) at which the fraction of bonafide scores >= tau
    drops to f or below; TDR is the fraction of attack scores >= tau.
    """
    targets = [0.01, 0.02, 0.05] if fdr_targets is None else list(fdr_targets)
    for f in targets:
        if not (0.0 <= f <= 1.0):
            raise ValidationError(f"FDR target must lie in [0,1], got {f}")
    bona = np.sort(scores.bonafide_scores)
    pa = np.sort(scores.pa_scores)
    candidates = np.concatenate([[-np.inf], np.unique(np.concatenate([bona, pa])), [np.inf]])
    # counts of scores >= tau via left insertion point into the ascending sort;
    # fractions formed as count/n so boundary comparisons match a count-based sweep
    frac_bona = (bona.size - np.searchsorted(bona, candidates, side="left")) / bona.size
    frac_pa = (pa.size - np.searchsorted(pa, candidates, side="left")) / pa.size
    out = []
    for f in targets:
        idx = int(np.argmax(frac_bona <= f))  # first feasible candidate; +inf always qualifies
        out.append(float(frac_pa[idx]))
    return out
