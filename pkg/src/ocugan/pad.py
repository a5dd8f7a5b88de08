"""Two-arm presentation-attack-detection benchmark.

Arm "Experiment-0" trains a small convolutional bonafide-vs-attack detector on
real images only; arm "Experiment-1" repeats the training with a synthetic
corpus mixed in.  Both arms score the same held-out test sets and report
TDR at fixed FDR targets.  The point under study is the *relative* effect of
synthetic augmentation, so the detector is deliberately small (~200k params).

Full-scale reference results are carried in the report footer for context;
they are not reproduced at toy scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .data import DatasetSplit, DomainLabel, dataset_domains, list_domain_images, load_image
from .errors import ValidationError
from .evaluation import ScoreSet, tdr_at_fdr

BONAFIDE_NAME = "bonafide"

# Full-scale reference: detector TDR@1%FDR with/without synthetic augmentation.
REFERENCE_FULL_SCALE = {
    "note": "full-scale study results recorded for context; toy-scale runs report direction only",
    "dnetpad_d1_tdr_at_1pct_fdr": {"experiment_0": 93.41, "experiment_1": 98.72},
}


@dataclass
class PadDetectorConfig:
    blocks: int = 4
    width: int = 24
    epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.blocks < 1 or self.width < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("detector config values must be >= 1")
        if self.lr <= 0:
            raise ValidationError("detector lr must be > 0")


class PadDetector(nn.Module):
    """Small conv classifier; one logit, higher = more attack-like."""

    def __init__(self, channels: int, cfg: PadDetectorConfig):
        super().__init__()
        layers = []
        in_ch, ch = channels, cfg.width
        for _ in range(cfg.blocks):
            layers += [nn.Conv2d(in_ch, ch, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            in_ch, ch = ch, min(2 * ch, 256)
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(in_ch, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x).mean(dim=(2, 3))
        return self.head(h).squeeze(1)


def _label_of(domain: DomainLabel, bonafide_name: str) -> int:
    return 0 if domain.name == bonafide_name else 1


def _load_arrays(items: list[tuple[Path, DomainLabel]], channels: int, bonafide_name: str):
    x = np.stack([load_image(p, channels) for p, _ in items])
    y = np.array([_label_of(d, bonafide_name) for _, d in items], dtype=np.float32)
    return torch.from_numpy(x), torch.from_numpy(y)


def samples_from_root(root: str | Path) -> list[tuple[Path, DomainLabel]]:
    """All images of a dataset-shaped directory as (path, DomainLabel) pairs."""
    out = []
    for dom in dataset_domains(root):
        out.extend((p, dom) for p in list_domain_images(root, dom))
    return out


def train_pad_detector(
    items: list[tuple[Path, DomainLabel]],
    cfg: PadDetectorConfig,
    channels: int = 1,
    bonafide_name: str = BONAFIDE_NAME,
) -> PadDetector:
    """Deterministic training of the binary detector on (path, domain) samples."""
    labels = {_label_of(d, bonafide_name) for _, d in items}
    if labels != {0, 1}:
        raise ValidationError("detector training needs both bonafide and attack samples")
    torch.set_num_threads(1)
    x, y = _load_arrays(items, channels, bonafide_name)
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        det = PadDetector(channels, cfg)
    opt = torch.optim.Adam(det.parameters(), lr=cfg.lr)
    order_rng = np.random.default_rng(cfg.seed)
    det.train()
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(len(items))
        for i in range(0, len(items), cfg.batch_size):
            idx = perm[i : i + cfg.batch_size]
            logits = det(x[idx])
            loss = F.binary_cross_entropy_with_logits(logits, y[idx])
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
    det.eval()
    return det


def score_samples(det: PadDetector, items: list[tuple[Path, DomainLabel]],
                  channels: int = 1, bonafide_name: str = BONAFIDE_NAME) -> ScoreSet:
    x, y = _load_arrays(items, channels, bonafide_name)
    with torch.no_grad():
        scores = torch.sigmoid(det(x)).numpy().astype(np.float64)
    return ScoreSet(bonafide_scores=scores[y.numpy() == 0], pa_scores=scores[y.numpy() == 1])


@dataclass
class PadReport:
    """TDR@FDR per (arm, test set) plus the fixed full-scale footer."""

    arms: dict[str, dict[str, dict[str, float]]]
    fdr_targets: list[float]
    footer: dict = field(default_factory=lambda: dict(REFERENCE_FULL_SCALE))

    def to_dict(self) -> dict:
        return {"arms": self.arms, "fdr_targets": self.fdr_targets, "footer": self.footer}

    def table(self) -> str:
        lines = []
        header = "arm/test set".ljust(36) + "".join(f"TDR@{f:.0%} FDR".rjust(14) for f in self.fdr_targets)
        lines.append(header)
        lines.append("-" * len(header))
        for arm in sorted(self.arms):
            for test_name in sorted(self.arms[arm]):
                row = self.arms[arm][test_name]
                cells = "".join(f"{row[f'{f}']:.4f}".rjust(14) for f in self.fdr_targets)
                lines.append(f"{arm} / {test_name}".ljust(36) + cells)
        lines.append("")
        lines.append(f"reference (full scale): {self.footer['dnetpad_d1_tdr_at_1pct_fdr']}")
        return "\n".join(lines)


def pad_experiment(
    train_real: DatasetSplit,
    synth_dir: str | Path | None,
    test_sets: list[tuple[str, list[tuple[Path, DomainLabel]]]],
    det: PadDetectorConfig,
    channels: int = 1,
    fdr_targets: list[float] | None = None,
    bonafide_name: str = BONAFIDE_NAME,
    out_dir: str | Path | None = None,
) -> PadReport:
    """Run the baseline arm and, when a synthetic corpus is given, the
    augmented arm; score every test set with both detectors."""
    targets = [0.01, 0.02, 0.05] if fdr_targets is None else list(fdr_targets)
    if not test_sets:
        raise ValidationError("need at least one test set")

    arms: dict[str, list[tuple[Path, DomainLabel]]] = {"Experiment-0": list(train_real.train)}
    if synth_dir is not None:
        arms["Experiment-1"] = list(train_real.train) + samples_from_root(synth_dir)

    results: dict[str, dict[str, dict[str, float]]] = {}
    score_sets: dict[tuple[str, str], ScoreSet] = {}
    for arm_name, items in arms.items():
        detector = train_pad_detector(items, det, channels=channels, bonafide_name=bonafide_name)
        results[arm_name] = {}
        for test_name, test_items in test_sets:
            scores = score_samples(detector, test_items, channels=channels, bonafide_name=bonafide_name)
            score_sets[(arm_name, test_name)] = scores
            tdrs = tdr_at_fdr(scores, targets)
            results[arm_name][test_name] = {f"{f}": tdr for f, tdr in zip(targets, tdrs)}

    report = PadReport(arms=results, fdr_targets=targets)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pad_report.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        (out / "pad_report.txt").write_text(report.table() + "\n")
        _plot_rocs(score_sets, out / "roc.png")
    return report


def _roc_points(scores: ScoreSet):
    taus = np.unique(np.concatenate([scores.bonafide_scores, scores.pa_scores]))[::-1]
    fdr = [(scores.bonafide_scores >= t).mean() for t in taus]
    tdr = [(scores.pa_scores >= t).mean() for t in taus]
    return [0.0] + fdr + [1.0], [0.0] + tdr + [1.0]


def _plot_rocs(score_sets: dict[tuple[str, str], ScoreSet], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for (arm, test_name), scores in sorted(score_sets.items()):
        fdr, tdr = _roc_points(scores)
        ax.plot(fdr, tdr, label=f"{arm} / {test_name}")
    ax.set_xlabel("false detection rate (bonafide flagged)")
    ax.set_ylabel("true detection rate (attacks caught)")
    ax.set_xscale("symlog", linthresh=0.01)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
