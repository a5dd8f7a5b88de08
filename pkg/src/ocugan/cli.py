"""The ``ocugan`` command-line tool.

Subcommands: ``datagen``, ``train``, ``generate``, ``evaluate``, ``pad-bench``,
``generations``.  Exit codes: 0 success, 1 validation/usage error, 2 runtime
error.  Every run writes a ``run.json`` capturing the fully resolved config,
package version and seed, from which the run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import TrainConfig, config_to_dict, load_config
from .errors import ValidationError

_CONFIG_KEYS_HELP = """\
training config keys (JSON file):
  total_steps (required), seed, batch_size, lr_d, lr_ge, beta1, beta2,
  checkpoint_interval, eval_interval, ppl_batch, deterministic, run_dir
  data:      root, split_fraction, split_seed
  diffusion: t_max, t_min, beta_min, beta_max, sigma, d_target, c_step,
             update_interval, pi_kind
  model:     image_size, channels, num_domains, d_z, d_w, e_base, g_base,
             d_base, t_emb_dim, source_emb_dim, target_emb_dim, phi_base,
             phi_seed, domain_head
  losses:    lambda_adv, lambda_domain, lambda_recon, lambda_lpips,
             lambda_inr, lambda_mix, lambda_path, saturating_adv,
             literal_eq10, style_mixing, mixing_prob, path_reg
see docs/formats.md for full schema and file formats."""


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


@dataclass
class RunDirectory:
    """A run's on-disk home: checkpoints/, samples/, metrics/, reports/ + run.json."""

    root: Path

    @classmethod
    def create(cls, root: str | Path, config: TrainConfig) -> "RunDirectory":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        for sub in ("checkpoints", "samples", "metrics", "reports"):
            (root / sub).mkdir(exist_ok=True)
        payload = {
            "config": config_to_dict(config),
            "code_version": __version__,
            "seed": config.seed,
        }
        tmp = root / "run.json.tmp"
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        tmp.replace(root / "run.json")  # atomic publish
        return cls(root=root)


def resolve_config(path: str | Path, overrides: dict | None = None) -> TrainConfig:
    """Config file + flag overrides -> validated TrainConfig (flags win)."""
    return load_config(path, overrides)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ocugan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ocugan {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("datagen", parents=[], help="generate a procedural toy ocular dataset",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Render a multi-domain toy ocular dataset to disk.")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--per-domain", type=int, required=True, help="images per domain")
    p.add_argument("--size", type=int, default=32, help="image size in pixels")
    p.add_argument("--seed", type=int, default=7, help="dataset seed")
    p.add_argument("--channels", type=int, default=1, choices=(1, 3))
    p.add_argument("--effect-strength", type=float, default=0.8)

    p = sub.add_parser("train", help="train a translation model from a config file",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Train from a JSON config.\n\n" + _CONFIG_KEYS_HELP)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--resume", default=None,
                   help="checkpoint to resume from (continues under the checkpoint's "
                        "config; only total_steps is taken from --config)")
    p.add_argument("--run-dir", default=None, help="run directory (overrides config run_dir)")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--total-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("generate", help="translate a directory of images between domains")
    p.add_argument("--ckpt", required=True, help="trained checkpoint (.npz)")
    p.add_argument("--source-dir", required=True, help="directory of source images")
    p.add_argument("--source-domain", type=int, required=True, help="source domain index")
    p.add_argument("--target-domain", type=int, required=True, help="target domain index")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=None, help="images to emit (default: all sources)")

    p = sub.add_parser("evaluate", help="realism report: per-domain Frechet distances + histograms")
    p.add_argument("--real", required=True, help="real dataset root (domain subdirs)")
    p.add_argument("--synth", required=True, help="synthetic dataset root (domain subdirs)")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--channels", type=int, default=1, choices=(1, 3))
    p.add_argument("--phi-seed", type=int, default=0)

    p = sub.add_parser("pad-bench", help="two-arm detector benchmark from a JSON config",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Config keys: data_root, synth_dir (optional), test_roots "
                                   "(name->path map, optional), detector{blocks,width,epochs,lr,"
                                   "batch_size,seed}, fdr_targets, split_fraction, split_seed, "
                                   "channels, out_dir.")
    p.add_argument("--config", required=True, help="JSON benchmark config")

    p = sub.add_parser("generations", help="successive synthetic-only retraining harness",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Config keys: train{...full training config...}, k, "
                                   "synth_per_domain, detector{...}, fdr_targets, run_pad, out_dir.")
    p.add_argument("--config", required=True, help="JSON harness config")
    p.add_argument("--k", type=int, default=None, help="override generation count")
    return parser


def _cmd_datagen(args) -> int:
    from .data import ToyDomainSpec, generate_toy_dataset

    spec = ToyDomainSpec(image_size=args.size, channels=args.channels,
                         effect_strength=args.effect_strength, seed=args.seed)
    root = generate_toy_dataset(spec, args.per_domain, out_dir=args.out)
    print(f"wrote dataset to {root}")
    return 0


def _cmd_train(args) -> int:
    overrides = {"batch_size": args.batch_size, "total_steps": args.total_steps, "seed": args.seed}
    if args.run_dir:
        overrides["run_dir"] = args.run_dir
    config = resolve_config(args.config, overrides)
    run_root = config.run_dir or "runs/train"
    run = RunDirectory.create(run_root, config)
    from .trainer import fit

    final = fit(config, run_dir=run.root, resume=args.resume)
    print(f"final checkpoint: {final}")
    return 0


def _cmd_generate(args) -> int:
    from .trainer import translate_corpus

    src = Path(args.source_dir)
    if not src.is_dir():
        raise ValidationError(f"source directory not found: {src}")
    count = args.count
    if count is None:
        count = len([p for p in src.iterdir() if p.suffix.lower() == ".png"])
    out = translate_corpus(args.ckpt, src, args.source_domain, args.target_domain, count, args.out)
    print(f"wrote {count} translated images to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    from .evaluation import realism_report
    from .networks import FeatureExtractor

    phi = FeatureExtractor(args.channels, seed=args.phi_seed)
    report = realism_report(args.real, args.synth, phi, channels=args.channels, out_dir=args.out)
    for name, value in sorted(report["per_domain_fid"].items()):
        print(f"{name}: {value:.4f}")
    print(f"average: {report['average_fid']:.4f}")
    return 0


def _load_json_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from exc


def _cmd_pad_bench(args) -> int:
    from .data import split_dataset
    from .pad import PadDetectorConfig, pad_experiment, samples_from_root

    raw = _load_json_config(args.config)
    known = {"data_root", "synth_dir", "test_roots", "detector", "fdr_targets",
             "split_fraction", "split_seed", "channels", "out_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config key: {sorted(unknown)[0]}")
    if "data_root" not in raw:
        raise ValidationError("missing required key: data_root")
    det = PadDetectorConfig(**raw.get("detector", {}))
    split = split_dataset(raw["data_root"], raw.get("split_fraction", 0.70), raw.get("split_seed", 0))
    test_sets = [("held-out-test", list(split.test))]
    for name, root in raw.get("test_roots", {}).items():
        test_sets.append((name, samples_from_root(root)))
    report = pad_experiment(
        split, raw.get("synth_dir"), test_sets, det,
        channels=raw.get("channels", 1), fdr_targets=raw.get("fdr_targets"),
        out_dir=raw.get("out_dir"),
    )
    print(report.table())
    return 0


def _cmd_generations(args) -> int:
    from .config import config_from_dict
    from .generations import GenerationsConfig, generations_harness
    from .pad import PadDetectorConfig

    raw = _load_json_config(args.config)
    known = {"train", "k", "synth_per_domain", "detector", "fdr_targets", "run_pad", "out_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config key: {sorted(unknown)[0]}")
    if "train" not in raw:
        raise ValidationError("missing required key: train")
    out_dir = raw.get("out_dir", "runs/generations")
    cfg = GenerationsConfig(
        train=config_from_dict(raw["train"]),
        k=args.k if args.k is not None else raw.get("k", 3),
        synth_per_domain=raw.get("synth_per_domain", 200),
        detector=PadDetectorConfig(**raw.get("detector", {})),
        fdr_targets=raw.get("fdr_targets", [0.01, 0.02, 0.05]),
        run_pad=raw.get("run_pad", True),
    )
    report = generations_harness(cfg, out_dir)
    for row in report["rows"]:
        print(f"generation {row['generation']}: avg distance {row['fid_avg']:.4f}")
    return 0


_COMMANDS = {
    "datagen": _cmd_datagen,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "pad-bench": _cmd_pad_bench,
    "generations": _cmd_generations,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures (diverged training, numerics)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
