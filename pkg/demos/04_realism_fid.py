"""Realism measurement: Frechet distances between feature Gaussians.

Closed-form sanity cases first, then a per-domain report comparing a
just-translated corpus (from demo 03) against the real dataset, with
bootstrap histograms written alongside.
"""

from pathlib import Path

import numpy as np

from ocugan.evaluation import GaussianStats, fid, realism_report
from ocugan.networks import FeatureExtractor

print("closed forms:")
r = GaussianStats(np.zeros(2), np.eye(2), 10)
s = GaussianStats(np.array([1.0, 0.0]), np.eye(2), 10)
print(f"  equal covariance, unit mean shift -> {fid(r, s):.6f} (expect 1.0)")
r1 = GaussianStats(np.zeros(1), np.array([[4.0]]), 10)
s1 = GaussianStats(np.zeros(1), np.array([[1.0]]), 10)
print(f"  scalar variances 4 vs 1        -> {fid(r1, s1):.6f} (expect 1.0)")
print(f"  distribution against itself     -> {fid(r, r):.6f} (expect 0.0)")

DATA = Path("demo_runs/toy")
RUN = Path("demo_runs/train")
if not (RUN / "bonafide_to_print").exists():
    raise SystemExit("run demos/03_train_translation.py first")

# dataset-shaped view of the demo-03 corpus: translated prints vs real prints
synth_root = Path("demo_runs/synth_view")
(synth_root / "print").mkdir(parents=True, exist_ok=True)
for p in (RUN / "bonafide_to_print").glob("*.png"):
    (synth_root / "print" / p.name).write_bytes(p.read_bytes())

phi = FeatureExtractor(channels=1, seed=0)
real_view = Path("demo_runs/real_view")
(real_view / "print").mkdir(parents=True, exist_ok=True)
for p in (DATA / "print").glob("*.png"):
    (real_view / "print" / p.name).write_bytes(p.read_bytes())

report = realism_report(real_view, synth_root, phi, out_dir=Path("demo_runs/realism"))
print(f"\ntranslated-print corpus distance to real prints: {report['per_domain_fid']['print']:.4f}")
print("report + histograms under demo_runs/realism/")
print("note: the embedding is a frozen random pyramid, so distances are comparable")
print("only within this package, never with published full-resolution numbers")
