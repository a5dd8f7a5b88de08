"""Render the three toy ocular domains and check they are machine-separable.

Writes a small dataset, prints the 70/30 split sizes, and fits the
pixel-statistics oracle that later acts as an independent judge of domain
transfer.
"""

from pathlib import Path

from ocugan.data import ToyDomainSpec, generate_toy_dataset, load_batch, split_dataset
from ocugan.oracle import fit_domain_oracle

OUT = Path("demo_runs/toy")

spec = ToyDomainSpec(image_size=32, seed=7)
root = generate_toy_dataset(spec, per_domain_count=120, out_dir=OUT)
print(f"dataset at {root}: domains = bonafide (clean), print (halftone dots), lens (rings)")

split = split_dataset(root, fraction=0.70, seed=0)
print(f"train {len(split.train)} / test {len(split.test)} images")

train = load_batch(split.train)
test = load_batch(split.test)
oracle = fit_domain_oracle(train.data.numpy(), train.labels.numpy())
acc = oracle.accuracy(test.data.numpy(), test.labels.numpy())
print(f"pixel-statistics oracle accuracy on held-out reals: {acc:.3f}")
print("(>= 0.95 means the domain-transfer task downstream is well-posed)")
