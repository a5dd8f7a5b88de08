"""Multi-domain diffusion-augmented image-translation GAN on toy ocular data.

Library layout:

- ``data``        procedural toy ocular datasets, 70/30 splits, batching
- ``oracle``      pixel-statistics domain classifier used as an independent judge
- ``diffusion``   forward Gaussian corruption and the self-paced timestep budget
- ``networks``    encoder / style-based generator / timestep-conditioned
  discriminator / frozen feature pyramid
- ``losses``      adversarial, domain, reconstruction, perceptual, in-domain
  identity, style-mixing and path-length terms
- ``trainer``     alternating optimization loop, checkpointing, corpus translation
- ``evaluation``  feature Gaussians, Frechet distance, TDR@FDR, realism reports
- ``pad``         two-arm presentation-attack-detection benchmark
- ``generations`` successive synthetic-only retraining harness
- ``cli``         the ``ocugan`` command-line entry point
"""

__version__ = "0.1.0"
