"""Pixel-statistics domain classifier, independent of any learned network.

Features are first/second moments plus radial FFT band energies: enough to
tell the flat bonafide base, the global halftone lattice of the print domain,
and the concentric ring texture of the lens domain apart.  Used as a neutral
judge of whether a translated image actually landed in its target domain.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .errors import ValidationError

_N_BANDS = 8


def _as_numpy(images) -> np.ndarray:
    if isinstance(images, torch.Tensor):
        images = images.detach().cpu().numpy()
    return np.asarray(images, dtype=np.float64)


def domain_features(images) -> np.ndarray:
    """Feature matrix (N, 3 + bands) from images shaped (N, C, H, W) in [-1, 1].

    Moments, radial FFT band energies, and the energy at the period-4 lattice
    harmonics (the halftone signature).
    """
    arr = _as_numpy(images)
    if arr.ndim != 4:
        raise ValidationError(f"expected (N, C, H, W), got shape {arr.shape}")
    gray = arr.mean(axis=1)
    n, h, w = gray.shape
    mean = gray.mean(axis=(1, 2))
    std = gray.std(axis=(1, 2))

    spec = np.abs(np.fft.rfft2(gray - mean[:, None, None])) ** 2
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    radius = np.hypot(fy, fx) / 0.5  # fraction of Nyquist
    edges = np.linspace(0.0, 1.0 + 1e-9, _N_BANDS + 1)
    bands = np.empty((n, _N_BANDS))
    for b in range(_N_BANDS):
        mask = (radius >= edges[b]) & (radius < edges[b + 1])
        bands[:, b] = np.log1p(spec[:, mask].sum(axis=1))
    lattice = np.log1p(spec[:, h // 4, 0] + spec[:, 0, w // 4] + spec[:, h // 4, w // 4])
    return np.column_stack([mean, std, bands, lattice])


class DomainOracle:
    """Multinomial logistic classifier over :func:`domain_features`."""

    def __init__(self):
        self._model = make_pipeline(
            StandardScaler(),
            LogisticRegression(max_iter=2000, C=10.0),
        )

    def fit(self, images, labels) -> "DomainOracle":
        self._model.fit(domain_features(images), np.asarray(labels, dtype=np.int64))
        return self

    def predict(self, images) -> np.ndarray:
        return self._model.predict(domain_features(images))

    def accuracy(self, images, labels) -> float:
        return float((self.predict(images) == np.asarray(labels)).mean())


def fit_domain_oracle(images, labels) -> DomainOracle:
    return DomainOracle().fit(images, labels)
