import json
import math
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rand_images
from fid_oracle import FROZEN, SEED, make_pair, reference_fid
from ocugan.errors import NumericalError, ValidationError
from ocugan.evaluation import (
    GaussianStats,
    ScoreSet,
    embed,
    embed_directory,
    embed_features,
    fid,
    pooled_features,
    realism_report,
    tdr_at_fdr,
)
from ocugan.networks import FeatureExtractor


class TestEmbed:
    def test_identical_images_zero_covariance(self):
        phi = FeatureExtractor(1, base=4, seed=0)
        x = rand_images(1, size=8, seed=1).repeat(2, 1, 1, 1)
        stats = embed([x], phi)
        assert np.allclose(stats.sigma, 0.0)

    def test_order_invariance(self):
        phi = FeatureExtractor(1, base=4, seed=0)
        x = rand_images(10, size=8, seed=2)
        a = embed([x], phi)
        b = embed([x[torch.randperm(10, generator=torch.Generator().manual_seed(0))]], phi)
        assert np.allclose(a.mu, b.mu, atol=1e-12)
        assert np.allclose(a.sigma, b.sigma, atol=1e-12)

    def test_matches_two_pass_oracle(self):
        # independent oracle: explicit two-pass mean then scatter accumulation
        phi = FeatureExtractor(1, base=8, seed=3)
        batches = [rand_images(100, size=8, seed=s) for s in range(10)]  # 1000 images
        stats = embed(batches, phi)

        feats = []
        with torch.no_grad():
            for b in batches:
                feats.append(phi.embed_pooled(b).numpy().astype(np.float64))
        flat = np.concatenate(feats)
        mu = np.zeros(flat.shape[1])
        for row in flat:
            mu += row
        mu /= flat.shape[0]
        scatter = np.zeros((flat.shape[1], flat.shape[1]))
        for row in flat:
            d = row - mu
            scatter += np.outer(d, d)
        sigma = scatter / (flat.shape[0] - 1)
        assert np.abs(stats.mu - mu).max() < 1e-10
        assert np.abs(stats.sigma - sigma).max() < 1e-10

    def test_too_few_images(self):
        phi = FeatureExtractor(1, base=4, seed=0)
        with pytest.raises(ValidationError):
            embed([rand_images(1, size=8)], phi)

    def test_stats_validation(self):
        with pytest.raises(ValidationError):
            GaussianStats(np.zeros(3), np.eye(2), 5)
        with pytest.raises(ValidationError):
            GaussianStats(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 5)
        with pytest.raises(ValidationError):
            GaussianStats(np.zeros(2), np.eye(2), 1)


class TestFid:
    def test_identity(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(9, 4))
        stats = GaussianStats(a.mean(0), np.cov(a, rowvar=False), 9)
        assert fid(stats, stats) < 1e-8

    def test_equal_covariance_mean_shift(self):
        r = GaussianStats(np.zeros(2), np.eye(2), 10)
        s = GaussianStats(np.array([1.0, 0.0]), np.eye(2), 10)
        assert fid(r, s) == pytest.approx(1.0, abs=1e-10)

    def test_scalar_closed_form(self):
        r = GaussianStats(np.zeros(1), np.array([[4.0]]), 10)
        s = GaussianStats(np.zeros(1), np.array([[1.0]]), 10)
        assert fid(r, s) == pytest.approx(1.0, abs=1e-10)  # 4 + 1 - 2*2

    def test_matches_extended_precision_oracle(self):
        rng = np.random.default_rng(SEED)
        for expected in FROZEN:
            mu_r, mu_s, sr, ss = make_pair(rng)
            ours = fid(GaussianStats(mu_r, sr, 10), GaussianStats(mu_s, ss, 10))
            assert abs(ours - expected) < 1e-6

    def test_frozen_oracle_spot_check(self):
        # recompute three reference values live; guards against stale FROZEN data
        rng = np.random.default_rng(SEED)
        pairs = [make_pair(rng) for _ in range(len(FROZEN))]
        for idx in (0, 7, 49):
            assert reference_fid(*pairs[idx]) == pytest.approx(FROZEN[idx], abs=1e-9)

    def test_dimension_mismatch(self):
        r = GaussianStats(np.zeros(2), np.eye(2), 5)
        s = GaussianStats(np.zeros(3), np.eye(3), 5)
        with pytest.raises(ValidationError):
            fid(r, s)

    def test_indefinite_matrix_rejected(self):
        bad = np.diag([1.0, -0.5])
        r = GaussianStats(np.zeros(2), np.eye(2), 5)
        with pytest.raises(ValidationError):
            GaussianStats(np.zeros(2), bad, 5)
        # slip past stats validation straight into fid
        s = GaussianStats(np.zeros(2), np.eye(2), 5)
        s.sigma = bad
        with pytest.raises(NumericalError):
            fid(s, r)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_nonnegative_and_trace_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        mu_r, mu_s, sr, ss = make_pair(rng)
        r = GaussianStats(mu_r, sr, 10)
        s = GaussianStats(mu_s, ss, 10)
        d_rs = fid(r, s)
        d_sr = fid(s, r)
        assert d_rs >= 0
        assert d_rs == pytest.approx(d_sr, rel=1e-8, abs=1e-8)


def _tdr_oracle(bona, pa, f):
    """Brute-force sweep over all candidate thresholds (independent of the
    vectorized implementation)."""
    candidates = [-math.inf] + sorted(set(list(bona) + list(pa))) + [math.inf]
    for tau in candidates:
        count = sum(1 for b in bona if b >= tau)
        if count / len(bona) <= f:
            return sum(1 for p in pa if p >= tau) / len(pa)
    raise AssertionError("unreachable")


class TestTdrAtFdr:
    def test_perfect_separation(self):
        scores = ScoreSet(np.array([0.1, 0.2, 0.3, 0.4]), np.array([0.5, 0.6, 0.7, 0.8]))
        assert tdr_at_fdr(scores, [0.01]) == [1.0]
        assert tdr_at_fdr(scores) == [1.0, 1.0, 1.0]

    def test_identical_distributions_bound(self):
        vals = np.linspace(0, 1, 40)
        scores = ScoreSet(vals.copy(), vals.copy())
        (tdr,) = tdr_at_fdr(scores, [0.05])
        assert tdr <= 0.05 + 1.0 / 40

    def test_matches_brute_force_on_random_sets(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n_b = int(rng.integers(1, 1000))
            n_p = int(rng.integers(1, 1000))
            bona = np.round(rng.normal(size=n_b), 2)  # rounding forces ties
            pa = np.round(rng.normal(loc=0.4, size=n_p), 2)
            scores = ScoreSet(bona, pa)
            targets = [0.01, 0.02, 0.05, float(rng.uniform(0, 0.3))]
            ours = tdr_at_fdr(scores, targets)
            expected = [_tdr_oracle(bona.tolist(), pa.tolist(), f) for f in targets]
            assert ours == expected

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_monotone_in_fdr_target(self, seed):
        rng = np.random.default_rng(seed)
        scores = ScoreSet(rng.normal(size=50), rng.normal(loc=0.3, size=60))
        tdrs = tdr_at_fdr(scores, [0.01, 0.02, 0.05, 0.1, 0.5, 1.0])
        assert all(a <= b + 1e-12 for a, b in zip(tdrs, tdrs[1:]))

    def test_empty_population_rejected(self):
        with pytest.raises(ValidationError):
            ScoreSet(np.array([]), np.array([0.5]))


class TestRealismReport:
    def test_self_comparison_is_zero(self, toy_root, tmp_path):
        phi = FeatureExtractor(1, base=16, seed=0)
        report = realism_report(toy_root, toy_root, phi, out_dir=tmp_path / "rep", n_boot=4)
        assert all(v < 1e-6 for v in report["per_domain_fid"].values())
        assert (tmp_path / "rep" / "report.json").exists()
        assert (tmp_path / "rep" / "histograms.png").exists()

    def test_noise_scores_worse_than_held_out_reals(self, toy_root, tmp_path):
        from PIL import Image

        phi = FeatureExtractor(1, base=16, seed=0)
        rng = np.random.default_rng(0)
        noise_root = tmp_path / "noise"
        half_a, half_b = tmp_path / "half_a", tmp_path / "half_b"
        for dom_dir in sorted(Path(toy_root).iterdir()):
            if not dom_dir.is_dir():
                continue
            files = sorted(dom_dir.glob("*.png"))
            for sub, chunk in ((half_a, files[::2]), (half_b, files[1::2])):
                (sub / dom_dir.name).mkdir(parents=True, exist_ok=True)
                for f in chunk:
                    (sub / dom_dir.name / f.name).write_bytes(f.read_bytes())
            (noise_root / dom_dir.name).mkdir(parents=True, exist_ok=True)
            for i in range(len(files) // 2):
                arr = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
                Image.fromarray(arr, mode="L").save(noise_root / dom_dir.name / f"{i:05d}.png")
        noise_rep = realism_report(half_a, noise_root, phi, n_boot=2)
        real_rep = realism_report(half_a, half_b, phi, n_boot=2)
        assert noise_rep["average_fid"] > real_rep["average_fid"]

    def test_average_is_mean_of_domains(self, toy_root):
        phi = FeatureExtractor(1, base=8, seed=0)
        report = realism_report(toy_root, toy_root, phi, n_boot=2)
        assert report["average_fid"] == pytest.approx(
            np.mean(list(report["per_domain_fid"].values()))
        )
