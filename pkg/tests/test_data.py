"""Synthetic generator determinism/marginals and bundle file round trips."""

import numpy as np
import pytest

from sspa.bundleio import read_bundle, read_manifest, write_bundle, write_manifest
from sspa.data import SyntheticSpec, degenerate_semantics, gen_synthetic
from sspa.errors import DataFormatError


class TestGenSynthetic:
    def test_noiseless_patches_sit_on_prototypes(self):
        spec = SyntheticSpec(c=4, m=6, d=8, n=20, noise=0.0, background=0.0, seed=3)
        data = gen_synthetic(spec)
        for i in range(data.n):
            positives = np.flatnonzero(data.y[i])
            for patch in data.x[i]:
                dists = np.linalg.norm(data.prototypes[positives] - patch, axis=1)
                assert dists.min() < 1e-12

    def test_same_seed_is_byte_identical(self):
        spec = SyntheticSpec(c=4, m=6, d=8, n=50, seed=9)
        a = gen_synthetic(spec)
        b = gen_synthetic(spec)
        assert a.x0.tobytes() == b.x0.tobytes()
        assert a.x.tobytes() == b.x.tobytes()
        assert a.y.tobytes() == b.y.tobytes()
        assert a.t_ka.tobytes() == b.t_ka.tobytes()

    def test_every_sample_has_a_positive(self):
        spec = SyntheticSpec(c=6, m=8, d=8, n=300, density=0.05, seed=1)
        data = gen_synthetic(spec)
        assert (data.y.sum(axis=1) >= 1).all()

    def test_label_marginals_near_density(self):
        spec = SyntheticSpec(c=8, m=16, d=16, n=10000, density=0.3, seed=0)
        data = gen_synthetic(spec)
        marginals = data.y.mean(axis=0)
        assert (np.abs(marginals - spec.density) <= 0.02).all()

    def test_infeasible_separation(self):
        spec = SyntheticSpec(c=10, m=12, d=4, n=5, separation=2.5, seed=0)
        with pytest.raises(ValueError, match="separation"):
            gen_synthetic(spec)

    def test_global_feature_is_patch_mean(self):
        spec = SyntheticSpec(c=4, m=6, d=8, n=10, seed=5)
        data = gen_synthetic(spec)
        np.testing.assert_allclose(data.x0, data.x.mean(axis=1), atol=1e-15)

    def test_semantics_track_prototypes(self):
        spec = SyntheticSpec(c=4, m=6, d=8, n=5, semantic_noise=0.01, seed=6)
        data = gen_synthetic(spec)
        assert np.linalg.norm(data.t_ka - data.prototypes, axis=1).max() < 0.1

    def test_degenerate_semantics_are_uncorrelated(self):
        spec = SyntheticSpec(c=4, m=6, d=32, n=5, seed=7)
        data = gen_synthetic(spec)
        noisy = degenerate_semantics(spec, data)
        # same visual data, fresh unit-norm rows far from the prototypes
        np.testing.assert_array_equal(noisy.x, data.x)
        cos = np.sum(noisy.t_ka * data.prototypes, axis=1)
        assert np.abs(cos).max() < 0.8


class TestBundleIO:
    def _dataset(self, seed=0):
        return gen_synthetic(SyntheticSpec(c=3, m=4, d=8, n=6, seed=seed))

    def test_round_trip_is_f32_exact(self, tmp_path):
        data = self._dataset()
        path = tmp_path / "d.sspafb"
        write_bundle(path, data.x0, data.x, data.y, data.t_ka)
        back = read_bundle(path)
        np.testing.assert_array_equal(back.x0, data.x0.astype("<f4").astype(np.float64))
        np.testing.assert_array_equal(back.x, data.x.astype("<f4").astype(np.float64))
        np.testing.assert_array_equal(back.y, data.y)
        np.testing.assert_array_equal(back.t_ka, data.t_ka.astype("<f4").astype(np.float64))
        assert (back.c, back.m, back.d, back.n) == (3, 4, 8, 6)

    def test_write_read_write_is_stable(self, tmp_path):
        data = self._dataset(1)
        p1, p2 = tmp_path / "a.sspafb", tmp_path / "b.sspafb"
        write_bundle(p1, data.x0, data.x, data.y, data.t_ka)
        b = read_bundle(p1)
        write_bundle(p2, b.x0, b.x, b.y, b.t_ka)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.sspafb"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(DataFormatError, match="bad magic"):
            read_bundle(path)

    def test_truncation(self, tmp_path):
        data = self._dataset(2)
        path = tmp_path / "t.sspafb"
        write_bundle(path, data.x0, data.x, data.y, data.t_ka)
        raw = path.read_bytes()
        path.write_bytes(raw[:-9])
        with pytest.raises(DataFormatError, match="unexpected end of file"):
            read_bundle(path)

    def test_nonfinite_rejected(self, tmp_path):
        data = self._dataset(3)
        x0 = data.x0.copy()
        x0[0, 0] = np.nan
        path = tmp_path / "nan.sspafb"
        write_bundle(path, x0, data.x, data.y, data.t_ka)
        with pytest.raises(DataFormatError, match="non-finite"):
            read_bundle(path)

    def test_no_embedding_block(self, tmp_path):
        data = self._dataset(4)
        path = tmp_path / "plain.sspafb"
        write_bundle(path, data.x0, data.x, data.y, None)
        assert read_bundle(path).t_ka is None

    def test_manifest_round_trip(self, tmp_path):
        path = tmp_path / "manifest.json"
        write_manifest(path, ["a", "b"], "descr.json")
        manifest = read_manifest(path)
        assert manifest == {"categories": ["a", "b"], "descriptions_file": "descr.json"}
