import numpy as np
import pytest

from layoutmuse import features, imaging
from layoutmuse.errors import EmptyBag, FormatError, LengthError

from conftest import blob_pair


@pytest.fixture
def regions(three_blob_pair):
    rs = imaging.watershed_segment(three_blob_pair.saliency)
    return imaging.extract_patches(three_blob_pair, rs).regions


class TestDescriptor:
    def test_shape_and_norm(self, regions):
        for r in regions:
            v = features.descriptor(r)
            assert v.shape == (features.FEATURE_DIM,)
            assert v.dtype == np.float32
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-5)

    def test_deterministic(self, regions):
        a = features.descriptor(regions[0])
        b = features.descriptor(regions[0])
        assert np.array_equal(a, b)

    def test_distinguishes_different_patches(self, regions):
        vs = [features.descriptor(r) for r in regions]
        assert np.abs(vs[0] - vs[1]).max() > 1e-4

    def test_requires_patch(self, three_blob_pair):
        rs = imaging.watershed_segment(three_blob_pair.saliency)
        with pytest.raises(ValueError):
            features.descriptor(rs.regions[0])


class TestBag:
    def test_sum_features(self, regions):
        bag = features.bag_from_regions("x", regions)
        s = features.sum_features(bag)
        assert np.allclose(s, np.sum([features.descriptor(r) for r in regions], axis=0), atol=1e-6)

    def test_empty_bag_raises(self):
        with pytest.raises(EmptyBag):
            features.sum_features(features.FeatureBag("empty", ()))

    def test_wrong_width_raises(self):
        with pytest.raises(LengthError):
            features.FeatureBag("bad", (np.zeros(100, np.float32),))


class TestBinaryFormat:
    def test_round_trip(self, tmp_path, regions):
        bags = [
            features.bag_from_regions("a", regions),
            features.bag_from_regions("b", regions[:2]),
            features.FeatureBag("empty-ok", ()),
        ]
        path = tmp_path / "f.lmf1"
        features.export_features(bags, path)
        loaded = features.import_features(path)
        assert [b.drawing_id for b in loaded] == ["a", "b", "empty-ok"]
        for orig, back in zip(bags, loaded):
            assert orig.n == back.n
            for u, v in zip(orig.per_region, back.per_region):
                assert np.array_equal(u, v)

    def test_unicode_ids(self, tmp_path):
        bag = features.FeatureBag("éxample-ид", (np.arange(512, dtype=np.float32),))
        path = tmp_path / "u.lmf1"
        features.export_features([bag], path)
        assert features.import_features(path)[0].drawing_id == "éxample-ид"

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.lmf1"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            features.import_features(p)

    def test_truncated(self, tmp_path, regions):
        p = tmp_path / "t.lmf1"
        features.export_features([features.bag_from_regions("a", regions)], p)
        (tmp_path / "cut.lmf1").write_bytes(p.read_bytes()[:-7])
        with pytest.raises(FormatError):
            features.import_features(tmp_path / "cut.lmf1")

    def test_trailing_bytes(self, tmp_path, regions):
        p = tmp_path / "t.lmf1"
        features.export_features([features.bag_from_regions("a", regions)], p)
        (tmp_path / "pad.lmf1").write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            features.import_features(tmp_path / "pad.lmf1")
