import struct

import numpy as np
import pytest

from mis import (
    DescriptorError,
    FeatureGrid,
    FormatError,
    RegionSpec,
    SceneSpec,
    TruncatedFileError,
    ValidationError,
    bottom_up_merge,
    brute_force_merge,
    read_features,
    synth_features,
    two_region_scene,
    ward_cost,
    write_features,
)

from helpers import leaf_sets


def random_grid(rng, h, w, c, stride=1):
    return FeatureGrid(h, w, c, rng.standard_normal((h, w, c)).astype(np.float32), stride)


class TestRoundTrip:
    def test_write_read_identity(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = random_grid(rng, 8, 8, 4, stride=8)
        path = tmp_path / "g.misf"
        write_features(grid, path)
        assert read_features(path) == grid

    def test_round_trip_random_grids(self, tmp_path):
        rng = np.random.default_rng(1)
        for i in range(25):
            h, w, c = (int(rng.integers(1, 6)) for _ in range(3))
            stride = int(rng.integers(1, 17))
            grid = random_grid(rng, h, w, c, stride)
            path = tmp_path / f"g{i}.misf"
            write_features(grid, path)
            again = read_features(path)
            assert again == grid
            assert again.data.dtype == np.float32

    def test_write_determinism(self, tmp_path):
        grid = random_grid(np.random.default_rng(2), 3, 5, 2)
        a, b = tmp_path / "a.misf", tmp_path / "b.misf"
        write_features(grid, a)
        write_features(grid, b)
        assert a.read_bytes() == b.read_bytes()

    def test_payload_size_1x1x1(self, tmp_path):
        grid = FeatureGrid(1, 1, 1, np.array([[[7.0]]], dtype=np.float32))
        path = tmp_path / "one.misf"
        write_features(grid, path)
        raw = path.read_bytes()
        header = struct.calcsize("<4s5I")
        assert len(raw) - header == 4
        assert struct.unpack("<f", raw[header:])[0] == 7.0


class TestLayout:
    def test_row_major_channel_last(self, tmp_path):
        data = np.arange(6, dtype=np.float32).reshape(2, 3, 1)
        grid = FeatureGrid(2, 3, 1, data)
        path = tmp_path / "g.misf"
        write_features(grid, path)
        again = read_features(path)
        assert again.data[1, 2, 0] == 5.0

    def test_flat_index_formula(self):
        rng = np.random.default_rng(3)
        grid = random_grid(rng, 3, 4, 2)
        flat = grid.data.ravel()
        for r, c, ch in [(0, 0, 0), (1, 3, 1), (2, 0, 1), (2, 3, 0)]:
            idx = (r * grid.width_patches + c) * grid.channels + ch
            assert flat[idx] == grid.data[r, c, ch]


class TestReadErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.misf"
        path.write_bytes(b"XXXX" + b"\x00" * 24)
        with pytest.raises(FormatError):
            read_features(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.misf"
        path.write_bytes(struct.pack("<4s5I", b"MISF", 9, 1, 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError):
            read_features(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.misf"
        path.write_bytes(b"MIS")
        with pytest.raises(TruncatedFileError):
            read_features(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.misf"
        path.write_bytes(struct.pack("<4s5I", b"MISF", 1, 2, 2, 1, 1) + b"\x00" * 8)
        with pytest.raises(TruncatedFileError):
            read_features(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "long.misf"
        path.write_bytes(struct.pack("<4s5I", b"MISF", 1, 1, 1, 1, 1) + b"\x00" * 8)
        with pytest.raises(FormatError):
            read_features(path)

    def test_zero_dimension(self, tmp_path):
        path = tmp_path / "zero.misf"
        path.write_bytes(struct.pack("<4s5I", b"MISF", 1, 0, 1, 1, 1))
        with pytest.raises(FormatError):
            read_features(path)

    def test_nan_payload(self, tmp_path):
        path = tmp_path / "nan.misf"
        payload = struct.pack("<f", float("nan"))
        path.write_bytes(struct.pack("<4s5I", b"MISF", 1, 1, 1, 1, 1) + payload)
        with pytest.raises(ValidationError):
            read_features(path)


class TestValidation:
    def test_nan_grid_rejected_at_construction(self):
        with pytest.raises(ValidationError):
            FeatureGrid(1, 1, 1, np.array([[[np.nan]]], dtype=np.float32))

    def test_nan_write_leaves_no_file(self, tmp_path):
        grid = FeatureGrid(1, 2, 1, np.zeros((1, 2, 1), dtype=np.float32))
        grid.data[0, 0, 0] = np.nan  # mutate behind the frozen dataclass
        path = tmp_path / "never.misf"
        with pytest.raises(ValidationError):
            write_features(grid, path)
        assert not path.exists()

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            FeatureGrid(2, 2, 1, np.zeros((2, 3, 1), dtype=np.float32))

    def test_unwritable_path(self, tmp_path):
        grid = FeatureGrid(1, 2, 1, np.zeros((1, 2, 1), dtype=np.float32))
        with pytest.raises(OSError):
            write_features(grid, tmp_path / "missing_dir" / "g.misf")


class TestSynth:
    def test_two_regions_sigma_zero(self):
        scene = two_region_scene(4, 4, 3, sigma=0.0)
        grid = synth_features(scene, 0)
        vectors = {tuple(v) for v in grid.data.reshape(-1, 3)}
        assert len(vectors) == 2

    def test_determinism(self):
        scene = two_region_scene(5, 4, 2, sigma=0.7)
        assert synth_features(scene, 42) == synth_features(scene, 42)
        assert synth_features(scene, 42) != synth_features(scene, 43)

    def test_overlap_rejected(self):
        regions = (
            RegionSpec(0, 0, 2, 2, (0.0,)),
            RegionSpec(1, 1, 2, 2, (1.0,)),
        )
        with pytest.raises(DescriptorError):
            synth_features(SceneSpec(3, 3, 1, regions), 0)

    def test_outside_rejected(self):
        regions = (RegionSpec(0, 0, 2, 5, (0.0,)),)
        with pytest.raises(DescriptorError):
            synth_features(SceneSpec(2, 4, 1, regions), 0)

    def test_uncovered_rejected(self):
        regions = (RegionSpec(0, 0, 1, 4, (0.0,)),)
        with pytest.raises(DescriptorError):
            synth_features(SceneSpec(2, 4, 1, regions), 0)

    def test_negative_sigma_rejected(self):
        regions = (RegionSpec(0, 0, 1, 1, (0.0,), sigma=-1.0),)
        with pytest.raises(DescriptorError):
            synth_features(SceneSpec(1, 1, 1, regions), 0)

    def test_sigma_zero_ward_cost_zero_within_region(self):
        scene = two_region_scene(4, 4, 2, sigma=0.0)
        grid = synth_features(scene, 0)
        feats = grid.data.reshape(-1, 2)
        # patches 0 and 4 sit in the left half, 3 and 7 in the right half
        assert ward_cost(1, feats[0], 1, feats[4]) == 0.0
        assert ward_cost(1, feats[3], 1, feats[7]) == 0.0
        assert ward_cost(1, feats[0], 1, feats[3]) > 0.0

    def test_last_merge_joins_the_two_halves(self):
        scene = two_region_scene(4, 4, 1, sigma=0.1)
        grid = synth_features(scene, 11)
        tree = brute_force_merge(grid, use_connectivity=True)
        sets = leaf_sets(tree)
        a, b = (int(x) for x in tree.rows[-1])
        left = {r * 4 + c for r in range(4) for c in range(2)}
        right = {r * 4 + c for r in range(4) for c in range(2, 4)}
        assert {frozenset(sets[a]), frozenset(sets[b])} == {
            frozenset(left),
            frozenset(right),
        }
        # the fast path agrees on the same fixture
        assert bottom_up_merge(grid, True) == tree
