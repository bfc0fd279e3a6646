import numpy as np
import pytest

from sparseot import Image, PatchSet, dense_grid, load_png, reassemble, sample_random, save_png

from conftest import smooth_image


class TestImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Image(np.full((4, 4, 3), 1.5))
        with pytest.raises(ValueError):
            Image(np.full((4, 4, 3), -0.1))

    def test_rejects_non_finite(self):
        bad = np.zeros((4, 4, 3))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            Image(bad)

    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValueError):
            Image(np.zeros((4, 4, 2)))

    def test_grayscale_promotes_to_three_axes(self):
        img = Image(np.zeros((5, 7)))
        assert img.data.shape == (5, 7, 1)
        assert (img.height, img.width, img.channels) == (5, 7, 1)

    def test_immutable(self):
        img = Image(np.zeros((4, 4, 3)))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0


class TestSampleRandom:
    def test_degenerate_single_position(self):
        img = Image(np.full((1, 1, 1), 0.3))
        ps = sample_random(img, 1, 5, seed=0)
        assert ps.matrix.shape == (1, 5)
        assert np.all(ps.matrix == 0.3)
        assert np.all(ps.positions == 0)

    def test_paper_scale_shape(self):
        img = smooth_image(512, 512, 3, seed=1)
        ps = sample_random(img, 16, 20000, seed=0)
        assert ps.matrix.shape == (16 * 16 * 3, 20000)
        assert ps.dim == 768 and ps.count == 20000

    def test_deterministic_for_seed(self):
        img = smooth_image(32, 32, 3, seed=2)
        a = sample_random(img, 8, 50, seed=7)
        b = sample_random(img, 8, 50, seed=7)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.matrix, b.matrix)
        c = sample_random(img, 8, 50, seed=8)
        assert not np.array_equal(a.positions, c.positions)

    def test_patch_larger_than_image(self):
        img = Image(np.zeros((8, 8, 1)))
        with pytest.raises(ValueError):
            sample_random(img, 9, 1, seed=0)

    def test_positions_always_valid(self):
        img = smooth_image(21, 17, 1, seed=3)
        ps = sample_random(img, 5, 300, seed=0)
        assert ps.positions[:, 0].max() <= 21 - 5
        assert ps.positions[:, 1].max() <= 17 - 5
        assert ps.positions.min() >= 0

    def test_vectorization_order_channel_blocks(self):
        # 2x2 color patch at a known corner: channel 0 row-major, then 1, 2
        data = np.arange(2 * 3 * 3).reshape(2, 3, 3) / 100.0
        img = Image(data)
        ps = sample_random(img, 2, 1, seed=4)
        r, c = ps.positions[0]
        block = data[r : r + 2, c : c + 2]
        expected = np.concatenate([block[:, :, ch].ravel() for ch in range(3)])
        assert np.array_equal(ps.matrix[:, 0], expected)


class TestDenseGrid:
    def test_single_patch(self):
        img = smooth_image(16, 16, 1, seed=0)
        ps = dense_grid(img, 16, 16)
        assert ps.count == 1
        assert np.array_equal(ps.positions, [[0, 0]])

    def test_corner_enumeration_20x20(self):
        # oracle: corners enumerated by hand for 20x20, patch 16, stride 4
        img = smooth_image(20, 20, 1, seed=0)
        ps = dense_grid(img, 16, 4)
        expected = [(0, 0), (0, 4), (4, 0), (4, 4)]
        assert sorted(map(tuple, ps.positions)) == expected

    def test_final_edge_clamp_17x17(self):
        img = smooth_image(17, 17, 1, seed=0)
        ps = dense_grid(img, 16, 16)
        expected = [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert sorted(map(tuple, ps.positions)) == expected

    def test_bad_stride(self):
        img = smooth_image(16, 16, 1, seed=0)
        with pytest.raises(ValueError):
            dense_grid(img, 16, 0)
        with pytest.raises(ValueError):
            dense_grid(img, 8, 9)

    def test_full_coverage(self):
        img = smooth_image(37, 23, 1, seed=1)
        ps = dense_grid(img, 7, 5)
        covered = np.zeros((37, 23), dtype=bool)
        for r, c in ps.positions:
            covered[r : r + 7, c : c + 7] = True
        assert covered.all()


class TestReassemble:
    @pytest.mark.parametrize("stride", [3, 8, 16])
    def test_round_trip_identity(self, stride):
        img = smooth_image(33, 29, 3, seed=5)
        ps = dense_grid(img, 16, stride)
        out = reassemble(ps, img.width, img.height)
        np.testing.assert_allclose(out.data, img.data, atol=1e-12)

    def test_overlap_mean(self):
        # two 1x1 patches on one shared pixel: mean of 0.2 and 0.6 is 0.4
        ps = PatchSet(
            np.array([[0.2, 0.6]]), np.array([[0, 0], [0, 0]]), 1, 1
        )
        out = reassemble(ps, 1, 1)
        assert out.data[0, 0, 0] == pytest.approx(0.4)

    def test_clamps_after_averaging(self):
        ps = PatchSet(np.array([[1.2]]), np.array([[0, 0]]), 1, 1)
        out = reassemble(ps, 1, 1)
        assert out.data[0, 0, 0] == 1.0

    def test_uncovered_pixel_rejected(self):
        ps = PatchSet(np.ones((4, 1)) * 0.5, np.array([[0, 0]]), 2, 1)
        with pytest.raises(ValueError):
            reassemble(ps, 3, 3)


class TestPngIO:
    def test_round_trip_rgb(self, tmp_path):
        grid = np.arange(6 * 5 * 3, dtype=np.uint8).reshape(6, 5, 3) * 2
        img = Image(grid / 255.0)
        save_png(img, tmp_path / "x.png")
        back = load_png(tmp_path / "x.png")
        assert np.array_equal(back.data, img.data)
        assert back.channels == 3

    def test_round_trip_grayscale(self, tmp_path):
        grid = np.linspace(0, 255, 64, dtype=np.uint8).reshape(8, 8)
        img = Image(grid / 255.0)
        save_png(img, tmp_path / "g.png")
        back = load_png(tmp_path / "g.png")
        assert back.channels == 1
        assert np.array_equal(back.data, img.data)

    def test_deterministic_bytes(self, tmp_path):
        img = smooth_image(20, 20, 3, seed=9)
        save_png(img, tmp_path / "a.png")
        save_png(img, tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
