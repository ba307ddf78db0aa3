import numpy as np
import pytest

from hyperseg.features import (
    backbone_hypercolumn,
    backbone_tap_features,
    identity_backbone,
    load_backbone,
    reassemble_tiles,
    save_backbone,
    stack_tiles,
    tessellate_extract,
    tile_grid,
    toy_backbone,
)
from hyperseg.tucker import compress_stack, full_rank_plan, halving_plan

from oracles import brute_force_tiles


class TestTileGrid:
    def test_2k_image_on_224_model(self):
        g = tile_grid(1920, 1080, 224, 224)
        assert (g.cols, g.rows, g.tile_count) == (9, 5, 45)
        assert (g.padded_w, g.padded_h) == (2016, 1120)

    def test_exact_fit(self):
        g = tile_grid(224, 224, 224, 224)
        assert (g.cols, g.rows, g.tile_count) == (1, 1, 1)
        assert (g.padded_w, g.padded_h) == (224, 224)

    def test_one_pixel_over(self):
        g = tile_grid(225, 224, 224, 224)
        assert (g.cols, g.rows, g.tile_count) == (2, 1, 2)

    def test_exhaustive_against_covering_oracle(self):
        for w in range(1, 25):
            for h in range(1, 25):
                g = tile_grid(w, h, 8, 8)
                cols, rows, count = brute_force_tiles(w, h, 8, 8)
                assert (g.cols, g.rows, g.tile_count) == (cols, rows, count)
                assert g.padded_w == 8 * cols and g.padded_h == 8 * rows

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            tile_grid(0, 5, 8, 8)


class TestTileStacking:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            cols, rows = rng.integers(1, 5, size=2)
            g = tile_grid(cols * 6, rows * 4, 6, 4)
            x = rng.normal(size=(3, g.padded_w, g.padded_h))
            assert np.array_equal(reassemble_tiles(stack_tiles(x, g), g), x)

    def test_single_tile_is_leading_axis(self):
        rng = np.random.default_rng(1)
        g = tile_grid(6, 4, 6, 4)
        x = rng.normal(size=(2, 6, 4))
        tiles = stack_tiles(x, g)
        assert tiles.shape == (1, 2, 6, 4)
        assert np.array_equal(tiles[0], x)

    def test_two_column_ramp_placement(self):
        g = tile_grid(8, 4, 4, 4)
        ramp = np.arange(8.0)[None, :, None] * np.ones((1, 1, 4))
        tiles = stack_tiles(ramp, g)
        # tile 0 holds columns [0, 4), tile 1 holds [4, 8)
        assert np.array_equal(tiles[0, 0, :, 0], np.arange(4.0))
        assert np.array_equal(tiles[1, 0, :, 0], np.arange(4.0, 8.0))

    def test_row_major_tile_order(self):
        g = tile_grid(4, 4, 2, 2)
        x = np.zeros((1, 4, 4))
        for col in range(2):
            for row in range(2):
                x[0, 2 * col : 2 * col + 2, 2 * row : 2 * row + 2] = row * 2 + col
        tiles = stack_tiles(x, g)
        assert [float(t[0, 0, 0]) for t in tiles] == [0.0, 1.0, 2.0, 3.0]

    def test_extent_mismatch_rejected(self):
        g = tile_grid(8, 8, 4, 4)
        with pytest.raises(ValueError):
            stack_tiles(np.zeros((1, 7, 8)), g)
        with pytest.raises(ValueError):
            reassemble_tiles(np.zeros((3, 1, 4, 4)), g)


class TestBackbone:
    def test_hypercolumn_depth_sums_taps(self):
        b = toy_backbone(seed=0, input_size=16, stage_depths=(8, 16, 32), downsamples=(1, 2, 2))
        tile = np.random.default_rng(2).uniform(size=(3, 16, 16))
        out = backbone_hypercolumn(tile, b)
        assert out.shape == (56, 16, 16)

    def test_identity_backbone_passthrough(self):
        b = identity_backbone(input_size=8)
        tile = np.random.default_rng(3).uniform(size=(3, 8, 8))
        assert np.array_equal(backbone_hypercolumn(tile, b), tile)

    def test_downsampled_tap_has_duplicated_pairs(self):
        b = toy_backbone(seed=4, input_size=8, stage_depths=(4, 6), downsamples=(1, 2))
        tile = np.random.default_rng(4).uniform(size=(3, 8, 8))
        taps = backbone_tap_features(tile, b)
        up = taps[1]  # tapped after a 2x pool, nearest-upsampled back
        assert np.array_equal(up[:, 0::2, :], up[:, 1::2, :])
        assert np.array_equal(up[:, :, 0::2], up[:, :, 1::2])

    def test_deterministic_given_seed(self):
        b1 = toy_backbone(seed=7)
        b2 = toy_backbone(seed=7)
        tile = np.random.default_rng(5).uniform(size=(3, 32, 32))
        assert np.array_equal(backbone_hypercolumn(tile, b1), backbone_hypercolumn(tile, b2))

    def test_wrong_tile_extent_rejected(self):
        b = toy_backbone(seed=0, input_size=16)
        with pytest.raises(ValueError):
            backbone_hypercolumn(np.zeros((3, 8, 8)), b)

    def test_save_load_round_trip(self, tmp_path):
        b = toy_backbone(seed=9, input_size=16, stage_depths=(4, 8), downsamples=(1, 2))
        save_backbone(tmp_path / "bb", b)
        back = load_backbone(tmp_path / "bb")
        tile = np.random.default_rng(6).uniform(size=(3, 16, 16))
        assert np.array_equal(backbone_hypercolumn(tile, back), backbone_hypercolumn(tile, b))
        assert back.backbone_id == b.backbone_id


class TestTessellateExtract:
    def test_single_tile_equals_direct_path(self):
        b = toy_backbone(seed=1, input_size=16, stage_depths=(4, 8), downsamples=(1, 2))
        plan = halving_plan(list(zip(b.tap_layer_ids, b.tap_depths)))
        img = np.random.default_rng(7).uniform(size=(3, 16, 16))
        stack = tessellate_extract(img, b, plan)
        direct, _ = compress_stack(backbone_tap_features(img, b), plan)
        assert np.array_equal(stack.features, direct.features)

    def test_output_shape_contract(self):
        b = toy_backbone(seed=2, input_size=16, stage_depths=(4, 8), downsamples=(1, 2))
        plan = halving_plan(list(zip(b.tap_layer_ids, b.tap_depths)))
        img = np.random.default_rng(8).uniform(size=(3, 37, 22))
        stack = tessellate_extract(img, b, plan)
        assert stack.features.shape == (plan.total_compressed_depth, 37, 22)
        assert stack.depth == 6

    def test_identity_backbone_identity_plan_full_pipeline(self):
        b = identity_backbone(input_size=8)
        plan = full_rank_plan([("stage0", 3)])
        img = np.random.default_rng(9).uniform(size=(3, 16, 8))  # exact fit
        stack = tessellate_extract(img, b, plan)
        assert np.max(np.abs(stack.features - img)) < 1e-12

    def test_deterministic(self):
        b = toy_backbone(seed=3, input_size=16, stage_depths=(4, 8), downsamples=(1, 2))
        plan = halving_plan(list(zip(b.tap_layer_ids, b.tap_depths)))
        img = np.random.default_rng(10).uniform(size=(3, 40, 25))
        a = tessellate_extract(img, b, plan)
        c = tessellate_extract(img, b, plan)
        assert np.array_equal(a.features, c.features)

    def test_provenance_recorded(self):
        b = toy_backbone(seed=3, input_size=16, stage_depths=(4,), downsamples=(1,))
        plan = halving_plan([("stage0", 4)])
        img = np.random.default_rng(11).uniform(size=(3, 16, 16))
        stack = tessellate_extract(img, b, plan)
        assert stack.provenance == (b.backbone_id, plan.plan_id)

    def test_depth_contract_across_configs(self):
        rng = np.random.default_rng(12)
        for seed in range(3):
            depths = tuple(int(d) for d in rng.integers(2, 9, size=2))
            b = toy_backbone(seed=seed, input_size=8, stage_depths=depths, downsamples=(1, 2))
            plan = halving_plan(list(zip(b.tap_layer_ids, b.tap_depths)))
            img = rng.uniform(size=(3, 11, 9))
            stack = tessellate_extract(img, b, plan)
            assert stack.features.shape[0] == plan.total_compressed_depth
