import numpy as np
import pytest

from hyperseg.clicks import ClickState
from hyperseg.losses import (
    boundary_phl,
    boundary_raster,
    compose_breakdown,
    dilate3,
    diversity_weights,
    extract_boundary,
    interactive_context_loss,
    iou,
    jaccard_loss,
    mbiou,
    metric_report,
    miou,
    pseudo_huber,
    total_loss,
)

from oracles import (
    bfs_largest_component,
    brute_force_mbiou,
    brute_force_miou,
    outer_boundary_set,
)


class TestJaccard:
    def test_identity_zero(self):
        a = np.array([0.2, 0.8, 1.0])
        assert jaccard_loss(a, a) == 0.0

    def test_disjoint_binary_is_one(self):
        assert jaccard_loss(np.array([1.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])) == 1.0

    def test_hand_case_two_thirds(self):
        a = np.array([1.0, 1.0, 0.0, 0.0])
        b = np.array([1.0, 0.0, 1.0, 0.0])
        assert jaccard_loss(a, b) == 1.0 - 1.0 / 3.0

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.uniform(size=(6, 6))
            b = rng.uniform(size=(6, 6))
            l = jaccard_loss(a, b)
            assert l == jaccard_loss(b, a)
            assert 0.0 <= l <= 1.0

    def test_both_zero_defined_as_zero(self):
        z = np.zeros((4, 4))
        assert jaccard_loss(z, z) == 0.0


class TestInteractiveContext:
    def test_satisfied_clicks_zero(self):
        a = np.zeros((5, 5))
        a[1, 1] = 1.0
        sp = np.zeros((5, 5))
        sp[1, 1] = 1.0
        sn = np.zeros((5, 5))
        sn[3, 3] = 1.0
        assert interactive_context_loss(sp, sn, a) == 0.0

    def test_violated_positive_is_one(self):
        sp = np.zeros((4, 4))
        sp[0, 0] = 1.0
        assert interactive_context_loss(sp, np.zeros((4, 4)), np.zeros((4, 4))) == 1.0

    def test_violated_negative_is_one(self):
        sn = np.zeros((4, 4))
        sn[2, 2] = 1.0
        assert interactive_context_loss(np.zeros((4, 4)), sn, np.ones((4, 4))) == 1.0

    def test_decomposes_as_click_sums(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = rng.uniform(size=(8, 8))
            sp = (rng.random((8, 8)) < 0.1).astype(float)
            sn = ((rng.random((8, 8)) < 0.1) & (sp == 0)).astype(float)
            direct = (1.0 - a)[sp == 1].sum() + a[sn == 1].sum()
            assert interactive_context_loss(sp, sn, a) == pytest.approx(direct, abs=1e-12)


class TestBoundaryExtraction:
    def test_solid_square_perimeter(self):
        m = np.zeros((5, 5), bool)
        m[1:4, 1:4] = True
        c = extract_boundary(m)
        assert len(c) == 8
        assert c.point_set == {
            (1, 1), (2, 1), (3, 1), (1, 2), (3, 2), (1, 3), (2, 3), (3, 3),
        }

    def test_single_pixel(self):
        m = np.zeros((4, 4), bool)
        m[2, 1] = True
        c = extract_boundary(m)
        assert c.points == ((2, 1),)

    def test_largest_component_wins(self):
        m = np.zeros((8, 8), bool)
        m[1:2, 1:3] = True  # area 2
        m[4:9, 5:6] = True  # area 4 column
        c = extract_boundary(m)
        assert all(x >= 4 for x, _ in c.points)

    def test_empty_mask(self):
        assert extract_boundary(np.zeros((3, 3), bool)).points == ()

    def test_matches_exterior_adjacency_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            w, h = rng.integers(3, 14, size=2)
            mask = rng.random((w, h)) < rng.uniform(0.2, 0.85)
            assert set(extract_boundary(mask).point_set) == outer_boundary_set(mask)

    def test_contour_invariants_random(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            w, h = rng.integers(3, 12, size=2)
            mask = rng.random((w, h)) < 0.5
            comp = bfs_largest_component(mask)
            pts = extract_boundary(mask).points
            for x, y in pts:
                assert (x, y) in comp
                assert any(
                    not (0 <= x + dx < w and 0 <= y + dy < h) or (x + dx, y + dy) not in comp
                    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                )
            if len(pts) > 1:
                for i in range(len(pts)):
                    a, b = pts[i], pts[(i + 1) % len(pts)]
                    assert a != b
                    assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1

    def test_dilated_mask_contour_encloses_original(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            mask = np.zeros((14, 14), bool)
            blob = rng.integers(3, 11, size=(4, 2))
            for x, y in blob:
                mask[x, y] = True
            mask = dilate3(mask)
            mask[:2, :] = mask[-2:, :] = mask[:, :2] = mask[:, -2:] = False
            if not mask.any():
                continue
            comp_pts = bfs_largest_component(mask)
            comp = np.zeros_like(mask)
            for p in comp_pts:
                comp[p] = True
            inner = extract_boundary(comp).point_set
            grown = dilate3(comp)
            outer = extract_boundary(grown).point_set
            assert not (outer & comp_pts)  # grown contour lies outside
            assert all(grown[p] for p in inner)  # original contour inside it


class TestPseudoHuber:
    def test_zero_residual(self):
        y = np.zeros((5, 5))
        f = np.zeros((5, 5))
        f[1:4, 1:4] = 1.0
        y[1:4, 1:4] = 1.0
        assert boundary_phl(y, f, 1.0) == 0.0

    def test_single_point_residual_one(self):
        f = np.zeros((3, 3))
        f[1, 1] = 1.0
        y = np.zeros((3, 3))
        assert boundary_phl(y, f, 1.0) == pytest.approx(np.sqrt(2) - 1, abs=1e-12)

    def test_quadratic_regime(self):
        val = float(pseudo_huber(np.array([1e-3]), 1.0)[0])
        assert val == pytest.approx(0.5e-6, rel=0.01)

    def test_linear_asymptote(self):
        for delta in (0.5, 1.0, 2.0):
            r = 100.0 * delta
            val = float(pseudo_huber(np.array([r]), delta)[0])
            assert abs(val - delta * r) / (delta * r) < 0.05

    def test_monotone_in_residual(self):
        for delta in (0.5, 1.0, 2.0):
            rs = np.linspace(0, 10, 300)
            vals = pseudo_huber(rs, delta)
            assert np.all(np.diff(vals) >= 0)

    def test_empty_contour_zero(self):
        assert boundary_phl(np.zeros((4, 4)), np.zeros((4, 4)), 1.0) == 0.0

    def test_delta_regimes(self):
        # larger delta penalizes a unit residual more (closer to quadratic)
        f = np.zeros((3, 3))
        f[1, 1] = 1.0
        y = np.zeros((3, 3))
        vals = [boundary_phl(y, f, d) for d in (0.5, 1.0, 2.0)]
        assert vals[0] < vals[1] < vals[2]


class TestDiversityWeights:
    def test_six_heads_exact(self):
        assert diversity_weights(6).tolist() == [0.32, 0.16, 0.08, 0.04, 0.02, 0.01]

    def test_single_head(self):
        assert diversity_weights(1).tolist() == [0.01]

    @pytest.mark.parametrize("m", range(1, 17))
    def test_strictly_decreasing(self, m):
        w = diversity_weights(m)
        assert np.all(np.diff(w) < 0) or m == 1
        assert w[-1] == 0.01


class TestTotalLoss:
    def test_perfect_prediction_zero(self):
        y = np.zeros((8, 8))
        y[2:6, 2:6] = 1.0
        maps = np.stack([y, y, y])
        clicks = ClickState.create([(3, 3)], [(0, 0)], 8, 8)
        bd = total_loss(y, maps, clicks, delta=1.0)
        assert bd.total == 0.0
        assert bd.min_head_index == 1

    def test_single_head_reduction(self):
        rng = np.random.default_rng(5)
        y = (rng.random((6, 6)) < 0.4).astype(float)
        a = rng.uniform(size=(1, 6, 6))
        clicks = ClickState.create([(1, 1)], [(4, 4)], 6, 6)
        bd = total_loss(y, a, clicks, delta=1.0)
        expect = (
            1.01 * jaccard_loss(y, a[0])
            + interactive_context_loss(clicks.mask_pos, clicks.mask_neg, a[0])
            + boundary_phl(y, a[0], 1.0)
        )
        assert bd.total == pytest.approx(expect, abs=1e-12)

    def test_min_head_selection(self):
        y = np.zeros((6, 6))
        y[1:5, 1:5] = 1.0
        bad = 1.0 - y
        maps = np.stack([bad, y, bad])
        bd = total_loss(y, maps, None, delta=1.0)
        assert bd.min_head_index == 2

    def test_tie_breaks_to_smallest_index(self):
        y = np.zeros((4, 4))
        y[1:3, 1:3] = 1.0
        maps = np.stack([y, y])
        bd = total_loss(y, maps, None, delta=1.0)
        assert bd.min_head_index == 1

    def test_recompose_within_1e12(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            y = (rng.random((7, 7)) < 0.5).astype(float)
            maps = rng.uniform(size=(4, 7, 7))
            clicks = ClickState.create([(2, 2)], [(5, 5)], 7, 7)
            bd = total_loss(y, maps, clicks, delta=1.0)
            assert abs(bd.total - bd.recompute_total()) <= 1e-12

    def test_compose_breakdown_orders_heads(self):
        bd = compose_breakdown([0.5, 0.1, 0.3], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        assert bd.min_head_index == 2
        lam = diversity_weights(3)
        assert bd.total == pytest.approx(0.1 + float(lam @ [0.5, 0.1, 0.3]), abs=1e-15)


class TestMetrics:
    def test_identical_masks(self):
        m = np.zeros((10, 10), bool)
        m[2:7, 3:8] = True
        assert miou([m], [m.copy()]) == 1.0
        assert mbiou([m], [m.copy()]) == 1.0

    def test_disjoint_masks(self):
        a = np.zeros((8, 8), bool)
        b = np.zeros((8, 8), bool)
        a[:3, :3] = True
        b[5:, 5:] = True
        assert miou([a], [b]) == 0.0

    def test_against_set_arithmetic_oracle(self):
        rng = np.random.default_rng(7)
        preds, gts = [], []
        for _ in range(100):
            preds.append(rng.random((16, 16)) < rng.uniform(0.2, 0.8))
            gts.append(rng.random((16, 16)) < rng.uniform(0.2, 0.8))
        assert miou(preds, gts) == brute_force_miou(preds, gts)
        assert mbiou(preds, gts) == brute_force_mbiou(preds, gts)

    def test_empty_pair_counts_as_one(self):
        e = np.zeros((5, 5), bool)
        assert iou(e, e) == 1.0
        assert mbiou([e], [e.copy()]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            miou([np.zeros((2, 2))], [])

    def test_boundary_raster_is_dilated_contour(self):
        m = np.zeros((7, 7), bool)
        m[2:5, 2:5] = True
        raster = boundary_raster(m)
        pts = extract_boundary(m).point_set
        expect = np.zeros((7, 7), bool)
        for x, y in pts:
            expect[x, y] = True
        assert np.array_equal(raster, dilate3(expect))

    def test_report_schema(self):
        rng = np.random.default_rng(8)
        preds = [rng.random((6, 6)) < 0.5 for _ in range(3)]
        gts = [rng.random((6, 6)) < 0.5 for _ in range(3)]
        rep = metric_report(preds, gts, names=["a", "b", "c"])
        assert rep["n_images"] == 3
        assert rep["miou"] == pytest.approx(np.mean([e["iou"] for e in rep["per_image"]]))
        assert {e["name"] for e in rep["per_image"]} == {"a", "b", "c"}
