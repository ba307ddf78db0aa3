import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperseg.tensors import (
    SvdResult,
    fold,
    load_tensor,
    resize2d,
    save_tensor,
    tensor_from_bytes,
    tensor_to_bytes,
    truncated_svd,
    unfold,
)

from oracles import jacobi_eigenvalues, unfold_enumeration


class TestUnfoldFold:
    def test_shape_arithmetic(self):
        t = np.zeros((2, 3, 4))
        assert unfold(t, 0).shape == (2, 12)
        assert unfold(t, 1).shape == (3, 8)
        assert unfold(t, 2).shape == (4, 6)

    def test_documented_column_ordering(self):
        t = np.arange(8).reshape(2, 2, 2)
        m = unfold(t, 1)
        assert m[0].tolist() == [0, 1, 4, 5]
        assert np.array_equal(m, unfold_enumeration(t, 1))

    @pytest.mark.parametrize("shape", [(3,), (2, 3), (2, 3, 4), (2, 2, 3, 2), (2, 1, 3, 2, 2)])
    def test_round_trip_all_modes(self, shape):
        rng = np.random.default_rng(hash(shape) % 2**32)
        t = rng.normal(size=shape)
        for mode in range(len(shape)):
            assert np.array_equal(fold(unfold(t, mode), mode, shape), t)
            assert np.array_equal(unfold(t, mode), unfold_enumeration(t, mode))

    @given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.integers(0, 4))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, shape, mode):
        mode = mode % len(shape)
        rng = np.random.default_rng(0)
        t = rng.normal(size=tuple(shape))
        assert np.array_equal(fold(unfold(t, mode), mode, shape), t)

    def test_mode_out_of_range(self):
        with pytest.raises(ValueError):
            unfold(np.zeros((2, 2)), 2)
        with pytest.raises(ValueError):
            unfold(np.zeros((2, 2)), -1)


class TestTruncatedSvd:
    def test_identity(self):
        res = truncated_svd(np.eye(4), 4)
        assert np.allclose(res.singular_values, [1, 1, 1, 1], atol=1e-12)

    def test_rank_one(self):
        u = np.array([2.0, 0.0, 0.0])
        v = np.array([0.0, 3.0, 0.0, 0.0])
        m = np.outer(u, v)
        res = truncated_svd(m, 1)
        assert res.singular_values[0] == pytest.approx(6.0, abs=1e-12)
        assert np.linalg.norm(m - res.reconstruct()) < 1e-12

    def test_against_jacobi_eigensolver(self):
        rng = np.random.default_rng(5)
        m = rng.normal(size=(10, 6))
        res = truncated_svd(m, 6)
        eig = jacobi_eigenvalues(m.T @ m)
        assert np.allclose(res.singular_values**2, eig, rtol=1e-8, atol=1e-10)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(12, 8))
        res = truncated_svd(m, 5)
        assert np.max(np.abs(res.left_vectors.T @ res.left_vectors - np.eye(5))) < 1e-9
        assert np.max(np.abs(res.right_vectors.T @ res.right_vectors - np.eye(5))) < 1e-9

    def test_nonincreasing(self):
        rng = np.random.default_rng(2)
        res = truncated_svd(rng.normal(size=(9, 9)), 9)
        assert np.all(np.diff(res.singular_values) <= 0)
        assert np.all(res.singular_values >= 0)

    @pytest.mark.parametrize("k", [0, 7])
    def test_bad_rank(self, k):
        with pytest.raises(ValueError):
            truncated_svd(np.zeros((6, 6)), k)

    def test_truncation_energy_identity(self):
        # ||M - U S V^T||_F^2 == sum of discarded sigma^2, on sizes <= 32x32
        rng = np.random.default_rng(3)
        for trial in range(20):
            rows, cols = rng.integers(2, 33, size=2)
            m = rng.normal(size=(rows, cols))
            full = truncated_svd(m, min(rows, cols))
            k = int(rng.integers(1, min(rows, cols) + 1))
            part = truncated_svd(m, k)
            resid = np.sum((m - part.reconstruct()) ** 2)
            discarded = np.sum(full.singular_values[k:] ** 2)
            assert resid == pytest.approx(discarded, rel=1e-8, abs=1e-10)


class TestResize2d:
    def test_nearest_block_replication(self):
        t = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = resize2d(t, 4, 4, "nearest")
        expect = np.kron(t, np.ones((2, 2)))
        assert np.array_equal(out, expect)

    @pytest.mark.parametrize("method", ["nearest", "bilinear"])
    def test_identity_same_size(self, method):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(3, 5, 7))
        assert np.array_equal(resize2d(t, 5, 7, method), t)

    def test_bilinear_align_corners_hand_case(self):
        row = np.array([[0.0], [2.0]])  # (w=2, h=1)
        assert resize2d(row, 3, 1, "bilinear").ravel().tolist() == [0.0, 1.0, 2.0]

    def test_nearest_integer_scale_exact(self):
        rng = np.random.default_rng(4)
        t = rng.normal(size=(2, 3, 4))
        for s in (2, 3):
            out = resize2d(t, 3 * s, 4 * s, "nearest")
            expect = np.repeat(np.repeat(t, s, axis=1), s, axis=2)
            assert np.array_equal(out, expect)

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            resize2d(np.zeros((1, 2, 2)), 0, 2)

    def test_non_spatial_axis_unchanged(self):
        rng = np.random.default_rng(6)
        t = rng.normal(size=(5, 4, 4))
        assert resize2d(t, 9, 3, "bilinear").shape == (5, 9, 3)


class TestContainer:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        for shape in [(4,), (3, 5), (2, 3, 4), (1, 2, 3, 4)]:
            t = rng.normal(size=shape)
            path = tmp_path / "t.hseg"
            save_tensor(path, t)
            back = load_tensor(path)
            assert back.shape == t.shape
            assert np.array_equal(back, t)
            assert back.tobytes() == t.tobytes()

    def test_bytes_round_trip(self):
        t = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(tensor_from_bytes(tensor_to_bytes(t)), t)

    def test_header_layout(self):
        raw = tensor_to_bytes(np.zeros((2, 3)))
        assert raw[:4] == b"HSEG"
        assert raw[4:6] == (1).to_bytes(2, "little")
        assert raw[6:8] == (2).to_bytes(2, "little")
        assert int.from_bytes(raw[8:16], "little") == 2
        assert int.from_bytes(raw[16:24], "little") == 3

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            tensor_from_bytes(b"NOPE" + bytes(20))


def test_svd_result_reconstruct_shape():
    res = SvdResult(np.eye(3), np.ones(3), np.eye(3))
    assert res.reconstruct().shape == (3, 3)
