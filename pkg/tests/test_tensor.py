import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectnet.errors import ShapeError
from defectnet.tensor import (Shape4, Tensor, flat_offset, map_unary, matmul,
                              multi_index, reduce)


def triple_loop_matmul(a, b):
    """Reference multiply: plain nested loops, 64-bit accumulate, round to 32-bit."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float32)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += float(a[i, p]) * float(b[p, j])
            out[i, j] = np.float32(acc)
    return out


class TestTensorType:
    def test_construction_and_shape(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.rank == 2
        assert t.size == 4

    def test_flat_data_length_matches_shape(self):
        t = Tensor(np.arange(24, dtype=np.float32), shape=(2, 3, 4))
        assert len(t.flat) == 24

    def test_rejects_rank_zero(self):
        with pytest.raises(ShapeError):
            Tensor(5.0)

    def test_rejects_zero_dimension(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 0, 3), dtype=np.float32))

    def test_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.array[0] = 9.0

    def test_multi_index_access(self):
        t = Tensor(np.arange(6, dtype=np.float32), shape=(2, 3))
        assert t[1, 2] == 5.0

    @given(st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=4))
    @settings(max_examples=50, deadline=None)
    def test_row_major_offset_roundtrip(self, shape):
        size = int(np.prod(shape))
        for off in range(size):
            idx = multi_index(shape, off)
            assert flat_offset(shape, idx) == off

    def test_flat_offset_is_row_major(self):
        t = Tensor(np.arange(24, dtype=np.float32), shape=(2, 3, 4))
        for off in range(24):
            assert t[multi_index(t.shape, off)] == float(off)

    def test_shape4_validates(self):
        assert Shape4(1, 3, 224, 224).as_tuple() == (1, 3, 224, 224)
        with pytest.raises(ShapeError):
            Shape4(1, 0, 224, 224)


class TestMatmul:
    def test_identity(self):
        eye = Tensor([[1.0, 0.0], [0.0, 1.0]])
        m = Tensor([[5.0, 7.0], [1.0, 2.0]])
        assert matmul(eye, m).tolist() == [[5.0, 7.0], [1.0, 2.0]]

    def test_zeros_annihilate(self):
        z = Tensor.zeros((3, 4))
        rng = np.random.default_rng(7)
        b = Tensor(rng.normal(size=(4, 2)).astype(np.float32))
        assert matmul(z, b).tolist() == [[0.0, 0.0]] * 3

    def test_hand_computed_case(self):
        a = Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = Tensor([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]])
        assert matmul(a, b).tolist() == [[58.0, 64.0], [139.0, 154.0]]

    def test_matches_triple_loop_oracle_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = rng.integers(-9, 10, size=(2, 3)).astype(np.float32)
            b = rng.integers(-9, 10, size=(3, 2)).astype(np.float32)
            got = matmul(Tensor(a), Tensor(b)).array
            want = triple_loop_matmul(a, b)
            assert np.array_equal(got, want)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor.zeros((2, 3)), Tensor.zeros((2, 2)))

    def test_integer_associativity_bitwise(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.integers(-5, 6, size=(2, 3)).astype(np.float32))
        b = Tensor(rng.integers(-5, 6, size=(3, 4)).astype(np.float32))
        c = Tensor(rng.integers(-5, 6, size=(4, 2)).astype(np.float32))
        left = matmul(matmul(a, b), c).array
        right = matmul(a, matmul(b, c)).array
        assert np.array_equal(left, right)

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(11)
        a = Tensor(rng.normal(size=(5, 7)).astype(np.float32))
        b = Tensor(rng.normal(size=(7, 3)).astype(np.float32))
        assert np.array_equal(matmul(a, b).array, matmul(a, b).array)


class TestMapUnary:
    def test_identity_bit_equal(self):
        rng = np.random.default_rng(5)
        t = Tensor(rng.normal(size=(3, 4)).astype(np.float32))
        assert np.array_equal(map_unary(t, lambda x: x).array, t.array)

    def test_constant_zero(self):
        t = Tensor([[1.0, -2.0], [3.0, 4.0]])
        assert map_unary(t, lambda x: 0.0).tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_doubling(self):
        assert map_unary(Tensor([1.0, 2.0, 3.0]), lambda x: 2 * x).tolist() == [2.0, 4.0, 6.0]

    def test_preserves_shape(self):
        t = Tensor(np.ones((2, 3, 4), dtype=np.float32))
        assert map_unary(t, lambda x: x + 1).shape == (2, 3, 4)


class TestReduce:
    def test_sum_axis0(self):
        assert reduce(Tensor([[1.0, 2.0], [3.0, 4.0]]), 0, "sum").tolist() == [4.0, 6.0]

    def test_max_axis1(self):
        assert reduce(Tensor([[1.0, 9.0], [3.0, 4.0]]), 1, "max").tolist() == [9.0, 4.0]

    def test_mean_axis0(self):
        assert reduce(Tensor([[2.0, 2.0], [4.0, 4.0]]), 0, "mean").tolist() == [3.0, 3.0]

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            reduce(Tensor([[1.0]]), 2, "sum")

    def test_rank1_reduces_to_shape_1(self):
        assert reduce(Tensor([1.0, 2.0, 3.0]), 0, "sum").shape == (1,)

    def test_sum_all_axes_equals_flat_accumulation(self):
        # Oracle mirrors the contract: left-to-right 64-bit accumulation with
        # float32 rounding at each reduce output, scalar loops only.
        rng = np.random.default_rng(19)
        a = rng.normal(size=(3, 4, 5)).astype(np.float32)

        def oracle_axis0(arr):
            if arr.ndim == 1:
                acc = float(arr[0])
                for i in range(1, arr.shape[0]):
                    acc += float(arr[i])
                return np.array([acc], dtype=np.float32)
            out = np.empty(arr.shape[1:], dtype=np.float32)
            for idx in np.ndindex(*arr.shape[1:]):
                acc = float(arr[(0, *idx)])
                for i in range(1, arr.shape[0]):
                    acc += float(arr[(i, *idx)])
                out[idx] = np.float32(acc)
            return out

        t = Tensor(a)
        want = a
        for _ in range(3):
            t = reduce(t, 0, "sum")
            want = oracle_axis0(want)
        assert t.shape == (1,)
        assert np.array_equal(t.array, want)

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        t = Tensor(rng.normal(size=(6, 7)).astype(np.float32))
        assert np.array_equal(reduce(t, 0, "sum").array, reduce(t, 0, "sum").array)
