import math

import numpy as np
import pytest

from fapft.errors import (
    DegenerateRanking,
    DegenerateVector,
    DimensionMismatch,
    EmptyInput,
    InvalidValue,
)
from fapft.tensors import Tensor, kendall_tau, mean_stack, vec_angle


def brute_force_tau_b(a, b):
    """All-pairs tau-b oracle, written independently of the library path."""
    n = len(a)
    c_minus_d = 0
    tied_a = 0
    tied_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = int(a[i] > a[j]) - int(a[i] < a[j])
            db = int(b[i] > b[j]) - int(b[i] < b[j])
            c_minus_d += da * db
            if da == 0:
                tied_a += 1
            if db == 0:
                tied_b += 1
    n0 = n * (n - 1) // 2
    return c_minus_d / math.sqrt((n0 - tied_a) * (n0 - tied_b))


class TestTensor:
    def test_rejects_nan_and_inf(self):
        with pytest.raises(InvalidValue):
            Tensor([1.0, float("nan")])
        with pytest.raises(InvalidValue):
            Tensor([float("inf"), 0.0])

    def test_zero_extent_shape(self):
        t = Tensor(np.zeros((0, 3), dtype=np.float32))
        assert t.shape == (0, 3)
        assert t.size == 0

    def test_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.array[0] = 5.0
        with pytest.raises(AttributeError):
            t.name = "x"

    def test_storage_is_float32(self):
        t = Tensor([0.1, 0.2])
        assert t.array.dtype == np.float32


class TestVecAngle:
    def test_identical_vectors(self):
        assert vec_angle([3.0, 4.0], [3.0, 4.0]) == 0.0

    def test_orthogonal(self):
        assert vec_angle([1.0, 0.0], [0.0, 1.0]) == pytest.approx(
            math.pi / 2, abs=1e-15
        )

    def test_forty_five_degrees(self):
        # independent evaluation of arccos(1/sqrt(2))
        expected = math.acos(1.0 / math.sqrt(2.0))
        assert vec_angle([1.0, 0.0], [1.0, 1.0]) == pytest.approx(expected, abs=1e-12)
        assert abs(vec_angle([1.0, 0.0], [1.0, 1.0]) - 0.785398163) < 1e-8

    def test_antiparallel_exact(self):
        u = np.array([0.3, -1.7, 2.5], dtype=np.float32)
        assert abs(vec_angle(u, -u) - math.pi) < 1e-12

    def test_symmetry_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            u = rng.normal(size=17)
            v = rng.normal(size=17)
            assert vec_angle(u, v) == vec_angle(v, u)

    def test_scale_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            u = rng.normal(size=23)
            v = rng.normal(size=23)
            c, d = rng.uniform(0.01, 100.0, size=2)
            assert abs(vec_angle(c * u, d * v) - vec_angle(u, v)) < 1e-10

    def test_range(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            assert 0.0 <= vec_angle(u, v) <= math.pi

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            vec_angle([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_zero_norm(self):
        with pytest.raises(DegenerateVector):
            vec_angle([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(DegenerateVector):
            vec_angle([], [])

    def test_non_finite(self):
        with pytest.raises(InvalidValue):
            vec_angle([1.0, float("nan")], [1.0, 2.0])

    def test_accepts_tensor_inputs(self):
        assert vec_angle(Tensor([1.0, 0.0]), Tensor([1.0, 0.0])) == 0.0


class TestKendallTau:
    def test_identical(self):
        assert kendall_tau([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_reversed(self):
        assert kendall_tau([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == -1.0

    def test_one_swap(self):
        # 2 concordant, 1 discordant over 3 pairs
        assert kendall_tau([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]) == pytest.approx(
            1.0 / 3.0, abs=1e-15
        )

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(29)
        for _ in range(300):
            n = int(rng.integers(2, 9))
            # draw from a tiny alphabet so ties are common
            a = rng.integers(0, 4, size=n).astype(float)
            b = rng.integers(0, 4, size=n).astype(float)
            if np.all(a == a[0]) or np.all(b == b[0]):
                continue
            assert kendall_tau(a, b) == brute_force_tau_b(a, b)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            a = rng.normal(size=8)
            b = rng.normal(size=8)
            assert kendall_tau(np.exp(a), b) == kendall_tau(a, b)
            assert kendall_tau(a, 3.0 * b + 7.0) == kendall_tau(a, b)

    def test_symmetry(self):
        rng = np.random.default_rng(37)
        a = rng.normal(size=10)
        b = rng.normal(size=10)
        assert kendall_tau(a, b) == kendall_tau(b, a)

    def test_all_tied_raises(self):
        with pytest.raises(DegenerateRanking):
            kendall_tau([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_length_errors(self):
        with pytest.raises(DimensionMismatch):
            kendall_tau([1.0], [2.0])
        with pytest.raises(DimensionMismatch):
            kendall_tau([1.0, 2.0], [1.0, 2.0, 3.0])


class TestMeanStack:
    def test_uniform_mean(self):
        out = mean_stack([Tensor([1.0, 2.0]), Tensor([3.0, 4.0])])
        assert np.array_equal(out.array, np.array([2.0, 3.0], dtype=np.float32))

    def test_idempotent_on_identical(self):
        t = Tensor(np.random.default_rng(41).normal(size=(5, 7)).astype(np.float32))
        out = mean_stack([t, t, t])
        assert out.bitwise_equal(t)

    def test_weighted(self):
        out = mean_stack([Tensor([0.0, 0.0]), Tensor([1.0, 1.0])], weights=[3.0, 1.0])
        assert np.array_equal(out.array, np.array([0.25, 0.25], dtype=np.float32))

    def test_single_input_reproduced_exactly(self):
        t = Tensor(np.random.default_rng(43).normal(size=64).astype(np.float32))
        assert mean_stack([t]).bitwise_equal(t)
        assert mean_stack([t], weights=[0.37]).bitwise_equal(t)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(47)
        ts = [Tensor(rng.normal(size=16).astype(np.float32)) for _ in range(4)]
        ws = [1.0, 2.0, 3.0, 4.0]
        out1 = mean_stack(ts, ws)
        perm = [2, 0, 3, 1]
        out2 = mean_stack([ts[i] for i in perm], [ws[i] for i in perm])
        assert out1.bitwise_equal(out2)

    def test_errors(self):
        with pytest.raises(EmptyInput):
            mean_stack([])
        with pytest.raises(DimensionMismatch):
            mean_stack([Tensor([1.0]), Tensor([1.0, 2.0])])
        with pytest.raises(DimensionMismatch):
            mean_stack([Tensor([1.0])], weights=[1.0, 2.0])
        with pytest.raises(InvalidValue):
            mean_stack([Tensor([1.0]), Tensor([2.0])], weights=[0.0, 0.0])
        with pytest.raises(InvalidValue):
            mean_stack([Tensor([1.0]), Tensor([2.0])], weights=[-1.0, 2.0])
