"""Numeric kernel tests against frozen reference values and basic identities."""

import numpy as np
import numpy.testing as npt
import pytest

from treegrad import numerics as nm

RTOL = 1e-6
ATOL = 1e-8


class TestMakeRng:
    def test_same_seed_same_stream(self):
        a = nm.make_rng(42, 1, 2).uniform(size=16)
        b = nm.make_rng(42, 1, 2).uniform(size=16)
        npt.assert_array_equal(a, b)

    def test_different_streams_differ(self):
        a = nm.make_rng(42, 1).uniform(size=16)
        b = nm.make_rng(42, 2).uniform(size=16)
        assert not np.array_equal(a, b)

    def test_stream_order_matters(self):
        a = nm.make_rng(42, 1, 2).uniform(size=16)
        b = nm.make_rng(42, 2, 1).uniform(size=16)
        assert not np.array_equal(a, b)

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            nm.make_rng(-1)


class TestAffine:
    def test_reference_value(self):
        W = np.array([[1.0, 2.0], [3.0, 4.0]])
        x = np.array([5.0, 6.0])
        b = np.array([0.5, -0.5])
        # hand-computed: [1*5+2*6+0.5, 3*5+4*6-0.5]
        npt.assert_allclose(nm.affine(W, x, b), [17.5, 38.5], rtol=RTOL, atol=ATOL)

    def test_linearity(self):
        rng = nm.make_rng(3)
        W = rng.normal(size=(4, 7))
        x = rng.normal(size=7)
        y = rng.normal(size=7)
        b = rng.normal(size=4)
        zero = np.zeros(4)
        lhs = nm.affine(W, 2.0 * x + y, zero)
        rhs = 2.0 * nm.affine(W, x, zero) + nm.affine(W, y, zero)
        npt.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
        npt.assert_allclose(nm.affine(W, x, b), nm.affine(W, x, zero) + b, rtol=1e-12, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        W = np.zeros((3, 4))
        with pytest.raises(ValueError, match="shape"):
            nm.affine(W, np.zeros(5), np.zeros(3))
        with pytest.raises(ValueError, match="shape"):
            nm.affine(W, np.zeros(4), np.zeros(2))


class TestActivations:
    def test_tanh_reference_values(self):
        npt.assert_allclose(
            nm.tanh_map(np.array([1.0, -0.5, 0.0])),
            [0.7615941559557649, -0.46211715726000974, 0.0],
            rtol=RTOL,
            atol=ATOL,
        )

    def test_sigmoid_reference_values(self):
        npt.assert_allclose(
            nm.sigmoid_map(np.array([2.0, -1.0, 0.0])),
            [0.8807970779778823, 0.2689414213699951, 0.5],
            rtol=RTOL,
            atol=ATOL,
        )

    def test_sigmoid_saturates_without_overflow(self):
        out = nm.sigmoid_map(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        npt.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_sigmoid_symmetry(self):
        rng = nm.make_rng(11)
        x = rng.normal(scale=3.0, size=64)
        npt.assert_allclose(nm.sigmoid_map(x) + nm.sigmoid_map(-x), np.ones(64), rtol=1e-12, atol=1e-12)


class TestSoftmax:
    def test_reference_values(self):
        npt.assert_allclose(
            nm.softmax(np.array([np.log(2.0), 0.0])),
            [2.0 / 3.0, 1.0 / 3.0],
            rtol=RTOL,
            atol=ATOL,
        )
        npt.assert_allclose(
            nm.softmax(np.array([1.0, 2.0, 3.0])),
            [0.09003057317038046, 0.24472847105479767, 0.6652409557748219],
            rtol=RTOL,
            atol=ATOL,
        )

    def test_normalizes_and_shift_invariant(self):
        rng = nm.make_rng(5)
        for _ in range(20):
            x = rng.normal(scale=4.0, size=10)
            p = nm.softmax(x)
            npt.assert_allclose(p.sum(), 1.0, rtol=1e-12, atol=1e-12)
            npt.assert_allclose(nm.softmax(x + 123.4), p, rtol=1e-9, atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        p = nm.softmax(np.array([1000.0, 0.0, -1000.0]))
        assert np.all(np.isfinite(p))
        npt.assert_allclose(p[0], 1.0, atol=1e-12)


class TestL2Norm:
    def test_reference_value(self):
        assert nm.l2_norm(np.array([3.0, 4.0])) == pytest.approx(5.0, rel=RTOL)

    def test_zero_vector(self):
        assert nm.l2_norm(np.zeros(7)) == 0.0


class TestUniformInit:
    def test_range_and_shape(self):
        rng = nm.make_rng(9)
        M = nm.uniform_init(40, 30, -0.0001, 0.0001, rng)
        assert M.shape == (40, 30)
        assert M.dtype == np.float64
        assert np.all(M >= -0.0001) and np.all(M < 0.0001)

    def test_deterministic_per_seed(self):
        a = nm.uniform_init(8, 8, -1.0, 1.0, nm.make_rng(4, 1))
        b = nm.uniform_init(8, 8, -1.0, 1.0, nm.make_rng(4, 1))
        npt.assert_array_equal(a, b)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError):
            nm.uniform_init(2, 2, 0.5, 0.5, nm.make_rng(0))
        with pytest.raises(ValueError):
            nm.uniform_init(2, 2, 1.0, -1.0, nm.make_rng(0))


class TestFiniteDiffGrad:
    def test_quadratic_exact_to_truncation(self):
        # f(x) = x.x has gradient 2x; central differences are exact for
        # quadratics up to rounding.
        rng = nm.make_rng(21)
        x = rng.normal(size=6)
        g = nm.finite_diff_grad(lambda v: float(v @ v), x)
        npt.assert_allclose(g, 2.0 * x, rtol=1e-8, atol=1e-10)

    def test_matches_tanh_derivative(self):
        rng = nm.make_rng(22)
        for _ in range(5):
            x = rng.normal(size=5)
            g = nm.finite_diff_grad(lambda v: float(np.sum(np.tanh(v))), x)
            npt.assert_allclose(g, 1.0 - np.tanh(x) ** 2, rtol=1e-6, atol=1e-8)

    def test_does_not_mutate_input(self):
        x = np.array([0.1, 0.2, 0.3])
        kept = x.copy()
        nm.finite_diff_grad(lambda v: float(v.sum()), x)
        npt.assert_array_equal(x, kept)

    def test_nonfinite_f_rejected(self):
        with pytest.raises(ValueError):
            nm.finite_diff_grad(lambda v: float("nan"), np.zeros(2))
