"""Per-sample loss values and output-space derivatives."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessdd import losses


def fd_grad(kind, f, y, eps=1e-6):
    g = np.zeros_like(f)
    for i in range(f.size):
        e = np.zeros_like(f)
        e[i] = eps
        g[i] = (losses.value(kind, f + e, y) - losses.value(kind, f - e, y)) / (2 * eps)
    return g


def fd_hess(kind, f, y, eps=1e-5):
    k = f.size
    h = np.zeros((k, k))
    for i in range(k):
        e = np.zeros_like(f)
        e[i] = eps
        h[:, i] = (losses.grad_f(kind, f + e, y) - losses.grad_f(kind, f - e, y)) / (2 * eps)
    return 0.5 * (h + h.T)


class TestValue:
    def test_mse_known(self):
        assert losses.value("mse", np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 2.5

    def test_ce_known(self):
        assert losses.value("cross_entropy", np.zeros(2), 0) == pytest.approx(np.log(2))

    def test_ce_shift_invariant(self):
        f = np.array([1.0, -2.0, 0.5])
        a = losses.value("cross_entropy", f, 1)
        b = losses.value("cross_entropy", f + 100.0, 1)
        assert a == pytest.approx(b, rel=1e-12)

    def test_ce_overflow_safe(self):
        v = losses.value("cross_entropy", np.array([1e4, 0.0]), 0)
        assert np.isfinite(v) and v >= 0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            losses.value("hinge", np.zeros(2), 0)


class TestGradF:
    @given(st.integers(0, 3), st.integers(0, 100))
    @settings(max_examples=60, deadline=None)
    def test_matches_finite_differences(self, y, seed):
        f = np.random.default_rng(seed).normal(size=4)
        for kind, target in (("mse", np.eye(4)[y]), ("cross_entropy", y)):
            g = losses.grad_f(kind, f, target)
            assert np.allclose(g, fd_grad(kind, f, target), atol=1e-7)

    def test_ce_gradient_sums_to_zero_shifted_by_target(self):
        f = np.array([0.3, -1.2, 2.0])
        g = losses.grad_f("cross_entropy", f, 2)
        # softmax minus one-hot sums to zero
        assert np.sum(g) == pytest.approx(0.0, abs=1e-12)


class TestHessF:
    def test_mse_identity_exact(self):
        for k in range(1, 6):
            f = np.random.default_rng(k).normal(size=k)
            assert np.array_equal(losses.hess_f("mse", f), np.eye(k))

    @given(st.integers(2, 10), st.integers(0, 50))
    @settings(max_examples=60, deadline=None)
    def test_ce_rank_k_minus_1(self, k, seed):
        f = np.random.default_rng(seed).normal(size=k)
        h = losses.hess_f("cross_entropy", f)
        w = np.linalg.eigvalsh(h)
        assert np.sum(w > 1e-12 * w[-1]) == k - 1
        assert np.all(w > -1e-12)
        assert np.allclose(h @ np.ones(k), 0.0, atol=1e-12)

    def test_ce_vanishes_on_confident_output(self):
        f = np.array([40.0, 0.0, 0.0])
        h = losses.hess_f("cross_entropy", f)
        assert np.linalg.norm(h) <= 1e-8

    @given(st.integers(0, 40))
    @settings(max_examples=40, deadline=None)
    def test_matches_finite_differences(self, seed):
        f = np.random.default_rng(seed).normal(size=3)
        assert np.allclose(
            losses.hess_f("cross_entropy", f), fd_hess("cross_entropy", f, 0), atol=1e-6
        )


class TestResidualEnergy:
    def test_mse_is_squared_error(self):
        f = np.array([1.0, 0.0])
        y = np.array([0.0, 0.0])
        assert losses.residual_energy("mse", f, y) == pytest.approx(1.0)

    def test_zero_at_exact_fit(self):
        y = np.array([0.5, -0.5])
        assert losses.residual_energy("mse", y.copy(), y) == 0.0


class TestSoftmax:
    def test_normalizes(self):
        p = losses.softmax(np.array([1.0, 2.0, 3.0]))
        assert np.sum(p) == pytest.approx(1.0)
        assert np.all(p > 0)

    def test_large_inputs(self):
        p = losses.softmax(np.array([1e4, 1e4]))
        assert np.allclose(p, 0.5)
