import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpreduce.lewis import (
    LewisConvergenceError,
    blend_density,
    damping_exponent,
    hilbert_lewis_beta,
    lewis_change,
    lewis_density,
    one_dim_lewis_beta,
    sup_bound_constant,
    verify_sup_bounds,
)
from lpreduce.measure import Density, InvalidInput, Subspace, WeightedSpace, lp_norm


def random_subspace(rng, size, dim, uniform=False):
    if uniform:
        space = WeightedSpace.uniform(size)
    else:
        w = rng.random(size) + 0.05
        space = WeightedSpace(w / w.sum())
    return Subspace(space, rng.standard_normal((size, dim)))


def lewis_sum(res, sub):
    return (res.lewis_basis ** 2).sum(axis=1)


class TestLewisDensity:
    def test_full_space_uniform(self):
        sub = Subspace(WeightedSpace.uniform(4), np.random.default_rng(0).standard_normal((4, 4)))
        res = lewis_density(sub, 3.0)
        np.testing.assert_allclose(res.beta.values, 1.0, atol=1e-8)

    @pytest.mark.parametrize("p", [1.25, 1.5, 3.0, 4.0, 6.0, 10.0])
    def test_lewis_condition(self, p):
        rng = np.random.default_rng(int(p * 100))
        sub = random_subspace(rng, 60, 4)
        res = lewis_density(sub, p)
        assert res.residual <= 1e-8 * 4
        np.testing.assert_allclose(lewis_sum(res, sub), 4.0, atol=1e-7)

    def test_gram_is_identity(self):
        rng = np.random.default_rng(1)
        sub = random_subspace(rng, 40, 3)
        res = lewis_density(sub, 1.5)
        G = res.lewis_basis.T @ (res.masses[:, None] * res.lewis_basis)
        np.testing.assert_allclose(G, np.eye(3), atol=1e-8)

    def test_basis_spans_rescaled_subspace(self):
        rng = np.random.default_rng(2)
        sub = random_subspace(rng, 30, 2)
        res = lewis_density(sub, 3.0)
        Y = sub.basis / res.beta.values[:, None] ** (1 / 3)
        coef, *_ = np.linalg.lstsq(Y, res.lewis_basis, rcond=None)
        np.testing.assert_allclose(Y @ coef, res.lewis_basis, atol=1e-10)

    def test_one_dim_closed_form(self):
        rng = np.random.default_rng(3)
        for p in (1.25, 1.5, 3.0, 4.0):
            sub = random_subspace(rng, 20, 1)
            res = lewis_density(sub, p, tol=1e-12)
            np.testing.assert_allclose(res.beta.values,
                                       one_dim_lewis_beta(sub.basis[:, 0], sub.space, p),
                                       rtol=1e-8)

    def test_one_dim_p1_limit(self):
        sub = Subspace(WeightedSpace.uniform(2), np.array([[2.0], [1.0]]))
        np.testing.assert_allclose(one_dim_lewis_beta([2.0, 1.0], sub.space, 1.0), [4 / 3, 2 / 3])
        res = lewis_density(sub, 1.01)
        np.testing.assert_allclose(res.beta.values, [4 / 3, 2 / 3], atol=5e-3)

    def test_p2_closed_form(self):
        rng = np.random.default_rng(4)
        sub = random_subspace(rng, 50, 5)
        res = lewis_density(sub, 2.0)
        np.testing.assert_allclose(res.beta.values, hilbert_lewis_beta(sub), rtol=1e-8)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        sub = random_subspace(rng, 30, 3)
        base = lewis_density(sub, 1.5).beta.values
        for _ in range(5):
            perm = rng.permutation(30)
            moved = Subspace(WeightedSpace(sub.space.weights[perm]), sub.basis[perm])
            np.testing.assert_allclose(lewis_density(moved, 1.5).beta.values, base[perm],
                                       rtol=1e-8)

    def test_invariant_under_basis_change(self):
        rng = np.random.default_rng(6)
        sub = random_subspace(rng, 25, 3)
        T = rng.standard_normal((3, 3))
        other = Subspace(sub.space, sub.basis @ T)
        np.testing.assert_allclose(lewis_density(other, 3.0).beta.values,
                                   lewis_density(sub, 3.0).beta.values, rtol=1e-8)

    def test_nonconvergence_reports_best(self):
        rng = np.random.default_rng(7)
        sub = random_subspace(rng, 40, 3)
        with pytest.raises(LewisConvergenceError) as info:
            lewis_density(sub, 3.0, max_iter=2)
        assert info.value.best_residual > 0
        assert info.value.iterations == 2

    @pytest.mark.parametrize("p", [1.0, 0.5, math.inf])
    def test_p_out_of_range(self, p):
        sub = Subspace(WeightedSpace.uniform(2), np.ones((2, 1)))
        with pytest.raises(InvalidInput):
            lewis_density(sub, p)

    def test_bad_tol(self):
        sub = Subspace(WeightedSpace.uniform(2), np.ones((2, 1)))
        with pytest.raises(InvalidInput):
            lewis_density(sub, 3.0, tol=0.0)

    def test_damping(self):
        assert damping_exponent(3.9) == 1.0
        assert damping_exponent(4.0) == 0.5
        assert damping_exponent(12.0) == pytest.approx(0.25)


class TestBlend:
    def test_fixed_point(self):
        s = WeightedSpace.uniform(3)
        np.testing.assert_allclose(blend_density(Density(np.ones(3), s)).values, 1.0)

    def test_worked_example(self):
        s = WeightedSpace.uniform(2)
        alpha = blend_density(Density(np.array([4 / 3, 2 / 3]), s))
        np.testing.assert_allclose(alpha.values, [7 / 6, 5 / 6])
        assert float(alpha.values @ s.weights) == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_above_half(self, seed):
        rng = np.random.default_rng(seed)
        s = WeightedSpace.from_masses(rng.random(10) + 0.01)
        beta = Density.normalized(rng.random(10) ** 4 + 1e-9, s)
        assert blend_density(beta).values.min() > 0.5


class TestSupBounds:
    def test_constant_function(self):
        sub = Subspace(WeightedSpace.uniform(5), np.ones((5, 1)))
        rep = verify_sup_bounds(sub, 1.5, samples=10)
        assert rep.max_ratio == pytest.approx(1.0)
        assert not rep.violated

    def test_constants(self):
        assert sup_bound_constant(3, 1.5) == pytest.approx(6 ** (1 / 1.5))
        assert sup_bound_constant(3, 4.0) == pytest.approx(math.sqrt(6))

    @pytest.mark.parametrize("p", [1.5, 3.0])
    def test_random_subspaces(self, p):
        rng = np.random.default_rng(int(10 * p))
        for _ in range(100):
            n = int(rng.integers(1, 7))
            N = int(rng.integers(max(n, 8), 129))
            sub = random_subspace(rng, N, n)
            tilde, _, _ = lewis_change(sub, p)
            rep = verify_sup_bounds(tilde, p, samples=200, seed=int(rng.integers(1 << 30)))
            assert not rep.violated, (n, N, rep)

    def test_change_preserves_norms(self):
        rng = np.random.default_rng(11)
        sub = random_subspace(rng, 30, 3)
        tilde, _, _ = lewis_change(sub, 3.0)
        c = rng.standard_normal(3)
        assert lp_norm(tilde.functions(c), tilde.space, 3.0) == pytest.approx(
            lp_norm(sub.functions(c), sub.space, 3.0), rel=1e-12)
