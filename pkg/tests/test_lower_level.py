#region 下层修复问题测试

import unittest

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from core.exceptions import DimensionMismatchError, SingularMatrixError
from core.grid_ops import ModelKind, get_operators
from core.lower_level import (
    C_MAX, MaskField, continuation_schedule, factorize_linear, fidelity_weights, inpaint_linear,
    inpaint_tv, lower_energy, reconstruct, tv_gradient, tv_hessian, tv_residual,
)
from core.pipeline import random_mask
from tests.fixtures import synthetic_image


def _dense_linear_oracle(c: np.ndarray, g: np.ndarray, kind: ModelKind) -> np.ndarray:
    height, width = g.shape
    G = get_operators(width, height).regularizer_matrix(kind).toarray()
    C = np.diag(c.ravel())
    A = C + (np.eye(c.size) - C) @ G
    return np.linalg.solve(A, C @ g.ravel()).reshape(g.shape)


class TestLinearInpainting(unittest.TestCase):
    """调和 / 双调和重建"""

    def test_full_mask_reproduces_image(self):
        g = synthetic_image(6, 7)
        for kind in (ModelKind.HARMONIC, ModelKind.BIHARMONIC):
            np.testing.assert_allclose(inpaint_linear(np.ones(g.shape), g, kind), g, atol=1e-12)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            g = rng.random((8, 8))
            if trial % 2:
                c = (rng.random((8, 8)) < 0.25).astype(float)
                c[rng.integers(8), rng.integers(8)] = 1.0
            else:
                c = rng.uniform(0.05, 0.95, (8, 8))
            for kind in (ModelKind.HARMONIC, ModelKind.BIHARMONIC):
                np.testing.assert_allclose(
                    inpaint_linear(c, g, kind), _dense_linear_oracle(c, g, kind), atol=1e-8
                )

    def test_solution_minimizes_lower_energy(self):
        rng = np.random.default_rng(1)
        g = synthetic_image(8)
        c = rng.uniform(0.1, 0.9, g.shape)
        for kind in (ModelKind.HARMONIC, ModelKind.BIHARMONIC):
            u = inpaint_linear(MaskField(c), g, kind)
            base = lower_energy(u, c, g, kind)
            for _ in range(5):
                perturbed = u + 1e-3 * rng.standard_normal(g.shape)
                self.assertGreater(lower_energy(perturbed, c, g, kind), base)

    def test_zero_mask_is_singular(self):
        with self.assertRaises(SingularMatrixError):
            factorize_linear(np.zeros((4, 4)), ModelKind.HARMONIC)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            inpaint_linear(np.ones((3, 4)), np.ones((4, 3)), ModelKind.HARMONIC)

    def test_tv_not_accepted(self):
        with self.assertRaises(ValueError):
            inpaint_linear(np.ones((3, 3)), np.ones((3, 3)), ModelKind.TV)


class TestFidelityWeights(unittest.TestCase):

    def test_weights_and_infinite_limit(self):
        weights = fidelity_weights(np.array([0.0, 0.5, 1.0]))
        self.assertEqual(weights[0], 0.0)
        self.assertEqual(weights[1], 1.0)
        self.assertTrue(np.isinf(weights[2]))

    def test_energy_finite_where_data_is_hit(self):
        g = synthetic_image(4)
        c = np.ones(g.shape)
        self.assertTrue(np.isfinite(lower_energy(g, c, g, ModelKind.HARMONIC)))

    def test_mask_field_helpers(self):
        field = MaskField(np.array([[-0.5, 0.005], [0.2, 1.0]]))
        self.assertEqual(field.density(0.01), 0.75)
        self.assertEqual(field.clamped().c.max(), C_MAX)
        self.assertEqual(field.clamped().c.min(), 0.0)


class TestSmoothedTv(unittest.TestCase):
    """平滑 TV 的 Hessian 与牛顿求解"""

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        ops = get_operators(5, 4)
        u = rng.random(20)
        eps, h = 0.1, 1e-6
        hessian = tv_hessian(u, eps, ops).toarray()
        numeric = np.empty((20, 20))
        for j in range(20):
            e = np.zeros(20)
            e[j] = h
            numeric[:, j] = (tv_gradient(u + e, eps, ops) - tv_gradient(u - e, eps, ops)) / (2 * h)
        np.testing.assert_allclose(hessian, numeric, atol=1e-6)
        np.testing.assert_allclose(hessian, hessian.T, atol=1e-14)

    def test_newton_solves_optimality_conditions(self):
        rng = np.random.default_rng(3)
        g = synthetic_image(10)
        c = rng.uniform(0.05, 0.9, g.shape)
        u = inpaint_tv(c, g, eps=0.05, tol=1e-10)
        self.assertLessEqual(np.max(np.abs(tv_residual(u, c, g, 0.05))), 1e-10)

    def test_energy_matches_quasi_newton_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            g = rng.random((8, 8))
            c = rng.uniform(0.05, 0.8, (8, 8))
            eps = 0.05
            u = inpaint_tv(c, g, eps=eps, tol=1e-11)

            def fun(v):
                v = v.reshape(g.shape)
                return lower_energy(v, c, g, ModelKind.TV, eps=eps), tv_residual(v, c, g, eps)

            oracle = minimize(fun, g.ravel(), jac=True, method='L-BFGS-B',
                              options={'gtol': 1e-12, 'ftol': 1e-15, 'maxiter': 20000})
            ours = lower_energy(u, c, g, ModelKind.TV, eps=eps)
            self.assertLessEqual(ours, oracle.fun + 1e-8)
            self.assertLessEqual(abs(ours - oracle.fun), 1e-6)

    def test_warm_start_reaches_same_solution(self):
        g = synthetic_image(8, seed=5)
        c = np.full(g.shape, 0.4)
        cold = inpaint_tv(c, g, eps=0.05, tol=1e-11)
        warm = inpaint_tv(c, g, eps=0.05, tol=1e-11, u0=cold + 0.01)
        np.testing.assert_allclose(warm, cold, atol=1e-8)

    def test_invalid_masks(self):
        g = synthetic_image(4)
        with self.assertRaises(ValueError):
            inpaint_tv(np.ones(g.shape), g)
        with self.assertRaises(SingularMatrixError):
            inpaint_tv(np.zeros(g.shape), g)
        with self.assertRaises(ValueError):
            inpaint_tv(np.full(g.shape, 0.5), g, eps=0.0)


class TestReconstruct(unittest.TestCase):
    """由二值掩码与存储值重建"""

    def test_values_off_mask_are_ignored(self):
        g = synthetic_image(8)
        indicator = np.zeros(g.shape, dtype=bool)
        indicator[::3, ::3] = True
        noisy = np.where(indicator, g, 0.77)
        for kind in ModelKind:
            np.testing.assert_allclose(
                reconstruct(indicator, noisy, kind, eps=0.05),
                reconstruct(indicator, g, kind, eps=0.05),
                atol=1e-9,
            )

    def test_linear_reconstruction_interpolates_mask(self):
        g = synthetic_image(8)
        indicator = np.zeros(g.shape, dtype=bool)
        indicator[1::2, ::2] = True
        u = reconstruct(indicator, g, ModelKind.BIHARMONIC)
        np.testing.assert_allclose(u[indicator], g[indicator], atol=1e-12)


class TestLowerLevelExamples(unittest.TestCase):
    """小规模解析算例与最优性"""

    def test_one_dimensional_harmonic_is_linear(self):
        g = np.array([[0.0, 9.0, 9.0, 9.0, 4.0]])
        c = np.array([[1.0, 0.0, 0.0, 0.0, 1.0]])
        np.testing.assert_allclose(inpaint_linear(c, g, ModelKind.HARMONIC),
                                   [[0.0, 1.0, 2.0, 3.0, 4.0]], atol=1e-12)

    def test_constant_image_tv_energy(self):
        g = np.full((6, 7), 0.3)
        eps = 0.05
        c = np.random.default_rng(6).uniform(0.0, 0.9, g.shape)
        self.assertAlmostEqual(lower_energy(g, c, g, ModelKind.TV, eps=eps), g.size * eps, places=12)

    def test_harmonic_maximum_principle(self):
        rng = np.random.default_rng(7)
        for seed in range(5):
            g = synthetic_image(12, seed=seed)
            indicator = rng.random(g.shape) < 0.15
            indicator[0, 0] = True
            u = inpaint_linear(indicator.astype(float), g, ModelKind.HARMONIC)
            self.assertGreaterEqual(u.min(), g[indicator].min() - 1e-9)
            self.assertLessEqual(u.max(), g[indicator].max() + 1e-9)

    def test_energy_optimality_all_models(self):
        rng = np.random.default_rng(8)
        g = synthetic_image(8, seed=1)
        c = rng.uniform(0.1, 0.9, g.shape)
        eps = 0.05
        for kind in ModelKind:
            if kind.is_linear:
                u = inpaint_linear(c, g, kind)
            else:
                u = inpaint_tv(c, g, eps=eps, tol=1e-11)
            base = lower_energy(u, c, g, kind, eps=eps)
            for _ in range(100):
                direction = rng.standard_normal(g.shape)
                direction *= 1e-3 / np.linalg.norm(direction)
                self.assertGreaterEqual(lower_energy(u + direction, c, g, kind, eps=eps), base - 1e-10)

    def test_tv_full_weight_reproduces_image(self):
        g = synthetic_image(10, seed=3)
        u = inpaint_tv(np.full(g.shape, C_MAX), g, eps=0.01)
        self.assertLessEqual(np.max(np.abs(u - g)), 1e-4)


class TestTvContinuation(unittest.TestCase):
    """默认 ε 下的 TV 牛顿求解"""

    def test_schedule(self):
        np.testing.assert_allclose(continuation_schedule(0.01), [0.1, 0.05, 0.025, 0.0125, 0.01])
        self.assertEqual(continuation_schedule(0.1), [0.1])
        self.assertEqual(continuation_schedule(0.5), [0.5])

    def test_random_masks_converge_at_small_eps(self):
        eps = 0.01
        for size, seed in ((24, 0), (24, 1), (32, 1), (48, 0), (64, 2)):
            g = synthetic_image(size, seed=2)
            indicator = random_mask(g.shape, 0.10, seed).indicator
            u = reconstruct(indicator, g, ModelKind.TV, eps=eps)
            data = np.where(indicator, g, 0.0)
            residual = tv_residual(u, indicator * C_MAX, data, eps)
            self.assertLessEqual(np.max(np.abs(residual)), 1e-9, msg=f"{size}x{size} seed={seed}")

    def test_distant_warm_start_reaches_same_solution(self):
        g = synthetic_image(16, seed=4)
        c = np.full(g.shape, 0.5)
        cold = inpaint_tv(c, g, eps=0.02, tol=1e-10)
        far = inpaint_tv(c, g, eps=0.02, tol=1e-10, max_newton=200, u0=np.full(g.shape, 50.0))
        np.testing.assert_allclose(far, cold, atol=1e-7)


if __name__ == '__main__':
    unittest.main()

#endregion
