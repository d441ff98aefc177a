#region iPiano 测试

import unittest

import numpy as np
from pydantic import ValidationError

from core.grid_ops import ModelKind
from core.gvo import binarize
from core.ipiano import (
    IpianoParams, ipiano_minimize, ipiano_run, reduced_objective_linear, reduced_objective_tv,
)
from core.lower_level import C_MAX
from core.sppd import SppdParams, shrink, sppd_run
from tests.fixtures import synthetic_image


def _quadratic(target: np.ndarray):
    def objective(c):
        diff = c - target
        return 0.5 * float(diff @ diff), diff
    return objective


def _central_differences(fun, c: np.ndarray, coords, h: float) -> np.ndarray:
    numeric = []
    for idx in coords:
        e = np.zeros(c.size)
        e[idx] = h
        e = e.reshape(c.shape)
        numeric.append((fun(c + e) - fun(c - e)) / (2 * h))
    return np.array(numeric)


class TestGenericIpiano(unittest.TestCase):
    """二次问题上的通用迭代"""

    def test_converges_fast_without_inertia(self):
        target = np.array([0.3, -1.2, 2.0, 0.0])
        params = IpianoParams(lam=0.0, beta=0.0, relax=1.0, l_init=2.0)
        result = ipiano_minimize(_quadratic(target), lambda x, alpha: x, np.zeros(4), params)
        self.assertTrue(result.converged)
        self.assertLessEqual(len(result.trace), 50)
        np.testing.assert_allclose(result.c, target, atol=1e-6)

    def test_converges_with_default_inertia(self):
        target = np.linspace(-1.0, 1.0, 6)
        params = IpianoParams(lam=0.0, max_iters=200, tol=1e-9)
        result = ipiano_minimize(_quadratic(target), lambda x, alpha: x, np.zeros(6), params)
        np.testing.assert_allclose(result.c, target, atol=1e-6)

    def test_l1_penalty_gives_shrunk_target(self):
        target = np.array([0.05, -0.5, 1.0, -0.01])
        lam = 0.1
        params = IpianoParams(lam=lam, max_iters=400, tol=1e-10)
        result = ipiano_minimize(_quadratic(target), lambda x, alpha: shrink(x, alpha * lam),
                                 np.ones(4), params,
                                 penalty=lambda c: lam * float(np.sum(np.abs(c))))
        np.testing.assert_allclose(result.c, shrink(target, lam), atol=1e-6)

    def test_line_search_inequality_holds(self):
        target = np.array([3.0, -2.0])
        params = IpianoParams(lam=0.0, l_init=1e-3, max_iters=30)
        result = ipiano_minimize(_quadratic(target), lambda x, alpha: x, np.zeros(2), params)
        self.assertGreater(sum(step.backtracks for step in result.trace), 0)
        for step in result.trace:
            self.assertLessEqual(step.ls_lhs, step.ls_rhs)
            self.assertAlmostEqual(step.alpha, params.step_size(step.l_n))


class TestReducedGradients(unittest.TestCase):
    """约化目标的解析梯度与中心差分"""

    def test_linear_gradient(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            size = 12 + trial % 5
            g = synthetic_image(size, seed=trial)
            c = rng.uniform(0.2, 1.0, g.shape)
            for kind in (ModelKind.HARMONIC, ModelKind.BIHARMONIC):
                _, grad = reduced_objective_linear(c, g, kind)
                coords = rng.choice(g.size, size=20, replace=False)
                numeric = _central_differences(
                    lambda x: reduced_objective_linear(x, g, kind)[0], c, coords, 1e-6)
                np.testing.assert_allclose(grad.ravel()[coords], numeric, rtol=1e-4, atol=1e-8)

    def test_tv_implicit_gradient(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            size = 12 + trial % 5
            g = synthetic_image(size, seed=trial)
            c = rng.uniform(0.1, 0.7, g.shape)
            _, grad, u = reduced_objective_tv(c, g, eps=0.05, tol=1e-12, return_solution=True)
            coords = rng.choice(g.size, size=20, replace=False)
            numeric = _central_differences(
                lambda x: reduced_objective_tv(x, g, eps=0.05, tol=1e-12, u0=u)[0], c, coords, 1e-5)
            np.testing.assert_allclose(grad.ravel()[coords], numeric, rtol=1e-4, atol=1e-8)

    def test_tv_gradient_vanishes_at_full_mask(self):
        g = synthetic_image(10, seed=4)
        F, grad = reduced_objective_tv(np.full(g.shape, C_MAX), g, eps=0.05)
        self.assertLessEqual(F, 1e-8)
        self.assertLessEqual(float(np.max(np.abs(grad))), 1e-3)

    def test_zero_mask_limit(self):
        g = synthetic_image(6)
        F, grad = reduced_objective_linear(np.zeros(g.shape), g, ModelKind.HARMONIC)
        self.assertAlmostEqual(F, 0.5 * float(np.sum((g - g.mean()) ** 2)))
        np.testing.assert_array_equal(grad, 0.0)


class TestIpianoRun(unittest.TestCase):
    """约化问题上的 iPiano"""

    def test_energy_drops_and_contract_holds(self):
        g = synthetic_image(10)
        lam = 0.005
        params = IpianoParams.defaults_for(ModelKind.HARMONIC, lam, max_iters=60)
        result = ipiano_run(g, params, ModelKind.HARMONIC, show_progress=False)
        self.assertAlmostEqual(result.trace[0].energy, lam * g.size)
        self.assertLess(result.energy, result.trace[0].energy)
        for step in result.trace:
            self.assertLessEqual(step.ls_lhs, step.ls_rhs)

    def test_lambda_zero_keeps_full_mask(self):
        g = synthetic_image(6)
        result = ipiano_run(g, IpianoParams(lam=0.0, max_iters=5), ModelKind.BIHARMONIC,
                            show_progress=False)
        np.testing.assert_array_equal(result.c, np.ones(g.shape))
        self.assertAlmostEqual(result.F, 0.0)

    def test_huge_lambda_empties_mask(self):
        g = synthetic_image(16)
        result = ipiano_run(g, IpianoParams(lam=1e3, max_iters=20), ModelKind.HARMONIC,
                            show_progress=False)
        self.assertLess(binarize(result.c).density, 0.005)

    def test_tv_mask_stays_in_box(self):
        g = synthetic_image(6)
        params = IpianoParams(lam=0.01, eps=0.05, max_iters=5)
        result = ipiano_run(g, params, ModelKind.TV, show_progress=False)
        self.assertGreaterEqual(result.c.min(), 0.0)
        self.assertLessEqual(result.c.max(), C_MAX)

    def test_biharmonic_energy_not_worse_than_sppd(self):
        g = synthetic_image(16)
        lam = 0.003
        ipiano = ipiano_run(g, IpianoParams.defaults_for(ModelKind.BIHARMONIC, lam),
                            ModelKind.BIHARMONIC, show_progress=False)
        sppd = sppd_run(g, SppdParams.defaults_for(ModelKind.BIHARMONIC, lam, outer_iters=150,
                                                   inner_iters=2000),
                        ModelKind.BIHARMONIC, show_progress=False)
        self.assertLessEqual(ipiano.energy, sppd.energy_trace[-1])


class TestIpianoParams(unittest.TestCase):

    def test_defaults_and_validation(self):
        self.assertEqual(IpianoParams.defaults_for(ModelKind.BIHARMONIC, 0.1).max_iters, 3500)
        self.assertEqual(IpianoParams.defaults_for(ModelKind.HARMONIC, 0.1).max_iters, 700)
        self.assertAlmostEqual(IpianoParams(lam=0.0).step_size(1.0), 1.99 * 0.25)
        with self.assertRaises(ValidationError):
            IpianoParams(lam=0.0, beta=1.0)
        with self.assertRaises(ValidationError):
            IpianoParams(lam=0.0, eta=1.0)


if __name__ == '__main__':
    unittest.main()

#endregion
