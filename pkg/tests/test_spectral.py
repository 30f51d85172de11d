from choquardlab.geometry import Shape, build_domain, build_grid
from choquardlab.operators import MixedForm
from choquardlab.spectral import first_eigen, first_eigen_fractional, first_eigen_local, first_eigen_mixed
from choquardlab.utility_functions import ConvergenceError
import inspect
import unittest
import numpy as np


class TestLocalEigen(unittest.TestCase):

    def setUp(self):
        self.mask = build_domain(Shape.box(0.75), build_grid(1, 1.0, 256))

    def test_matches_discrete_sine(self):
        result = first_eigen_local(self.mask)
        h = self.mask.grid.h
        # zero values sit at the first outside nodes, so the discrete interval spans count + 1 cells
        span = (self.mask.count + 1) * h
        exact = 4.0 / h ** 2 * np.sin(np.pi * h / (2.0 * span)) ** 2
        self.assertLess(abs(result.eigenvalue / exact - 1.0), 1e-9)
        self.assertLess(abs(result.eigenvalue / (np.pi ** 2 / 2.25) - 1.0), 2e-2)
        self.assertTrue(result.converged)
        self.assertEqual(result.label, 'local')

    def test_eigenfield_positive_and_normalised(self):
        result = first_eigen_local(self.mask)
        form = MixedForm(self.mask, fractional=False)
        self.assertTrue(np.all(result.eigenfield[self.mask.inside] > 0.0))
        self.assertAlmostEqual(form.l2_sq(result.eigenfield), 1.0, places=12)
        self.assertTrue(np.all(result.eigenfield[~self.mask.inside] == 0.0))


class TestMixedEigen(unittest.TestCase):

    def setUp(self):
        self.mask = build_domain(Shape.ball(0.6), build_grid(2, 1.0, 16))

    def test_superadditivity(self):
        local = first_eigen_local(self.mask).eigenvalue
        fractional = first_eigen_fractional(self.mask, 0.5).eigenvalue
        mixed = first_eigen_mixed(self.mask, 0.5).eigenvalue
        self.assertGreaterEqual(mixed, local + fractional)
        self.assertGreater(fractional, 0.0)

    def test_rayleigh_quotient(self):
        result = first_eigen_mixed(self.mask, 0.5)
        form = MixedForm(self.mask, s=0.5)
        quotient = form.form_sq(result.eigenfield) / form.l2_sq(result.eigenfield)
        self.assertAlmostEqual(quotient / result.eigenvalue, 1.0, places=10)
        self.assertLessEqual(result.residual, 1e-8 * result.eigenvalue)
        self.assertTrue(np.all(result.eigenfield[self.mask.inside] > 0.0))

    def test_exhausted_budget_reports_best(self):
        form = MixedForm(self.mask, s=0.5)
        with self.assertRaises(ConvergenceError) as context:
            first_eigen(form, tol=1e-30, max_iter=3, label='mixed')
        self.assertIsNotNone(context.exception.best)
        self.assertGreater(context.exception.best.eigenvalue, 0.0)

    def test_default_budget(self):
        for solver in (first_eigen, first_eigen_local, first_eigen_fractional, first_eigen_mixed):
            self.assertEqual(inspect.signature(solver).parameters['max_iter'].default, 10000)


class TestEigenGeometry(unittest.TestCase):

    def test_domain_inclusion(self):
        grid = build_grid(2, 1.0, 32)
        small = first_eigen_mixed(build_domain(Shape.ball(0.6), grid), 0.5).eigenvalue
        large = first_eigen_mixed(build_domain(Shape.ball(0.8), grid), 0.5).eigenvalue
        self.assertGreater(small, large)

    def test_fractional_scale_invariance(self):
        grid = build_grid(2, 1.0, 64)
        s = 0.5
        scaled = [first_eigen_fractional(build_domain(Shape.ball(r), grid), s).eigenvalue * r ** (2.0 * s)
                  for r in (0.5, 0.8)]
        self.assertAlmostEqual(scaled[0] / scaled[1], 1.0, delta=0.05)


if __name__ == '__main__':
    unittest.main()
