from choquardlab.choquard import ChoquardState, bubble_energy_estimate, bubble_gagliardo_sq, sobolev_bubble_norms
from choquardlab.geometry import Shape, boundary_patches, build_domain, build_grid
from choquardlab.operators import MixedForm
from choquardlab.utility_functions import GridResolutionError, ParameterError
from choquardlab.verify import (OracleSuite, boundary_traces, bubble_excess_exponent, bubble_limit_experiment,
                                fit_slope, hls_ratio_of_bubble, infimum_trend, lemma45_asymptotics,
                                lemma45_dimension_condition, manufactured_local_check, nonexistence_criterion,
                                pohozaev_terms, radial_bubble_terms, refinement_orders, scaling_experiment,
                                smooth_bump)
from fractions import Fraction
import unittest
import numpy as np


class TestNonexistenceCriterion(unittest.TestCase):

    def test_examples(self):
        self.assertTrue(nonexistence_criterion(3, 1, -1))
        self.assertTrue(nonexistence_criterion(3, 5, 7))
        verdict = nonexistence_criterion(3, 2, 1)
        self.assertFalse(verdict)
        self.assertEqual(verdict.coefficient, Fraction(1, 2))

    def test_critical_power_with_negative_lambda(self):
        verdict = nonexistence_criterion(3, 5, -1)
        self.assertTrue(verdict.holds)
        self.assertFalse(verdict.corollary)
        self.assertEqual(verdict.coefficient, 0)

    def test_forms_agree_elsewhere(self):
        for p in (1, 1.5, 2, 3, 4.5, 5, 6):
            for lam in (-2, -0.5, 0, 0.5, 2):
                if p == 5 and lam < 0:
                    continue
                verdict = nonexistence_criterion(3, p, lam)
                self.assertEqual(verdict.holds, verdict.corollary, msg=f"p={p} lam={lam}")

    def test_guards(self):
        with self.assertRaises(ParameterError):
            nonexistence_criterion(2, 1, 0)
        with self.assertRaises(ParameterError):
            nonexistence_criterion(3, 0.5, 0)


class TestFits(unittest.TestCase):

    def test_refinement_orders(self):
        orders = refinement_orders([1.0, 0.25, 0.0625], [1.0, 0.5, 0.25], reference=0.0)
        np.testing.assert_allclose(orders, [2.0, 2.0])

    def test_exact_power(self):
        samples = np.geomspace(1e-3, 1.0, 6)
        fit = fit_slope(samples, 2.0 * samples ** 1.5, 1.5)
        self.assertAlmostEqual(fit.slope, 1.5, places=10)
        self.assertAlmostEqual(fit.r_squared, 1.0, places=10)
        self.assertTrue(fit.conclusive)
        self.assertLess(fit.deviation, 1e-10)

    def test_short_range_is_inconclusive(self):
        samples = np.geomspace(1.0, 5.0, 6)
        self.assertFalse(fit_slope(samples, samples ** 2, 2.0).conclusive)

    def test_one_decade_is_enough(self):
        samples = np.geomspace(1e-6, 1e-5, 4)
        fit = fit_slope(samples, samples ** 0.2, 0.2)
        self.assertTrue(fit.conclusive)
        self.assertLess(fit.deviation, 1e-8)

    def test_dimension_condition(self):
        self.assertEqual(lemma45_dimension_condition(3, 0.5, 1, 2), (False, Fraction(3)))
        self.assertTrue(lemma45_dimension_condition(4, 0.5, 1, 2)[0])
        with self.assertRaises(ParameterError):
            lemma45_dimension_condition(3, 0.5, 1, 1)


class TestPohozaev(unittest.TestCase):

    def test_zero_field(self):
        mask = build_domain(Shape.ball(0.5), build_grid(3, 1.0, 16))
        terms = pohozaev_terms(np.zeros(mask.grid.shape), mask, boundary_patches(mask, 256), 1.0, 2.0, s=0.5,
                               mu=1.0)
        self.assertEqual(terms.residual, 0.0)
        self.assertEqual(terms.relative_residual, 0.0)

    def test_sampling_leaves_small_domain(self):
        mask = build_domain(Shape.ball(0.2), build_grid(2, 1.0, 16))
        with self.assertRaises(GridResolutionError):
            boundary_traces(mask.apply(np.ones(mask.grid.shape)), mask, boundary_patches(mask, 64))

    def test_linear_profile_derivative(self):
        # u = a - x_1 near the face x_1 = a has outward derivative -1
        mask = build_domain(Shape.box(0.5), build_grid(2, 1.0, 32))
        u = mask.apply(0.5 - mask.grid.points[..., 0])
        patches = boundary_patches(mask)
        dnu, _ = boundary_traces(u, mask, patches)
        on_face = (patches.normals[:, 0] == 1.0) & (np.abs(patches.points[:, 1]) < 0.3)
        np.testing.assert_allclose(dnu[on_face], -1.0, atol=1e-12)

    def test_rellich_identity_converges(self):
        table, orders = manufactured_local_check(Shape.box(0.75), n=2, m_list=(32, 64))
        residuals = table['relative_residual'].to_numpy()
        self.assertLess(residuals[1], residuals[0])
        self.assertLess(residuals[1], 0.15)
        self.assertEqual(len(orders), 1)


class TestScaling(unittest.TestCase):

    def setUp(self):
        self.mask = build_domain(Shape.ball(0.8), build_grid(3, 1.0, 24))

    def test_table(self):
        table, summary = scaling_experiment(self.mask, 0.5, 1.0, ks=(1, 2))
        self.assertEqual(list(table['k']), [1.0, 2.0])
        self.assertEqual(table['local_deviation'].iloc[0], 0.0)
        self.assertEqual(table['fractional_scaling'].iloc[0], 1.0)
        self.assertIn('total_decreasing', summary)

    def test_ratios_follow_critical_rescaling(self):
        mask = build_domain(Shape.ball(0.8), build_grid(3, 1.0, 48))
        table, summary = scaling_experiment(mask, 0.5, 1.0, ks=(1, 2))
        self.assertLess(summary['local_max_deviation'], 0.1)
        self.assertAlmostEqual(table['fractional_target'].iloc[1], 0.5, places=14)
        self.assertAlmostEqual(table['fractional_scaling'].iloc[1] / 0.5, 1.0, delta=0.15)
        self.assertTrue(summary['total_decreasing'])

    def test_fractional_scaling_on_refined_lattice(self):
        coarse = build_domain(Shape.ball(0.8), build_grid(3, 1.0, 16))
        fine = build_domain(Shape.ball(0.4), build_grid(3, 0.5, 16))
        bump = smooth_bump(0.6)
        u = coarse.apply(bump(coarse.grid.radius(coarse.center)))
        u_k = fine.apply(2.0 ** 0.5 * bump(2.0 * fine.grid.radius(fine.center)))
        ratio = MixedForm(fine, 0.5).gagliardo_sq(u_k) / MixedForm(coarse, 0.5).gagliardo_sq(u)
        self.assertAlmostEqual(ratio / 0.5, 1.0, delta=0.02)

    def test_support_must_stay_inside(self):
        with self.assertRaises(ParameterError):
            scaling_experiment(self.mask, 0.5, 1.0, ks=(0.5, 1.0), radius=0.79)


class TestBubbleLimit(unittest.TestCase):

    def test_fixed_grid_decomposition(self):
        table, summary = bubble_limit_experiment(3, 0.7, ts=(1.0, 0.5), L=4.0, m=16, boxes=(2.0, 4.0, 8.0),
                                                 energy_m=16)
        self.assertFalse(summary['follow_scale'])
        np.testing.assert_allclose(table['h'], 0.5)
        np.testing.assert_allclose(table['local_refined'], (4.0 * table['local_fine'] - table['local']) / 3.0)
        np.testing.assert_allclose(table['g_sq'], table['local_refined'] + table['fractional'])
        np.testing.assert_allclose(table['excess'], table['g_sq'] - table['truncated_reference'])
        estimate = bubble_energy_estimate(3, boxes=(2.0, 4.0, 8.0), m=16)
        self.assertAlmostEqual(summary['u_norm_sq'], estimate.value, delta=1e-12 * abs(estimate.value))
        self.assertAlmostEqual(summary['slope']['target'], 0.6, places=12)

    def test_scale_following_grid(self):
        table, summary = bubble_limit_experiment(3, 0.5, ts=(1.0, 0.5, 0.25, 0.125), L=4.0, m=16,
                                                 follow_scale=True, boxes=(2.0, 4.0, 8.0), energy_m=16)
        local = table['local'].to_numpy()
        np.testing.assert_allclose(local, local[0], rtol=1e-10)
        np.testing.assert_allclose(table['fractional'] / table['t'], table['fractional'].iloc[0], rtol=1e-9)
        np.testing.assert_allclose(table['truncated_reference'], table['truncated_reference'].iloc[0], rtol=1e-12)

    def test_excess_exponent(self):
        self.assertEqual(bubble_excess_exponent(3, 0.5), 1.0)
        self.assertAlmostEqual(bubble_excess_exponent(3, 0.7), 0.6, places=12)
        self.assertEqual(bubble_excess_exponent(3, 0.3), 1.0)
        self.assertAlmostEqual(bubble_excess_exponent(4, 0.3), 1.4, places=12)


class TestInfimumTrend(unittest.TestCase):

    def test_refinement_ladder(self):
        table, summary = infimum_trend(Shape.ball(0.5), 3, 0.5, 1.0, 1.0, (12, 16), s_hat=1.0, max_iter=100)
        self.assertEqual(table['m'].tolist(), [12, 16])
        np.testing.assert_allclose(table['gap'], table['S'] - 1.0)
        np.testing.assert_allclose(table['S'], table['local'] + table['seminorm'], rtol=1e-10)
        np.testing.assert_allclose(table['width_over_h'], table['width'] / table['h'])
        self.assertTrue(np.all(table['seminorm'] > 0.0))
        self.assertTrue(np.all(table['width'] > 0.0))
        self.assertEqual(summary['s_hat'], 1.0)
        self.assertIsInstance(summary['gap_shrinking'], bool)
        self.assertIsInstance(summary['width_shrinking'], bool)

    def test_needs_increasing_ladder(self):
        with self.assertRaises(ParameterError):
            infimum_trend(Shape.ball(0.5), 3, 0.5, 1.0, 1.0, (16, 12), s_hat=1.0)


class TestLemma45(unittest.TestCase):

    def setUp(self):
        self.mask = build_domain(Shape.ball(0.8), build_grid(3, 1.0, 16))

    def test_needs_four_scales(self):
        with self.assertRaises(ParameterError):
            lemma45_asymptotics(self.mask, 0.5, 1.0, 2.0, [0.5, 0.6, 0.7])

    def test_scales_must_be_resolved(self):
        with self.assertRaises(ParameterError):
            lemma45_asymptotics(self.mask, 0.5, 1.0, 2.0, [0.5, 0.6, 0.7, 0.8])

    def test_unknown_method(self):
        with self.assertRaises(ParameterError):
            lemma45_asymptotics(self.mask, 0.5, 1.0, 2.0, np.geomspace(1e-6, 1e-5, 4), method='spectral')

    def test_radial_terms_against_whole_space(self):
        eps, inner, outer = 1e-4, 0.25, 0.5
        terms = radial_bubble_terms(0.9, 2.0, eps, inner, outer)
        self.assertAlmostEqual(terms['seminorm_sq'] / (eps ** 0.2 * bubble_gagliardo_sq(0.9)), 1.0, delta=0.01)
        self.assertAlmostEqual(terms['grad_sq'] / sobolev_bubble_norms(3), 1.0, delta=5e-3)
        # η = 1 on B_inner and η <= 1 up to the outer radius
        bounds = [4.0 * np.pi * 3.0 ** 0.75 * eps ** 1.5 * (np.arcsinh(r / eps) - r / np.hypot(r, eps))
                  for r in (inner, outer)]
        self.assertLess(bounds[0], terms['lp'])
        self.assertLess(terms['lp'], bounds[1])

    def test_radial_terms_guards(self):
        with self.assertRaises(ParameterError):
            radial_bubble_terms(1.0, 2.0, 1e-4, 0.25, 0.5)
        with self.assertRaises(ParameterError):
            radial_bubble_terms(0.5, 2.0, 0.3, 0.25, 0.5)

    def test_radial_orders(self):
        eps = np.geomspace(1e-6, 1e-5, 4)
        for s in (0.5, 0.9):
            table, summary = lemma45_asymptotics(self.mask, s, 1.0, 2.0, eps, method='radial')
            self.assertEqual(len(table), 4)
            self.assertAlmostEqual(summary['nu'], min(1.0, 2.0 - 2.0 * s), places=14)
            for name in ('gradient', 'seminorm', 'lebesgue'):
                fit = summary[name]
                self.assertTrue(fit['conclusive'], name)
                self.assertLess(fit['deviation'], 0.15, name)
            self.assertAlmostEqual(summary['limit'] / sobolev_bubble_norms(3), 1.0, delta=1e-6)


class TestHLSInequality(unittest.TestCase):

    def test_random_fields_stay_below_the_bubble(self):
        mask = build_domain(Shape.ball(0.6), build_grid(3, 1.0, 12))
        state = ChoquardState(mask, 1.0)
        bubble = hls_ratio_of_bubble(3, 1.0, L=4.0, m=32)
        rng = np.random.default_rng(11)
        for _ in range(5):
            u = mask.apply(rng.uniform(0.0, 1.0, mask.grid.shape))
            self.assertLess(state.hls_ratio(u), bubble)


class TestOracleSuite(unittest.TestCase):

    def test_passes(self):
        suite = OracleSuite(seed=7)
        table = suite.run()
        self.assertTrue(suite.passed, msg=suite.failed_checks())
        self.assertEqual(set(table['n']), {1, 2, 3})
        self.assertIn('gradient_fd', set(table['check']))

    def test_detects_asymmetric_kernel(self):
        def tamper(table):
            values = np.array(table.values)
            values[(1,) + (0,) * (table.grid.n - 1)] += 1.0
            return table.with_values(values)

        suite = OracleSuite(seed=7, tamper=tamper)
        suite.run()
        self.assertFalse(suite.passed)
        self.assertTrue(all(check.startswith('kernel_symmetry') for check in suite.failed_checks()))


if __name__ == '__main__':
    unittest.main()
