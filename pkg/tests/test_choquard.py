from choquardlab.choquard import (ChoquardState, as_fraction, bubble_energy_estimate, bubble_field,
                                  bubble_gagliardo_sq, bubble_profile, compute_exponents, hls_constant_estimate,
                                  quintic_cutoff, sobolev_bubble_norms, sobolev_constant)
from choquardlab.geometry import DomainMask, Shape, build_domain, build_grid
from choquardlab.utility_functions import ParameterError
from fractions import Fraction
import unittest
import numpy as np


class TestExponents(unittest.TestCase):

    def test_values(self):
        self.assertEqual(compute_exponents(3, 1), (Fraction(6), Fraction(5)))
        self.assertEqual(compute_exponents(4, 2), (Fraction(4), Fraction(3)))
        self.assertEqual(compute_exponents(3, 0.5), (Fraction(6), Fraction(11, 2)))

    def test_guards(self):
        with self.assertRaises(ParameterError):
            compute_exponents(2, 1)
        with self.assertRaises(ParameterError):
            compute_exponents(3, 3)
        with self.assertRaises(ParameterError):
            compute_exponents(3, 0)

    def test_decimal_fraction(self):
        self.assertEqual(as_fraction(0.1), Fraction(1, 10))

    def test_sobolev_constant(self):
        self.assertAlmostEqual(sobolev_constant(3), 3.0 * (np.pi / 2.0) ** (4.0 / 3.0), places=10)


class TestRieszPotential(unittest.TestCase):

    def test_spike(self):
        grid = build_grid(1, 1.0, 8)
        state = ChoquardState(DomainMask.whole_box(grid), 0.5)
        spike = np.zeros(8)
        spike[3] = 1.0
        potential = state.riesz_potential(spike)
        x = grid.axis
        away = np.arange(8) != 3
        np.testing.assert_allclose(potential[away], 0.25 * np.abs(x[away] - x[3]) ** -0.5, rtol=1e-12)

    def test_order_preserving(self):
        mask = build_domain(Shape.box(0.5), build_grid(3, 1.0, 8))
        state = ChoquardState(mask, 1.0)
        rng = np.random.default_rng(0)
        lower = mask.apply(rng.uniform(0.0, 1.0, mask.grid.shape))
        upper = lower + mask.apply(rng.uniform(0.0, 1.0, mask.grid.shape))
        difference = state.riesz_potential(upper) - state.riesz_potential(lower)
        self.assertGreaterEqual(difference.min(), -1e-12)

    def test_hl_norm_one_homogeneous(self):
        mask = build_domain(Shape.box(0.5), build_grid(3, 1.0, 8))
        state = ChoquardState(mask, 1.0)
        u = mask.apply(np.random.default_rng(1).uniform(-1.0, 1.0, mask.grid.shape))
        self.assertAlmostEqual(state.hl_norm(3.7 * u) / state.hl_norm(u), 3.7, places=10)
        self.assertEqual(state.hl_norm(np.zeros(mask.grid.shape)), 0.0)

    def test_hl_term_reflection_symmetric(self):
        mask = build_domain(Shape.box(0.5), build_grid(3, 1.0, 8))
        state = ChoquardState(mask, 1.0)
        u = mask.apply(np.random.default_rng(2).uniform(-1.0, 1.0, mask.grid.shape))
        flipped = u[::-1, ::-1, ::-1]
        self.assertAlmostEqual(state.hl_term(flipped)[0] / state.hl_term(u)[0], 1.0, places=12)

    def test_hl_needs_three_dimensions(self):
        state = ChoquardState(DomainMask.whole_box(build_grid(2, 1.0, 8)), 1.0)
        with self.assertRaises(ParameterError):
            state.hl_norm(np.ones((8, 8)))


class TestBubbles(unittest.TestCase):

    def test_profile_peak(self):
        self.assertAlmostEqual(bubble_profile(3, 0.0), 3.0 ** 0.25, places=14)

    def test_cutoff(self):
        np.testing.assert_array_equal(quintic_cutoff(np.array([0.0, 0.4, 0.8, 1.0]), 0.4, 0.8), [1.0, 1.0, 0.0, 0.0])
        self.assertAlmostEqual(float(quintic_cutoff(0.6, 0.4, 0.8)), 0.5, places=14)

    def test_truncated_bubble_plateau(self):
        mask = build_domain(Shape.ball(0.8), build_grid(3, 1.0, 16))
        eps = 0.1
        field = bubble_field(mask, 'v_eps', eps=eps)
        radius = mask.grid.radius(mask.center)
        plateau = radius <= 0.4
        expected = eps ** -0.5 * bubble_profile(3, radius[plateau] / eps)
        np.testing.assert_allclose(field[plateau], expected, rtol=1e-14)
        self.assertTrue(np.all(field[~mask.inside] == 0.0))
        self.assertTrue(np.all(field >= 0.0))

    def test_bubble_scaling(self):
        grid = build_grid(3, 2.0, 16)
        mask = DomainMask.whole_box(grid)
        wide = bubble_field(mask, 'V', t=2.0)
        unit = bubble_field(mask, 'U', t=1.0)
        centre = grid.radius() == grid.radius().min()
        np.testing.assert_allclose(wide[centre], 2.0 ** -0.5 * bubble_profile(3, grid.radius()[centre] / 2.0))
        self.assertTrue(np.array_equal(unit, bubble_field(mask, 'V')))

    def test_whole_space_seminorm(self):
        self.assertAlmostEqual(bubble_gagliardo_sq(1.0) / sobolev_bubble_norms(3), 1.0, places=12)
        self.assertGreater(bubble_gagliardo_sq(0.6), bubble_gagliardo_sq(0.9))
        for s in (0.3, 0.5):
            with self.assertRaises(ParameterError):
                bubble_gagliardo_sq(s)

    def test_bad_variant(self):
        mask = DomainMask.whole_box(build_grid(3, 1.0, 8))
        with self.assertRaises(ParameterError):
            bubble_field(mask, 'W')
        with self.assertRaises(ParameterError):
            bubble_field(mask, 'v_eps')


class TestHLSConstant(unittest.TestCase):

    def test_small_extrapolation(self):
        estimate = hls_constant_estimate(3, 1.0, boxes=(2.0, 4.0, 8.0), m=16)
        self.assertEqual(len(estimate.table), 3)
        self.assertTrue(np.isfinite(estimate.value))
        self.assertGreaterEqual(estimate.error, 0.0)
        self.assertIsInstance(estimate.monotone, bool)
        self.assertEqual(len(estimate.warnings), 0 if estimate.monotone else 1)

    def test_bubble_energy_extrapolation(self):
        estimate = bubble_energy_estimate(3, boxes=(4.0, 8.0, 16.0), m=96)
        expected = sobolev_bubble_norms(3)
        largest_box = estimate.table['energy'].iloc[-1]
        self.assertLess(abs(estimate.value / expected - 1.0), 0.04)
        self.assertLess(abs(estimate.value - expected), abs(largest_box - expected))
        self.assertLess(estimate.truncation, 0.0)

    def test_bubble_energy_needs_three_dimensions(self):
        with self.assertRaises(ParameterError):
            bubble_energy_estimate(2, m=16)


if __name__ == '__main__':
    unittest.main()
