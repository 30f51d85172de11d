from choquardlab.geometry import build_grid
from choquardlab.kernels import (ball_tail_coefficient, frac_constant, frac_constant_closed_form, gagliardo_table,
                                 near_field_weight, riesz_table, sphere_area)
from choquardlab.utility_functions import ParameterError
import unittest
import numpy as np
from scipy import special


class TestFracConstant(unittest.TestCase):

    def test_known_values(self):
        self.assertAlmostEqual(frac_constant(1, 0.5).value, 1.0 / np.pi, places=10)
        self.assertAlmostEqual(frac_constant(3, 0.5).value, 1.0 / np.pi ** 2, places=10)

    def test_quadrature_matches_gamma_expression(self):
        for n in (1, 2, 3):
            for s in (0.1, 0.25, 0.5, 0.75, 0.9):
                constant = frac_constant(n, s)
                self.assertLess(abs(constant.value / frac_constant_closed_form(n, s) - 1.0), 1e-7,
                                msg=f"n={n} s={s}")
                self.assertLessEqual(constant.relerr, 1e-8)

    def test_order_out_of_range(self):
        for s in (0.0, 1.0, 1.2, -0.3):
            with self.assertRaises(ParameterError):
                frac_constant(3, s)

    def test_dimension_out_of_range(self):
        with self.assertRaises(ParameterError):
            frac_constant(4, 0.5)


class TestCoefficients(unittest.TestCase):

    def test_sphere_area(self):
        self.assertAlmostEqual(sphere_area(3), 4.0 * np.pi, places=12)
        self.assertAlmostEqual(sphere_area(2), 2.0 * np.pi, places=12)

    def test_ball_tail(self):
        self.assertAlmostEqual(ball_tail_coefficient(3, 0.5, 2.0), 2.0 * np.pi, places=12)

    def test_one_dimensional_near_field(self):
        for s in (0.25, 0.5, 0.75):
            expected = -(special.zetac(2.0 * s - 1.0) + 1.0)
            self.assertAlmostEqual(near_field_weight(1, s), expected, delta=1e-4, msg=f"s={s}")


class TestKernelTables(unittest.TestCase):

    def setUp(self):
        self.grid = build_grid(1, 1.0, 8)

    def test_riesz_cell_average(self):
        table = riesz_table(self.grid, 0.5)
        self.assertAlmostEqual(table.center_value, 2.0 * 0.125 ** -0.5, places=12)
        self.assertAlmostEqual(table.offset_value(2), 0.5 ** -0.5, places=12)

    def test_riesz_exponent_guard(self):
        with self.assertRaises(ParameterError):
            riesz_table(self.grid, 1.0)

    def test_tables_are_even(self):
        grid = build_grid(2, 1.0, 8)
        for table in (riesz_table(grid, 1.0), gagliardo_table(grid, 0.4)):
            self.assertTrue(np.array_equal(table.values, table.reflected()))

    def test_gagliardo_diagonal_and_range(self):
        table = gagliardo_table(self.grid, 0.5)
        self.assertEqual(table.offset_value(0), 0.0)
        # offsets beyond m - 1 never pair two box nodes
        self.assertEqual(table.offset_value(8), 0.0)
        self.assertGreater(table.tail, 0.0)
        self.assertAlmostEqual(table.offset_value(3), (3 * 0.25) ** -2.0, places=12)

    def test_convolution_of_spike(self):
        table = riesz_table(self.grid, 0.5)
        spike = np.zeros(8)
        spike[3] = 1.0
        potential = table.convolve(spike)
        x = self.grid.axis
        away = np.arange(8) != 3
        np.testing.assert_allclose(potential[away], np.abs(x[away] - x[3]) ** -0.5, rtol=1e-12)
        self.assertAlmostEqual(potential[3], table.center_value, places=11)

    def test_tables_are_read_only(self):
        table = gagliardo_table(self.grid, 0.5)
        with self.assertRaises(ValueError):
            table.values[1] = 0.0


if __name__ == '__main__':
    unittest.main()
