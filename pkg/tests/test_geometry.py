from choquardlab.geometry import (DomainMask, Shape, boundary_patches, build_domain, build_grid,
                                  is_strictly_star_shaped)
from choquardlab.utility_functions import ParameterError
import unittest
import numpy as np
from scipy import integrate


class TestGrid(unittest.TestCase):

    def test_spacing(self):
        self.assertEqual(build_grid(1, 1.0, 8).h, 0.25)

    def test_odd_m_rejected(self):
        with self.assertRaises(ParameterError):
            build_grid(2, 1.0, 9)

    def test_dimension_guard(self):
        with self.assertRaises(ParameterError):
            build_grid(4, 1.0, 8)

    def test_axis_is_exactly_symmetric(self):
        axis = build_grid(3, 1.3, 24).axis
        self.assertTrue(np.array_equal(axis, -axis[::-1]))

    def test_points_shape(self):
        grid = build_grid(2, 1.0, 8)
        self.assertEqual(grid.points.shape, (8, 8, 2))


class TestDomain(unittest.TestCase):

    def setUp(self):
        self.grid = build_grid(2, 1.0, 16)

    def test_ball_distance(self):
        mask = build_domain(Shape.ball(0.5), self.grid)
        radius = self.grid.radius()
        self.assertGreater(mask.count, 0)
        np.testing.assert_allclose(mask.delta[mask.inside], 0.5 - radius[mask.inside], rtol=0, atol=1e-15)
        self.assertTrue(np.all(mask.delta[~mask.inside] == 0.0))

    def test_clearance_is_enforced(self):
        with self.assertRaises(ParameterError):
            build_domain(Shape.ball(0.95), self.grid)

    def test_box_signed_distance(self):
        shape = Shape.box(0.5)
        self.assertAlmostEqual(float(shape.signed_distance(np.array([0.1, 0.0]))), -0.4, places=15)
        self.assertAlmostEqual(float(shape.signed_distance(np.array([0.8, 0.0]))), 0.3, places=15)

    def test_ellipse_interior_distance(self):
        shape = Shape.ellipsoid((1.0, 0.5))
        distances = shape.signed_distance(np.array([[0.0, 0.0], [0.0, 0.2]]))
        np.testing.assert_allclose(distances, [-0.5, -0.3], atol=1e-12)

    def test_off_centre_shape(self):
        mask = build_domain(Shape.ball(0.3, center=(0.25, -0.25)), self.grid)
        np.testing.assert_allclose(mask.center, [0.25, -0.25])
        self.assertEqual(mask.inradius, 0.3)

    def test_restrict_embed(self):
        mask = build_domain(Shape.box(0.5), self.grid)
        values = np.arange(mask.count, dtype=float)
        self.assertTrue(np.array_equal(mask.restrict(mask.embed(values)), values))

    def test_whole_box(self):
        mask = DomainMask.whole_box(self.grid)
        self.assertTrue(mask.free)
        self.assertEqual(mask.count, 16 ** 2)
        with self.assertRaises(ParameterError):
            boundary_patches(mask)


class TestBoundaryPatches(unittest.TestCase):

    def test_sphere_area(self):
        mask = build_domain(Shape.ball(1.0), build_grid(3, 2.0, 16))
        patches = boundary_patches(mask, 2048)
        self.assertAlmostEqual(patches.total_area, 4.0 * np.pi, delta=1e-3)
        np.testing.assert_allclose(patches.normal_dot_position(), 1.0, atol=1e-12)

    def test_box_perimeter(self):
        mask = build_domain(Shape.box((0.5, 0.25)), build_grid(2, 1.0, 16))
        self.assertAlmostEqual(boundary_patches(mask).total_area, 3.0, places=12)

    def test_ellipse_perimeter(self):
        mask = build_domain(Shape.ellipsoid((1.0, 0.5)), build_grid(2, 2.0, 16))
        reference = integrate.quad(lambda t: np.hypot(np.sin(t), 0.5 * np.cos(t)), 0.0, 2.0 * np.pi,
                                   epsabs=1e-13, epsrel=1e-13)[0]
        self.assertAlmostEqual(boundary_patches(mask, 2048).total_area, reference, delta=1e-6)

    def test_ellipse_rule_refines(self):
        mask = build_domain(Shape.ellipsoid((1.0, 0.5)), build_grid(2, 2.0, 16))
        coarse = boundary_patches(mask, 8)
        fine = boundary_patches(mask, 16)
        reference = boundary_patches(mask, 4096).total_area
        self.assertLess(abs(fine.total_area - reference), abs(coarse.total_area - reference))

    def test_star_shaped(self):
        grid = build_grid(2, 1.0, 16)
        centred, _ = is_strictly_star_shaped(boundary_patches(build_domain(Shape.ball(0.5), grid)))
        shifted, minimum = is_strictly_star_shaped(
            boundary_patches(build_domain(Shape.ball(0.3, center=(0.5, 0.0)), grid)))
        self.assertTrue(centred)
        self.assertFalse(shifted)
        self.assertLess(minimum, 0.0)


if __name__ == '__main__':
    unittest.main()
