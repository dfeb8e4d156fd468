"""Tests for procedural lumen geometry and its distance field."""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from datagen.geometry import BranchSpec, LumenGeometry, LumenSDF, generate_geometry
from errors import ConfigInvalid


class TestGenerateGeometry(unittest.TestCase):
    def test_straight_is_constant_radius_cylinder_along_z(self):
        geom = generate_geometry(0, "straight")
        self.assertEqual(geom.branch_spec, [])
        points, radii, _ = geom.parent().dense()
        np.testing.assert_allclose(points[:, :2], 0.0, atol=1e-9)
        self.assertTrue(np.all(np.diff(points[:, 2]) > 0))
        np.testing.assert_allclose(radii, radii[0], atol=1e-9)

    def test_curved_is_deterministic(self):
        first = generate_geometry(7, "curved").to_dict()
        second = generate_geometry(7, "curved").to_dict()
        self.assertEqual(first, second)

    def test_different_seeds_differ(self):
        a = generate_geometry(7, "curved").to_dict()
        b = generate_geometry(8, "curved").to_dict()
        self.assertNotEqual(a["centerline"], b["centerline"])

    def test_branching_has_one_tube_per_listed_branch(self):
        geom = generate_geometry(7, "branching")
        self.assertGreaterEqual(len(geom.branch_spec), 1)
        tubes = geom.tubes()
        self.assertEqual(len(tubes), 1 + len(geom.branch_spec))
        parent = geom.parent()
        for branch, child in zip(geom.branch_spec, tubes[1:]):
            root, tangent, _ = parent.frame_at(branch.arclength_mm)
            child_points = child.dense()[0]
            np.testing.assert_allclose(child_points[0], root, atol=1e-9)
            direction = child_points[-1] - child_points[0]
            direction /= np.linalg.norm(direction)
            angle = np.degrees(np.arccos(np.clip(direction @ tangent, -1.0, 1.0)))
            self.assertAlmostEqual(angle, branch.angle_deg, places=6)

    def test_branch_interior_counts_as_lumen(self):
        geom = generate_geometry(7, "branching")
        sdf = LumenSDF(geom)
        for child in geom.tubes()[1:]:
            points = child.dense()[0]
            mid = points[len(points) // 2]
            self.assertGreater(sdf.interior_distance(mid)[0], 0.0)

    def test_round_trip_through_dict(self):
        geom = generate_geometry(11, "branching")
        again = LumenGeometry.from_dict(geom.to_dict())
        self.assertEqual(again.to_dict(), geom.to_dict())

    def test_unknown_complexity_rejected(self):
        with self.assertRaises(ConfigInvalid):
            generate_geometry(0, "spiral")


class TestValidate(unittest.TestCase):
    def _straight(self, **overrides):
        base = generate_geometry(0, "straight")
        fields = dict(centerline=base.centerline, radius_profile=base.radius_profile, branch_spec=[])
        fields.update(overrides)
        return LumenGeometry(**fields)

    def test_branch_angle_outside_window(self):
        geom = self._straight(branch_spec=[BranchSpec(arclength_mm=50.0, angle_deg=85.0, radius_scale=0.6)])
        with self.assertRaises(ConfigInvalid):
            geom.validate()

    def test_branch_point_off_centerline(self):
        geom = self._straight(branch_spec=[BranchSpec(arclength_mm=500.0, angle_deg=30.0, radius_scale=0.6)])
        with self.assertRaises(ConfigInvalid):
            geom.validate()

    def test_nonpositive_radius(self):
        base = generate_geometry(0, "straight")
        geom = self._straight(radius_profile=np.full_like(base.radius_profile, -1.0))
        with self.assertRaises(ConfigInvalid):
            geom.validate()

    def test_radius_profile_length_mismatch(self):
        geom = self._straight(radius_profile=np.array([6.0, 6.0]))
        with self.assertRaises(ConfigInvalid):
            geom.validate()


class TestLumenSDF(unittest.TestCase):
    def test_straight_cylinder_distances(self):
        sdf = LumenSDF(generate_geometry(0, "straight"))
        query = np.array([[0.0, 0.0, 90.0], [2.0, 0.0, 90.0], [0.0, 6.0, 90.0], [9.0, 0.0, 90.0]])
        np.testing.assert_allclose(sdf.interior_distance(query), [6.0, 4.0, 0.0, -3.0], atol=1e-9)

    def test_gradient_points_inward_at_wall(self):
        sdf = LumenSDF(generate_geometry(0, "straight"))
        grad = sdf.gradient(np.array([[6.0, 0.0, 90.0]]), 1e-3)
        np.testing.assert_allclose(grad[0], [-1.0, 0.0, 0.0], atol=1e-6)


if __name__ == "__main__":
    unittest.main()
