from __future__ import annotations

import numpy as np
from django.test import SimpleTestCase

from npsurf.tasks.synthetic_shapes import cube_layout, flat_layout, sphere_samples
from surfaces.layout import labeled_samples
from surfaces.metrics import continuity_report, evaluate, point_metrics, surface_samples
from surfaces.tests.helpers import random_shape_checkpoint, unit_sphere


class PointMetricsTests(SimpleTestCase):
    def test_identical_sets(self):
        points, normals = unit_sphere(500)
        p2s, hd, nae = point_metrics(points, normals, points, normals)
        self.assertEqual((p2s, hd), (0.0, 0.0))
        self.assertAlmostEqual(nae, 0.0, places=5)

    def test_concentric_spheres(self):
        """Radii 1 and 1.01 sampled along the same directions are 0.01 apart everywhere."""
        points, normals = unit_sphere(2000)
        p2s, hd, nae = point_metrics(points, normals, 1.01 * points, normals)
        self.assertAlmostEqual(p2s, 0.01, places=9)
        self.assertAlmostEqual(hd, 0.01, places=9)
        self.assertAlmostEqual(nae, 0.0, places=5)

    def test_flipped_normals_are_not_penalized(self):
        points, normals = unit_sphere(300)
        _, _, nae = point_metrics(points, normals, points, -normals)
        self.assertAlmostEqual(nae, 0.0, places=5)

    def test_perpendicular_normals(self):
        points = np.array([[0.0, 0.0, 0.0]])
        _, _, nae = point_metrics(points, np.array([[0.0, 0.0, 1.0]]), points, np.array([[1.0, 0.0, 0.0]]))
        self.assertAlmostEqual(nae, 90.0)

    def test_p2s_never_exceeds_hd(self):
        rng = np.random.default_rng(4)
        a, na = unit_sphere(400, seed=1)
        b = a + rng.normal(scale=0.05, size=a.shape)
        p2s, hd, _ = point_metrics(a, na, b, na)
        self.assertLessEqual(p2s, hd)
        self.assertGreater(p2s, 0.0)


class SurfaceMetricsTests(SimpleTestCase):
    def setUp(self):
        self.checkpoint = random_shape_checkpoint(cube_layout(projected=True))

    def test_surface_samples(self):
        points, normals = surface_samples(self.checkpoint, 700, seed=1)
        self.assertEqual(points.shape, (700, 3))
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
        self.assertTrue(np.all(np.isfinite(points)))

    def test_surface_samples_are_seeded(self):
        first, _ = surface_samples(self.checkpoint, 50, seed=3)
        second, _ = surface_samples(self.checkpoint, 50, seed=3)
        np.testing.assert_array_equal(first, second)

    def test_evaluate_report(self):
        shape = sphere_samples(800)
        target = labeled_samples(shape.points, shape.normals, shape.patch_ids, shape.layout)
        report = evaluate(self.checkpoint, target, n_samples=500)
        self.assertEqual(report.reconstruction_samples, 500)
        self.assertEqual(report.target_samples, 500)
        self.assertLessEqual(report.p2s, report.hd)
        self.assertTrue(0.0 <= report.nae_degrees <= 90.0)
        self.assertEqual(
            set(report.as_dict()),
            {
                "p2s",
                "hd",
                "nae_degrees",
                "reconstruction_samples",
                "target_samples",
                "max_position_gap",
                "smooth_normal_mean",
                "smooth_normal_max",
                "sharp_normal_mean",
                "sharp_normal_max",
            },
        )


class ContinuityTests(SimpleTestCase):
    def test_patches_meet_exactly(self):
        """Adjacent patches evaluate shared arcs to the same points."""
        report = continuity_report(random_shape_checkpoint(cube_layout(projected=True)), samples_per_arc=8)
        self.assertLess(report["max_position_gap"], 1e-12)

    def test_normal_deviation_is_split_by_arc_class(self):
        all_sharp = {arc: False for arc in cube_layout().arcs}
        report = continuity_report(random_shape_checkpoint(cube_layout(), smooth_arcs=all_sharp), samples_per_arc=4)
        self.assertEqual(report["smooth_normal_mean"], 0.0)
        self.assertGreaterEqual(report["sharp_normal_max"], report["sharp_normal_mean"])
        self.assertGreater(report["sharp_normal_max"], 0.0)

    def test_open_layout(self):
        report = continuity_report(random_shape_checkpoint(flat_layout()), samples_per_arc=4)
        self.assertLess(report["max_position_gap"], 1e-12)
        self.assertEqual(report["sharp_normal_max"], 0.0)
