from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from npsurf.tasks.synthetic_shapes import (
    add_noise,
    cube_layout,
    cube_samples,
    ellipsoid_family,
    ellipsoid_samples,
    flat_layout,
    flat_samples,
    single_view,
    sphere_samples,
    superellipsoid_samples,
)
from surfaces.layout import load_layout, read_samples, validate_layout


class LayoutTests(SimpleTestCase):
    def test_cube_layouts_are_valid(self):
        for layout in (cube_layout(), cube_layout(projected=True), cube_layout(projected=True, exponent=4.0)):
            self.assertTrue(validate_layout(layout).ok)
            self.assertEqual(len(layout.arcs), 12)
        self.assertTrue(validate_layout(flat_layout()).ok)

    def test_superellipsoid_corners_lie_on_the_surface(self):
        layout = cube_layout(projected=True, exponent=4.0)
        np.testing.assert_allclose(np.sum(np.abs(layout.corner_positions) ** 4.0, axis=1), 1.0)


class SampleTests(SimpleTestCase):
    def test_sphere(self):
        shape = sphere_samples(600, seed=2)
        np.testing.assert_allclose(np.linalg.norm(shape.points, axis=1), 1.0)
        np.testing.assert_allclose(shape.normals, shape.points)
        self.assertEqual(set(shape.patch_ids.tolist()), set(range(6)))

    def test_ellipsoid_equation(self):
        axes = (1.5, 1.0, 0.5)
        shape = ellipsoid_samples(400, axes, seed=1)
        self.assertEqual(shape.points.shape, (400, 3))
        np.testing.assert_allclose(np.sum((shape.points / axes) ** 2, axis=1), 1.0)
        np.testing.assert_allclose(np.linalg.norm(shape.normals, axis=1), 1.0)

    def test_superellipsoid_equation(self):
        shape = superellipsoid_samples(300, exponent=4.0)
        np.testing.assert_allclose(np.sum(np.abs(shape.points) ** 4.0, axis=1), 1.0)
        with self.assertRaises(ValueError):
            superellipsoid_samples(10, exponent=1.0)

    def test_cube_samples_sit_on_their_face(self):
        shape = cube_samples(500)
        self.assertTrue(np.allclose(np.max(np.abs(shape.points), axis=1), 1.0))
        # the face normal points out of the box at every sample
        np.testing.assert_allclose(np.sum(shape.points * shape.normals, axis=1), 1.0)

    def test_flat_labels(self):
        shape = flat_samples(200)
        np.testing.assert_array_equal(shape.patch_ids, (shape.points[:, 0] > 0).astype(int))
        self.assertTrue(np.all(shape.points[:, 2] == 0.0))

    def test_family(self):
        family = ellipsoid_family(3, 50, seed=1)
        self.assertEqual([s.name for s in family], ["ellipsoid_000", "ellipsoid_001", "ellipsoid_002"])
        for shape in family:
            self.assertEqual(len(shape.points), 50)
            self.assertEqual(shape.layout.faces, family[0].layout.faces)


class ImperfectScanTests(SimpleTestCase):
    def test_noise_keeps_unit_normals(self):
        shape = sphere_samples(200)
        points, normals = add_noise(shape.points, shape.normals, sigma=0.05, seed=3)
        self.assertFalse(np.allclose(points, shape.points))
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)

    def test_single_view_keeps_the_visible_side(self):
        shape = sphere_samples(500)
        mask = single_view(shape.normals)
        self.assertTrue(np.all(shape.normals[mask, 2] >= 0.0))
        self.assertTrue(np.all(shape.normals[~mask, 2] < 0.0))


class WriteTests(SimpleTestCase):
    def test_written_files_load_back(self):
        shape = sphere_samples(100)
        with tempfile.TemporaryDirectory() as tmp:
            layout_path, samples_path = shape.write(Path(tmp) / "out")
            self.assertEqual(layout_path.name, "sphere.json")
            layout = load_layout(layout_path)
            points, normals, patch_ids = read_samples(samples_path)
        self.assertEqual(layout.faces, shape.layout.faces)
        np.testing.assert_array_equal(points, shape.points)
        np.testing.assert_array_equal(normals, shape.normals)
        np.testing.assert_array_equal(patch_ids, shape.patch_ids)
