from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from npsurf.tasks.synthetic_shapes import cube_layout, flat_layout
from surfaces.complex import build_domains
from surfaces.layout import layout_from_dict
from surfaces.mesher import export_html, export_obj, map_tessellation, mesh_surface, tessellate_face
from surfaces.tests.helpers import random_shape_checkpoint

TRIANGLE = {
    "corners": [
        {"id": 0, "position": [0.0, 0.0, 0.0]},
        {"id": 1, "position": [1.0, 0.0, 0.0]},
        {"id": 2, "position": [0.0, 1.0, 0.0]},
    ],
    "faces": [{"id": 0, "corners": [0, 1, 2]}],
}


def euler(tess) -> int:
    t = tess.triangles
    edges = np.unique(np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1), axis=0)
    return len(tess.uv) - len(edges) + len(t)


class TessellateFaceTests(SimpleTestCase):
    def test_square_at_density_one(self):
        tess = tessellate_face(build_domains(cube_layout())[0], 1)
        self.assertEqual(len(tess.uv), 4)
        self.assertEqual(len(tess.triangles), 2)

    def test_triangle_at_density_two(self):
        tess = tessellate_face(build_domains(layout_from_dict(TRIANGLE))[0], 2)
        self.assertEqual(len(tess.uv), 6)
        self.assertEqual(len(tess.triangles), 4)

    def test_boundary_keys(self):
        domain = build_domains(cube_layout())[0]
        tess = tessellate_face(domain, 4)
        keys = [key for key in tess.keys if key is not None]
        self.assertEqual(len(keys), 16)
        self.assertEqual(sum(key[0] == "corner" for key in keys), 4)
        self.assertEqual(tess.boundary_count, 16)
        self.assertTrue(all(key[1] < key[2] and 1 <= key[3] <= 3 for key in keys if key[0] == "arc"))

    def test_interior_points_keep_a_disk(self):
        """With interior samples the tessellation is still a topological disk."""
        domain = build_domains(flat_layout())[1]
        tess = tessellate_face(domain, 6, 36, np.random.default_rng(0))
        self.assertGreater(len(tess.uv), tess.boundary_count)
        self.assertEqual(euler(tess), 1)

    def test_density_must_be_positive(self):
        with self.assertRaises(ValueError):
            tessellate_face(build_domains(cube_layout())[0], 0)


class MeshSurfaceTests(SimpleTestCase):
    def setUp(self):
        self.layout = cube_layout(projected=True)
        self.checkpoint = random_shape_checkpoint(self.layout)

    def test_closed_layout_gives_a_closed_sphere(self):
        """Boundary samples weld across patches: the mesh of a closed layout has Euler characteristic 2."""
        mesh = mesh_surface(self.checkpoint, density=3, interior=0)
        self.assertEqual(len(mesh.vertices), 8 + 12 * 2)
        self.assertEqual(len(mesh.triangles), 6 * (4 * 3 - 2))
        self.assertEqual(mesh.euler_characteristic, 2)

    def test_every_edge_has_two_triangles(self):
        mesh = mesh_surface(self.checkpoint, density=4)
        t = mesh.triangles
        pairs = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(pairs, axis=0, return_counts=True)
        self.assertTrue(np.all(counts == 2))
        self.assertEqual(mesh.euler_characteristic, 2)

    def test_triangles_are_consistently_oriented(self):
        """Each directed edge appears once, so neighbouring patches agree on orientation."""
        mesh = mesh_surface(self.checkpoint, density=3, interior=4)
        t = mesh.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        self.assertEqual(len(np.unique(directed, axis=0)), len(directed))

    def test_negative_sign_flips_winding(self):
        flipped = random_shape_checkpoint(self.layout, normal_signs={2: -1.0})
        a = mesh_surface(self.checkpoint, density=2, interior=0)
        b = mesh_surface(flipped, density=2, interior=0)
        np.testing.assert_array_equal(b.triangles[b.triangle_patch == 2], a.triangles[a.triangle_patch == 2][:, ::-1])
        np.testing.assert_array_equal(b.triangles[b.triangle_patch == 0], a.triangles[a.triangle_patch == 0])

    def test_shared_boundary_positions_agree(self):
        complex = self.checkpoint.complex()
        mlp = self.checkpoint.mapping()
        first = map_tessellation(tessellate_face(complex.domains[0], 5), complex, mlp)
        second = map_tessellation(tessellate_face(complex.domains[2], 5), complex, mlp)
        positions = {key: p for key, p in zip(first.keys, first.positions) if key is not None}
        shared = [(key, p) for key, p in zip(second.keys, second.positions) if key in positions]
        self.assertEqual(len(shared), 4 + 2)
        for key, p in shared:
            np.testing.assert_allclose(p, positions[key], rtol=0.0, atol=1e-12)

    def test_open_layout(self):
        mesh = mesh_surface(random_shape_checkpoint(flat_layout()), density=2, interior=0)
        self.assertEqual(len(mesh.vertices), 6 + 7 * 1)
        self.assertEqual(mesh.euler_characteristic, 1)

    def test_in_frame(self):
        mesh = mesh_surface(self.checkpoint, density=1, interior=0)
        moved = mesh.in_frame(np.array([1.0, 0.0, 0.0]), 2.0)
        np.testing.assert_allclose(moved.vertices, mesh.vertices / 2.0 + [1.0, 0.0, 0.0])


class ExportTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = Path(self._tmp.name)
        self.mesh = mesh_surface(random_shape_checkpoint(cube_layout()), density=2, interior=0)

    def test_obj_indices_are_one_based(self):
        path = self.dir / "m.obj"
        export_obj(self.mesh, path)
        lines = path.read_text().splitlines()
        vertices = [line for line in lines if line.startswith("v ")]
        faces = [line for line in lines if line.startswith("f ")]
        self.assertEqual(len(vertices), len(self.mesh.vertices))
        self.assertEqual(len(faces), len(self.mesh.triangles))
        indices = np.array([[int(v) for v in line.split()[1:]] for line in faces])
        self.assertEqual(indices.min(), 1)
        self.assertEqual(indices.max(), len(self.mesh.vertices))
        np.testing.assert_array_equal(
            np.array([[float(v) for v in line.split()[1:]] for line in vertices]), self.mesh.vertices
        )

    def test_obj_groups(self):
        path = self.dir / "m.obj"
        export_obj(self.mesh, path, groups=True)
        groups = [line for line in path.read_text().splitlines() if line.startswith("g ")]
        self.assertEqual(groups, [f"g patch_{i}" for i in range(6)])

    def test_html_preview(self):
        path = self.dir / "m.html"
        export_html(self.mesh, path, title="cube")
        self.assertIn("plotly", path.read_text().lower())
