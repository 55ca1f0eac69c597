from __future__ import annotations

import numpy as np

from npsurf.tasks.synthetic_shapes import cube_layout
from surfaces.tests.helpers import CommandTestCase, random_space_checkpoint, save


def obj_vertices(path) -> np.ndarray:
    return np.loadtxt([line[2:] for line in path.read_text().splitlines() if line.startswith("v ")])


class InterpCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.checkpoint = save(random_space_checkpoint(cube_layout(projected=True)), self.dir)
        self.out_dir = self.dir / "interp"

    def test_one_mesh_per_step(self):
        stdout = self.call("interp", self.checkpoint, a=0, b=2, steps=3, density=2, out_dir=str(self.out_dir))
        self.assertEqual(sorted(p.name for p in self.out_dir.iterdir()), ["step_0.obj", "step_1.obj", "step_2.obj"])
        self.assertIn("Wrote 3 meshes", stdout)

    def test_endpoints_match_the_decoded_training_shapes(self):
        """The first and last steps are the meshes of code A and code B."""
        self.call("interp", self.checkpoint, a=0, b=2, steps=3, density=2, out_dir=str(self.out_dir))
        for code_id, step in ((0, "step_0.obj"), (2, "step_2.obj")):
            reference = self.dir / f"code_{code_id}.obj"
            self.call("mesh", self.checkpoint, code_id=code_id, density=2, out=str(reference))
            np.testing.assert_allclose(obj_vertices(self.out_dir / step), obj_vertices(reference), atol=1e-12)

    def test_intermediate_steps_differ(self):
        self.call("interp", self.checkpoint, a=0, b=2, steps=3, density=2, out_dir=str(self.out_dir))
        first, middle = obj_vertices(self.out_dir / "step_0.obj"), obj_vertices(self.out_dir / "step_1.obj")
        self.assertFalse(np.allclose(first, middle))

    def test_zero_steps_exit_with_two(self):
        self.assertExitCode(2, "interp", self.checkpoint, a=0, b=1, steps=0, out_dir=str(self.out_dir))
