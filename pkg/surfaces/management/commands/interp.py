"""
Management command: interp

Decodes a linear path between two training codes of a shape-space checkpoint
and writes one mesh per step as ``step_<k>.obj``; step 0 is code A and the
last step is code B.

Usage:
    python manage.py interp space.ckpt --a 0 --b 7 --steps 10 --out-dir interp/
"""

from __future__ import annotations

import logging
from pathlib import Path

from surfaces.fit import interpolate_codes
from surfaces.management.base import SurfaceCommand
from surfaces.mesher import DEFAULT_DENSITY, mesh_surface

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Mesh the shapes along a straight line between two latent codes."

    def add_arguments(self, parser):
        parser.add_argument("checkpoint", help="Shape-space checkpoint.")
        parser.add_argument("--a", type=int, required=True, help="Index of the first training code.")
        parser.add_argument("--b", type=int, required=True, help="Index of the second training code.")
        parser.add_argument("--steps", type=int, default=10, help="Number of meshes, endpoints included. Default: 10")
        parser.add_argument(
            "--density",
            type=int,
            default=DEFAULT_DENSITY,
            help=f"Segments per boundary edge. Default: {DEFAULT_DENSITY}",
        )
        parser.add_argument("--out-dir", required=True, help="Directory for the step_<k>.obj files.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        self.apply_runtime(options)
        checkpoint = self.load(options["checkpoint"])
        complexes = interpolate_codes(checkpoint, options["a"], options["b"], options["steps"])
        mlp = checkpoint.mapping()
        out_dir = Path(options["out_dir"])
        for k, complex in enumerate(complexes):
            mesh = mesh_surface(checkpoint, options["density"], seed=self.seed(options), complex=complex, mlp=mlp)
            self.write_mesh(mesh, checkpoint, out_dir / f"step_{k}.obj")
            self.stdout.write(f"[{k + 1}/{len(complexes)}] step_{k}.obj")
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(complexes)} meshes to {out_dir}."))
