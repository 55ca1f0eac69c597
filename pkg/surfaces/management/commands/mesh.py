"""
Management command: mesh

Tessellates every patch of a fitted surface and writes one welded OBJ mesh
in the original target frame. ``--html`` also writes an interactive preview.

Usage:
    python manage.py mesh sphere.ckpt --out sphere.obj
    python manage.py mesh sphere.ckpt --density 32 --groups --out sphere.obj --html sphere.html
"""

from __future__ import annotations

import logging
from pathlib import Path

from surfaces.checkpoint import SPACE
from surfaces.fit import decode_checkpoint, training_code
from surfaces.management.base import SurfaceCommand
from surfaces.mesher import DEFAULT_DENSITY, export_html, mesh_surface

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Tessellate a fitted surface into a welded OBJ mesh."

    def add_arguments(self, parser):
        parser.add_argument("checkpoint", help="Checkpoint to mesh.")
        parser.add_argument(
            "--density",
            type=int,
            default=DEFAULT_DENSITY,
            help=f"Segments per boundary edge. Default: {DEFAULT_DENSITY}",
        )
        parser.add_argument("--interior", type=int, help="Interior samples per patch. Default: density squared.")
        parser.add_argument(
            "--code-id",
            type=int,
            default=0,
            help="Training code to decode when the checkpoint holds a shape space. Default: 0",
        )
        parser.add_argument("--groups", action="store_true", help="Write one 'g patch_<id>' group per patch.")
        parser.add_argument("--out", required=True, help="OBJ path to write.")
        parser.add_argument("--html", help="Also write an interactive HTML preview here.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        self.apply_runtime(options)
        checkpoint = self.load(options["checkpoint"])
        if checkpoint.kind == SPACE:
            checkpoint = decode_checkpoint(checkpoint, training_code(checkpoint, options["code_id"]))
        mesh = mesh_surface(checkpoint, options["density"], options["interior"], seed=self.seed(options))
        out = Path(options["out"])
        self.write_mesh(mesh, checkpoint, out, groups=options["groups"])
        if options["html"]:
            center, scale = checkpoint.frame()
            export_html(mesh.in_frame(center, scale), options["html"], title=out.stem)
        self.stdout.write(
            self.style.SUCCESS(f"Wrote {len(mesh.vertices)} vertices and {len(mesh.triangles)} triangles to {out}.")
        )
