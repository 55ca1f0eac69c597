"""
Management command: generate_shapes

Writes synthetic labelled targets (layout JSON plus samples file) for
desk-scale fitting and shape-space runs. Noise and single-view culling turn a
shape into an imperfect scan for ``fit_cloud``.

Usage:
    python manage.py generate_shapes sphere --out-dir data/
    python manage.py generate_shapes ellipsoid --axes 1.2 0.8 0.6 --count 50000 --out-dir data/
    python manage.py generate_shapes ellipsoid-family --shapes 16 --out-dir data/ellipsoids/
    python manage.py generate_shapes sphere --noise 0.01 --single-view --out-dir data/scan/
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

from npsurf.tasks import synthetic_shapes
from surfaces.management.base import SurfaceCommand

logger = logging.getLogger(__name__)

SHAPES = ("sphere", "ellipsoid", "superellipsoid", "cube", "flat", "ellipsoid-family")


class Command(SurfaceCommand):
    help = "Generate synthetic labelled target shapes."

    def add_arguments(self, parser):
        parser.add_argument("shape", choices=SHAPES, help="Shape family to generate.")
        parser.add_argument("--count", type=int, default=20_000, help="Samples per shape. Default: 20000")
        parser.add_argument("--axes", type=float, nargs=3, default=(1.0, 0.8, 0.6), help="Ellipsoid semi-axes.")
        parser.add_argument("--exponent", type=float, default=4.0, help="Superellipsoid exponent. Default: 4")
        parser.add_argument("--shapes", type=int, default=16, help="Members of ellipsoid-family. Default: 16")
        parser.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma on points and normals.")
        parser.add_argument("--single-view", action="store_true", help="Keep only samples facing a +z viewpoint.")
        parser.add_argument("--out-dir", required=True, help="Directory for <name>.json and <name>.xyz.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        seed = self.seed(options)
        count = options["count"]
        match options["shape"]:
            case "sphere":
                shapes = [synthetic_shapes.sphere_samples(count, seed)]
            case "ellipsoid":
                shapes = [synthetic_shapes.ellipsoid_samples(count, tuple(options["axes"]), seed)]
            case "superellipsoid":
                shapes = [synthetic_shapes.superellipsoid_samples(count, options["exponent"], seed)]
            case "cube":
                shapes = [synthetic_shapes.cube_samples(count, seed)]
            case "flat":
                shapes = [synthetic_shapes.flat_samples(count, seed)]
            case _:
                shapes = synthetic_shapes.ellipsoid_family(options["shapes"], count, seed)

        out_dir = Path(options["out_dir"])
        for shape in shapes:
            points, normals, patch_ids = shape.points, shape.normals, shape.patch_ids
            if options["single_view"]:
                visible = synthetic_shapes.single_view(normals)
                points, normals, patch_ids = points[visible], normals[visible], patch_ids[visible]
            if options["noise"] > 0.0:
                points, normals = synthetic_shapes.add_noise(points, normals, options["noise"], seed)
            shape = replace(shape, points=points, normals=normals, patch_ids=patch_ids)
            _, samples_path = shape.write(out_dir)
            self.stdout.write(f"  {shape.name}: {len(points)} samples -> {samples_path}")
        self.stdout.write(self.style.SUCCESS(f"Generated {len(shapes)} shapes in {out_dir}."))
