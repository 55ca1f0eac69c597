"""
Management command: fit

Fits a neural parametric surface to one labelled target and writes the
checkpoint plus a JSON-lines log with one record per iteration. A target is
either a samples file (``x y z nx ny nz patch_id`` per line) or an OBJ mesh
with a sidecar of per-triangle patch ids.

Usage:
    python manage.py fit --layout cube.json --samples sphere.xyz --out sphere.ckpt
    python manage.py fit --layout cube.json --mesh target.obj --labels target.labels --out fit.ckpt
    python manage.py fit --layout cube.json --samples sphere.xyz --config fit.cfg --log fit.jsonl --threads 1
"""

from __future__ import annotations

import logging
from contextlib import nullcontext

from django.core.management.base import CommandError

from surfaces.config import FitConfig, load_config
from surfaces.exceptions import FitAborted
from surfaces.fit import fit_shape
from surfaces.layout import load_layout, load_mesh_samples, load_samples
from surfaces.management.base import EXIT_NUMERICAL, SurfaceCommand

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Fit a neural parametric surface to a labelled target and write a checkpoint."

    def add_arguments(self, parser):
        parser.add_argument("--layout", required=True, help="Patch layout JSON file.")
        target = parser.add_mutually_exclusive_group(required=True)
        target.add_argument("--samples", help="Labelled samples file.")
        target.add_argument("--mesh", help="Target OBJ mesh; requires --labels.")
        parser.add_argument("--labels", help="Per-triangle patch ids of --mesh, one per line.")
        parser.add_argument(
            "--mesh-samples",
            type=int,
            default=100_000,
            help="Samples drawn from --mesh by area. Default: 100000",
        )
        parser.add_argument("--config", help="Flat key = value config file.")
        parser.add_argument("--iterations", type=int, help="Override the number of iterations.")
        parser.add_argument("--out", required=True, help="Checkpoint path to write.")
        parser.add_argument("--log", help="JSON-lines log path, one record per iteration.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        config = load_config(
            FitConfig,
            options["config"],
            seed=options["seed"],
            threads=options["threads"],
            iterations=options["iterations"],
        )
        layout = load_layout(options["layout"])
        self.require_valid(layout)
        if options["mesh"]:
            if not options["labels"]:
                raise CommandError("--mesh needs --labels", returncode=2)
            samples = load_mesh_samples(
                options["mesh"], options["labels"], layout, count=options["mesh_samples"], seed=config.seed
            )
        else:
            samples = load_samples(options["samples"], layout)

        self.stdout.write(f"Fitting {len(layout.faces)} patches to {len(samples.points)} samples...")
        log = open(options["log"], "w") if options["log"] else nullcontext()
        with log as stream:
            try:
                checkpoint = fit_shape(config, layout, samples, log=stream)
            except FitAborted as exc:
                self.save(exc.checkpoint, options["out"])
                self.stderr.write(self.style.WARNING("  Wrote the last good state before aborting."))
                raise CommandError(str(exc), returncode=EXIT_NUMERICAL) from exc

        self.save(checkpoint, options["out"])
        total = checkpoint.report["total"] if checkpoint.report else float("nan")
        self.stdout.write(self.style.SUCCESS(f"Fit complete: final loss {total:.6g}."))
