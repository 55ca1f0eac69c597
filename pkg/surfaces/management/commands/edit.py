"""
Management command: edit

Deforms a shape of a trained shape space by dragging patch groups: each
constraint moves the center of gravity of the listed patches toward a target
point (original target frame). Only the latent code is optimized. The
constraints file is a JSON array of ``{"face_ids": [...], "target": [x, y, z]}``.

Usage:
    python manage.py edit space.ckpt --constraints handles.json --code-id 3 --out edited.ckpt
"""

from __future__ import annotations

import logging
from contextlib import nullcontext
from dataclasses import replace

from surfaces.fit import LATENT_LR, decode_checkpoint, load_constraints, optimize_code_handles, training_code
from surfaces.management.base import SurfaceCommand

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Edit a shape by moving patch handles, optimizing only its latent code."

    def add_arguments(self, parser):
        parser.add_argument("checkpoint", help="Shape-space checkpoint.")
        parser.add_argument("--constraints", required=True, help="JSON array of handle constraints.")
        parser.add_argument("--code-id", type=int, default=0, help="Training code to start from. Default: 0")
        parser.add_argument("--iterations", type=int, default=200, help="Optimizer steps. Default: 200")
        parser.add_argument("--lr", type=float, default=LATENT_LR, help=f"Learning rate. Default: {LATENT_LR}")
        parser.add_argument("--out", required=True, help="Single-shape checkpoint path to write.")
        parser.add_argument("--log", help="JSON-lines log path.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        self.apply_runtime(options)
        checkpoint = self.load(options["checkpoint"])
        constraints = [
            replace(c, target=checkpoint.to_checkpoint_frame(c.target))
            for c in load_constraints(options["constraints"], checkpoint.patch_layout())
        ]
        start = training_code(checkpoint, options["code_id"])
        log = open(options["log"], "w") if options["log"] else nullcontext()
        with log as stream:
            code, report = optimize_code_handles(
                checkpoint,
                constraints,
                start,
                iterations=options["iterations"],
                lr=options["lr"],
                seed=self.seed(options),
                log=stream,
            )
        edited = decode_checkpoint(checkpoint, code)
        edited.report = report.as_record() if report else None
        self.save(edited, options["out"])
        self.stdout.write(self.style.SUCCESS(f"Edited code norm {float(code.norm()):.6g}."))
