"""
Management command: fit_cloud

Fits an unlabelled, possibly noisy or partial, oriented point cloud with a
trained shape space by optimizing a latent code. The result is written as a
single-shape checkpoint so ``mesh`` and ``eval`` apply to it directly.

Usage:
    python manage.py fit_cloud space.ckpt --cloud scan.xyz --out scan.ckpt
    python manage.py fit_cloud space.ckpt --cloud scan.xyz --iterations 500 --out scan.ckpt --log cloud.jsonl
"""

from __future__ import annotations

import logging
from contextlib import nullcontext

from surfaces.fit import CLOUD_COSINE, LATENT_LR, decode_checkpoint, fit_cloud
from surfaces.layout import read_samples
from surfaces.management.base import SurfaceCommand

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Fit an unlabelled oriented point cloud by optimizing a latent code."

    def add_arguments(self, parser):
        parser.add_argument("checkpoint", help="Shape-space checkpoint.")
        parser.add_argument("--cloud", required=True, help="Point cloud file: x y z nx ny nz per line.")
        parser.add_argument("--iterations", type=int, default=300, help="Optimizer steps. Default: 300")
        parser.add_argument("--lr", type=float, default=LATENT_LR, help=f"Learning rate. Default: {LATENT_LR}")
        parser.add_argument(
            "--cosine",
            type=float,
            default=CLOUD_COSINE,
            help=f"Pairs whose normals have cosine at or below this are dropped. Default: {CLOUD_COSINE}",
        )
        parser.add_argument("--out", required=True, help="Single-shape checkpoint path to write.")
        parser.add_argument("--log", help="JSON-lines log path.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        self.apply_runtime(options)
        checkpoint = self.load(options["checkpoint"])
        points, normals, _ = read_samples(options["cloud"], labelled=False)
        self.stdout.write(f"Fitting {len(points)} cloud points...")
        log = open(options["log"], "w") if options["log"] else nullcontext()
        with log as stream:
            code, report = fit_cloud(
                checkpoint,
                checkpoint.to_checkpoint_frame(points),
                normals,
                iterations=options["iterations"],
                lr=options["lr"],
                cosine_threshold=options["cosine"],
                seed=self.seed(options),
                log=stream,
            )
        fitted = decode_checkpoint(checkpoint, code)
        fitted.report = report.as_record() if report else None
        self.save(fitted, options["out"])
