"""
Management command: eval

Scores a fitted surface against held-out target samples: P2S, HD, NAE and
the cross-patch continuity audit. The report is one JSON document written to
stdout or ``--out``.

Usage:
    python manage.py eval sphere.ckpt --samples sphere_test.xyz
    python manage.py eval sphere.ckpt --samples sphere_test.xyz --n-samples 30000 --out metrics.json
"""

from __future__ import annotations

import logging

from surfaces.layout import labeled_samples, read_samples
from surfaces.management.base import SurfaceCommand
from surfaces.metrics import DEFAULT_EVAL_SAMPLES, evaluate

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Evaluate a fitted surface against target samples."

    def add_arguments(self, parser):
        parser.add_argument("checkpoint", help="Single-shape checkpoint to evaluate.")
        parser.add_argument("--samples", required=True, help="Labelled target samples in the original frame.")
        parser.add_argument(
            "--n-samples",
            type=int,
            default=DEFAULT_EVAL_SAMPLES,
            help=f"Surface and target samples per side. Default: {DEFAULT_EVAL_SAMPLES}",
        )
        parser.add_argument("--out", help="Write the JSON report here instead of stdout.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        self.apply_runtime(options)
        checkpoint = self.load(options["checkpoint"])
        points, normals, patch_ids = read_samples(options["samples"])
        target = labeled_samples(
            points, normals, patch_ids, checkpoint.original_layout(), transform=checkpoint.frame()
        )
        report = evaluate(checkpoint, target, n_samples=options["n_samples"], seed=self.seed(options))
        self.write_json(report.as_dict(), options["out"])
