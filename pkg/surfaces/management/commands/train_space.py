"""
Management command: train_space

Trains a shape space over a directory of labelled shapes that share one
layout topology. Each shape is a samples file ``<name>.xyz``; a
``<name>.json`` next to it supplies that shape's own corner positions,
otherwise the shared ``--layout`` is used. All shapes are normalized into
one common frame.

Usage:
    python manage.py train_space --layout cube.json --dataset shapes/ --out space.ckpt
    python manage.py train_space --layout cube.json --dataset shapes/ --codes poses.txt --config space.cfg
"""

from __future__ import annotations

import logging
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from django.core.management.base import CommandError

from surfaces.config import SpaceConfig, load_config
from surfaces.exceptions import FitAborted, SampleError
from surfaces.fit import train_space
from surfaces.layout import labeled_samples, load_layout, normalization_transform, read_samples
from surfaces.management.base import EXIT_INPUT, EXIT_NUMERICAL, SurfaceCommand

logger = logging.getLogger(__name__)


def _load_dataset(directory: Path, shared_layout):
    """Raw shapes of ``directory`` as (layout, points, normals, patch_ids), sorted by file name."""
    shapes = []
    for samples_path in sorted(directory.glob("*.xyz")):
        layout_path = samples_path.with_suffix(".json")
        layout = load_layout(layout_path) if layout_path.exists() else shared_layout
        shapes.append((layout, *read_samples(samples_path)))
    if not shapes:
        raise SampleError(f"no *.xyz samples in {directory}")
    return shapes


class Command(SurfaceCommand):
    help = "Train a shape space (decoder, codes and mapping network) over a set of labelled shapes."

    def add_arguments(self, parser):
        parser.add_argument("--layout", required=True, help="Shared patch layout JSON file.")
        parser.add_argument("--dataset", required=True, help="Directory of <name>.xyz samples files.")
        parser.add_argument(
            "--codes",
            help="Whitespace-separated table with one frozen latent code per shape, in file-name order.",
        )
        parser.add_argument("--config", help="Flat key = value config file.")
        parser.add_argument("--epochs", type=int, help="Override the number of epochs.")
        parser.add_argument("--out", required=True, help="Checkpoint path to write.")
        parser.add_argument("--log", help="JSON-lines log path, one record per optimizer step.")
        self.add_runtime_arguments(parser)

    def run(self, **options) -> None:
        config = load_config(
            SpaceConfig,
            options["config"],
            seed=options["seed"],
            threads=options["threads"],
            epochs=options["epochs"],
        )
        layout = load_layout(options["layout"])
        self.require_valid(layout)
        raw = _load_dataset(Path(options["dataset"]), layout)
        transform = normalization_transform(np.concatenate([points for _, points, _, _ in raw]))
        dataset = [
            labeled_samples(points, normals, ids, shape_layout, transform=transform)
            for shape_layout, points, normals, ids in raw
        ]

        codes = None
        if options["codes"]:
            try:
                codes = np.loadtxt(options["codes"], dtype=np.float64, ndmin=2)
            except (OSError, ValueError) as exc:
                raise CommandError(f"could not read codes {options['codes']}: {exc}", returncode=EXIT_INPUT) from exc

        self.stdout.write(f"Training a shape space over {len(dataset)} shapes...")
        log = open(options["log"], "w") if options["log"] else nullcontext()
        with log as stream:
            try:
                checkpoint = train_space(config, layout, dataset, codes=codes, log=stream)
            except FitAborted as exc:
                self.save(exc.checkpoint, options["out"])
                raise CommandError(str(exc), returncode=EXIT_NUMERICAL) from exc
        self.save(checkpoint, options["out"])
        self.stdout.write(self.style.SUCCESS("Training complete."))
