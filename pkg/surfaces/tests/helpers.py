"""
Small fixtures shared by the surfaces tests.

Networks here are deliberately tiny so a full fit runs in well under a second.
"""

from __future__ import annotations

import io
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from surfaces.checkpoint import Checkpoint, save_checkpoint
from surfaces.complex import build_complex
from surfaces.config import FitConfig, SpaceConfig
from surfaces.diffnet import BroadcastDecoder, LatentCodebook, MappingMlp
from surfaces.layout import PatchLayout

TINY_FIT = dict(
    iterations=3,
    batch_points=60,
    warmup_iters=1,
    fair_decay_start=2,
    fair_decay_span=1,
    feature_dim=4,
    layers=2,
    hidden=16,
    samples_per_edge=4,
    fair_samples=4,
)

TINY_SPACE = dict(
    epochs=2,
    batch_shapes=2,
    points_per_shape=30,
    warmup_iters=1,
    latent_dim=3,
    decoder_hidden=8,
    feature_dim=4,
    layers=2,
    hidden=8,
    samples_per_edge=2,
    fair_samples=3,
)


def tiny_fit_config(**overrides) -> FitConfig:
    return FitConfig(**{**TINY_FIT, **overrides})


def tiny_space_config(**overrides) -> SpaceConfig:
    return SpaceConfig(**{**TINY_SPACE, **overrides})


def write_config(path: Path, values: dict) -> Path:
    path.write_text("".join(f"{key} = {value}\n" for key, value in values.items()))
    return path


def random_shape_checkpoint(layout: PatchLayout, seed: int = 0, **extra) -> Checkpoint:
    """Untrained single-shape checkpoint over ``layout``."""
    generator = torch.Generator().manual_seed(seed)
    complex = build_complex(layout, 4, generator)
    mlp = MappingMlp(4, 2, 16, generator)
    return Checkpoint.from_shape(mlp, complex, layout, config={}, seed=seed, **extra)


def random_space_checkpoint(layout: PatchLayout, codes: int = 3, seed: int = 0) -> Checkpoint:
    """Untrained shape-space checkpoint with ``codes`` latent codes of dimension 3."""
    generator = torch.Generator().manual_seed(seed)
    mlp = MappingMlp(4, 2, 16, generator)
    decoder = BroadcastDecoder(3, 4, 8, generator)
    book = LatentCodebook(codes, 3, generator)
    with torch.no_grad():
        book.codes.mul_(100.0)
    return Checkpoint.from_space(mlp, decoder, book.codes, layout, config={}, seed=seed)


def save(checkpoint: Checkpoint, directory: Path, name: str = "model.ckpt") -> str:
    path = directory / name
    save_checkpoint(checkpoint, path)
    return str(path)


def unit_sphere(count: int = 2000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(count, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    return points, points.copy()


class CommandTestCase(SimpleTestCase):
    """Runs management commands against a scratch directory, capturing stdout and stderr."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = Path(self._tmp.name)

    def call(self, name: str, *args, **options) -> str:
        out, err = io.StringIO(), io.StringIO()
        call_command(name, *[str(a) for a in args], stdout=out, stderr=err, **options)
        self.err = err.getvalue()
        return out.getvalue()

    def assertExitCode(self, code: int, name: str, *args, **options) -> CommandError:
        with self.assertRaises(CommandError) as ctx:
            self.call(name, *args, **options)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception

    def write_shape(self, shape) -> tuple[str, str]:
        layout_path, samples_path = shape.write(self.dir)
        return str(layout_path), str(samples_path)
