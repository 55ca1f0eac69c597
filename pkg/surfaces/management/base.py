"""
Shared plumbing for the surfaces management commands.

Library errors become ``CommandError`` with the exit code contract: 1 for a
failed layout validation, 2 for I/O, parse and configuration problems, 3 for
numerical failures.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from surfaces.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from surfaces.diffnet import configure_runtime
from surfaces.exceptions import NumericalError, SurfaceError
from surfaces.layout import PatchLayout, validate_layout
from surfaces.mesher import TriangleMesh, export_obj

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def command_error(exc: Exception) -> CommandError:
    if isinstance(exc, NumericalError):
        return CommandError(str(exc), returncode=EXIT_NUMERICAL)
    return CommandError(str(exc), returncode=EXIT_INPUT)


class SurfaceCommand(BaseCommand):
    """
    Base for commands that drive the surfaces library.

    Subclasses implement ``run``; ``handle`` translates library and I/O errors
    into exit codes.
    """

    requires_system_checks: list[str] = []

    def add_runtime_arguments(self, parser) -> None:
        parser.add_argument("--seed", type=int, help="Random seed. Falls back to the config file, then NPS_SEED.")
        parser.add_argument(
            "--threads",
            type=int,
            help="Cap on torch worker threads; 1 also switches on deterministic algorithms.",
        )

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except CommandError:
            raise
        except (SurfaceError, OSError) as exc:
            raise command_error(exc) from exc

    def run(self, **options) -> None:
        raise NotImplementedError

    # -- helpers ------------------------------------------------------------

    def apply_runtime(self, options: dict) -> None:
        threads = options.get("threads") or settings.NPS_THREADS
        configure_runtime(threads, threads == 1)

    def seed(self, options: dict) -> int:
        """The --seed flag when given (0 included), else NPS_SEED."""
        return options["seed"] if options.get("seed") is not None else settings.NPS_SEED

    def require_valid(self, layout: PatchLayout) -> None:
        report = validate_layout(layout)
        if not report.ok:
            raise CommandError("\n".join(str(v) for v in report.violations), returncode=EXIT_VALIDATION)

    def load(self, path: str) -> Checkpoint:
        checkpoint = load_checkpoint(path)
        logger.info("loaded %s checkpoint %s", checkpoint.kind, path)
        return checkpoint

    def save(self, checkpoint: Checkpoint, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint, path)
        self.stdout.write(self.style.SUCCESS(f"Wrote checkpoint {path}."))

    def write_mesh(self, mesh: TriangleMesh, checkpoint: Checkpoint, path: Path, groups: bool = False) -> None:
        """Export ``mesh`` in the original target frame."""
        center, scale = checkpoint.frame()
        path.parent.mkdir(parents=True, exist_ok=True)
        export_obj(mesh.in_frame(center, scale), path, groups=groups)
        if mesh.degenerate:
            self.stdout.write(self.style.WARNING(f"  {mesh.degenerate} degenerate triangles in {path}"))

    def write_json(self, payload: dict, path: str | None) -> None:
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path:
            Path(path).write_text(text + "\n")
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}."))
        else:
            self.stdout.write(text)
