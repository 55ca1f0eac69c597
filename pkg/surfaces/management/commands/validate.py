"""
Management command: validate

Checks a patch layout for holes, degenerate faces, repeated or zero-length
edges, over-shared arcs and unused corners. Exits 0 when the layout is clean
and 1 with one line per violation otherwise.

Usage:
    python manage.py validate layouts/cube.json
"""

from __future__ import annotations

import logging

from django.core.management.base import CommandError

from surfaces.layout import load_layout, validate_layout
from surfaces.management.base import EXIT_VALIDATION, SurfaceCommand

logger = logging.getLogger(__name__)


class Command(SurfaceCommand):
    help = "Validate a patch layout file."

    def add_arguments(self, parser):
        parser.add_argument("layout", help="Path to the layout JSON file.")

    def run(self, **options) -> None:
        layout = load_layout(options["layout"])
        report = validate_layout(layout)
        if not report.ok:
            for violation in report.violations:
                self.stderr.write(str(violation))
            raise CommandError(f"{len(report.violations)} layout violations", returncode=EXIT_VALIDATION)
        self.stdout.write(
            self.style.SUCCESS(f"Layout OK: {len(layout.corner_ids)} corners, {len(layout.faces)} faces.")
        )
