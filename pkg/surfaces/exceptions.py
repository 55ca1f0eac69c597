"""
Exceptions raised by the surfaces library.

Management commands map these onto exit codes: validation failures exit 1,
I/O, parse and configuration problems exit 2, numerical failures exit 3.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from surfaces.checkpoint import Checkpoint


class SurfaceError(Exception):
    """Base class for every error raised by the surfaces app."""


class LayoutError(SurfaceError):
    """A layout file could not be parsed or references unknown corners."""


class SampleError(SurfaceError):
    """A samples file is malformed or inconsistent with its layout."""


class ConfigError(SurfaceError):
    """A run configuration has unknown keys or invalid values."""


class DomainError(SurfaceError):
    """A parameter point lies outside its polygon domain."""


class CheckpointError(SurfaceError):
    """A checkpoint file is malformed or has the wrong kind."""


class NumericalError(SurfaceError):
    """A loss, gradient or geometric quantity became non-finite or degenerate."""

    def __init__(self, message: str, *, term: str | None = None) -> None:
        super().__init__(message)
        self.term = term


class DegenerateSurfaceError(NumericalError):
    """The parameterization has rank < 2 at an evaluation point."""


class FitAborted(NumericalError):
    """A fit hit a non-finite loss. ``checkpoint`` holds the last good state."""

    def __init__(self, message: str, *, checkpoint: Checkpoint, term: str | None = None) -> None:
        super().__init__(message, term=term)
        self.checkpoint = checkpoint
