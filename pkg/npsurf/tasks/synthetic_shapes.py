"""
Synthetic labelled shapes for fitting runs and tests.

Every generator returns raw (unnormalized) samples: positions, unit normals
and the id of the cube-layout face each sample belongs to. Curved shapes are
labelled by projecting onto the unit sphere and picking the dominant axis,
which matches the great-circle arcs of the projected cube layout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from surfaces.layout import PatchLayout, layout_from_dict, write_layout, write_samples

logger = logging.getLogger(__name__)

CUBE_CORNERS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)

# counter-clockwise seen from outside: bottom, top, front, back, left, right
CUBE_FACES = ((0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (2, 3, 7, 6), (0, 4, 7, 3), (1, 2, 6, 5))
CUBE_FACE_AXES = ((2, -1), (2, 1), (1, -1), (1, 1), (0, -1), (0, 1))
ARC_POLYLINE_POINTS = 9
DEFAULT_NOISE = 0.01


@dataclass(frozen=True)
class SyntheticShape:
    name: str
    layout: PatchLayout
    points: np.ndarray
    normals: np.ndarray
    patch_ids: np.ndarray

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        """Write ``<name>.json`` (layout) and ``<name>.xyz`` (samples) into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        layout_path = directory / f"{self.name}.json"
        samples_path = directory / f"{self.name}.xyz"
        write_layout(self.layout, layout_path)
        write_samples(samples_path, self.points, self.normals, self.patch_ids)
        return layout_path, samples_path


# ---------------------------------------------------------------------------
# Layouts
# ---------------------------------------------------------------------------


def _cube_arcs() -> list[tuple[int, int]]:
    arcs = set()
    for face in CUBE_FACES:
        for a, b in zip(face, face[1:] + face[:1]):
            arcs.add((min(a, b), max(a, b)))
    return sorted(arcs)


def _onto_surface(directions: np.ndarray, axes: np.ndarray, exponent: float | None) -> np.ndarray:
    if exponent is not None:
        directions = directions / np.sum(np.abs(directions) ** exponent, axis=-1, keepdims=True) ** (1.0 / exponent)
    return axes * directions


def cube_layout(
    axes: tuple[float, float, float] = (1.0, 1.0, 1.0), projected: bool = False, exponent: float | None = None
) -> PatchLayout:
    """
    Six-quad layout of an axis-aligned box, or of a curved closed shape when ``projected``.

    Projected corners and arcs are the cube corners and edges pushed radially
    onto the ellipsoid with semi-axes ``axes`` (or onto the superellipsoid with
    ``exponent``); every arc carries its polyline. Box arcs are sharp.
    """
    scale = np.asarray(axes, dtype=np.float64)
    if projected:
        corners = _onto_surface(CUBE_CORNERS / np.sqrt(3.0), scale, exponent)
    else:
        corners = scale * CUBE_CORNERS
    data = {
        "corners": [{"id": i, "position": p.tolist()} for i, p in enumerate(corners)],
        "faces": [{"id": i, "corners": list(face)} for i, face in enumerate(CUBE_FACES)],
        "arcs": [],
    }
    for a, b in _cube_arcs():
        if projected:
            t = np.linspace(0.0, 1.0, ARC_POLYLINE_POINTS)[:, None]
            chord = (1.0 - t) * CUBE_CORNERS[a] + t * CUBE_CORNERS[b]
            polyline = _onto_surface(chord / np.linalg.norm(chord, axis=1, keepdims=True), scale, exponent)
            data["arcs"].append({"from": a, "to": b, "polyline": polyline.tolist(), "smooth": True})
        else:
            data["arcs"].append({"from": a, "to": b, "smooth": False})
    return layout_from_dict(data)


def flat_layout() -> PatchLayout:
    """Two unit squares side by side in the z = 0 plane, sharing the arc x = 0."""
    corners = [(-1, -1), (0, -1), (1, -1), (1, 1), (0, 1), (-1, 1)]
    return layout_from_dict(
        {
            "corners": [{"id": i, "position": [x, y, 0.0]} for i, (x, y) in enumerate(corners)],
            "faces": [{"id": 0, "corners": [0, 1, 4, 5]}, {"id": 1, "corners": [1, 2, 3, 4]}],
        }
    )


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


def _label_by_direction(directions: np.ndarray) -> np.ndarray:
    dominant = np.argmax(np.abs(directions), axis=1)
    positive = directions[np.arange(len(directions)), dominant] > 0
    lookup = {axis_sign: fid for fid, axis_sign in enumerate(CUBE_FACE_AXES)}
    return np.array([lookup[(int(axis), 1 if pos else -1)] for axis, pos in zip(dominant, positive)], dtype=np.int64)


def _unit_directions(count: int, rng: np.random.Generator) -> np.ndarray:
    directions = rng.normal(size=(count, 3))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def ellipsoid_samples(
    count: int, axes: tuple[float, float, float] = (1.0, 1.0, 1.0), seed: int = 0, name: str = "ellipsoid"
) -> SyntheticShape:
    """Area-uniform samples of an ellipsoid (rejection on the area element), labelled by cube face."""
    rng = np.random.default_rng(seed)
    a = np.asarray(axes, dtype=np.float64)
    bound = np.prod(a) / a.min()
    accepted = []
    remaining = count
    while remaining > 0:
        d = _unit_directions(max(2 * remaining, 64), rng)
        density = np.prod(a) * np.linalg.norm(d / a, axis=1)
        keep = d[rng.random(len(d)) * bound < density][:remaining]
        accepted.append(keep)
        remaining -= len(keep)
    d = np.concatenate(accepted)
    normals = d / a
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return SyntheticShape(name, cube_layout(tuple(a), projected=True), d * a, normals, _label_by_direction(d))


def sphere_samples(count: int, seed: int = 0) -> SyntheticShape:
    return ellipsoid_samples(count, (1.0, 1.0, 1.0), seed, name="sphere")


def superellipsoid_samples(count: int, exponent: float = 4.0, seed: int = 0) -> SyntheticShape:
    """Samples of |x|^p + |y|^p + |z|^p = 1 (radial projection of sphere directions, not area-uniform)."""
    if exponent < 2.0:
        raise ValueError("exponent must be at least 2")
    rng = np.random.default_rng(seed)
    d = _unit_directions(count, rng)
    points = d / (np.sum(np.abs(d) ** exponent, axis=1, keepdims=True) ** (1.0 / exponent))
    normals = np.sign(points) * np.abs(points) ** (exponent - 1.0)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    layout = cube_layout(projected=True, exponent=exponent)
    return SyntheticShape("superellipsoid", layout, points, normals, _label_by_direction(d))


def cube_samples(count: int, seed: int = 0) -> SyntheticShape:
    """Uniform samples of the [-1, 1]^3 box surface with exact face normals."""
    rng = np.random.default_rng(seed)
    patch_ids = rng.integers(0, len(CUBE_FACES), size=count)
    points = rng.uniform(-1.0, 1.0, size=(count, 3))
    normals = np.zeros((count, 3))
    for fid, (axis, sign) in enumerate(CUBE_FACE_AXES):
        mask = patch_ids == fid
        points[mask, axis] = sign
        normals[mask, axis] = sign
    return SyntheticShape("cube", cube_layout(), points, normals, patch_ids.astype(np.int64))


def flat_samples(count: int, seed: int = 0) -> SyntheticShape:
    rng = np.random.default_rng(seed)
    points = np.column_stack([rng.uniform(-1.0, 1.0, count), rng.uniform(-1.0, 1.0, count), np.zeros(count)])
    normals = np.tile([0.0, 0.0, 1.0], (count, 1))
    return SyntheticShape("flat", flat_layout(), points, normals, (points[:, 0] > 0).astype(np.int64))


def ellipsoid_family(
    shapes: int, count: int, seed: int = 0, low: float = 0.6, high: float = 1.4
) -> list[SyntheticShape]:
    """Ellipsoids with semi-axes drawn uniformly from [low, high], the desk-scale shape-space corpus."""
    rng = np.random.default_rng(seed)
    family = []
    for m in range(shapes):
        axes = tuple(float(v) for v in rng.uniform(low, high, size=3))
        family.append(ellipsoid_samples(count, axes, seed=seed + m + 1, name=f"ellipsoid_{m:03d}"))
    logger.debug("generated %d ellipsoids", shapes)
    return family


# ---------------------------------------------------------------------------
# Imperfect scans
# ---------------------------------------------------------------------------


def add_noise(
    points: np.ndarray, normals: np.ndarray, sigma: float = DEFAULT_NOISE, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian N(0, sigma^2) perturbation of positions and normals; normals are renormalized."""
    rng = np.random.default_rng(seed)
    noisy_points = points + rng.normal(scale=sigma, size=points.shape)
    noisy_normals = normals + rng.normal(scale=sigma, size=normals.shape)
    return noisy_points, noisy_normals / np.linalg.norm(noisy_normals, axis=1, keepdims=True)


def single_view(normals: np.ndarray, direction: tuple[float, float, float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """
    Mask of the samples a single-view scan keeps, the viewpoint one unit from the origin along ``direction``.

    The camera looks at the origin; samples whose normals form an acute angle
    with that viewing direction face away from it and are dropped.
    """
    viewpoint = np.asarray(direction, dtype=np.float64)
    viewpoint /= np.linalg.norm(viewpoint)
    viewing = -viewpoint
    return normals @ viewing <= 0.0
