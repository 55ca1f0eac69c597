"""
Tessellation and mesh export.

Each polygon domain is sampled on its boundary at canonical edge parameters
and on a jittered interior grid, triangulated with a constrained Delaunay
triangulation and mapped through the fitted surface. Boundary vertices are
keyed by (corner) or (arc, canonical t) so the patches weld into one indexed
mesh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import plotly.graph_objects as go
import torch
import triangle

from surfaces.checkpoint import Checkpoint
from surfaces.complex import FeatureComplex, PolygonDomain, boundary_distance, edge_feature, mvc_weights
from surfaces.diffnet import DTYPE, MappingMlp, mlp_forward
from surfaces.layout import arc_key

logger = logging.getLogger(__name__)

DEFAULT_DENSITY = 16
GRID_JITTER = 0.25
# interior points closer than this fraction of the grid spacing to an edge are dropped
EDGE_CLEARANCE = 0.5
DEGENERATE_AREA = 1e-14

VertexKey = tuple


@dataclass(frozen=True)
class PatchTessellation:
    """
    2D samples of one domain, their triangulation and (once mapped) 3D positions.

    ``keys`` holds the weld key of every boundary vertex, ``None`` for interior
    ones: ``("corner", id)`` or ``("arc", lo, hi, k)`` where the sample sits at
    t = k / density measured from the lower corner id ``lo``.
    """

    face_id: int
    uv: np.ndarray
    triangles: np.ndarray
    keys: tuple[VertexKey | None, ...]
    density: int
    positions: np.ndarray | None = None

    @property
    def boundary_count(self) -> int:
        return sum(key is not None for key in self.keys)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    triangle_patch: np.ndarray
    degenerate: int = 0

    @cached_property
    def edges(self) -> np.ndarray:
        pairs = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    @property
    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.triangles)

    def in_frame(self, center: np.ndarray, scale: float) -> TriangleMesh:
        """Undo a (center, scale) normalization."""
        return replace(self, vertices=self.vertices / scale + np.asarray(center))


# ---------------------------------------------------------------------------
# Tessellation
# ---------------------------------------------------------------------------


def _boundary_samples(domain: PolygonDomain, density: int) -> tuple[list[np.ndarray], list[VertexKey]]:
    points, keys = [], []
    n = domain.n
    for j in range(n):
        a, b = domain.corner_ids[j], domain.corner_ids[(j + 1) % n]
        lo, hi = arc_key(a, b)
        points.append(domain.vertices[j])
        keys.append(("corner", a))
        for k in range(1, density):
            points.append(domain.edge_point(a, b, k / density))
            keys.append(("arc", lo, hi, k if a == lo else density - k))
    return points, keys


def _interior_samples(domain: PolygonDomain, count: int, rng: np.random.Generator) -> np.ndarray:
    """Jittered grid with roughly ``count`` points clipped to the polygon."""
    if count <= 0:
        return np.zeros((0, 2))
    spacing = math.sqrt(domain.area / count)
    axis = np.arange(-1.0 + 0.5 * spacing, 1.0, spacing)
    grid = np.stack(np.meshgrid(axis, axis, indexing="xy"), axis=-1).reshape(-1, 2)
    grid = grid + rng.uniform(-GRID_JITTER, GRID_JITTER, size=grid.shape) * spacing
    return grid[boundary_distance(domain, grid) > EDGE_CLEARANCE * spacing]


def tessellate_face(
    domain: PolygonDomain, density: int, interior: int = 0, rng: np.random.Generator | None = None
) -> PatchTessellation:
    """Constrained Delaunay triangulation of boundary samples at t = k / density plus interior points."""
    if density < 1:
        raise ValueError(f"density must be at least 1, got {density}")
    rng = rng if rng is not None else np.random.default_rng(0)
    boundary, keys = _boundary_samples(domain, density)
    inner = _interior_samples(domain, interior, rng)
    uv = np.concatenate([np.array(boundary), inner])

    nb = len(boundary)
    segments = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    # 'p' triangulates the planar straight-line graph, 'Y' forbids Steiner points on its segments
    result = triangle.triangulate({"vertices": uv, "segments": segments}, "pY")
    if len(result["vertices"]) != len(uv):
        added = len(result["vertices"]) - len(uv)
        logger.warning("triangulation of face %d added %d vertices", domain.face_id, added)
        uv = np.asarray(result["vertices"], dtype=np.float64)
        keys = keys + [None] * (len(uv) - nb)
    else:
        keys = keys + [None] * len(inner)
    return PatchTessellation(
        face_id=domain.face_id,
        uv=uv,
        triangles=np.asarray(result["triangles"], dtype=np.int64),
        keys=tuple(keys),
        density=density,
    )


# ---------------------------------------------------------------------------
# Meshing
# ---------------------------------------------------------------------------


def _key_feature(complex: FeatureComplex, key: VertexKey, density: int) -> torch.Tensor:
    if key[0] == "corner":
        return complex.Z[complex.vertex_map[key[1]]]
    _, lo, hi, k = key
    return edge_feature(complex, (lo, hi), k / density)


def map_tessellation(tess: PatchTessellation, complex: FeatureComplex, mlp: MappingMlp) -> PatchTessellation:
    """3D positions of a tessellation; boundary vertices are evaluated from their weld keys."""
    boundary_rows = [i for i, key in enumerate(tess.keys) if key is not None]
    interior_rows = [i for i, key in enumerate(tess.keys) if key is None]
    positions = np.empty((len(tess.uv), 3))
    with torch.no_grad():
        features = torch.stack([_key_feature(complex, tess.keys[i], tess.density) for i in boundary_rows])
        positions[boundary_rows] = mlp_forward(mlp, features).numpy()
        if interior_rows:
            domain = complex.domains[tess.face_id]
            weights = torch.as_tensor(mvc_weights(domain, tess.uv[interior_rows]), dtype=DTYPE)
            positions[interior_rows] = mlp_forward(mlp, weights @ complex.Z[complex.rows(tess.face_id)]).numpy()
    return replace(tess, positions=positions)


def mesh_surface(
    checkpoint: Checkpoint,
    density: int = DEFAULT_DENSITY,
    interior: int | None = None,
    seed: int = 0,
    complex: FeatureComplex | None = None,
    mlp: MappingMlp | None = None,
) -> TriangleMesh:
    """
    Welded triangle mesh of every patch, in the checkpoint's normalized frame.

    ``complex`` overrides the checkpoint's own features (shape-space decodes).
    Faces whose normal sign is negative get their triangle winding flipped so
    the mesh is consistently oriented.
    """
    complex = complex if complex is not None else checkpoint.complex()
    mlp = mlp if mlp is not None else checkpoint.mapping()
    interior = density * density if interior is None else interior
    rng = np.random.default_rng(seed)

    index: dict[VertexKey, int] = {}
    vertices: list[np.ndarray] = []
    triangles, patches = [], []
    for face_id in sorted(complex.domains):
        tess = map_tessellation(tessellate_face(complex.domains[face_id], density, interior, rng), complex, mlp)
        local = np.empty(len(tess.uv), dtype=np.int64)
        for i, key in enumerate(tess.keys):
            if key is not None and key in index:
                local[i] = index[key]
                continue
            local[i] = len(vertices)
            vertices.append(tess.positions[i])
            if key is not None:
                index[key] = local[i]

        faces = local[tess.triangles]
        if checkpoint.normal_signs.get(face_id, 1.0) < 0:
            faces = faces[:, ::-1]
        triangles.append(faces)
        patches.append(np.full(len(faces), face_id))

    vertex_array = np.asarray(vertices, dtype=np.float64)
    triangle_array = np.concatenate(triangles)
    v = vertex_array[triangle_array]
    areas = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    degenerate = int(np.sum(areas < DEGENERATE_AREA))
    if degenerate:
        logger.warning("%d mapped triangles have zero area", degenerate)
    logger.info("meshed %d faces: %d vertices, %d triangles", len(complex.domains), len(vertices), len(triangle_array))
    return TriangleMesh(
        vertices=vertex_array,
        triangles=triangle_array,
        triangle_patch=np.concatenate(patches),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_obj(mesh: TriangleMesh, path: str | Path, groups: bool = False) -> None:
    """ASCII OBJ with 1-based indices; ``groups`` writes one ``g patch_<id>`` section per patch."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    if groups:
        for face_id in np.unique(mesh.triangle_patch):
            lines.append(f"g patch_{int(face_id)}")
            lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles[mesh.triangle_patch == face_id])
    else:
        lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles)
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info("wrote %d vertices and %d triangles to %s", len(mesh.vertices), len(mesh.triangles), path)


def export_html(mesh: TriangleMesh, path: str | Path, title: str = "") -> None:
    """Interactive preview, patches coloured by id."""
    fig = go.Figure(
        data=[
            go.Mesh3d(
                x=mesh.vertices[:, 0],
                y=mesh.vertices[:, 1],
                z=mesh.vertices[:, 2],
                i=mesh.triangles[:, 0],
                j=mesh.triangles[:, 1],
                k=mesh.triangles[:, 2],
                intensity=mesh.triangle_patch,
                intensitymode="cell",
                colorscale="Viridis",
                showscale=False,
                flatshading=True,
            )
        ]
    )
    fig.update_layout(
        title=title or None,
        margin=dict(l=0, r=0, t=30 if title else 0, b=0),
        scene=dict(aspectmode="data"),
    )
    fig.write_html(path, include_plotlyjs="cdn")
