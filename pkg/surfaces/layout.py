"""
Patch layouts and labelled target samples.

A layout is the partition of a target surface into n-sided patches: corner
points, faces given as ordered corner cycles, and the arcs shared between
faces. Samples are oriented points on the target surface labelled with the
face they belong to.

Layout file (JSON)::

    {"corners": [{"id": 0, "position": [x, y, z]}, ...],
     "faces":   [{"id": 0, "corners": [0, 1, 2, 3]}, ...],
     "arcs":    [{"from": 0, "to": 1, "polyline": [[x, y, z], ...], "smooth": true}, ...]}

Samples file: one ``x y z nx ny nz patch_id`` record per line.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import trimesh

from surfaces.exceptions import LayoutError, SampleError

logger = logging.getLogger(__name__)

Arc = tuple[int, int]

NORMAL_TOLERANCE = 1e-6
TARGET_EXTENT = 2.0


def arc_key(a: int, b: int) -> Arc:
    """Canonical (undirected) key of the arc between corners ``a`` and ``b``."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Face:
    id: int
    corners: tuple[int, ...]
    has_holes: bool = False

    @property
    def size(self) -> int:
        return len(self.corners)

    def edges(self) -> list[tuple[int, int]]:
        """Directed edges (corner j, corner j+1) in cycle order."""
        n = len(self.corners)
        return [(self.corners[j], self.corners[(j + 1) % n]) for j in range(n)]


@dataclass(frozen=True)
class PatchLayout:
    corners: dict[int, np.ndarray]
    faces: tuple[Face, ...]
    # Polylines run from the lower to the higher corner id of their arc.
    arc_polylines: dict[Arc, np.ndarray] = field(default_factory=dict)
    arc_smooth: dict[Arc, bool] = field(default_factory=dict)
    declared_arcs: tuple[Arc, ...] = ()

    @cached_property
    def corner_ids(self) -> list[int]:
        return sorted(self.corners)

    @cached_property
    def corner_index(self) -> dict[int, int]:
        return {cid: row for row, cid in enumerate(self.corner_ids)}

    @cached_property
    def corner_positions(self) -> np.ndarray:
        return np.array([self.corners[cid] for cid in self.corner_ids], dtype=np.float64).reshape(-1, 3)

    @cached_property
    def face_index(self) -> dict[int, Face]:
        return {face.id: face for face in self.faces}

    @cached_property
    def arc_faces(self) -> dict[Arc, list[int]]:
        """Faces adjacent to each arc, in face order."""
        adjacency: dict[Arc, list[int]] = defaultdict(list)
        for face in self.faces:
            for a, b in face.edges():
                key = arc_key(a, b)
                if face.id not in adjacency[key]:
                    adjacency[key].append(face.id)
        return dict(adjacency)

    @cached_property
    def arcs(self) -> list[Arc]:
        return sorted(self.arc_faces)

    @cached_property
    def boundary_lengths(self) -> dict[int, tuple[float, ...]]:
        """Per face, the target length of every edge in cycle order."""
        return {face.id: tuple(self.edge_length(a, b) for a, b in face.edges()) for face in self.faces}

    def face(self, face_id: int) -> Face:
        try:
            return self.face_index[face_id]
        except KeyError:
            raise LayoutError(f"unknown face {face_id}") from None

    def arc_curve(self, a: int, b: int) -> np.ndarray:
        """Ordered 3D points of the arc from corner ``a`` to corner ``b``."""
        polyline = self.arc_polylines.get(arc_key(a, b))
        if polyline is None:
            return np.stack([self.corners[a], self.corners[b]])
        return polyline if a <= b else polyline[::-1]

    def edge_length(self, a: int, b: int) -> float:
        curve = self.arc_curve(a, b)
        return float(np.linalg.norm(np.diff(curve, axis=0), axis=1).sum())

    def arc_point(self, arc: Arc, t: float) -> np.ndarray:
        """Point at arc-length fraction ``t`` from the lower corner id."""
        curve = self.arc_curve(*arc)
        seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
        cumulative = np.concatenate([[0.0], np.cumsum(seg)])
        if cumulative[-1] == 0.0:
            return curve[0].copy()
        return np.array([np.interp(t * cumulative[-1], cumulative, curve[:, k]) for k in range(3)])

    def transformed(self, center: np.ndarray, scale: float) -> PatchLayout:
        """Copy with every position mapped by ``(p - center) * scale``."""
        return replace(
            self,
            corners={cid: (pos - center) * scale for cid, pos in self.corners.items()},
            arc_polylines={key: (poly - center) * scale for key, poly in self.arc_polylines.items()},
        )


# ---------------------------------------------------------------------------
# Layout I/O
# ---------------------------------------------------------------------------


def load_layout(path: str | Path) -> PatchLayout:
    """Parse a layout file; raises LayoutError on malformed content or dangling corner ids."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise LayoutError(f"could not read layout {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LayoutError(f"could not parse layout {path}: {exc}") from exc
    return layout_from_dict(data)


def layout_from_dict(data: dict) -> PatchLayout:
    try:
        corners = {int(c["id"]): np.asarray(c["position"], dtype=np.float64) for c in data["corners"]}
        faces = tuple(
            Face(id=int(f["id"]), corners=tuple(int(c) for c in f["corners"]), has_holes=bool(f.get("holes")))
            for f in data["faces"]
        )
        raw_arcs = data.get("arcs", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"malformed layout: {exc}") from exc

    for cid, pos in corners.items():
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise LayoutError(f"corner {cid} must have a finite 3D position")

    for face in faces:
        for cid in face.corners:
            if cid not in corners:
                raise LayoutError(f"unknown corner {cid} in face {face.id}")

    polylines: dict[Arc, np.ndarray] = {}
    smooth: dict[Arc, bool] = {}
    declared: list[Arc] = []
    for raw in raw_arcs:
        try:
            a, b = int(raw["from"]), int(raw["to"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutError(f"malformed arc entry: {exc}") from exc
        for cid in (a, b):
            if cid not in corners:
                raise LayoutError(f"unknown corner {cid} in arc ({a}, {b})")
        key = arc_key(a, b)
        declared.append(key)
        if "polyline" in raw:
            poly = np.asarray(raw["polyline"], dtype=np.float64)
            if poly.ndim != 2 or poly.shape[1] != 3 or len(poly) < 2:
                raise LayoutError(f"arc ({a}, {b}) polyline must be a list of at least two 3D points")
            polylines[key] = poly if a <= b else poly[::-1].copy()
        if "smooth" in raw:
            smooth[key] = bool(raw["smooth"])

    return PatchLayout(
        corners=corners, faces=faces, arc_polylines=polylines, arc_smooth=smooth, declared_arcs=tuple(declared)
    )


def layout_to_dict(layout: PatchLayout) -> dict:
    arcs = []
    for key in sorted(set(layout.arc_polylines) | set(layout.arc_smooth)):
        entry: dict = {"from": key[0], "to": key[1]}
        if key in layout.arc_polylines:
            entry["polyline"] = layout.arc_polylines[key].tolist()
        if key in layout.arc_smooth:
            entry["smooth"] = layout.arc_smooth[key]
        arcs.append(entry)
    return {
        "corners": [{"id": cid, "position": layout.corners[cid].tolist()} for cid in layout.corner_ids],
        "faces": [{"id": face.id, "corners": list(face.corners)} for face in layout.faces],
        "arcs": arcs,
    }


def write_layout(layout: PatchLayout, path: str | Path) -> None:
    Path(path).write_text(json.dumps(layout_to_dict(layout), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate_layout(layout: PatchLayout) -> ValidationReport:
    """Collect every structural problem; an empty report means the layout is usable."""
    violations: list[Violation] = []

    for face in layout.faces:
        violations.extend(_face_violations(layout, face))

    seen: set[Arc] = set()
    for key in layout.declared_arcs:
        if key[0] == key[1]:
            violations.append(Violation("self-loop", f"arc declared from corner {key[0]} to itself"))
        elif key in seen:
            violations.append(Violation("multi-edge", f"more than one arc between corners {key[0]} and {key[1]}"))
        seen.add(key)

    for key, face_ids in sorted(layout.arc_faces.items()):
        if key[0] != key[1] and len(face_ids) > 2:
            violations.append(
                Violation("arc-overshared", f"arc ({key[0]}, {key[1]}) shared by {len(face_ids)} faces: {face_ids}")
            )

    used = {cid for face in layout.faces for cid in face.corners}
    for cid in layout.corner_ids:
        if cid not in used:
            violations.append(Violation("unused-corner", f"corner {cid} is not referenced by any face"))

    return ValidationReport(tuple(violations))


def _face_violations(layout: PatchLayout, face: Face) -> list[Violation]:
    found: list[Violation] = []
    if face.has_holes:
        found.append(Violation("hole", f"face {face.id} has interior holes"))
    distinct = set(face.corners)
    if len(distinct) < 3:
        found.append(Violation("too-few-corners", f"face {face.id} has {len(distinct)} distinct corners"))
    for a, b in face.edges():
        if a == b:
            found.append(Violation("self-loop", f"face {face.id} has an edge from corner {a} to itself"))
    if len(distinct) != len(face.corners):
        repeated = sorted(c for c in distinct if face.corners.count(c) > 1)
        found.append(Violation("duplicate-corner", f"face {face.id} repeats corners {repeated}"))
        return found
    directed = face.edges()
    keys = [arc_key(a, b) for a, b in directed]
    if len(set(keys)) != len(keys):
        found.append(Violation("multi-edge", f"face {face.id} uses the same arc twice"))
    for a, b in directed:
        if a != b and layout.edge_length(a, b) <= 0.0:
            found.append(Violation("zero-length-edge", f"face {face.id} edge ({a}, {b}) has zero length"))
    return found


# ---------------------------------------------------------------------------
# Labelled samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    triangle_patch: np.ndarray

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


@dataclass(frozen=True)
class LabeledSamples:
    """Normalized, labelled target samples together with the layout in the same frame."""

    points: np.ndarray
    normals: np.ndarray
    patch_ids: np.ndarray
    layout: PatchLayout
    center: np.ndarray
    scale: float
    mesh: TargetMesh | None = None

    @cached_property
    def buckets(self) -> dict[int, np.ndarray]:
        return {face.id: np.flatnonzero(self.patch_ids == face.id) for face in self.layout.faces}

    def bucket(self, face_id: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.buckets[face_id]
        return self.points[idx], self.normals[idx]

    def patch_areas(self) -> dict[int, float]:
        """Relative patch areas: mesh areas when a mesh is known, otherwise bucket counts."""
        if self.mesh is not None:
            areas = self.mesh.triangle_areas
            return {fid: float(areas[self.mesh.triangle_patch == fid].sum()) for fid in self.buckets}
        return {fid: float(len(idx)) for fid, idx in self.buckets.items()}


def normalization_transform(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Centroid and scale that put the shape at the origin with maximal axis extent 2."""
    center = points.mean(axis=0)
    extent = float(np.ptp(points - center, axis=0).max())
    if extent <= 0.0:
        raise SampleError("samples have zero extent")
    return center, TARGET_EXTENT / extent


def read_samples(path: str | Path, labelled: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """
    Raw ``x y z nx ny nz [patch_id]`` records.

    Unlabelled reads accept six or seven columns and ignore any patch ids.
    """
    try:
        table = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except OSError as exc:
        raise SampleError(f"could not read samples {path}: {exc}") from exc
    except ValueError as exc:
        raise SampleError(f"could not parse samples {path}: {exc}") from exc
    columns = (7,) if labelled else (6, 7)
    if table.shape[1] not in columns:
        expected = " or ".join(map(str, columns))
        raise SampleError(f"samples file {path} must have {expected} columns, found {table.shape[1]}")
    if not labelled:
        return table[:, :3], table[:, 3:6], None
    patch_ids = table[:, 6]
    if not np.all(patch_ids == np.round(patch_ids)):
        raise SampleError("patch ids must be integers")
    return table[:, :3], table[:, 3:6], patch_ids.astype(np.int64)


def load_samples(
    path: str | Path, layout: PatchLayout, transform: tuple[np.ndarray, float] | None = None
) -> LabeledSamples:
    """Read an ``x y z nx ny nz patch_id`` file and normalize it together with ``layout``."""
    points, normals, patch_ids = read_samples(path)
    return labeled_samples(points, normals, patch_ids, layout, transform=transform)


def load_mesh_samples(
    obj_path: str | Path, labels_path: str | Path, layout: PatchLayout, count: int = 100_000, seed: int = 0
) -> LabeledSamples:
    """Sample a labelled OBJ target uniformly by area; the sidecar holds one patch id per face line."""
    try:
        mesh = trimesh.load(obj_path, force="mesh", process=False)
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as exc:
        raise SampleError(f"could not read target mesh {obj_path}: {exc}") from exc
    if len(labels) != len(mesh.faces):
        raise SampleError(f"{len(labels)} patch labels for {len(mesh.faces)} mesh faces")
    points, face_index = trimesh.sample.sample_surface(mesh, count, seed=seed)
    normals = np.asarray(mesh.face_normals)[face_index]
    target = TargetMesh(
        vertices=np.asarray(mesh.vertices, dtype=np.float64),
        triangles=np.asarray(mesh.faces, dtype=np.int64),
        triangle_patch=labels,
    )
    return labeled_samples(np.asarray(points), normals, labels[face_index], layout, mesh=target)


def labeled_samples(
    points: np.ndarray,
    normals: np.ndarray,
    patch_ids: np.ndarray,
    layout: PatchLayout,
    mesh: TargetMesh | None = None,
    transform: tuple[np.ndarray, float] | None = None,
) -> LabeledSamples:
    """
    Check, normalize and orient raw labelled samples against ``layout``.

    ``transform`` (center, scale) replaces the per-shape normalization so a
    collection of shapes can share one frame.
    """
    points = np.asarray(points, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    patch_ids = np.asarray(patch_ids, dtype=np.int64)

    lengths = np.linalg.norm(normals, axis=1)
    bad = np.flatnonzero(lengths < NORMAL_TOLERANCE)
    if len(bad):
        raise SampleError(f"degenerate normal at sample {int(bad[0])}")
    normals = normals / lengths[:, None]

    known = {face.id for face in layout.faces}
    unknown = sorted(set(np.unique(patch_ids).tolist()) - known)
    if unknown:
        raise SampleError(f"samples reference unknown patch ids {unknown}")
    empty = sorted(known - set(np.unique(patch_ids).tolist()))
    if empty:
        raise SampleError(f"faces {empty} have no samples")

    center, scale = transform if transform is not None else normalization_transform(points)
    center = np.asarray(center, dtype=np.float64)
    norm_layout = orient_faces(layout.transformed(center, scale), points, normals, patch_ids)
    if mesh is not None:
        mesh = replace(mesh, vertices=(mesh.vertices - center) * scale)
    logger.debug("normalized %d samples: center=%s scale=%.6g", len(points), center, scale)
    return LabeledSamples(
        points=(points - center) * scale,
        normals=normals,
        patch_ids=patch_ids,
        layout=norm_layout,
        center=center,
        scale=scale,
        mesh=mesh,
    )


def orient_faces(layout: PatchLayout, points: np.ndarray, normals: np.ndarray, patch_ids: np.ndarray) -> PatchLayout:
    """Reverse every face cycle whose corner polygon faces away from its samples' normals."""
    faces = []
    for face in layout.faces:
        polygon = np.array([layout.corners[c] for c in face.corners])
        mask = patch_ids == face.id
        mean_normal = normals[mask].sum(axis=0) if mask.any() else np.zeros(3)
        if np.dot(_newell_normal(polygon), mean_normal) < 0.0:
            face = replace(face, corners=(face.corners[0], *reversed(face.corners[1:])))
            logger.debug("reversed corner cycle of face %d", face.id)
        faces.append(face)
    return replace(layout, faces=tuple(faces))


def _newell_normal(polygon: np.ndarray) -> np.ndarray:
    nxt = np.roll(polygon, -1, axis=0)
    return np.array(
        [
            np.sum((polygon[:, 1] - nxt[:, 1]) * (polygon[:, 2] + nxt[:, 2])),
            np.sum((polygon[:, 2] - nxt[:, 2]) * (polygon[:, 0] + nxt[:, 0])),
            np.sum((polygon[:, 0] - nxt[:, 0]) * (polygon[:, 1] + nxt[:, 1])),
        ]
    )


def write_samples(path: str | Path, points: np.ndarray, normals: np.ndarray, patch_ids: np.ndarray) -> None:
    table = np.column_stack([points, normals, patch_ids])
    np.savetxt(path, table, fmt=["%.17g"] * 6 + ["%d"])
