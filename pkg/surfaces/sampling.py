"""
Sampling and correspondences.

Parameter-space samples are drawn uniformly inside each polygon domain,
surface/target pairs come from exact kd-tree nearest neighbours restricted
to one patch, and collocated boundary pairs straddle every shared arc for
the smoothness term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from scipy.spatial import cKDTree

from surfaces.complex import FeatureComplex, PolygonDomain, boundary_distance, edge_feature
from surfaces.diffnet import MappingMlp, mlp_forward
from surfaces.exceptions import SampleError
from surfaces.layout import Arc, LabeledSamples, PatchLayout

logger = logging.getLogger(__name__)

INTERIOR_MARGIN = 1e-6
BOUNDARY_INSET = 1e-4
DEFAULT_SAMPLES_PER_EDGE = 32
SHARP_ANGLE = np.pi / 4
# keeps inset boundary samples clear of the corners
ARC_END_MARGIN = 1e-3

SURFACE_TO_TARGET = 0
TARGET_TO_SURFACE = 1


@dataclass(frozen=True)
class PairedSamples:
    """
    Corresponded surface/target points.

    ``surface_index`` points into the batch of surface samples the pairs were
    built from, so drivers can gather the differentiable positions.
    """

    surface_index: np.ndarray
    surface_points: np.ndarray
    target_points: np.ndarray
    target_normals: np.ndarray
    direction: np.ndarray
    face_ids: np.ndarray
    u: np.ndarray

    def __len__(self) -> int:
        return len(self.surface_index)

    @classmethod
    def concatenate(cls, parts: list[PairedSamples]) -> PairedSamples:
        return cls(*(np.concatenate([getattr(p, name) for p in parts]) for name in cls.__dataclass_fields__))

    def filtered(self, mask: np.ndarray) -> PairedSamples:
        return PairedSamples(*(getattr(self, name)[mask] for name in self.__dataclass_fields__))

    def agreeing(self, surface_normals: np.ndarray, threshold: float) -> PairedSamples:
        """Pairs whose surface and target normals have cosine strictly above ``threshold``."""
        cosine = np.sum(surface_normals[self.surface_index] * self.target_normals, axis=1)
        return self.filtered(cosine > threshold)


@dataclass(frozen=True)
class BoundaryPairs:
    """Per smooth-or-sharp boundary sample: the two inset parameter points, one per adjacent face."""

    arcs: np.ndarray
    t: np.ndarray
    face_i: np.ndarray
    u_i: np.ndarray
    face_j: np.ndarray
    u_j: np.ndarray
    smooth: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


# ---------------------------------------------------------------------------
# Parameter-space sampling
# ---------------------------------------------------------------------------


def sample_domain(domain: PolygonDomain, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples over the polygon (fan triangles picked by area), kept 1e-6 away from the boundary."""
    if count < 1:
        raise ValueError("sample count must be at least 1")
    V = domain.vertices
    a = V[0]
    b = V[1:-1]
    c = V[2:]
    areas = 0.5 * np.abs((b[:, 0] - a[0]) * (c[:, 1] - a[1]) - (b[:, 1] - a[1]) * (c[:, 0] - a[0]))
    probabilities = areas / areas.sum()

    accepted: list[np.ndarray] = []
    remaining = count
    while remaining > 0:
        tri = rng.choice(len(areas), size=remaining, p=probabilities)
        r1 = np.sqrt(rng.random(remaining))
        r2 = rng.random(remaining)
        points = (1.0 - r1)[:, None] * a + (r1 * (1.0 - r2))[:, None] * b[tri] + (r1 * r2)[:, None] * c[tri]
        keep = points[boundary_distance(domain, points) > INTERIOR_MARGIN]
        accepted.append(keep)
        remaining -= len(keep)
    return np.concatenate(accepted)[:count]


def allocate_per_face(layout: PatchLayout, total: int, areas: dict[int, float]) -> dict[int, int]:
    """Split ``total`` proportionally to patch areas with largest-remainder rounding; every face gets >= 1."""
    face_ids = [face.id for face in layout.faces]
    if total < len(face_ids):
        raise ValueError(f"cannot give {len(face_ids)} faces at least one sample out of {total}")
    weights = np.array([max(areas[fid], 0.0) for fid in face_ids], dtype=np.float64)
    if weights.sum() <= 0.0:
        weights = np.ones_like(weights)
    quotas = weights / weights.sum() * total
    counts = np.floor(quotas).astype(np.int64)
    remainders = quotas - counts
    # stable sort keeps face order among equal remainders
    for idx in np.argsort(-remainders, kind="stable")[: total - int(counts.sum())]:
        counts[idx] += 1
    while np.any(counts < 1):
        counts[int(np.argmin(counts))] += 1
        counts[int(np.argmax(counts))] -= 1
    return {fid: int(n) for fid, n in zip(face_ids, counts)}


# ---------------------------------------------------------------------------
# Correspondences
# ---------------------------------------------------------------------------


def pair_closest(
    surface_pts: np.ndarray,
    target_pts: np.ndarray,
    target_normals: np.ndarray | None = None,
    *,
    face_id: int = -1,
    u: np.ndarray | None = None,
    target_tree: cKDTree | None = None,
    reverse_index: np.ndarray | None = None,
) -> PairedSamples:
    """
    Two-sided exact nearest-neighbour pairs between surface samples and target samples.

    Every surface sample is paired with its nearest target point, and every
    target point listed in ``reverse_index`` (default: all of them) with its
    nearest surface sample. ``target_tree`` lets callers reuse a kd-tree built
    once over ``target_pts``.
    """
    if len(surface_pts) == 0 or len(target_pts) == 0:
        raise SampleError(f"empty patch bucket for face {face_id}")
    if target_normals is None:
        target_normals = np.zeros_like(target_pts)
    if u is None:
        u = np.zeros((len(surface_pts), 2))
    if target_tree is None:
        target_tree = cKDTree(target_pts)
    surface_tree = cKDTree(surface_pts)

    _, to_target = target_tree.query(surface_pts)
    if reverse_index is None:
        reverse_index = np.arange(len(target_pts))
    _, to_surface = surface_tree.query(target_pts[reverse_index])

    surface_index = np.concatenate([np.arange(len(surface_pts)), to_surface])
    target_index = np.concatenate([to_target, reverse_index])
    direction = np.concatenate(
        [np.full(len(surface_pts), SURFACE_TO_TARGET), np.full(len(reverse_index), TARGET_TO_SURFACE)]
    )
    return PairedSamples(
        surface_index=surface_index,
        surface_points=surface_pts[surface_index],
        target_points=target_pts[target_index],
        target_normals=target_normals[target_index],
        direction=direction,
        face_ids=np.full(len(surface_index), face_id),
        u=u[surface_index],
    )


# ---------------------------------------------------------------------------
# Boundary samples
# ---------------------------------------------------------------------------


def classify_arcs(samples: LabeledSamples, samples_per_arc: int = 8) -> dict[Arc, bool]:
    """
    Smooth (True) or sharp (False) per shared arc.

    With a target mesh, the normals of the nearest target triangles on each
    side of the arc are compared and the arc is sharp when their mean
    deviation exceeds pi/4. Point-cloud targets default to smooth. Explicit
    ``smooth`` keys in the layout always win.
    """
    layout = samples.layout
    result: dict[Arc, bool] = {}
    trees: dict[int, cKDTree] = {}
    for arc, face_ids in layout.arc_faces.items():
        if len(face_ids) != 2:
            continue
        if arc in layout.arc_smooth:
            result[arc] = layout.arc_smooth[arc]
            continue
        if samples.mesh is None:
            result[arc] = True
            continue
        arc_samples = np.array([layout.arc_point(arc, t) for t in (np.arange(samples_per_arc) + 0.5) / samples_per_arc])
        side_normals = []
        for fid in face_ids:
            if fid not in trees:
                trees[fid] = cKDTree(samples.bucket(fid)[0])
            _, nearest = trees[fid].query(arc_samples)
            side_normals.append(samples.bucket(fid)[1][nearest])
        cosines = np.clip(np.sum(side_normals[0] * side_normals[1], axis=1), -1.0, 1.0)
        result[arc] = bool(np.mean(np.arccos(cosines)) <= SHARP_ANGLE)
    return result


def boundary_pairs(
    layout: PatchLayout,
    complex: FeatureComplex,
    classification: dict[Arc, bool],
    m_per_edge: int,
    rng: np.random.Generator,
    eps: float = BOUNDARY_INSET,
) -> BoundaryPairs:
    """``m_per_edge`` random t per shared arc, inset by ``eps`` into both adjacent domains."""
    arcs, ts, face_i, u_i, face_j, u_j, smooth = [], [], [], [], [], [], []
    for arc in layout.arcs:
        face_ids = layout.arc_faces[arc]
        if len(face_ids) != 2:
            continue
        t = rng.uniform(ARC_END_MARGIN, 1.0 - ARC_END_MARGIN, size=m_per_edge)
        inset = [_inset_points(complex.domains[fid], arc, t, eps) for fid in face_ids]
        arcs.append(np.tile(arc, (m_per_edge, 1)))
        ts.append(t)
        face_i.append(np.full(m_per_edge, face_ids[0]))
        u_i.append(inset[0])
        face_j.append(np.full(m_per_edge, face_ids[1]))
        u_j.append(inset[1])
        smooth.append(np.full(m_per_edge, classification.get(arc, True)))
    if not arcs:
        empty = np.zeros((0, 2))
        return BoundaryPairs(
            np.zeros((0, 2), dtype=np.int64),
            np.zeros(0),
            np.zeros(0, dtype=np.int64),
            empty,
            np.zeros(0, dtype=np.int64),
            empty,
            np.zeros(0, dtype=bool),
        )
    return BoundaryPairs(
        arcs=np.concatenate(arcs),
        t=np.concatenate(ts),
        face_i=np.concatenate(face_i),
        u_i=np.concatenate(u_i),
        face_j=np.concatenate(face_j),
        u_j=np.concatenate(u_j),
        smooth=np.concatenate(smooth),
    )


def _inset_points(domain: PolygonDomain, arc: Arc, t: np.ndarray, eps: float) -> np.ndarray:
    j, _ = domain.edge_index(*arc)
    return domain.edge_point(arc[0], arc[1], t) + eps * domain.inward_normal(j)


def sample_arc_polylines(complex: FeatureComplex, mlp: MappingMlp, arcs: list[Arc], count: int) -> torch.Tensor:
    """Ordered surface samples (E, count, 3) at evenly spaced t in [0, 1] along each arc."""
    if count < 3:
        raise ValueError("boundary polylines need at least three samples")
    t = np.linspace(0.0, 1.0, count)
    features = torch.stack([edge_feature(complex, arc, t) for arc in arcs])
    return mlp_forward(mlp, features)
