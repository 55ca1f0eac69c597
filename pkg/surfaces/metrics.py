"""
Reconstruction metrics and continuity audits.

Distances are sampled: P2S is the two-sided mean nearest-neighbour distance,
HD the two-sided maximum, NAE the mean angle in degrees between normals of
nearest pairs with inside/outside ambiguity removed (min(theta, 180 - theta)).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
from scipy.spatial import cKDTree

from surfaces.checkpoint import Checkpoint
from surfaces.complex import FeatureComplex, mvc_weights
from surfaces.diffnet import DTYPE, MappingMlp, mlp_forward, normals_from_jacobians, surface_jacobians
from surfaces.layout import LabeledSamples
from surfaces.mesher import map_tessellation, tessellate_face
from surfaces.sampling import BOUNDARY_INSET, boundary_pairs

logger = logging.getLogger(__name__)

DEFAULT_EVAL_SAMPLES = 30_000
EVAL_DENSITY = 16
# barycentric samples are pulled this far toward their triangle centroid to stay off domain edges
CENTROID_PULL = 1e-6


@dataclass(frozen=True)
class MetricsReport:
    p2s: float
    hd: float
    nae_degrees: float
    reconstruction_samples: int
    target_samples: int
    max_position_gap: float = 0.0
    smooth_normal_mean: float = 0.0
    smooth_normal_max: float = 0.0
    sharp_normal_mean: float = 0.0
    sharp_normal_max: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def _angles(normals_a: np.ndarray, normals_b: np.ndarray) -> np.ndarray:
    cosine = np.clip(np.sum(normals_a * normals_b, axis=1), -1.0, 1.0)
    return np.degrees(np.arccos(cosine))


def point_metrics(
    points_a: np.ndarray, normals_a: np.ndarray, points_b: np.ndarray, normals_b: np.ndarray
) -> tuple[float, float, float]:
    """(P2S, HD, NAE in degrees) between two oriented point sets."""
    distance_ab, nearest_ab = cKDTree(points_b).query(points_a)
    distance_ba, nearest_ba = cKDTree(points_a).query(points_b)
    p2s = 0.5 * (float(distance_ab.mean()) + float(distance_ba.mean()))
    hd = max(float(distance_ab.max()), float(distance_ba.max()))
    theta = np.concatenate([_angles(normals_a, normals_b[nearest_ab]), _angles(normals_b, normals_a[nearest_ba])])
    nae = float(np.minimum(theta, 180.0 - theta).mean())
    return p2s, hd, nae


def surface_samples(
    checkpoint: Checkpoint,
    count: int,
    seed: int = 0,
    complex: FeatureComplex | None = None,
    mlp: MappingMlp | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Points and unit normals distributed uniformly by surface area.

    Triangles of a fine tessellation are picked by their mapped 3D area and a
    uniform barycentric point of the picked triangle is mapped back exactly,
    normals coming from the surface Jacobian.
    """
    complex = complex if complex is not None else checkpoint.complex()
    mlp = mlp if mlp is not None else checkpoint.mapping()
    rng = np.random.default_rng(seed)

    tessellations = [
        map_tessellation(tessellate_face(complex.domains[fid], EVAL_DENSITY, EVAL_DENSITY**2, rng), complex, mlp)
        for fid in sorted(complex.domains)
    ]
    owners, uv_triangles, areas = [], [], []
    for tess in tessellations:
        p = tess.positions[tess.triangles]
        areas.append(0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1))
        uv_triangles.append(tess.uv[tess.triangles])
        owners.append(np.full(len(tess.triangles), tess.face_id))
    owners = np.concatenate(owners)
    uv_triangles = np.concatenate(uv_triangles)
    areas = np.concatenate(areas)

    picked = rng.choice(len(areas), size=count, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    bary = np.column_stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2])
    bary = (1.0 - CENTROID_PULL) * bary + CENTROID_PULL / 3.0
    uv = np.einsum("ij,ijk->ik", bary, uv_triangles[picked])

    points = np.empty((count, 3))
    normals = np.empty((count, 3))
    with torch.no_grad():
        for fid in np.unique(owners[picked]):
            rows = np.flatnonzero(owners[picked] == fid)
            vertices = torch.as_tensor(complex.domains[int(fid)].vertices, dtype=DTYPE)
            features = complex.Z[complex.rows(int(fid))]
            X, J = surface_jacobians(mlp, features, vertices, torch.as_tensor(uv[rows]))
            points[rows] = X.numpy()
            normals[rows] = (normals_from_jacobians(J) * checkpoint.normal_signs.get(int(fid), 1.0)).numpy()
    return points, normals


def evaluate(
    checkpoint: Checkpoint,
    target: LabeledSamples,
    n_samples: int = DEFAULT_EVAL_SAMPLES,
    seed: int = 0,
    complex: FeatureComplex | None = None,
) -> MetricsReport:
    """Metrics of the fitted surface against ``target``, both in the checkpoint's frame."""
    rng = np.random.default_rng(seed)
    points, normals = surface_samples(checkpoint, n_samples, seed, complex=complex)
    keep = np.arange(len(target.points))
    if len(keep) > n_samples:
        keep = np.sort(rng.choice(len(keep), size=n_samples, replace=False))
    p2s, hd, nae = point_metrics(points, normals, target.points[keep], target.normals[keep])
    continuity = continuity_report(checkpoint, seed=seed, complex=complex)
    report = MetricsReport(
        p2s=p2s,
        hd=hd,
        nae_degrees=nae,
        reconstruction_samples=len(points),
        target_samples=len(keep),
        **continuity,
    )
    logger.info("P2S %.6g, HD %.6g, NAE %.3f deg", p2s, hd, nae)
    return report


def continuity_report(
    checkpoint: Checkpoint,
    samples_per_arc: int = 32,
    seed: int = 0,
    complex: FeatureComplex | None = None,
    eps: float = BOUNDARY_INSET,
) -> dict[str, float]:
    """
    Cross-patch gaps along every shared arc.

    Positions are evaluated from both faces at the same edge parameters;
    normals from points inset by ``eps`` on both sides, summarized separately
    for smooth and sharp arcs (degrees).
    """
    complex = complex if complex is not None else checkpoint.complex()
    mlp = checkpoint.mapping()
    layout = checkpoint.patch_layout()
    signs = checkpoint.normal_signs
    rng = np.random.default_rng(seed)
    t = (np.arange(samples_per_arc) + 0.5) / samples_per_arc

    gap = 0.0
    deviations: dict[bool, list[np.ndarray]] = {True: [], False: []}
    pairs = boundary_pairs(layout, complex, checkpoint.smooth_arcs, samples_per_arc, rng, eps)
    with torch.no_grad():
        for arc, face_ids in layout.arc_faces.items():
            if len(face_ids) != 2:
                continue
            sides = []
            for fid in face_ids:
                u = complex.domains[fid].edge_point(arc[0], arc[1], t)
                weights = torch.as_tensor(mvc_weights(complex.domains[fid], u), dtype=DTYPE)
                sides.append(mlp_forward(mlp, weights @ complex.Z[complex.rows(fid)]).numpy())
            gap = max(gap, float(np.linalg.norm(sides[0] - sides[1], axis=1).max()))

        if len(pairs):
            n_i = _normals_at(complex, mlp, pairs.face_i, pairs.u_i, signs)
            n_j = _normals_at(complex, mlp, pairs.face_j, pairs.u_j, signs)
            angles = _angles(n_i, n_j)
            deviations[True].append(angles[pairs.smooth])
            deviations[False].append(angles[~pairs.smooth])

    result = {"max_position_gap": gap}
    for smooth, name in ((True, "smooth"), (False, "sharp")):
        values = np.concatenate(deviations[smooth]) if deviations[smooth] else np.zeros(0)
        result[f"{name}_normal_mean"] = float(values.mean()) if len(values) else 0.0
        result[f"{name}_normal_max"] = float(values.max()) if len(values) else 0.0
    return result


def _normals_at(
    complex: FeatureComplex, mlp: MappingMlp, faces: np.ndarray, U: np.ndarray, signs: dict[int, float]
) -> np.ndarray:
    normals = np.empty((len(faces), 3))
    for fid in np.unique(faces):
        rows = np.flatnonzero(faces == fid)
        vertices = torch.as_tensor(complex.domains[int(fid)].vertices, dtype=DTYPE)
        _, J = surface_jacobians(mlp, complex.Z[complex.rows(int(fid))], vertices, torch.as_tensor(U[rows]))
        normals[rows] = (normals_from_jacobians(J) * signs.get(int(fid), 1.0)).numpy()
    return normals
