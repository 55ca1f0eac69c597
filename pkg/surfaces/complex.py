"""
Feature complex: per-face polygon domains and mean value interpolation.

Every n-sided face gets a convex polygon inscribed in the unit circle whose
arcs between consecutive vertices are proportional to the target boundary
lengths. A point ``u`` in that polygon is embedded into feature space by mean
value interpolation of the face's corner features. On an edge the weights
reduce to linear interpolation of the two endpoint features, so adjacent
faces agree exactly along their shared arc.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import torch

from surfaces.exceptions import DomainError, LayoutError
from surfaces.layout import Arc, PatchLayout, arc_key

logger = logging.getLogger(__name__)

BOUNDARY_TOLERANCE = 1e-9
DEFAULT_FEATURE_DIM = 128
FEATURE_INIT_STD = 0.01


@dataclass(frozen=True)
class PolygonDomain:
    face_id: int
    corner_ids: tuple[int, ...]
    vertices: np.ndarray
    angles: np.ndarray

    @property
    def n(self) -> int:
        return len(self.corner_ids)

    @cached_property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def edge_index(self, a: int, b: int) -> tuple[int, bool]:
        """Index j of the edge joining corners a and b, and whether it runs a -> b."""
        n = self.n
        for j in range(n):
            start, end = self.corner_ids[j], self.corner_ids[(j + 1) % n]
            if (start, end) == (a, b):
                return j, True
            if (start, end) == (b, a):
                return j, False
        raise DomainError(f"face {self.face_id} has no edge between corners {a} and {b}")

    def edge_point(self, a: int, b: int, t: np.ndarray | float) -> np.ndarray:
        """Domain point(s) at parameter ``t`` measured from corner ``a`` along edge (a, b)."""
        self.edge_index(a, b)
        ua = self.vertices[self.corner_ids.index(a)]
        ub = self.vertices[self.corner_ids.index(b)]
        t = np.asarray(t, dtype=np.float64)
        return (1.0 - t)[..., None] * ua + t[..., None] * ub

    def inward_normal(self, j: int) -> np.ndarray:
        """Unit normal of edge j pointing into the polygon."""
        edge = self.vertices[(j + 1) % self.n] - self.vertices[j]
        normal = np.array([-edge[1], edge[0]])
        return normal / np.linalg.norm(normal)


@dataclass
class FeatureComplex:
    """Vertex features ``Z`` (K x D) plus the polygon domain of every face."""

    Z: torch.Tensor
    domains: dict[int, PolygonDomain]
    vertex_map: dict[int, int]
    arcs: frozenset[Arc]

    @property
    def D(self) -> int:
        return int(self.Z.shape[1])

    @property
    def K(self) -> int:
        return int(self.Z.shape[0])

    def rows(self, face_id: int) -> list[int]:
        return [self.vertex_map[c] for c in self.domains[face_id].corner_ids]

    def with_features(self, Z: torch.Tensor) -> FeatureComplex:
        return FeatureComplex(Z=Z, domains=self.domains, vertex_map=self.vertex_map, arcs=self.arcs)


def build_domains(layout: PatchLayout) -> list[PolygonDomain]:
    """Polygons inscribed in the unit circle, first vertex at angle 0, counter-clockwise."""
    domains = []
    for face in layout.faces:
        lengths = np.asarray(layout.boundary_lengths[face.id], dtype=np.float64)
        if np.any(lengths <= 0.0):
            raise LayoutError(f"face {face.id} has a zero-length boundary edge")
        fractions = lengths / lengths.sum()
        angles = 2.0 * math.pi * np.concatenate([[0.0], np.cumsum(fractions)[:-1]])
        vertices = np.column_stack([np.cos(angles), np.sin(angles)])
        domains.append(PolygonDomain(face_id=face.id, corner_ids=face.corners, vertices=vertices, angles=angles))
    return domains


def build_complex(
    layout: PatchLayout,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    generator: torch.Generator | None = None,
    anchored: bool = False,
) -> FeatureComplex:
    """Initial complex: Gaussian features (std 0.01), or the fixed corner positions when ``anchored``."""
    if anchored:
        Z = torch.tensor(layout.corner_positions, dtype=torch.float64)
    else:
        if feature_dim < 2:
            raise LayoutError(f"feature dimension must be at least 2, got {feature_dim}")
        Z = torch.randn(len(layout.corner_ids), feature_dim, generator=generator, dtype=torch.float64)
        Z = (Z * FEATURE_INIT_STD).requires_grad_(True)
    domains = {d.face_id: d for d in build_domains(layout)}
    return FeatureComplex(Z=Z, domains=domains, vertex_map=dict(layout.corner_index), arcs=frozenset(layout.arcs))


# ---------------------------------------------------------------------------
# Mean value coordinates
# ---------------------------------------------------------------------------


def mvc_weights(domain: PolygonDomain, u: np.ndarray) -> np.ndarray:
    """
    Mean value coordinates of ``u`` (shape (2,) or (m, 2)) in ``domain``.

    Within 1e-9 of a vertex the result is that vertex's indicator; within
    1e-9 of an edge it is the linear interpolation weight of the edge
    endpoints. Points further outside than 1e-9 raise DomainError.
    """
    single = np.ndim(u) == 1
    U = np.atleast_2d(np.asarray(u, dtype=np.float64))
    V = domain.vertices
    n = len(V)

    d = V[None, :, :] - U[:, None, :]
    r = np.linalg.norm(d, axis=2)
    d_next = np.roll(d, -1, axis=1)
    r_next = np.roll(r, -1, axis=1)
    cross = d[..., 0] * d_next[..., 1] - d[..., 1] * d_next[..., 0]
    dot = np.sum(d * d_next, axis=2)

    edges = np.roll(V, -1, axis=0) - V
    edge_len = np.linalg.norm(edges, axis=1)
    signed_dist = cross / edge_len[None, :]

    outside = np.any(signed_dist < -BOUNDARY_TOLERANCE, axis=1)
    if np.any(outside):
        bad = U[np.flatnonzero(outside)[0]]
        raise DomainError(f"point {bad.tolist()} lies outside the domain of face {domain.face_id}")

    weights = np.zeros_like(r)
    at_vertex = r < BOUNDARY_TOLERANCE
    on_edge = np.abs(signed_dist) <= BOUNDARY_TOLERANCE
    vertex_rows = np.any(at_vertex, axis=1)
    edge_rows = np.any(on_edge, axis=1) & ~vertex_rows
    regular = ~(vertex_rows | edge_rows)

    if np.any(vertex_rows):
        rows = np.flatnonzero(vertex_rows)
        weights[rows, np.argmax(at_vertex[rows], axis=1)] = 1.0

    for row in np.flatnonzero(edge_rows):
        j = int(np.argmax(on_edge[row]))
        t = float(np.dot(U[row] - V[j], edges[j]) / edge_len[j] ** 2)
        t = min(max(t, 0.0), 1.0)
        weights[row, j] = 1.0 - t
        weights[row, (j + 1) % n] = t

    if np.any(regular):
        tan_half = cross[regular] / (r[regular] * r_next[regular] + dot[regular])
        w = (np.roll(tan_half, 1, axis=1) + tan_half) / r[regular]
        weights[regular] = w / w.sum(axis=1, keepdims=True)

    return weights[0] if single else weights


def boundary_distance(domain: PolygonDomain, u: np.ndarray) -> np.ndarray:
    """Signed distance from ``u`` to the nearest edge line; positive inside."""
    U = np.atleast_2d(np.asarray(u, dtype=np.float64))
    V = domain.vertices
    edges = np.roll(V, -1, axis=0) - V
    rel = U[:, None, :] - V[None, :, :]
    cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
    dist = (cross / np.linalg.norm(edges, axis=1)[None, :]).min(axis=1)
    return dist[0] if np.ndim(u) == 1 else dist


def mvc_weights_interior(vertices: torch.Tensor, U: torch.Tensor) -> torch.Tensor:
    """Differentiable mean value coordinates for strictly interior points ``U`` (m, 2) -> (m, n)."""
    d = vertices.unsqueeze(0) - U.unsqueeze(1)
    r = torch.linalg.vector_norm(d, dim=2)
    d_next = torch.roll(d, shifts=-1, dims=1)
    r_next = torch.roll(r, shifts=-1, dims=1)
    cross = d[..., 0] * d_next[..., 1] - d[..., 1] * d_next[..., 0]
    dot = (d * d_next).sum(dim=2)
    tan_half = cross / (r * r_next + dot)
    w = (torch.roll(tan_half, shifts=1, dims=1) + tan_half) / r
    return w / w.sum(dim=1, keepdim=True)


def interpolate_feature(complex: FeatureComplex, face_id: int, u: np.ndarray) -> torch.Tensor:
    """z(u) = sum_j lambda_j(u) z_j for one point (D,) or many points (m, D)."""
    domain = complex.domains[face_id]
    weights = torch.as_tensor(mvc_weights(domain, u), dtype=complex.Z.dtype)
    return weights @ complex.Z[complex.rows(face_id)]


def edge_feature(complex: FeatureComplex, arc: tuple[int, int], t: float | np.ndarray) -> torch.Tensor:
    """Linear interpolation (1 - t) z_a + t z_b along arc (a, b)."""
    a, b = arc
    if arc_key(a, b) not in complex.arcs:
        raise DomainError(f"no arc between corners {a} and {b}")
    t_tensor = torch.as_tensor(t, dtype=complex.Z.dtype)
    z_a = complex.Z[complex.vertex_map[a]]
    z_b = complex.Z[complex.vertex_map[b]]
    if t_tensor.ndim == 0:
        return (1.0 - t_tensor) * z_a + t_tensor * z_b
    return (1.0 - t_tensor)[:, None] * z_a + t_tensor[:, None] * z_b
