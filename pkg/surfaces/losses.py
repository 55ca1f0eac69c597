"""
Loss terms of the reconstruction objective.

Every term is a pure torch function so gradients flow to the features, the
mapping network, the decoder and the latent codes. Terms default to sums over
their samples; drivers pass ``reduction="mean"`` for sample-based terms so
the weights do not depend on the batch size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import torch

from surfaces.exceptions import NumericalError

logger = logging.getLogger(__name__)

ZERO_LENGTH_EDGE = 1e-12
# gaps below this make the aspect term exactly zero instead of sqrt(0) with an infinite slope
ASPECT_GAP_FLOOR = 1e-16

TERM_NAMES = ("anchor", "surface", "normal", "smooth", "fair", "uniform", "aspect", "reg", "handle")
UNWEIGHTED_TERMS = ("anchor", "handle")


@dataclass(frozen=True)
class LossWeights:
    lambda_surface: float = 1.0
    lambda_normal: float = 0.1
    lambda_smooth: float = 0.05
    lambda_fair: float = 0.1
    lambda_uniform: float = 0.05
    lambda_aspect: float = 0.01
    lambda_reg: float = 1e-4
    beta_point_to_plane: float = 0.1

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not value >= 0.0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    def weight(self, term: str) -> float:
        """Coefficient of ``term`` in the total; anchor and handle distances are unweighted."""
        if term in UNWEIGHTED_TERMS:
            return 1.0
        return getattr(self, f"lambda_{term}")


@dataclass
class LossReport:
    terms: dict[str, float]
    total: float
    iteration: int = 0

    def as_record(self) -> dict:
        terms = {name: self.terms[name] for name in sorted(self.terms)}
        return {"iteration": self.iteration, **terms, "total": self.total}


def _reduce(values: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "sum":
        return values.sum()
    if reduction == "mean":
        return values.mean() if values.numel() else values.sum()
    raise ValueError(f"unknown reduction {reduction!r}")


def anchor_loss(corners: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """sum_k |x_k - p_k| over the layout corners."""
    return torch.linalg.vector_norm(corners - targets, dim=-1).sum()


def surface_loss(
    surface_points: torch.Tensor,
    target_points: torch.Tensor,
    target_normals: torch.Tensor,
    beta: float = 0.1,
    reduction: str = "sum",
) -> torch.Tensor:
    """Point-to-point plus beta-weighted point-to-plane distance for every pair."""
    offset = surface_points - target_points
    point_to_point = torch.linalg.vector_norm(offset, dim=-1)
    point_to_plane = torch.abs((target_normals * offset).sum(dim=-1))
    return _reduce(point_to_point + beta * point_to_plane, reduction)


def normal_loss(target_normals: torch.Tensor, surface_normals: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    return _reduce(1.0 - (target_normals * surface_normals).sum(dim=-1), reduction)


def smooth_loss(
    normals_i: torch.Tensor, normals_j: torch.Tensor, smooth: torch.Tensor, reduction: str = "sum"
) -> torch.Tensor:
    """|n_i - n_j| over boundary samples classified smooth; sharp samples contribute nothing."""
    gaps = torch.linalg.vector_norm(normals_i - normals_j, dim=-1)
    return _reduce(gaps[smooth], reduction)


def fair_loss(polylines: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    """Curve-Laplacian magnitude at interior samples of ordered boundary polylines (E, m, 3)."""
    if polylines.shape[-2] < 3:
        raise ValueError("each boundary curve needs at least three samples")
    laplacian = polylines[..., 1:-1, :] - 0.5 * (polylines[..., 2:, :] + polylines[..., :-2, :])
    return _reduce(torch.linalg.vector_norm(laplacian, dim=-1), reduction)


def uniform_loss(jacobians: torch.Tensor, face_index: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    """|E - mean E| + |G - mean G| per sample, means taken per face, E = |x_u|^2, G = |x_v|^2."""
    E = (jacobians[..., 0] ** 2).sum(dim=-1)
    G = (jacobians[..., 1] ** 2).sum(dim=-1)
    deviations = torch.zeros_like(E)
    for face in torch.unique(face_index):
        mask = face_index == face
        deviations = deviations + torch.where(
            mask, torch.abs(E - E[mask].mean()) + torch.abs(G - G[mask].mean()), torch.zeros_like(E)
        )
    return _reduce(deviations, reduction)


def aspect_loss(
    features: torch.Tensor, faces: list[tuple[list[int], list[float]]], reduction: str = "sum"
) -> torch.Tensor:
    """
    Edge-length aspect term summed over faces.

    ``faces`` holds, per face, the feature rows of its corner cycle and the
    target boundary lengths. Both length-fraction vectors are L2-normalized,
    so the term is zero exactly when the ratios match.
    """
    values = []
    for rows, target_lengths in faces:
        cycle = features[rows]
        edge = torch.linalg.vector_norm(torch.roll(cycle, shifts=-1, dims=0) - cycle, dim=-1)
        edge = torch.clamp(edge, min=ZERO_LENGTH_EDGE)
        target = torch.as_tensor(target_lengths, dtype=features.dtype)
        d_complex = edge / edge.sum()
        d_target = target / target.sum()
        cosine = (d_complex / torch.linalg.vector_norm(d_complex)) @ (d_target / torch.linalg.vector_norm(d_target))
        gap = torch.clamp(1.0 - cosine, min=0.0)
        safe = torch.clamp(gap, min=ASPECT_GAP_FLOOR)
        values.append(torch.where(gap > ASPECT_GAP_FLOOR, torch.sqrt(safe), torch.zeros_like(gap)))
    if not values:
        return features.new_zeros(())
    return _reduce(torch.stack(values), reduction)


def code_regularizer(codes: torch.Tensor) -> torch.Tensor:
    """sum_m |c_m| over the codes of a mini-batch."""
    return torch.linalg.vector_norm(codes, dim=-1).sum()


def total_loss(weights: LossWeights, terms: dict[str, torch.Tensor], iteration: int = 0):
    """Weighted sum of the evaluated terms; fails fast naming the first non-finite term."""
    for name, value in terms.items():
        if not torch.isfinite(value).all():
            raise NumericalError(f"loss term {name} is not finite", term=name)
    total = torch.zeros((), dtype=torch.float64)
    for name, value in terms.items():
        total = total + weights.weight(name) * value
    report = LossReport(
        terms={name: float(value.detach()) for name, value in terms.items()},
        total=float(total.detach()),
        iteration=iteration,
    )
    if not math.isfinite(report.total):
        raise NumericalError("total loss is not finite", term="total")
    return total, report
