"""
Networks and differentiation.

``MappingMlp`` is the shared map f: R^D -> R^3 that turns feature-complex
cells into surface patches. ``BroadcastDecoder`` produces every complex
vertex feature from a shape latent code and a per-vertex positional token.
Reverse-mode gradients come from torch autograd (wrapped by ``Tape`` and
``grad_reverse``); surface Jacobians use two forward-mode directional passes
so they stay differentiable for the normal and uniformity losses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from surfaces.complex import (
    BOUNDARY_TOLERANCE,
    FeatureComplex,
    boundary_distance,
    mvc_weights_interior,
)
from surfaces.exceptions import DegenerateSurfaceError, DomainError, NumericalError

logger = logging.getLogger(__name__)

DTYPE = torch.float64
SOFTPLUS_BETA = 100.0
# beta * x above this switches softplus to its linear branch
SOFTPLUS_THRESHOLD = 30.0
DEGENERATE_NORMAL = 1e-12

DEFAULT_LAYERS = 12
DEFAULT_HIDDEN = 256
DEFAULT_LATENT_DIM = 64
DECODER_HIDDEN = 256
CODE_INIT_STD = 0.01


def softplus(x: torch.Tensor) -> torch.Tensor:
    return F.softplus(x, beta=SOFTPLUS_BETA, threshold=SOFTPLUS_THRESHOLD)


def _fan_in_uniform_(linear: nn.Linear, generator: torch.Generator | None) -> None:
    bound = math.sqrt(6.0 / linear.in_features)
    with torch.no_grad():
        linear.weight.uniform_(-bound, bound, generator=generator)
        linear.bias.zero_()


def configure_runtime(threads: int | None, deterministic: bool) -> None:
    """Apply the worker cap and the determinism flag to torch."""
    if threads:
        torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(deterministic)


class MappingMlp(nn.Module):
    """f_theta: D -> N x (L - 1) hidden softplus layers -> 3."""

    def __init__(
        self,
        feature_dim: int,
        layers: int = DEFAULT_LAYERS,
        hidden: int = DEFAULT_HIDDEN,
        generator: torch.Generator | None = None,
    ) -> None:
        super().__init__()
        if layers < 1:
            raise ValueError(f"the mapping network needs at least one layer, got {layers}")
        widths = [feature_dim] + [hidden] * (layers - 1) + [3]
        self.linears = nn.ModuleList(nn.Linear(i, o, dtype=DTYPE) for i, o in zip(widths[:-1], widths[1:]))
        for linear in self.linears:
            _fan_in_uniform_(linear, generator)

    @property
    def feature_dim(self) -> int:
        return self.linears[0].in_features

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        for linear in self.linears[:-1]:
            z = softplus(linear(z))
        return self.linears[-1](z)


class BroadcastDecoder(nn.Module):
    """
    h_phi: concat(code, k / K) -> vertex feature, three linear layers.

    Both hidden layers have width ``hidden``, set per run by
    ``SpaceConfig.decoder_hidden`` (256 by default) and kept in the checkpoint dims.
    """

    def __init__(
        self,
        latent_dim: int,
        feature_dim: int,
        hidden: int = DECODER_HIDDEN,
        generator: torch.Generator | None = None,
    ) -> None:
        super().__init__()
        widths = [latent_dim + 1, hidden, hidden, feature_dim]
        self.linears = nn.ModuleList(nn.Linear(i, o, dtype=DTYPE) for i, o in zip(widths[:-1], widths[1:]))
        for linear in self.linears:
            _fan_in_uniform_(linear, generator)

    @property
    def latent_dim(self) -> int:
        return self.linears[0].in_features - 1

    def forward(self, code: torch.Tensor, K: int) -> torch.Tensor:
        tokens = torch.arange(1, K + 1, dtype=DTYPE) / K
        batch_shape = code.shape[:-1]
        codes = code.unsqueeze(-2).expand(*batch_shape, K, code.shape[-1])
        h = torch.cat([codes, tokens.expand(*batch_shape, K).unsqueeze(-1)], dim=-1)
        for linear in self.linears[:-1]:
            h = softplus(linear(h))
        return self.linears[-1](h)


class LatentCodebook(nn.Module):
    """One learnable code c_m per training shape."""

    def __init__(self, count: int, latent_dim: int = DEFAULT_LATENT_DIM, generator: torch.Generator | None = None):
        super().__init__()
        codes = torch.randn(count, latent_dim, generator=generator, dtype=DTYPE) * CODE_INIT_STD
        self.codes = nn.Parameter(codes)

    def __len__(self) -> int:
        return int(self.codes.shape[0])

    @property
    def latent_dim(self) -> int:
        return int(self.codes.shape[1])


def mlp_forward(params: MappingMlp, z: torch.Tensor) -> torch.Tensor:
    if not torch.isfinite(z).all():
        raise NumericalError("non-finite feature passed to the mapping network")
    return params(z)


def broadcast_decode(decoder: BroadcastDecoder, code: torch.Tensor, K: int) -> torch.Tensor:
    return decoder(code, K)


# ---------------------------------------------------------------------------
# Reverse mode
# ---------------------------------------------------------------------------


@dataclass
class Tape:
    """
    Leaf tensors of one loss evaluation, grouped by role (theta, phi, Z, codes).

    The operations themselves are recorded by torch autograd while the loss
    is computed; the tape only knows which leaves to differentiate.
    """

    leaves: dict[str, list[torch.Tensor]] = field(default_factory=dict)

    @classmethod
    def watch(cls, **groups: list[torch.Tensor] | torch.Tensor) -> Tape:
        leaves = {}
        for name, tensors in groups.items():
            leaves[name] = [tensors] if isinstance(tensors, torch.Tensor) else list(tensors)
        return cls(leaves)

    def assign(self, grads: dict[str, list[torch.Tensor | None]]) -> None:
        """Store gradients on the leaves for a torch optimizer step."""
        for name, tensors in self.leaves.items():
            for tensor, grad in zip(tensors, grads[name]):
                if grad is not None:
                    tensor.grad = grad


def grad_reverse(tape: Tape, loss: torch.Tensor) -> dict[str, list[torch.Tensor | None]]:
    """Gradients of a scalar loss for every watched leaf; frozen leaves get None."""
    if loss.ndim != 0:
        raise NumericalError("reverse sweep needs a scalar loss")
    if not torch.isfinite(loss):
        raise NumericalError("non-finite loss before the reverse sweep")
    active = [(name, i, t) for name, ts in tape.leaves.items() for i, t in enumerate(ts) if t.requires_grad]
    grads = {name: [None] * len(ts) for name, ts in tape.leaves.items()}
    if not active:
        return grads
    computed = torch.autograd.grad(loss, [t for _, _, t in active], allow_unused=True)
    for (name, i, tensor), grad in zip(active, computed):
        if grad is None:
            grad = torch.zeros_like(tensor)
        if not torch.isfinite(grad).all():
            raise NumericalError(f"NaN detected in the gradient of {name}", term=name)
        grads[name][i] = grad
    return grads


# ---------------------------------------------------------------------------
# Surface evaluation
# ---------------------------------------------------------------------------


def surface_points(mlp: MappingMlp, face_features: torch.Tensor, vertices: torch.Tensor, U: torch.Tensor):
    """x = f(g(u)) for interior domain points U (m, 2); differentiable in theta, Z and U."""
    return mlp(mvc_weights_interior(vertices, U) @ face_features)


def surface_jacobians(
    mlp: MappingMlp, face_features: torch.Tensor, vertices: torch.Tensor, U: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Positions (m, 3) and Jacobians (m, 3, 2) from two forward-mode directional passes."""

    def surface(points: torch.Tensor) -> torch.Tensor:
        return surface_points(mlp, face_features, vertices, points)

    e_u = torch.zeros_like(U)
    e_u[:, 0] = 1.0
    e_v = torch.zeros_like(U)
    e_v[:, 1] = 1.0
    X, J_u = torch.func.jvp(surface, (U,), (e_u,))
    _, J_v = torch.func.jvp(surface, (U,), (e_v,))
    return X, torch.stack([J_u, J_v], dim=2)


def normals_from_jacobians(J: torch.Tensor) -> torch.Tensor:
    """Unit normals (J_u x J_v) / |J_u x J_v| for a batch of Jacobians (m, 3, 2)."""
    cross = torch.linalg.cross(J[..., 0], J[..., 1], dim=-1)
    length = torch.linalg.vector_norm(cross, dim=-1, keepdim=True)
    if torch.any(length < DEGENERATE_NORMAL):
        raise DegenerateSurfaceError("degenerate parameterization: |J_u x J_v| < 1e-12")
    return cross / length


def _face_tensors(complex: FeatureComplex, face_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    vertices = torch.as_tensor(complex.domains[face_id].vertices, dtype=DTYPE)
    return complex.Z[complex.rows(face_id)], vertices


def surface_jacobian(complex: FeatureComplex, params: MappingMlp, face_id: int, u: np.ndarray) -> torch.Tensor:
    """J (3, 2) of f o g at a strictly interior domain point."""
    if boundary_distance(complex.domains[face_id], u) <= BOUNDARY_TOLERANCE:
        raise DomainError(f"jacobian requested on the boundary of face {face_id}; inset the point first")
    features, vertices = _face_tensors(complex, face_id)
    U = torch.as_tensor(np.asarray(u, dtype=np.float64).reshape(1, 2))
    _, J = surface_jacobians(params, features, vertices, U)
    return J[0]


def surface_normal(complex: FeatureComplex, params: MappingMlp, face_id: int, u: np.ndarray) -> torch.Tensor:
    J = surface_jacobian(complex, params, face_id, u)
    return normals_from_jacobians(J.unsqueeze(0))[0]
