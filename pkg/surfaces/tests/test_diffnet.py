from __future__ import annotations

import numpy as np
import torch
from django.test import SimpleTestCase

from npsurf.tasks.synthetic_shapes import cube_layout
from surfaces.complex import build_complex
from surfaces.diffnet import (
    BroadcastDecoder,
    LatentCodebook,
    MappingMlp,
    Tape,
    grad_reverse,
    mlp_forward,
    normals_from_jacobians,
    surface_jacobian,
    surface_jacobians,
    surface_normal,
    surface_points,
)
from surfaces.exceptions import DegenerateSurfaceError, DomainError, NumericalError


class NetworkTests(SimpleTestCase):
    def test_mapping_network_shapes(self):
        mlp = MappingMlp(5, layers=3, hidden=7, generator=torch.Generator().manual_seed(0))
        self.assertEqual(len(mlp.linears), 3)
        self.assertEqual(mlp.feature_dim, 5)
        self.assertEqual(tuple(mlp(torch.zeros(4, 5, dtype=torch.float64)).shape), (4, 3))

    def test_single_layer_is_affine(self):
        mlp = MappingMlp(3, layers=1)
        self.assertEqual(len(mlp.linears), 1)

    def test_layers_must_be_positive(self):
        with self.assertRaises(ValueError):
            MappingMlp(3, layers=0)

    def test_same_generator_seed_same_weights(self):
        a = MappingMlp(4, 3, 8, torch.Generator().manual_seed(9))
        b = MappingMlp(4, 3, 8, torch.Generator().manual_seed(9))
        for la, lb in zip(a.linears, b.linears):
            torch.testing.assert_close(la.weight, lb.weight, rtol=0.0, atol=0.0)

    def test_decoder_shapes(self):
        decoder = BroadcastDecoder(3, 6, hidden=8)
        self.assertEqual(decoder.latent_dim, 3)
        code = torch.zeros(3, dtype=torch.float64)
        self.assertEqual(tuple(decoder(code, 8).shape), (8, 6))
        batch = torch.zeros(5, 3, dtype=torch.float64)
        self.assertEqual(tuple(decoder(batch, 8).shape), (5, 8, 6))

    def test_decoder_tokens_tell_vertices_apart(self):
        """With one shared code every vertex still gets its own feature from its positional token."""
        decoder = BroadcastDecoder(2, 4, hidden=8, generator=torch.Generator().manual_seed(0))
        features = decoder(torch.ones(2, dtype=torch.float64), 3)
        self.assertFalse(torch.allclose(features[0], features[1]))

    def test_codebook(self):
        book = LatentCodebook(4, 3, torch.Generator().manual_seed(0))
        self.assertEqual(len(book), 4)
        self.assertEqual(book.latent_dim, 3)
        self.assertLess(float(book.codes.abs().max()), 0.1)

    def test_non_finite_feature(self):
        mlp = MappingMlp(2, 2, 4)
        with self.assertRaises(NumericalError):
            mlp_forward(mlp, torch.tensor([[float("nan"), 0.0]], dtype=torch.float64))


class JacobianTests(SimpleTestCase):
    def setUp(self):
        generator = torch.Generator().manual_seed(2)
        self.complex = build_complex(cube_layout(), 4, generator)
        self.mlp = MappingMlp(4, 3, 16, generator)
        self.face = 1
        domain = self.complex.domains[self.face]
        self.vertices = torch.as_tensor(domain.vertices)
        self.features = self.complex.Z[self.complex.rows(self.face)]
        self.U = torch.tensor([[0.1, 0.2], [-0.3, 0.05], [0.0, -0.4]], dtype=torch.float64)

    def test_forward_mode_matches_finite_differences(self):
        _, J = surface_jacobians(self.mlp, self.features, self.vertices, self.U)
        h = 1e-6
        with torch.no_grad():
            for k in range(2):
                step = torch.zeros_like(self.U)
                step[:, k] = h
                plus = surface_points(self.mlp, self.features, self.vertices, self.U + step)
                minus = surface_points(self.mlp, self.features, self.vertices, self.U - step)
                np.testing.assert_allclose(
                    J[..., k].detach().numpy(), ((plus - minus) / (2 * h)).numpy(), rtol=1e-5, atol=1e-9
                )

    def test_jacobian_is_differentiable_in_features(self):
        """Reverse-mode gradients flow through the forward-mode Jacobian to the complex features."""
        _, J = surface_jacobians(self.mlp, self.features, self.vertices, self.U)
        (J**2).sum().backward()
        self.assertIsNotNone(self.complex.Z.grad)
        self.assertTrue(torch.isfinite(self.complex.Z.grad).all())
        self.assertGreater(float(self.complex.Z.grad.abs().sum()), 0.0)

    def test_normals_are_unit_length(self):
        _, J = surface_jacobians(self.mlp, self.features, self.vertices, self.U)
        normals = normals_from_jacobians(J)
        np.testing.assert_allclose(torch.linalg.vector_norm(normals, dim=-1).detach().numpy(), 1.0)

    def test_point_helpers(self):
        J = surface_jacobian(self.complex, self.mlp, self.face, np.array([0.1, 0.2]))
        self.assertEqual(tuple(J.shape), (3, 2))
        n = surface_normal(self.complex, self.mlp, self.face, np.array([0.1, 0.2]))
        self.assertAlmostEqual(float(torch.linalg.vector_norm(n)), 1.0)

    def test_boundary_point_is_rejected(self):
        vertex = self.complex.domains[self.face].vertices[0]
        with self.assertRaises(DomainError):
            surface_jacobian(self.complex, self.mlp, self.face, vertex)

    def test_rank_deficient_jacobian(self):
        J = torch.zeros(1, 3, 2, dtype=torch.float64)
        J[0, 0, 0] = 1.0
        J[0, 0, 1] = 2.0
        with self.assertRaises(DegenerateSurfaceError):
            normals_from_jacobians(J)


class ReverseModeTests(SimpleTestCase):
    def test_gradients_match_autograd(self):
        mlp = MappingMlp(3, 2, 4, torch.Generator().manual_seed(0))
        Z = torch.randn(5, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(1)).requires_grad_(True)
        tape = Tape.watch(theta=list(mlp.parameters()), Z=Z)
        loss = mlp(Z).pow(2).sum()
        grads = grad_reverse(tape, loss)
        expected = torch.autograd.grad(mlp(Z).pow(2).sum(), Z)[0]
        torch.testing.assert_close(grads["Z"][0], expected)
        self.assertEqual(len(grads["theta"]), 4)

    def test_frozen_leaves_get_none(self):
        frozen = torch.ones(3, dtype=torch.float64)
        free = torch.ones(3, dtype=torch.float64, requires_grad=True)
        grads = grad_reverse(Tape.watch(codes=frozen, Z=free), (free * 2.0).sum())
        self.assertIsNone(grads["codes"][0])
        torch.testing.assert_close(grads["Z"][0], torch.full((3,), 2.0, dtype=torch.float64))

    def test_assign_sets_grad(self):
        free = torch.ones(2, dtype=torch.float64, requires_grad=True)
        tape = Tape.watch(Z=free)
        tape.assign(grad_reverse(tape, free.sum()))
        torch.testing.assert_close(free.grad, torch.ones(2, dtype=torch.float64))

    def test_non_scalar_and_non_finite_losses(self):
        free = torch.ones(2, dtype=torch.float64, requires_grad=True)
        tape = Tape.watch(Z=free)
        with self.assertRaises(NumericalError):
            grad_reverse(tape, free * 2.0)
        with self.assertRaises(NumericalError):
            grad_reverse(tape, (free * float("inf")).sum())
