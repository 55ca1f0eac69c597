"""
Fitting drivers.

``fit_shape`` optimizes one feature complex and the mapping network against a
labelled target. ``train_space`` learns a decoder and one latent code per
training shape instead of free features. The remaining drivers work in the
latent space of a trained checkpoint: interpolation, handle-based editing and
fitting an unlabelled point cloud.

Every driver writes one JSON object per optimizer step to an optional log
stream (iteration, each loss term, total, learning rate, phase).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TextIO

import numpy as np
import torch
from scipy.spatial import cKDTree
from torch.optim.lr_scheduler import LambdaLR

from surfaces.checkpoint import SPACE, Checkpoint
from surfaces.complex import FeatureComplex, build_complex
from surfaces.config import FitConfig, SpaceConfig, config_to_dict
from surfaces.diffnet import (
    DTYPE,
    BroadcastDecoder,
    LatentCodebook,
    MappingMlp,
    Tape,
    configure_runtime,
    grad_reverse,
    normals_from_jacobians,
    surface_jacobians,
    surface_points,
)
from surfaces.exceptions import ConfigError, FitAborted, LayoutError, NumericalError, SampleError
from surfaces.layout import Arc, LabeledSamples, PatchLayout
from surfaces.losses import (
    LossReport,
    LossWeights,
    anchor_loss,
    aspect_loss,
    code_regularizer,
    fair_loss,
    normal_loss,
    smooth_loss,
    surface_loss,
    total_loss,
    uniform_loss,
)
from surfaces.sampling import (
    allocate_per_face,
    boundary_pairs,
    classify_arcs,
    pair_closest,
    sample_arc_polylines,
    sample_domain,
)

logger = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "SpaceConfig",
    "HandleConstraint",
    "annealed_lr",
    "fair_decay",
    "space_lr",
    "fit_shape",
    "train_space",
    "interpolate_codes",
    "optimize_code_handles",
    "load_constraints",
    "nearest_code",
    "fit_cloud",
    "decode_checkpoint",
    "training_code",
]

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
LATENT_LR = 0.005
LATENT_REG = 1e-3
CLOUD_COSINE = 0.7
CLOUD_INIT_SUBSAMPLE = 2048
LOG_EVERY = 100


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


def annealed_lr(lr_init: float, lr_final: float, iteration: int, iterations: int) -> float:
    """Cosine annealing from lr_init at iteration 0 to lr_final at the last iteration."""
    if iterations <= 0:
        return lr_init
    progress = min(max(iteration / iterations, 0.0), 1.0)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * progress))


def fair_decay(config: FitConfig, iteration: int) -> float:
    """Multiplier on lambda_fair: 1 until fair_decay_start, then log-linear down to the floor."""
    if iteration < config.fair_decay_start:
        return 1.0
    progress = min((iteration - config.fair_decay_start) / config.fair_decay_span, 1.0)
    return config.fair_decay_floor**progress


def space_lr(config: SpaceConfig, epoch: int) -> float:
    if epoch >= config.epochs - config.final_phase_epochs:
        return config.lr_final_phase
    return config.lr


# ---------------------------------------------------------------------------
# Shared term evaluation
# ---------------------------------------------------------------------------


@dataclass
class _Target:
    """One shape's samples with the per-face kd-trees built once per run."""

    samples: LabeledSamples
    trees: dict[int, cKDTree]
    areas: dict[int, float]
    anchors: torch.Tensor
    classification: dict[Arc, bool]

    @classmethod
    def build(cls, samples: LabeledSamples) -> _Target:
        return cls(
            samples=samples,
            trees={fid: cKDTree(samples.bucket(fid)[0]) for fid in samples.buckets},
            areas=samples.patch_areas(),
            anchors=torch.as_tensor(samples.layout.corner_positions, dtype=DTYPE),
            classification=classify_arcs(samples),
        )


def _face_jacobians(complex: FeatureComplex, mlp: MappingMlp, face_id: int, U: np.ndarray):
    vertices = torch.as_tensor(complex.domains[face_id].vertices, dtype=DTYPE)
    return surface_jacobians(mlp, complex.Z[complex.rows(face_id)], vertices, torch.as_tensor(U, dtype=DTYPE))


def _signed_normals(
    complex: FeatureComplex, mlp: MappingMlp, faces: np.ndarray, U: np.ndarray, signs: dict[int, float]
) -> torch.Tensor:
    """Oriented normals at parameter points spread over several faces, in input order."""
    normals = torch.zeros(len(faces), 3, dtype=DTYPE)
    for fid in np.unique(faces):
        idx = np.flatnonzero(faces == fid)
        _, J = _face_jacobians(complex, mlp, int(fid), U[idx])
        normals = normals.index_put((torch.as_tensor(idx),), normals_from_jacobians(J) * signs.get(int(fid), 1.0))
    return normals


def _shape_terms(
    complex: FeatureComplex,
    mlp: MappingMlp,
    target: _Target,
    config: FitConfig | SpaceConfig,
    batch_points: int,
    rng: np.random.Generator,
    signs: dict[int, float],
    full: bool,
) -> dict[str, torch.Tensor]:
    """
    Loss terms of one shape for one step.

    During warm-up only the anchor and uniformity terms are evaluated. The
    first full evaluation fixes the normal sign of every face that has none
    yet by majority vote against the target normals.
    """
    layout = target.samples.layout
    terms = {"anchor": anchor_loss(mlp(complex.Z), target.anchors)}

    counts = allocate_per_face(layout, batch_points, target.areas)
    jacobians, face_index = [], []
    x_pairs, n_pairs, p_pairs, tn_pairs = [], [], [], []
    for fid, count in counts.items():
        U = sample_domain(complex.domains[fid], count, rng)
        X, J = _face_jacobians(complex, mlp, fid, U)
        jacobians.append(J)
        face_index.append(torch.full((count,), fid))
        if not full:
            continue

        bucket_points, bucket_normals = target.samples.bucket(fid)
        subset = rng.choice(len(bucket_points), size=min(count, len(bucket_points)), replace=False)
        pairs = pair_closest(
            X.detach().numpy(),
            bucket_points,
            bucket_normals,
            face_id=fid,
            u=U,
            target_tree=target.trees[fid],
            reverse_index=np.sort(subset),
        )
        normals = normals_from_jacobians(J)
        if fid not in signs:
            forward = pairs.surface_index[: len(U)]
            votes = (normals.detach().numpy()[forward] * pairs.target_normals[: len(U)]).sum()
            signs[fid] = 1.0 if votes >= 0.0 else -1.0
            logger.debug("normal sign of face %d fixed to %+.0f", fid, signs[fid])
        index = torch.as_tensor(pairs.surface_index)
        x_pairs.append(X[index])
        n_pairs.append(normals[index] * signs[fid])
        p_pairs.append(torch.as_tensor(pairs.target_points))
        tn_pairs.append(torch.as_tensor(pairs.target_normals))

    terms["uniform"] = uniform_loss(torch.cat(jacobians), torch.cat(face_index), reduction="mean")
    if not full:
        return terms

    target_normals = torch.cat(tn_pairs)
    terms["surface"] = surface_loss(
        torch.cat(x_pairs),
        torch.cat(p_pairs),
        target_normals,
        beta=config.weights.beta_point_to_plane,
        reduction="mean",
    )
    terms["normal"] = normal_loss(target_normals, torch.cat(n_pairs), reduction="mean")

    pairs = boundary_pairs(layout, complex, target.classification, config.samples_per_edge, rng, config.boundary_eps)
    smooth = pairs.smooth
    if smooth.any():
        n_i = _signed_normals(complex, mlp, pairs.face_i[smooth], pairs.u_i[smooth], signs)
        n_j = _signed_normals(complex, mlp, pairs.face_j[smooth], pairs.u_j[smooth], signs)
        terms["smooth"] = smooth_loss(n_i, n_j, torch.ones(len(n_i), dtype=torch.bool), reduction="mean")
    else:
        terms["smooth"] = torch.zeros((), dtype=DTYPE)

    polylines = sample_arc_polylines(complex, mlp, layout.arcs, config.fair_samples)
    terms["fair"] = fair_loss(polylines, reduction="mean")
    aspect_faces = [(complex.rows(face.id), list(layout.boundary_lengths[face.id])) for face in layout.faces]
    terms["aspect"] = aspect_loss(complex.Z, aspect_faces)
    return terms


def _check_topology(reference: PatchLayout, other: PatchLayout) -> None:
    if reference.corner_ids != other.corner_ids or reference.faces != other.faces:
        raise LayoutError("samples were normalized against a layout with a different topology")


def _check_batch(layout: PatchLayout, batch_points: int) -> None:
    if batch_points < len(layout.faces):
        raise ConfigError(f"batch of {batch_points} points cannot cover {len(layout.faces)} faces")


def _snapshot(tensors: list[torch.Tensor]) -> list[torch.Tensor]:
    return [t.detach().clone() for t in tensors]


def _restore(tensors: list[torch.Tensor], snapshot: list[torch.Tensor]) -> None:
    with torch.no_grad():
        for tensor, saved in zip(tensors, snapshot):
            tensor.copy_(saved)


def _write_record(log: TextIO | None, report: LossReport, lr: float, phase: str) -> None:
    if log is None:
        return
    log.write(json.dumps({**report.as_record(), "lr": lr, "phase": phase}, sort_keys=True) + "\n")


def _normalization(samples: LabeledSamples) -> dict:
    return {"center": [float(c) for c in samples.center], "scale": float(samples.scale)}


# ---------------------------------------------------------------------------
# Single shape
# ---------------------------------------------------------------------------


def fit_shape(
    config: FitConfig, layout: PatchLayout, samples: LabeledSamples, log: TextIO | None = None
) -> Checkpoint:
    """
    Fit one feature complex and the mapping network to labelled samples.

    ``samples`` carries the layout normalized into the sample frame; ``layout``
    is the layout as read from disk and only checked for matching topology.
    Raises FitAborted, carrying the parameters of the last finite step, when a
    loss term or gradient stops being finite.
    """
    if {face.id for face in layout.faces} != set(samples.buckets):
        raise LayoutError("samples were prepared for a different layout")
    norm_layout = samples.layout
    _check_batch(norm_layout, config.batch_points)
    configure_runtime(config.threads, config.deterministic)

    generator = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    complex = build_complex(norm_layout, config.feature_dim, generator, anchored=config.anchored_complex)
    mlp = MappingMlp(complex.D, config.layers, config.hidden, generator)
    target = _Target.build(samples)

    leaves = list(mlp.parameters()) + ([complex.Z] if complex.Z.requires_grad else [])
    optimizer = torch.optim.Adam(leaves, lr=config.lr_init, betas=ADAM_BETAS, eps=ADAM_EPS)
    scheduler = LambdaLR(
        optimizer, lambda it: annealed_lr(config.lr_init, config.lr_final, it, config.iterations) / config.lr_init
    )
    tape = Tape.watch(theta=list(mlp.parameters()), Z=complex.Z)
    signs: dict[int, float] = {}
    extra = {"smooth_arcs": target.classification, "normal_signs": signs, "normalization": _normalization(samples)}

    logger.info(
        "fitting %d faces, K=%d, D=%d for %d iterations",
        len(norm_layout.faces),
        complex.K,
        complex.D,
        config.iterations,
    )
    report = None
    for iteration in range(config.iterations):
        full = iteration >= config.warmup_iters
        weights = replace(config.weights, lambda_fair=config.weights.lambda_fair * fair_decay(config, iteration))
        snapshot = _snapshot(leaves)
        try:
            terms = _shape_terms(complex, mlp, target, config, config.batch_points, rng, signs, full)
            loss, report = total_loss(weights, terms, iteration)
            grads = grad_reverse(tape, loss)
        except NumericalError as exc:
            _restore(leaves, snapshot)
            checkpoint = Checkpoint.from_shape(
                mlp, complex, norm_layout, config=config_to_dict(config), seed=config.seed, **extra
            )
            message = f"fit aborted at iteration {iteration}: {exc}"
            raise FitAborted(message, checkpoint=checkpoint, term=exc.term) from exc
        tape.assign(grads)
        optimizer.step()
        lr = scheduler.get_last_lr()[0]
        scheduler.step()
        _write_record(log, report, lr, "full" if full else "warmup")
        if iteration % LOG_EVERY == 0:
            logger.info("iteration %d: total %.6g", iteration, report.total)

    if report is None:
        terms = _shape_terms(complex, mlp, target, config, config.batch_points, rng, signs, full=False)
        _, report = total_loss(config.weights, terms, 0)
    for face in norm_layout.faces:
        signs.setdefault(face.id, 1.0)

    logger.info("fit finished: total %.6g", report.total)
    return Checkpoint.from_shape(
        mlp, complex, norm_layout, config=config_to_dict(config), seed=config.seed, report=report.as_record(), **extra
    )


# ---------------------------------------------------------------------------
# Shape space
# ---------------------------------------------------------------------------


def train_space(
    config: SpaceConfig,
    layout: PatchLayout,
    dataset: list[LabeledSamples],
    codes: np.ndarray | None = None,
    log: TextIO | None = None,
) -> Checkpoint:
    """
    Jointly train the mapping network, the broadcast decoder and one code per shape.

    Every shape of ``dataset`` must be normalized into one shared frame and
    share the layout topology. Passing ``codes`` (one row per shape) freezes
    them: only the networks learn, mapping the supplied codes to shapes.
    """
    if not dataset:
        raise SampleError("the training set is empty")
    if config.batch_shapes > len(dataset):
        raise ConfigError(f"batch_shapes={config.batch_shapes} exceeds the {len(dataset)} training shapes")
    template = dataset[0].layout
    if {face.id for face in layout.faces} != set(dataset[0].buckets):
        raise LayoutError("samples were prepared for a different layout")
    for samples in dataset[1:]:
        _check_topology(template, samples.layout)
    _check_batch(template, config.points_per_shape)
    configure_runtime(config.threads, config.deterministic)

    generator = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    complex = build_complex(template, config.feature_dim, generator)
    mlp = MappingMlp(config.feature_dim, config.layers, config.hidden, generator)
    decoder = BroadcastDecoder(config.latent_dim, config.feature_dim, config.decoder_hidden, generator)
    if codes is None:
        code_table = LatentCodebook(len(dataset), config.latent_dim, generator).codes
    else:
        code_table = torch.as_tensor(np.asarray(codes, dtype=np.float64))
        if code_table.shape != (len(dataset), config.latent_dim):
            expected = (len(dataset), config.latent_dim)
            raise ConfigError(f"expected codes of shape {expected}, got {tuple(code_table.shape)}")
    frozen = not code_table.requires_grad
    targets = [_Target.build(samples) for samples in dataset]

    groups = [{"params": list(mlp.parameters())}, {"params": list(decoder.parameters())}]
    if not frozen:
        groups.append({"params": [code_table]})
    leaves = [p for group in groups for p in group["params"]]
    optimizer = torch.optim.Adam(groups, lr=config.lr, betas=ADAM_BETAS, eps=ADAM_EPS)
    tape = Tape.watch(theta=list(mlp.parameters()), phi=list(decoder.parameters()), codes=code_table)
    signs: dict[int, float] = {}
    extra = {
        "smooth_arcs": targets[0].classification,
        "normal_signs": signs,
        "normalization": _normalization(dataset[0]),
    }
    echo = {**config_to_dict(config), "frozen_codes": frozen}

    logger.info("training a shape space over %d shapes for %d epochs", len(dataset), config.epochs)
    report = None
    step = 0
    for epoch in range(config.epochs):
        lr = space_lr(config, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch_shapes):
            batch = order[start : start + config.batch_shapes]
            full = step >= config.warmup_iters
            snapshot = _snapshot(leaves)
            try:
                features = decoder(code_table[torch.as_tensor(batch)], complex.K)
                shape_terms = [
                    _shape_terms(
                        complex.with_features(features[i]),
                        mlp,
                        targets[m],
                        config,
                        config.points_per_shape,
                        rng,
                        signs,
                        full,
                    )
                    for i, m in enumerate(batch)
                ]
                terms = {name: torch.stack([t[name] for t in shape_terms]).mean() for name in shape_terms[0]}
                if not frozen:
                    terms["reg"] = code_regularizer(code_table[torch.as_tensor(batch)])
                loss, report = total_loss(config.weights, terms, step)
                grads = grad_reverse(tape, loss)
            except NumericalError as exc:
                _restore(leaves, snapshot)
                checkpoint = Checkpoint.from_space(
                    mlp, decoder, code_table, template, config=echo, seed=config.seed, **extra
                )
                message = f"training aborted at step {step}: {exc}"
                raise FitAborted(message, checkpoint=checkpoint, term=exc.term) from exc
            tape.assign(grads)
            optimizer.step()
            _write_record(log, report, lr, "full" if full else "warmup")
            step += 1
        logger.info("epoch %d: total %.6g", epoch, report.total if report else float("nan"))

    for face in template.faces:
        signs.setdefault(face.id, 1.0)
    return Checkpoint.from_space(
        mlp,
        decoder,
        code_table,
        template,
        config=echo,
        seed=config.seed,
        report=report.as_record() if report else None,
        **extra,
    )


def _decode(checkpoint: Checkpoint, code: torch.Tensor, decoder: BroadcastDecoder | None = None) -> FeatureComplex:
    decoder = decoder or checkpoint.decoder()
    return checkpoint.complex(decoder(code, checkpoint.dims["K"]))


def training_code(checkpoint: Checkpoint, code_id: int) -> torch.Tensor:
    codes = checkpoint.codes()
    if not 0 <= code_id < len(codes):
        raise ConfigError(f"code id {code_id} out of range 0..{len(codes) - 1}")
    return codes[code_id]


def interpolate_codes(checkpoint: Checkpoint, id_a: int, id_b: int, steps: int) -> list[FeatureComplex]:
    """Complexes decoded from (1 - t) c_a + t c_b at ``steps`` evenly spaced t in [0, 1]."""
    if steps < 1:
        raise ConfigError("interpolation needs at least one step")
    c_a, c_b = training_code(checkpoint, id_a), training_code(checkpoint, id_b)
    decoder = checkpoint.decoder()
    ts = [0.0] if steps == 1 else [k / (steps - 1) for k in range(steps)]
    with torch.no_grad():
        return [_decode(checkpoint, (1.0 - t) * c_a + t * c_b, decoder) for t in ts]


def decode_checkpoint(checkpoint: Checkpoint, code: torch.Tensor | np.ndarray) -> Checkpoint:
    """Single-shape checkpoint of the surface a shape-space checkpoint decodes from ``code``."""
    checkpoint.require(SPACE)
    code = torch.as_tensor(np.asarray(code, dtype=np.float64))
    with torch.no_grad():
        complex = _decode(checkpoint, code)
    return Checkpoint.from_shape(
        checkpoint.mapping(),
        complex,
        checkpoint.patch_layout(),
        config={**checkpoint.config, "code": code.tolist()},
        seed=checkpoint.seed,
        smooth_arcs=dict(checkpoint.smooth_arcs),
        normal_signs=dict(checkpoint.normal_signs),
        normalization=dict(checkpoint.normalization),
    )


# ---------------------------------------------------------------------------
# Latent-space optimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HandleConstraint:
    """Move the center of gravity of the patches in ``face_ids`` to ``target``."""

    face_ids: tuple[int, ...]
    target: np.ndarray


def load_constraints(path: str | Path, layout: PatchLayout) -> list[HandleConstraint]:
    """Read ``[{"face_ids": [...], "target": [x, y, z]}, ...]``."""
    try:
        entries = json.loads(Path(path).read_text())
        constraints = [
            HandleConstraint(tuple(int(f) for f in e["face_ids"]), np.asarray(e["target"], dtype=np.float64))
            for e in entries
        ]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"could not read constraints {path}: {exc}") from exc
    known = {face.id for face in layout.faces}
    for constraint in constraints:
        if not constraint.face_ids or not set(constraint.face_ids) <= known:
            raise ConfigError(f"constraint references unknown faces {list(constraint.face_ids)}")
        if constraint.target.shape != (3,):
            raise ConfigError("constraint targets must be 3-vectors")
    return constraints


def _latent_step(
    optimizer: torch.optim.Optimizer, tape: Tape, terms: dict[str, torch.Tensor], weights: LossWeights, iteration: int
) -> LossReport:
    loss, report = total_loss(weights, terms, iteration)
    tape.assign(grad_reverse(tape, loss))
    optimizer.step()
    return report


def _frozen_networks(checkpoint: Checkpoint) -> tuple[MappingMlp, BroadcastDecoder]:
    checkpoint.require(SPACE)
    return checkpoint.mapping().requires_grad_(False), checkpoint.decoder().requires_grad_(False)


def optimize_code_handles(
    checkpoint: Checkpoint,
    constraints: list[HandleConstraint],
    code: torch.Tensor | None = None,
    *,
    iterations: int = 200,
    lr: float = LATENT_LR,
    reg: float = LATENT_REG,
    samples_per_face: int = 256,
    seed: int = 0,
    log: TextIO | None = None,
) -> tuple[torch.Tensor, LossReport | None]:
    """
    Edit a shape by moving patch centers of gravity, optimizing only the latent code.

    The loss is sum_i |cog_i - p_i| + reg * |c|; networks stay frozen.
    """
    mlp, decoder = _frozen_networks(checkpoint)
    K = checkpoint.dims["K"]
    code = (code if code is not None else checkpoint.codes()[0]).detach().clone().requires_grad_(True)
    optimizer = torch.optim.Adam([code], lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)
    tape = Tape.watch(codes=code)
    weights = LossWeights(lambda_reg=reg)
    rng = np.random.default_rng(seed)
    template = checkpoint.complex(torch.zeros(K, checkpoint.dims["feature_dim"], dtype=DTYPE))

    report = None
    for iteration in range(iterations):
        complex = template.with_features(decoder(code, K))
        terms = {"reg": code_regularizer(code)}
        if constraints:
            gaps = []
            for constraint in constraints:
                points = []
                for fid in constraint.face_ids:
                    U = torch.as_tensor(sample_domain(complex.domains[fid], samples_per_face, rng))
                    vertices = torch.as_tensor(complex.domains[fid].vertices, dtype=DTYPE)
                    points.append(surface_points(mlp, complex.Z[complex.rows(fid)], vertices, U))
                cog = torch.cat(points).mean(dim=0)
                gaps.append(torch.linalg.vector_norm(cog - torch.as_tensor(constraint.target)))
            terms["handle"] = torch.stack(gaps).sum()
        report = _latent_step(optimizer, tape, terms, weights, iteration)
        _write_record(log, report, lr, "edit")
    logger.info("code optimized against %d handles", len(constraints))
    return code.detach(), report


def nearest_code(
    checkpoint: Checkpoint, points: np.ndarray, subsample: int = CLOUD_INIT_SUBSAMPLE, seed: int = 0
) -> int:
    """Index of the training code whose decoded surface has the smallest one-sided chamfer to ``points``."""
    mlp, decoder = _frozen_networks(checkpoint)
    rng = np.random.default_rng(seed)
    cloud = points[rng.choice(len(points), size=min(subsample, len(points)), replace=False)]
    codes = checkpoint.codes()
    template = checkpoint.complex(torch.zeros(checkpoint.dims["K"], checkpoint.dims["feature_dim"], dtype=DTYPE))
    per_face = max(1, subsample // len(template.domains))

    best, best_distance = 0, math.inf
    with torch.no_grad():
        for m in range(len(codes)):
            complex = template.with_features(decoder(codes[m], checkpoint.dims["K"]))
            surface = []
            for fid, domain in complex.domains.items():
                U = torch.as_tensor(sample_domain(domain, per_face, rng))
                vertices = torch.as_tensor(domain.vertices, dtype=DTYPE)
                surface.append(surface_points(mlp, complex.Z[complex.rows(fid)], vertices, U))
            distances, _ = cKDTree(torch.cat(surface).numpy()).query(cloud)
            if distances.mean() < best_distance:
                best, best_distance = m, float(distances.mean())
    logger.info("closest training code %d (mean distance %.6g)", best, best_distance)
    return best


def fit_cloud(
    checkpoint: Checkpoint,
    points: np.ndarray,
    normals: np.ndarray,
    *,
    iterations: int = 300,
    lr: float = LATENT_LR,
    reg: float = LATENT_REG,
    batch_points: int = 2000,
    cosine_threshold: float = CLOUD_COSINE,
    seed: int = 0,
    log: TextIO | None = None,
) -> tuple[torch.Tensor, LossReport | None]:
    """
    Fit an unlabelled oriented point cloud by optimizing a latent code only.

    The code starts at the closest training code; correspondences are global
    nearest neighbours and pairs whose normals disagree (cosine <= threshold)
    are dropped, which is what keeps partial scans from pulling the unseen side.
    """
    points = np.asarray(points, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    lengths = np.linalg.norm(normals, axis=1)
    if len(points) == 0 or np.any(lengths < 1e-12):
        raise SampleError("the point cloud is empty or has degenerate normals")
    normals = normals / lengths[:, None]

    mlp, decoder = _frozen_networks(checkpoint)
    K = checkpoint.dims["K"]
    rng = np.random.default_rng(seed)
    start = nearest_code(checkpoint, points, seed=seed)
    code = checkpoint.codes()[start].clone().requires_grad_(True)
    optimizer = torch.optim.Adam([code], lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)
    tape = Tape.watch(codes=code)
    weights = LossWeights(lambda_surface=1.0, lambda_normal=1.0, lambda_reg=reg)
    template = checkpoint.complex(torch.zeros(K, checkpoint.dims["feature_dim"], dtype=DTYPE))
    layout = checkpoint.patch_layout()
    _check_batch(layout, batch_points)
    counts = allocate_per_face(layout, batch_points, {fid: d.area for fid, d in template.domains.items()})
    tree = cKDTree(points)

    report = None
    for iteration in range(iterations):
        complex = template.with_features(decoder(code, K))
        X, N = [], []
        for fid, count in counts.items():
            positions, J = _face_jacobians(complex, mlp, fid, sample_domain(complex.domains[fid], count, rng))
            X.append(positions)
            N.append(normals_from_jacobians(J) * checkpoint.normal_signs.get(fid, 1.0))
        X, N = torch.cat(X), torch.cat(N)

        subset = np.sort(rng.choice(len(points), size=min(batch_points, len(points)), replace=False))
        pairs = pair_closest(X.detach().numpy(), points, normals, target_tree=tree, reverse_index=subset)
        pairs = pairs.agreeing(N.detach().numpy(), cosine_threshold)
        index = torch.as_tensor(pairs.surface_index)
        target_points = torch.as_tensor(pairs.target_points)
        target_normals = torch.as_tensor(pairs.target_normals)
        terms = {
            "surface": surface_loss(X[index], target_points, target_normals, weights.beta_point_to_plane, "mean"),
            "normal": normal_loss(target_normals, N[index], reduction="mean"),
            "reg": code_regularizer(code),
        }
        report = _latent_step(optimizer, tape, terms, weights, iteration)
        _write_record(log, report, lr, "cloud")
    logger.info("cloud fit finished after %d iterations", iterations)
    return code.detach(), report
