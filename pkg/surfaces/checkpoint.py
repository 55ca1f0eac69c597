"""
Checkpoint files.

A checkpoint is a JSON header (format version, dimensions, config echo,
seed, layout copy, final loss report, array table) followed by a newline,
the ASCII sentinel ``#BIN`` and the raw little-endian float64 arrays in the
order the header lists them: mapping-network weights (row-major), its
biases, decoder weights and biases when present, then Z or the codebook.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from surfaces.complex import FeatureComplex, build_domains
from surfaces.diffnet import DTYPE, BroadcastDecoder, MappingMlp
from surfaces.exceptions import CheckpointError
from surfaces.layout import Arc, PatchLayout, layout_from_dict, layout_to_dict

logger = logging.getLogger(__name__)

FORMAT_NAME = "npsurf-checkpoint"
FORMAT_VERSION = 1
SENTINEL = b"\n#BIN"
LITTLE_F64 = np.dtype("<f8")

SHAPE = "shape"
SPACE = "space"


@dataclass
class Checkpoint:
    kind: str
    dims: dict
    config: dict
    seed: int
    layout: dict
    arrays: dict[str, np.ndarray]
    smooth_arcs: dict[Arc, bool] = field(default_factory=dict)
    normal_signs: dict[int, float] = field(default_factory=dict)
    normalization: dict = field(default_factory=dict)
    report: dict | None = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_shape(
        cls,
        mlp: MappingMlp,
        complex: FeatureComplex,
        layout: PatchLayout,
        *,
        config: dict,
        seed: int,
        **extra,
    ) -> Checkpoint:
        arrays = _network_arrays("mlp", mlp)
        arrays["Z"] = complex.Z.detach().numpy().copy()
        dims = {**_mapping_dims(mlp), "K": complex.K}
        return cls(
            kind=SHAPE, dims=dims, config=config, seed=seed, layout=layout_to_dict(layout), arrays=arrays, **extra
        )

    @classmethod
    def from_space(
        cls,
        mlp: MappingMlp,
        decoder: BroadcastDecoder,
        codes: torch.Tensor,
        layout: PatchLayout,
        *,
        config: dict,
        seed: int,
        **extra,
    ) -> Checkpoint:
        arrays = _network_arrays("mlp", mlp)
        arrays.update(_network_arrays("decoder", decoder))
        arrays["codes"] = codes.detach().numpy().copy()
        dims = {
            **_mapping_dims(mlp),
            "K": len(layout.corner_ids),
            "latent_dim": decoder.latent_dim,
            "decoder_hidden": decoder.linears[0].out_features,
            "codes": int(codes.shape[0]),
        }
        return cls(
            kind=SPACE, dims=dims, config=config, seed=seed, layout=layout_to_dict(layout), arrays=arrays, **extra
        )

    # -- restoration --------------------------------------------------------

    def patch_layout(self) -> PatchLayout:
        return layout_from_dict(self.layout)

    def mapping(self) -> MappingMlp:
        mlp = MappingMlp(self.dims["feature_dim"], self.dims["layers"], self.dims["hidden"])
        _load_network("mlp", mlp, self.arrays)
        return mlp

    def decoder(self) -> BroadcastDecoder:
        self.require(SPACE)
        decoder = BroadcastDecoder(self.dims["latent_dim"], self.dims["feature_dim"], self.dims["decoder_hidden"])
        _load_network("decoder", decoder, self.arrays)
        return decoder

    def codes(self) -> torch.Tensor:
        self.require(SPACE)
        return torch.tensor(self.arrays["codes"], dtype=DTYPE)

    def complex(self, Z: torch.Tensor | None = None) -> FeatureComplex:
        """Feature complex over the stored layout; single-shape checkpoints default to their own Z."""
        layout = self.patch_layout()
        if Z is None:
            self.require(SHAPE)
            Z = torch.tensor(self.arrays["Z"], dtype=DTYPE)
        return FeatureComplex(
            Z=Z,
            domains={d.face_id: d for d in build_domains(layout)},
            vertex_map=dict(layout.corner_index),
            arcs=frozenset(layout.arcs),
        )

    def frame(self) -> tuple[np.ndarray, float]:
        """(center, scale) that maps the original target frame into the checkpoint frame."""
        center = np.asarray(self.normalization.get("center", [0.0, 0.0, 0.0]), dtype=np.float64)
        return center, float(self.normalization.get("scale", 1.0))

    def original_layout(self) -> PatchLayout:
        """The stored layout mapped back to the original target frame."""
        center, scale = self.frame()
        return self.patch_layout().transformed(-center * scale, 1.0 / scale)

    def to_checkpoint_frame(self, points: np.ndarray) -> np.ndarray:
        center, scale = self.frame()
        return (np.asarray(points, dtype=np.float64) - center) * scale

    def require(self, kind: str) -> None:
        if self.kind != kind:
            raise CheckpointError(f"expected a {kind} checkpoint, got a {self.kind} checkpoint")

    # -- serialization ------------------------------------------------------

    def header(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "dims": self.dims,
            "config": self.config,
            "seed": self.seed,
            "layout": self.layout,
            "smooth_arcs": [[a, b, smooth] for (a, b), smooth in sorted(self.smooth_arcs.items())],
            "normal_signs": {str(fid): sign for fid, sign in sorted(self.normal_signs.items())},
            "normalization": self.normalization,
            "report": self.report,
            "arrays": [{"name": name, "shape": list(array.shape)} for name, array in self.arrays.items()],
        }


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    header = json.dumps(checkpoint.header(), sort_keys=True).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(SENTINEL)
        for array in checkpoint.arrays.values():
            fh.write(np.ascontiguousarray(array, dtype=LITTLE_F64).tobytes(order="C"))
    logger.info("wrote %s checkpoint to %s", checkpoint.kind, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"could not read checkpoint {path}: {exc}") from exc
    split = raw.find(SENTINEL)
    if split < 0:
        raise CheckpointError(f"{path} has no {SENTINEL.strip().decode()} sentinel")
    try:
        header = json.loads(raw[:split].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"could not parse checkpoint header of {path}: {exc}") from exc
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path} is not a version {FORMAT_VERSION} checkpoint")

    payload = memoryview(raw)[split + len(SENTINEL) :]
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * LITTLE_F64.itemsize
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path} is truncated at array {entry['name']}")
        chunk = payload[offset : offset + nbytes]
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=LITTLE_F64).reshape(shape).copy()
        offset += nbytes

    return Checkpoint(
        kind=header["kind"],
        dims=header["dims"],
        config=header["config"],
        seed=header["seed"],
        layout=header["layout"],
        arrays=arrays,
        smooth_arcs={(a, b): bool(smooth) for a, b, smooth in header["smooth_arcs"]},
        normal_signs={int(fid): float(sign) for fid, sign in header["normal_signs"].items()},
        normalization=header["normalization"],
        report=header["report"],
    )


def _mapping_dims(mlp: MappingMlp) -> dict:
    return {
        "feature_dim": mlp.feature_dim,
        "layers": len(mlp.linears),
        "hidden": mlp.linears[0].out_features if len(mlp.linears) > 1 else 0,
    }


def _network_arrays(prefix: str, network) -> dict[str, np.ndarray]:
    arrays = {}
    for i, linear in enumerate(network.linears):
        arrays[f"{prefix}.weight.{i}"] = linear.weight.detach().numpy().copy()
    for i, linear in enumerate(network.linears):
        arrays[f"{prefix}.bias.{i}"] = linear.bias.detach().numpy().copy()
    return arrays


def _load_network(prefix: str, network, arrays: dict[str, np.ndarray]) -> None:
    with torch.no_grad():
        for i, linear in enumerate(network.linears):
            try:
                linear.weight.copy_(torch.from_numpy(arrays[f"{prefix}.weight.{i}"]))
                linear.bias.copy_(torch.from_numpy(arrays[f"{prefix}.bias.{i}"]))
            except (KeyError, RuntimeError) as exc:
                raise CheckpointError(f"checkpoint does not match the {prefix} network: {exc}") from exc
