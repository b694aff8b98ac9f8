"""Whole-model assembly: configuration, parameters, forward pass, checkpoints.

A model is (ModelConfig, ModelParams). Every parameter shape is a closed-form
function of the config, so a shape audit can enumerate and check the full
set, and checkpoints can be validated structurally before any arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from danet.layers import (
    classification_head,
    dual_attention_block,
    time_block_partition_embed,
)
from danet.tensor import ShapeError, Tensor, assert_all_finite

__all__ = [
    "ModelConfig",
    "ModelParams",
    "expected_param_shapes",
    "expected_stage_lengths",
    "init_params",
    "load_checkpoint",
    "model_forward",
    "save_checkpoint",
]

SEWA_REDUCTION_WIDTH = 4
INIT_STD = 0.02
INIT_CLIP = 2.0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    Defaults follow the published configuration: four stages that each merge
    4 neighbouring time-blocks, window size 64, widths 96/192/384/768 with
    3/6/12/6 heads and 2/2/6/2 blocks. ``top_u_factor`` controls how many
    queries each window keeps: u = min(W, ceil(factor * ln W)) for effective
    window W.
    """

    num_classes: int
    num_stages: int = 4
    merge_factor: int = 4
    window_size: int = 64
    channel_schedule: tuple[int, ...] = (96, 192, 384, 768)
    heads_schedule: tuple[int, ...] = (3, 6, 12, 6)
    blocks_schedule: tuple[int, ...] = (2, 2, 6, 2)
    top_u_factor: float = 5.0
    mlp_ratio: int = 4
    reduction_width: int = SEWA_REDUCTION_WIDTH

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_stages < 1:
            raise ValueError(f"num_stages must be >= 1, got {self.num_stages}")
        if self.merge_factor < 2:
            raise ValueError(f"merge_factor must be >= 2, got {self.merge_factor}")
        if self.window_size < 1:
            raise ValueError(f"window_size must be >= 1, got {self.window_size}")
        if self.mlp_ratio < 1 or self.reduction_width < 1:
            raise ValueError("mlp_ratio and reduction_width must be >= 1")
        if self.top_u_factor <= 0:
            raise ValueError(f"top_u_factor must be > 0, got {self.top_u_factor}")
        for name in ("channel_schedule", "heads_schedule", "blocks_schedule"):
            schedule = getattr(self, name)
            if len(schedule) != self.num_stages:
                raise ValueError(
                    f"{name} has {len(schedule)} entries for {self.num_stages} stages"
                )
            if any(n < 1 for n in schedule):
                raise ValueError(f"{name} entries must be >= 1")
        for c, h in zip(self.channel_schedule, self.heads_schedule):
            if c % h:
                raise ValueError(f"stage width {c} not divisible by {h} heads")

    @property
    def granule(self) -> int:
        """Input length must be a multiple of this: merge_factor ** num_stages."""
        return self.merge_factor**self.num_stages

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "num_stages": self.num_stages,
            "merge_factor": self.merge_factor,
            "window_size": self.window_size,
            "channel_schedule": list(self.channel_schedule),
            "heads_schedule": list(self.heads_schedule),
            "blocks_schedule": list(self.blocks_schedule),
            "top_u_factor": self.top_u_factor,
            "mlp_ratio": self.mlp_ratio,
            "reduction_width": self.reduction_width,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        kwargs = dict(payload)
        for key in ("channel_schedule", "heads_schedule", "blocks_schedule"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def expected_param_shapes(config: ModelConfig, in_channels: int) -> dict[str, tuple]:
    """Every parameter name and shape the config implies, in a stable order."""
    shapes: dict[str, tuple] = {}
    c_prev = in_channels
    for s in range(config.num_stages):
        c = config.channel_schedule[s]
        shapes[f"stage{s}.partition.weight"] = (config.merge_factor * c_prev, c)
        shapes[f"stage{s}.partition.bias"] = (c,)
        hidden = c * config.mlp_ratio
        for b in range(config.blocks_schedule[s]):
            prefix = f"stage{s}.block{b}"
            shapes[f"{prefix}.ln1.gamma"] = (c,)
            shapes[f"{prefix}.ln1.beta"] = (c,)
            shapes[f"{prefix}.sewa.w1"] = (config.reduction_width, 1)
            shapes[f"{prefix}.sewa.w2"] = (1, config.reduction_width)
            shapes[f"{prefix}.attn.wq"] = (c, c)
            shapes[f"{prefix}.attn.wk"] = (c, c)
            shapes[f"{prefix}.attn.wv"] = (c, c)
            shapes[f"{prefix}.attn.wo"] = (c, c)
            shapes[f"{prefix}.attn.bo"] = (c,)
            shapes[f"{prefix}.ln2.gamma"] = (c,)
            shapes[f"{prefix}.ln2.beta"] = (c,)
            shapes[f"{prefix}.mlp.w1"] = (c, hidden)
            shapes[f"{prefix}.mlp.b1"] = (hidden,)
            shapes[f"{prefix}.mlp.w2"] = (hidden, c)
            shapes[f"{prefix}.mlp.b2"] = (c,)
        c_prev = c
    shapes["head.weight"] = (config.channel_schedule[-1], config.num_classes)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


@dataclass
class ModelParams:
    """Named parameter tensors plus the input width they were built for."""

    tensors: dict[str, Tensor]
    in_channels: int

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def block(self, stage: int, block: int) -> dict[str, Tensor]:
        """The sub-dictionary for one block, keyed without the prefix."""
        prefix = f"stage{stage}.block{block}."
        return {
            name[len(prefix):]: t
            for name, t in self.tensors.items()
            if name.startswith(prefix)
        }

    def leaves(self) -> list[Tensor]:
        return list(self.tensors.values())

    def audit(self, config: ModelConfig) -> None:
        """Check the full name/shape table and that every value is finite."""
        expected = expected_param_shapes(config, self.in_channels)
        have = {name: t.shape for name, t in self.tensors.items()}
        if have.keys() != expected.keys():
            missing = sorted(expected.keys() - have.keys())
            extra = sorted(have.keys() - expected.keys())
            raise ShapeError(f"parameter set mismatch: missing {missing}, extra {extra}")
        for name, shape in expected.items():
            if have[name] != shape:
                raise ShapeError(f"{name} has shape {have[name]}, expected {shape}")
        for name, t in self.tensors.items():
            assert_all_finite(t, context=name)


def _truncated_normal(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """Zero-mean normal, std INIT_STD, resampled until inside +/- INIT_CLIP sigma."""
    out = rng.normal(0.0, INIT_STD, size=shape)
    bound = INIT_CLIP * INIT_STD
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, INIT_STD, size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def init_params(config: ModelConfig, in_channels: int, seed: int = 0) -> ModelParams:
    """Fresh trainable parameters: truncated-normal weights, zero biases,
    unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in expected_param_shapes(config, in_channels).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            values = np.ones(shape)
        elif leaf in ("beta",) or leaf.startswith("b") or leaf == "bias":
            values = np.zeros(shape)
        else:
            values = _truncated_normal(rng, shape)
        tensors[name] = Tensor(values, requires_grad=True)
    return ModelParams(tensors=tensors, in_channels=in_channels)


def expected_stage_lengths(config: ModelConfig, t: int) -> list[int]:
    """Sequence length after each stage's partition layer."""
    lengths = []
    for _ in range(config.num_stages):
        if t % config.merge_factor:
            raise ShapeError(f"length {t} not divisible by merge {config.merge_factor}")
        t //= config.merge_factor
        lengths.append(t)
    return lengths


def padded_sequence_length(t: int, config: ModelConfig) -> int:
    """Smallest padded length the config can consume without remainder.

    A multiple of the granule alone is not enough: after each stage the
    remaining length must also divide evenly into that stage's effective
    window (e.g. length 100 with two merge-4 stages and window 16 pads to
    128, not 112, because 28 blocks do not fill windows of 16).
    """
    if t < 1:
        raise ValueError(f"sequence length must be >= 1, got {t}")
    target = ((t + config.granule - 1) // config.granule) * config.granule
    while True:
        length = target
        for _ in range(config.num_stages):
            length //= config.merge_factor
            if length % min(config.window_size, length):
                break
        else:
            return target
        target += config.granule


def model_forward(
    batch: Tensor,
    config: ModelConfig,
    params: ModelParams,
    trace: list | None = None,
) -> Tensor:
    """Run the full classifier: stages of partition + dual-attention blocks,
    then the pooled linear head. Returns logits [B x num_classes].

    Blocks alternate unshifted / shifted windows within each stage. Pass a
    list as ``trace`` to record (name, shape) for every intermediate.
    """
    if batch.ndim != 3:
        raise ShapeError(f"model input must be [B x T x C], got {batch.shape}")
    if batch.shape[1] % config.granule:
        raise ShapeError(
            f"input length {batch.shape[1]} not divisible by granule {config.granule}"
        )
    if batch.shape[2] != params.in_channels:
        raise ShapeError(
            f"input has {batch.shape[2]} channels, parameters expect {params.in_channels}"
        )
    x = batch
    if trace is not None:
        trace.append(("input", x.shape))
    for s in range(config.num_stages):
        x = time_block_partition_embed(
            x,
            params[f"stage{s}.partition.weight"],
            params[f"stage{s}.partition.bias"],
            merge=config.merge_factor,
        )
        if trace is not None:
            trace.append((f"stage{s}.partition", x.shape))
        for b in range(config.blocks_schedule[s]):
            x = dual_attention_block(
                x,
                params.block(s, b),
                heads=config.heads_schedule[s],
                window=config.window_size,
                top_u_factor=config.top_u_factor,
                shifted=bool(b % 2),
                stage=s,
            )
            if trace is not None:
                trace.append((f"stage{s}.block{b}", x.shape))
    logits = classification_head(x, params["head.weight"], params["head.bias"])
    if trace is not None:
        trace.append(("logits", logits.shape))
    return logits


def save_checkpoint(path: str, config: ModelConfig, params: ModelParams) -> None:
    """Write config + named parameters as JSON; values round-trip bit-exactly."""
    payload = {
        "config": config.to_dict(),
        "in_channels": params.in_channels,
        "params": {
            name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in params.tensors.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path: str) -> tuple[ModelConfig, ModelParams]:
    """Read a checkpoint back and audit it against its own config."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    config = ModelConfig.from_dict(payload["config"])
    tensors = {}
    for name, entry in payload["params"].items():
        values = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        tensors[name] = Tensor(values, requires_grad=True)
    params = ModelParams(tensors=tensors, in_channels=int(payload["in_channels"]))
    params.audit(config)
    return config, params
