"""Cross-entropy loss, Adam, and the seeded training loop.

Everything here is deterministic: parameter init derives from the run seed,
and each epoch's shuffle order comes from a generator seeded with
(seed, epoch), so two runs with the same inputs produce bit-identical
parameters and loss histories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from danet.data import BatchPlan, MvDataset, make_batches
from danet.network import ModelConfig, ModelParams, init_params, model_forward
from danet.tensor import (
    ShapeError,
    Tensor,
    assert_all_finite,
    log_softmax,
    mean,
    mul,
    neg,
    tensor_sum,
)

__all__ = [
    "OptimizerState",
    "TrainConfig",
    "adam_step",
    "cross_entropy",
    "evaluate_split",
    "train_model",
]


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings (published defaults)."""

    batch_size: int = 16
    epochs: int = 100
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.alpha <= 0 or self.epsilon <= 0:
            raise ValueError("alpha and epsilon must be positive")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "alpha": self.alpha,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        return cls(**payload)


@dataclass
class OptimizerState:
    """Adam accumulators, one (m, v) pair per parameter, plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "OptimizerState":
        return cls(
            m={name: np.zeros_like(params[name].data) for name in params},
            v={name: np.zeros_like(params[name].data) for name in params},
        )


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of the true classes.

    logits: [B x K]; labels: B class indices in [0, K).
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [B x K] logits, got {logits.shape}")
    b, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for batch {b}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    one_hot = np.zeros((b, k))
    one_hot[np.arange(b), labels] = 1.0
    picked = tensor_sum(mul(log_softmax(logits, axis=1), one_hot), axis=1)
    return neg(mean(picked))


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[ModelParams, OptimizerState]:
    """One bias-corrected Adam update, applied to the parameters in place."""
    if grads.keys() != state.m.keys():
        raise ShapeError("gradient table does not match optimizer state")
    state.t += 1
    correction1 = 1.0 - cfg.beta1**state.t
    correction2 = 1.0 - cfg.beta2**state.t
    for name in params:
        g = grads[name]
        p = params[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.data.shape}")
        state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        p.data = p.data - cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params, state


def _epoch_plan(n: int, cfg: TrainConfig, epoch: int) -> BatchPlan:
    order = tuple(int(i) for i in np.random.default_rng([cfg.seed, epoch]).permutation(n))
    return BatchPlan(batch_size=cfg.batch_size, shuffle_seed=cfg.seed, order=order)


def train_model(
    train: MvDataset,
    cfg: TrainConfig,
    mcfg: ModelConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Train from scratch on one dataset split.

    Returns the final parameters and one history record per epoch:
    {"epoch", "loss" (mean over batches), "accuracy" (on training batches)}.
    """
    if train.n_instances == 0:
        raise ValueError("training dataset is empty")
    if train.n_timestamps % mcfg.granule:
        raise ShapeError(
            f"length {train.n_timestamps} not padded to granule {mcfg.granule}"
        )
    if params is None:
        params = init_params(mcfg, in_channels=train.n_channels, seed=cfg.seed)
    state = OptimizerState.fresh(params)
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        batches = make_batches(train, _epoch_plan(train.n_instances, cfg, epoch))
        losses = []
        correct = 0
        for series, labels in batches:
            logits = model_forward(series, mcfg, params)
            loss = cross_entropy(logits, labels)
            loss.backward()
            # A parameter can sit outside the loss graph (a length-1 stage
            # has u=0, so its q/k projections are never used); backward
            # leaves its grad None and Adam should see zero.
            grads = {
                name: np.zeros_like(params[name].data)
                if params[name].grad is None
                else params[name].grad
                for name in params
            }
            adam_step(params, grads, state, cfg)
            losses.append(loss.item())
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "accuracy": correct / train.n_instances,
        }
        assert_all_finite(np.array([record["loss"]]), context=f"epoch {epoch} loss")
        history.append(record)
    return params, history


def evaluate_split(
    params: ModelParams,
    ds: MvDataset,
    mcfg: ModelConfig,
    batch_size: int = 16,
) -> tuple[float, np.ndarray]:
    """Accuracy and per-instance argmax predictions; parameters untouched."""
    if ds.n_instances == 0:
        return 0.0, np.zeros(0, dtype=np.int64)
    plan = BatchPlan(batch_size=batch_size, shuffle_seed=0, order=tuple(range(ds.n_instances)))
    predictions = []
    for series, _ in make_batches(ds, plan):
        logits = model_forward(series, mcfg, params)
        predictions.append(logits.data.argmax(axis=1))
    predictions = np.concatenate(predictions)
    accuracy = float((predictions == np.asarray(ds.labels)).mean())
    return accuracy, predictions
