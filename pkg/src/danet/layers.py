"""Window-attention building blocks.

The classifier stacks stages of: a time-block partition layer that merges
neighbouring timestamps, then dual-attention blocks. Each block first weights
whole windows by a learned squeeze-excitation gate (SEWA), then applies
sparse self-attention inside each window (SSAW): queries ranked by a
max-minus-mean score attend normally, the rest fall back to the mean value
row. A dense windowed multi-head attention (W-MHA) is kept as the reference
the sparse path must reproduce when every query is selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from danet.tensor import (
    ShapeError,
    Tensor,
    add,
    global_average_pool,
    layer_norm,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    roll,
    sigmoid,
    softmax,
    transpose,
)

__all__ = [
    "WindowedFeatures",
    "classification_head",
    "cyclic_shift",
    "dual_attention_block",
    "max_mean_measurement",
    "merge_heads",
    "sewa_excite",
    "sewa_scale",
    "sewa_squeeze",
    "split_heads",
    "ssaw_attention",
    "time_block_partition_embed",
    "top_u_count",
    "top_u_select",
    "w_mha_attention",
    "window_partition",
    "window_reverse",
]


@dataclass(frozen=True)
class WindowedFeatures:
    """Per-window view of a feature sequence.

    values: [total_windows x blocks_per_window x channels], where
    total_windows = batch_size * windows per instance. Window extents always
    multiply back to the stage sequence length, and reversing the partition
    restores the source tensor bit-exactly.
    """

    values: Tensor
    stage: int = 0
    shifted: bool = False
    batch_size: int = 1

    @property
    def window(self) -> int:
        return self.values.shape[1]

    @property
    def windows_per_instance(self) -> int:
        return self.values.shape[0] // self.batch_size

    @property
    def sequence_length(self) -> int:
        return self.windows_per_instance * self.window


def window_partition(
    x: Tensor, window: int, stage: int = 0, shifted: bool = False
) -> WindowedFeatures:
    """Split [B x L x C] into non-overlapping windows of min(window, L) blocks."""
    if x.ndim != 3:
        raise ShapeError(f"window_partition expects rank 3, got shape {x.shape}")
    b, length, channels = x.shape
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    w_eff = min(window, length)
    if length % w_eff:
        raise ShapeError(f"sequence length {length} not divisible by window {w_eff}")
    values = reshape(x, (b * (length // w_eff), w_eff, channels))
    return WindowedFeatures(values=values, stage=stage, shifted=shifted, batch_size=b)


def window_reverse(wf: WindowedFeatures) -> Tensor:
    """Invert window_partition, recovering [B x L x C] exactly."""
    channels = wf.values.shape[2]
    return reshape(wf.values, (wf.batch_size, wf.sequence_length, channels))


def cyclic_shift(x: Tensor, offset: int) -> Tensor:
    """Rotate the block axis so position ``offset`` becomes position 0.

    Negating the offset inverts the rotation exactly. Used between blocks so
    alternate attention windows straddle the previous window boundaries.
    """
    if x.ndim != 3:
        raise ShapeError(f"cyclic_shift expects rank 3, got shape {x.shape}")
    return roll(x, -int(offset), axis=1)


def time_block_partition_embed(
    x: Tensor, weight: Tensor, bias: Tensor, merge: int = 4
) -> Tensor:
    """Merge ``merge`` neighbouring timestamps and project the flattened block.

    [B x T x C_in] -> [B x T/merge x C_out]: each group of ``merge``
    consecutive timestamps is flattened to a merge*C_in vector, then mapped
    through one linear layer.
    """
    if x.ndim != 3:
        raise ShapeError(f"partition embed expects rank 3, got shape {x.shape}")
    b, t, c_in = x.shape
    if merge < 1:
        raise ValueError(f"merge must be >= 1, got {merge}")
    if t % merge:
        raise ShapeError(f"sequence length {t} not divisible by merge factor {merge}")
    if weight.shape[0] != merge * c_in:
        raise ShapeError(
            f"partition weight {weight.shape} does not accept flattened width {merge * c_in}"
        )
    blocks = reshape(x, (b, t // merge, merge * c_in))
    return add(matmul(blocks, weight), bias)


def sewa_squeeze(wf: WindowedFeatures) -> Tensor:
    """One scalar descriptor per window: the mean over its blocks and channels."""
    return reshape(mean(wf.values, axis=(1, 2)), (wf.values.shape[0], 1))


def sewa_excite(z: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """Bottleneck excitation: descriptors -> reduction width -> one weight.

    z: [num_windows x 1]; w1: [r x 1]; w2: [1 x r]. Returns [num_windows x 1].
    """
    if w1.ndim != 2 or w1.shape[1] != 1 or w2.ndim != 2 or w2.shape[0] != 1:
        raise ShapeError(f"excite projections {w1.shape} / {w2.shape} do not compose")
    if w1.shape[0] != w2.shape[1]:
        raise ShapeError(f"excite projections {w1.shape} / {w2.shape} do not compose")
    return matmul(relu(matmul(z, transpose(w1, (1, 0)))), transpose(w2, (1, 0)))


def sewa_scale(h: Tensor, wf: WindowedFeatures) -> WindowedFeatures:
    """Multiply every value in window m by sigmoid(h_m), gating whole windows."""
    n = wf.values.shape[0]
    if h.shape not in ((n, 1), (n,)):
        raise ShapeError(f"expected one weight per window ({n}), got {h.shape}")
    gate = reshape(sigmoid(h), (n, 1, 1))
    return WindowedFeatures(
        values=mul(wf.values, gate),
        stage=wf.stage,
        shifted=wf.shifted,
        batch_size=wf.batch_size,
    )


def _as_batched(t: Tensor) -> tuple[Tensor, bool]:
    if t.ndim == 2:
        return reshape(t, (1,) + t.shape), True
    if t.ndim == 3:
        return t, False
    raise ShapeError(f"attention operand must be rank 2 or 3, got {t.shape}")


def max_mean_measurement(q: Tensor, k: Tensor) -> Tensor:
    """Per-query sparsity score: max scaled key score minus mean scaled score.

    Non-negative by construction (a max dominates its own mean). This ranks
    queries for selection only; no gradient flows through it.
    """
    qb, squeeze = _as_batched(q)
    kb, _ = _as_batched(k)
    if qb.shape[-1] != kb.shape[-1]:
        raise ShapeError(f"query dim {q.shape} does not match key dim {k.shape}")
    scale = 1.0 / math.sqrt(qb.shape[-1])
    scores = np.matmul(qb.data, np.swapaxes(kb.data, -1, -2)) * scale
    measure = scores.max(axis=-1) - scores.mean(axis=-1)
    return Tensor(measure[0] if squeeze else measure)


def top_u_select(measure, u: int) -> np.ndarray:
    """Indices of the ``u`` largest measurements, ascending.

    Ties go to the lower index (stable ranking), and the returned indices are
    sorted ascending so downstream gathers keep query order.
    """
    values = measure.data if isinstance(measure, Tensor) else np.asarray(measure)
    if values.ndim != 1:
        raise ShapeError(f"top_u_select expects a vector, got shape {values.shape}")
    if not 0 <= u <= values.size:
        raise ValueError(f"u={u} outside [0, {values.size}]")
    ranked = np.argsort(-values, kind="stable")[:u]
    return np.sort(ranked)


def top_u_count(window: int, factor: float) -> int:
    """Queries kept per window: min(window, ceil(factor * ln(window)))."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    return min(window, math.ceil(factor * math.log(window)))


def _selection_one_hot(indices: np.ndarray, width: int) -> np.ndarray:
    n, u = indices.shape
    one_hot = np.zeros((n, u, width))
    one_hot[np.arange(n)[:, None], np.arange(u)[None, :], indices] = 1.0
    return one_hot


def ssaw_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    u: int,
    indices: np.ndarray | None = None,
    return_weights: bool = False,
):
    """Sparse within-window attention.

    The ``u`` queries with the highest max-minus-mean score attend over all
    keys as usual; every other query's output row is the columnwise mean of
    V. Selection is a discrete choice recomputed each forward pass, so
    gradients flow only through the attended values, never the ranking.
    Pass ``indices`` ([num_windows x u], ascending) to pin the selection,
    e.g. when comparing against finite differences.

    With u equal to the window size the output is exactly dense attention.
    """
    qb, squeeze = _as_batched(q)
    kb, _ = _as_batched(k)
    vb, _ = _as_batched(v)
    n, width, dim = qb.shape
    if kb.shape != (n, width, dim) or vb.shape != (n, width, dim):
        raise ShapeError(
            f"attention operands disagree: q{qb.shape} k{kb.shape} v{vb.shape}"
        )
    if not 0 <= u <= width:
        raise ValueError(f"u={u} outside [0, {width}]")

    mean_v = mean(vb, axis=1, keepdims=True)
    if u == 0:
        out = mul(Tensor(np.ones((n, width, 1))), mean_v)
        out = reshape(out, (width, dim)) if squeeze else out
        if return_weights:
            return out, np.zeros((n, 0, width)), np.zeros((n, 0), dtype=np.int64)
        return out

    if indices is None:
        measure = max_mean_measurement(qb, kb).data
        indices = np.stack([top_u_select(row, u) for row in measure])
    else:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.shape != (n, u):
            raise ShapeError(f"indices shape {indices.shape}, expected {(n, u)}")

    pick = Tensor(_selection_one_hot(indices, width))
    scale = 1.0 / math.sqrt(dim)
    q_sel = matmul(pick, qb)
    scores = mul(matmul(q_sel, transpose(kb, (0, 2, 1))), scale)
    weights = softmax(scores, axis=2)
    attended = matmul(weights, vb)
    scattered = matmul(transpose(pick, (0, 2, 1)), attended)
    unselected = 1.0 - pick.data.sum(axis=1)
    fallback = mul(Tensor(unselected[:, :, None]), mean_v)
    out = add(scattered, fallback)
    out = reshape(out, (width, dim)) if squeeze else out
    if return_weights:
        return out, weights.data.copy(), indices
    return out


def w_mha_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Dense within-window attention: softmax(QK^T/sqrt(d)) V, every query."""
    qb, squeeze = _as_batched(q)
    kb, _ = _as_batched(k)
    vb, _ = _as_batched(v)
    if kb.shape != qb.shape or vb.shape != qb.shape:
        raise ShapeError(
            f"attention operands disagree: q{qb.shape} k{kb.shape} v{vb.shape}"
        )
    scale = 1.0 / math.sqrt(qb.shape[-1])
    scores = mul(matmul(qb, transpose(kb, (0, 2, 1))), scale)
    out = matmul(softmax(scores, axis=2), vb)
    return reshape(out, out.shape[1:]) if squeeze else out


def split_heads(x: Tensor, heads: int) -> Tensor:
    """[N x W x C] -> [N*heads x W x C/heads], one row group per head."""
    n, width, channels = x.shape
    if channels % heads:
        raise ShapeError(f"channels {channels} not divisible by {heads} heads")
    per_head = channels // heads
    x = reshape(x, (n, width, heads, per_head))
    x = transpose(x, (0, 2, 1, 3))
    return reshape(x, (n * heads, width, per_head))


def merge_heads(x: Tensor, heads: int) -> Tensor:
    """Inverse of split_heads: concatenate head outputs back per window."""
    nh, width, per_head = x.shape
    n = nh // heads
    x = reshape(x, (n, heads, width, per_head))
    x = transpose(x, (0, 2, 1, 3))
    return reshape(x, (n, width, heads * per_head))


def _windowed_sparse_attention(
    xw: Tensor, p: Mapping[str, Tensor], heads: int, u: int
) -> Tensor:
    """Project, run SSAW per window and head, concatenate, project out."""
    q = split_heads(matmul(xw, p["attn.wq"]), heads)
    k = split_heads(matmul(xw, p["attn.wk"]), heads)
    v = split_heads(matmul(xw, p["attn.wv"]), heads)
    out = merge_heads(ssaw_attention(q, k, v, u), heads)
    return add(matmul(out, p["attn.wo"]), p["attn.bo"])


def dual_attention_block(
    x: Tensor,
    params: Mapping[str, Tensor],
    heads: int,
    window: int,
    top_u_factor: float,
    shifted: bool,
    stage: int = 0,
) -> Tensor:
    """One residual block: window-gated sparse attention, then an MLP.

    Attention path: normalize, optionally rotate blocks by half a window,
    partition into windows, gate whole windows (SEWA), sparse-attend within
    each window (SSAW), undo the partition and rotation, add back to the
    input. MLP path: normalize, expand by mlp_ratio with ReLU, project back,
    add. Output shape always equals input shape.
    """
    b, length, channels = x.shape
    w_eff = min(window, length)
    offset = w_eff // 2 if shifted else 0

    h = layer_norm(x, params["ln1.gamma"], params["ln1.beta"])
    if offset:
        h = cyclic_shift(h, offset)
    wf = window_partition(h, window, stage=stage, shifted=shifted)
    gate = sewa_excite(sewa_squeeze(wf), params["sewa.w1"], params["sewa.w2"])
    wf = sewa_scale(gate, wf)
    u = top_u_count(w_eff, top_u_factor)
    attended = _windowed_sparse_attention(wf.values, params, heads, u)
    out = window_reverse(
        WindowedFeatures(attended, stage=stage, shifted=shifted, batch_size=b)
    )
    if offset:
        out = cyclic_shift(out, -offset)
    x = add(x, out)

    m = layer_norm(x, params["ln2.gamma"], params["ln2.beta"])
    m = relu(add(matmul(m, params["mlp.w1"]), params["mlp.b1"]))
    m = add(matmul(m, params["mlp.w2"]), params["mlp.b2"])
    return add(x, m)


def classification_head(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Average over the block axis, then map channels to class logits."""
    if x.ndim != 3:
        raise ShapeError(f"classification head expects rank 3, got shape {x.shape}")
    pooled = global_average_pool(x, (1,))
    return add(matmul(pooled, weight), bias)
