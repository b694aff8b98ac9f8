"""Finite-difference verification harness for every differentiable layer.

Each named check builds a small seeded scenario, computes analytic gradients
for every leaf (inputs and parameters), and compares them against central
finite differences. The CLI's gradcheck command and the acceptance suite
both run this registry, so "the gradients are right" has exactly one
definition in the codebase.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from danet.layers import (
    WindowedFeatures,
    sewa_excite,
    sewa_scale,
    sewa_squeeze,
    ssaw_attention,
    time_block_partition_embed,
    w_mha_attention,
)
from danet.network import ModelConfig, init_params, model_forward
from danet.tensor import (
    Tensor,
    add,
    finite_difference_gradient,
    layer_norm,
    matmul,
    max_relative_error,
    mul,
    relu,
)

__all__ = ["CHECKS", "check_gradients", "gradcheck_report", "run_gradcheck"]


def check_gradients(build_loss: Callable[[], Tensor], leaves: dict[str, Tensor],
                    h: float = 1e-5) -> float:
    """Worst relative error between analytic and finite-difference gradients.

    ``build_loss`` must rebuild the scalar loss from the leaves' current
    ``data`` every call; the harness perturbs one leaf at a time.
    """
    build_loss().backward()
    analytic = {name: leaf.grad.copy() for name, leaf in leaves.items()}
    worst = 0.0
    for name, leaf in leaves.items():
        original = leaf.data

        def probe(t, _leaf=leaf, _original=original):
            _leaf.data = t.data
            try:
                return build_loss().item()
            finally:
                _leaf.data = _original

        fd = finite_difference_gradient(probe, Tensor(original.copy()), h=h)
        worst = max(worst, max_relative_error(analytic[name], fd))
    return worst


def _check_layer_norm(seed: int) -> float:
    rng = np.random.default_rng([seed, 0])
    leaves = {
        "x": Tensor(rng.standard_normal((3, 6)), requires_grad=True),
        "gamma": Tensor(rng.standard_normal(6), requires_grad=True),
        "beta": Tensor(rng.standard_normal(6), requires_grad=True),
    }
    mix = rng.standard_normal((3, 6))
    return check_gradients(
        lambda: mul(layer_norm(leaves["x"], leaves["gamma"], leaves["beta"]), mix).sum(),
        leaves,
    )


def _check_mlp(seed: int) -> float:
    rng = np.random.default_rng([seed, 1])
    leaves = {
        "x": Tensor(rng.standard_normal((2, 5)), requires_grad=True),
        "w1": Tensor(rng.standard_normal((5, 10)) * 0.3, requires_grad=True),
        "b1": Tensor(rng.standard_normal(10) * 0.3, requires_grad=True),
        "w2": Tensor(rng.standard_normal((10, 5)) * 0.3, requires_grad=True),
        "b2": Tensor(rng.standard_normal(5) * 0.3, requires_grad=True),
    }
    mix = rng.standard_normal((2, 5))

    def loss():
        hidden = relu(add(matmul(leaves["x"], leaves["w1"]), leaves["b1"]))
        out = add(matmul(hidden, leaves["w2"]), leaves["b2"])
        return mul(out, mix).sum()

    return check_gradients(loss, leaves)


def _check_partition_embed(seed: int) -> float:
    rng = np.random.default_rng([seed, 2])
    leaves = {
        "x": Tensor(rng.standard_normal((1, 8, 2)), requires_grad=True),
        "weight": Tensor(rng.standard_normal((8, 3)) * 0.3, requires_grad=True),
        "bias": Tensor(rng.standard_normal(3) * 0.3, requires_grad=True),
    }
    mix = rng.standard_normal((1, 2, 3))

    def loss():
        out = time_block_partition_embed(
            leaves["x"], leaves["weight"], leaves["bias"], merge=4
        )
        return mul(out, mix).sum()

    return check_gradients(loss, leaves)


def _check_sewa(seed: int) -> float:
    rng = np.random.default_rng([seed, 3])
    leaves = {
        "values": Tensor(rng.standard_normal((3, 4, 2)), requires_grad=True),
        "w1": Tensor(rng.standard_normal((2, 1)), requires_grad=True),
        "w2": Tensor(rng.standard_normal((1, 2)), requires_grad=True),
    }
    mix = rng.standard_normal((3, 4, 2))

    def loss():
        wf = WindowedFeatures(values=leaves["values"], batch_size=1)
        gate = sewa_excite(sewa_squeeze(wf), leaves["w1"], leaves["w2"])
        return mul(sewa_scale(gate, wf).values, mix).sum()

    return check_gradients(loss, leaves)


def _check_w_mha(seed: int) -> float:
    rng = np.random.default_rng([seed, 4])
    leaves = {
        "q": Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True),
        "k": Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True),
        "v": Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True),
    }
    mix = rng.standard_normal((2, 4, 3))
    return check_gradients(
        lambda: mul(w_mha_attention(leaves["q"], leaves["k"], leaves["v"]), mix).sum(),
        leaves,
    )


def _check_ssaw(seed: int) -> float:
    rng = np.random.default_rng([seed, 5])
    leaves = {
        "q": Tensor(rng.standard_normal((2, 6, 3)), requires_grad=True),
        "k": Tensor(rng.standard_normal((2, 6, 3)), requires_grad=True),
        "v": Tensor(rng.standard_normal((2, 6, 3)), requires_grad=True),
    }
    mix = rng.standard_normal((2, 6, 3))
    # the selection is a discrete decision: pin it so finite differences
    # probe the attention arithmetic, not the ranking flip
    _, _, indices = ssaw_attention(
        leaves["q"], leaves["k"], leaves["v"], u=3, return_weights=True
    )

    def loss():
        out = ssaw_attention(leaves["q"], leaves["k"], leaves["v"], u=3, indices=indices)
        return mul(out, mix).sum()

    return check_gradients(loss, leaves)


def _check_tiny_model(seed: int) -> float:
    rng = np.random.default_rng([seed, 6])
    config = ModelConfig(
        num_classes=2,
        num_stages=1,
        merge_factor=4,
        window_size=4,
        channel_schedule=(4,),
        heads_schedule=(2,),
        blocks_schedule=(1,),
        mlp_ratio=2,
        reduction_width=2,
    )
    # redraw every parameter at generic trained-network scales. Near-one
    # layer-norm gains and O(1) attention weights keep the window's keys
    # spread apart, so the softmax is decisive and no q/k gradient coordinate
    # falls into the band where central differences drown in rounding noise;
    # near-zero gains would collapse the window to near-identical tokens and
    # shrink those sensitivities to ~1e-9, which h=1e-5 cannot resolve.
    params = init_params(config, in_channels=2, seed=seed)
    for name, tensor in params.tensors.items():
        draw = rng.standard_normal(tensor.shape)
        if name.endswith("gamma"):
            tensor.data = 1.0 + 0.3 * draw
        elif ".attn." in name:
            tensor.data = draw
        else:
            tensor.data = 0.5 * draw
    leaves = {"input": Tensor(rng.standard_normal((1, 16, 2)), requires_grad=True)}
    leaves.update(params.tensors)
    mix = rng.standard_normal((1, config.num_classes))

    def loss():
        return mul(model_forward(leaves["input"], config, params), mix).sum()

    return check_gradients(loss, leaves)


CHECKS: dict[str, Callable[[int], float]] = {
    "layer_norm": _check_layer_norm,
    "mlp": _check_mlp,
    "partition_embed": _check_partition_embed,
    "sewa": _check_sewa,
    "w_mha": _check_w_mha,
    "ssaw": _check_ssaw,
    "tiny_model": _check_tiny_model,
}


def gradcheck_report(seeds: int = 20, names: list[str] | None = None) -> dict[str, float]:
    """Max relative error per named check over the given number of seeds."""
    names = list(CHECKS) if names is None else names
    report = {}
    for name in names:
        check = CHECKS[name]
        report[name] = max(check(seed) for seed in range(seeds))
    return report


def run_gradcheck(tolerance: float = 1e-4, seeds: int = 20,
                  printer: Callable[[str], None] = print) -> int:
    """Print one line per layer; return 0 iff every error is under tolerance."""
    report = gradcheck_report(seeds=seeds)
    failures = []
    for name, err in report.items():
        status = "ok" if err < tolerance else "FAIL"
        printer(f"{name:16s} max relative error {err:.3e}  [{status}]")
        if err >= tolerance:
            failures.append(name)
    if failures:
        printer(f"gradcheck failed for: {', '.join(failures)} (tolerance {tolerance:g})")
        return 1
    printer(f"all {len(report)} layer checks within tolerance {tolerance:g}")
    return 0
