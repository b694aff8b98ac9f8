"""Tests for model assembly: shapes, determinism, checkpoints, gradients."""

import numpy as np
import pytest

from danet.network import (
    ModelConfig,
    ModelParams,
    expected_param_shapes,
    expected_stage_lengths,
    init_params,
    load_checkpoint,
    model_forward,
    padded_sequence_length,
    save_checkpoint,
)
from danet.tensor import (
    ShapeError,
    Tensor,
    assert_all_finite,
    finite_difference_gradient,
    max_relative_error,
    mul,
)


def tiny_config(**overrides):
    base = dict(
        num_classes=2,
        num_stages=1,
        merge_factor=4,
        window_size=4,
        channel_schedule=(4,),
        heads_schedule=(2,),
        blocks_schedule=(1,),
        top_u_factor=5.0,
        mlp_ratio=2,
        reduction_width=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestConfig:
    def test_defaults_match_published_settings(self):
        cfg = ModelConfig(num_classes=4)
        assert cfg.num_stages == 4
        assert cfg.merge_factor == 4
        assert cfg.window_size == 64
        assert cfg.channel_schedule == (96, 192, 384, 768)
        assert cfg.heads_schedule == (3, 6, 12, 6)
        assert cfg.blocks_schedule == (2, 2, 6, 2)
        assert cfg.top_u_factor == 5.0
        assert cfg.mlp_ratio == 4
        assert cfg.granule == 256

    def test_schedule_length_checked(self):
        with pytest.raises(ValueError):
            ModelConfig(num_classes=2, num_stages=3)

    def test_heads_must_divide_width(self):
        with pytest.raises(ValueError):
            tiny_config(channel_schedule=(6,), heads_schedule=(4,))

    def test_merge_factor_minimum(self):
        with pytest.raises(ValueError):
            tiny_config(merge_factor=1)

    def test_roundtrip_dict(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestParams:
    def test_audit_passes_for_default_config(self):
        cfg = ModelConfig(num_classes=4)
        params = init_params(cfg, in_channels=6, seed=0)
        params.audit(cfg)

    def test_expected_shapes_default_config(self):
        cfg = ModelConfig(num_classes=4)
        shapes = expected_param_shapes(cfg, in_channels=6)
        assert shapes["stage0.partition.weight"] == (24, 96)
        assert shapes["stage1.partition.weight"] == (384, 192)
        assert shapes["stage2.block5.attn.wq"] == (384, 384)
        assert shapes["stage3.block0.mlp.w1"] == (768, 3072)
        assert shapes["head.weight"] == (768, 4)
        blocks = sum(cfg.blocks_schedule)
        assert len(shapes) == 2 * cfg.num_stages + 15 * blocks + 2

    def test_audit_catches_missing_and_wrong_shape(self):
        cfg = tiny_config()
        params = init_params(cfg, in_channels=2)
        del params.tensors["head.bias"]
        with pytest.raises(ShapeError, match="head.bias"):
            params.audit(cfg)
        params = init_params(cfg, in_channels=2)
        params.tensors["head.weight"] = Tensor(np.zeros((3, 3)), requires_grad=True)
        with pytest.raises(ShapeError, match="head.weight"):
            params.audit(cfg)

    def test_audit_catches_nonfinite(self):
        cfg = tiny_config()
        params = init_params(cfg, in_channels=2)
        params.tensors["head.bias"].data[0] = np.nan
        with pytest.raises(ValueError, match="head.bias"):
            params.audit(cfg)

    def test_init_statistics(self):
        cfg = tiny_config(channel_schedule=(32,), heads_schedule=(4,))
        params = init_params(cfg, in_channels=8, seed=1)
        w = params["stage0.block0.attn.wq"].data
        assert np.abs(w).max() <= 2 * 0.02 + 1e-12
        assert abs(w.std() - 0.02) < 0.005
        assert np.array_equal(params["stage0.block0.ln1.gamma"].data, np.ones(32))
        assert np.array_equal(params["stage0.block0.mlp.b1"].data, np.zeros(64))

    def test_init_deterministic_per_seed(self):
        cfg = tiny_config()
        a = init_params(cfg, 2, seed=7)
        b = init_params(cfg, 2, seed=7)
        c = init_params(cfg, 2, seed=8)
        assert all(
            np.array_equal(a[n].data, b[n].data) for n in a
        )
        assert any(not np.array_equal(a[n].data, c[n].data) for n in a)

    def test_block_subdictionary(self):
        cfg = tiny_config()
        params = init_params(cfg, 2)
        block = params.block(0, 0)
        assert set(block) == {
            "ln1.gamma", "ln1.beta", "sewa.w1", "sewa.w2",
            "attn.wq", "attn.wk", "attn.wv", "attn.wo", "attn.bo",
            "ln2.gamma", "ln2.beta", "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2",
        }


class TestForward:
    def test_stage_lengths_for_1024(self):
        cfg = ModelConfig(num_classes=4)
        assert expected_stage_lengths(cfg, 1024) == [256, 64, 16, 4]

    def test_padded_length_multiple_of_granule_is_kept(self):
        cfg = ModelConfig(num_classes=4)
        assert padded_sequence_length(1024, cfg) == 1024
        assert padded_sequence_length(100, cfg) == 256

    def test_padded_length_respects_window_divisibility(self):
        # granule alone would give 112, but 112/4 = 28 blocks do not tile
        # windows of 16; the next granule multiple that works is 128
        cfg = ModelConfig(
            num_classes=4, num_stages=2, window_size=16,
            channel_schedule=(8, 16), heads_schedule=(2, 2),
            blocks_schedule=(1, 1),
        )
        assert padded_sequence_length(100, cfg) == 128
        lengths = expected_stage_lengths(cfg, 128)
        assert lengths == [32, 8]
        assert all(n % min(cfg.window_size, n) == 0 for n in lengths)

    def test_padded_length_forward_runs(self):
        cfg = ModelConfig(
            num_classes=4, num_stages=2, window_size=16,
            channel_schedule=(8, 16), heads_schedule=(2, 2),
            blocks_schedule=(1, 1),
        )
        params = init_params(cfg, 3, seed=0)
        t = padded_sequence_length(100, cfg)
        batch = Tensor(np.zeros((1, t, 3)))
        assert model_forward(batch, cfg, params).shape == (1, 4)

    def test_full_default_forward_shape_and_trace(self):
        cfg = ModelConfig(num_classes=4)
        params = init_params(cfg, in_channels=6, seed=0)
        rng = np.random.default_rng(0)
        batch = Tensor(rng.standard_normal((2, 1024, 6)))
        trace = []
        logits = model_forward(batch, cfg, params, trace=trace)
        assert logits.shape == (2, 4)
        assert_all_finite(logits, "logits")
        lengths = [shape[1] for name, shape in trace if name.endswith(".partition")]
        assert lengths == [256, 64, 16, 4]
        for name, shape in trace:
            if name.startswith("stage3"):
                assert shape[1:] == (4, 768)

    def test_identical_rows_give_identical_logits(self):
        cfg = tiny_config()
        params = init_params(cfg, 3, seed=2)
        rng = np.random.default_rng(3)
        row = rng.standard_normal((1, 16, 3))
        batch = Tensor(np.concatenate([row, row]))
        logits = model_forward(batch, cfg, params)
        assert np.array_equal(logits.data[0], logits.data[1])

    def test_permuting_batch_permutes_logits(self):
        cfg = tiny_config(num_stages=2, channel_schedule=(4, 8),
                          heads_schedule=(2, 2), blocks_schedule=(1, 2))
        params = init_params(cfg, 3, seed=4)
        rng = np.random.default_rng(5)
        batch = rng.standard_normal((5, 16, 3))
        perm = rng.permutation(5)
        a = model_forward(Tensor(batch), cfg, params).data
        b = model_forward(Tensor(batch[perm]), cfg, params).data
        assert np.allclose(a[perm], b, atol=1e-12)

    def test_rejects_bad_length_and_channels(self):
        cfg = tiny_config()
        params = init_params(cfg, 3, seed=0)
        with pytest.raises(ShapeError):
            model_forward(Tensor(np.zeros((1, 10, 3))), cfg, params)
        with pytest.raises(ShapeError):
            model_forward(Tensor(np.zeros((1, 16, 2))), cfg, params)

    def test_forward_is_deterministic(self):
        cfg = tiny_config()
        params = init_params(cfg, 2, seed=6)
        batch = Tensor(np.random.default_rng(7).standard_normal((3, 16, 2)))
        a = model_forward(batch, cfg, params).data
        b = model_forward(batch, cfg, params).data
        assert np.array_equal(a, b)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        cfg = tiny_config(num_stages=2, channel_schedule=(4, 6),
                          heads_schedule=(2, 3), blocks_schedule=(1, 1))
        params = init_params(cfg, 3, seed=8)
        path = str(tmp_path / "ckpt.json")
        save_checkpoint(path, cfg, params)
        cfg2, params2 = load_checkpoint(path)
        assert cfg2 == cfg
        assert params2.in_channels == 3
        for name in params:
            assert np.array_equal(params[name].data, params2[name].data), name

    def test_loaded_model_predicts_identically(self, tmp_path):
        cfg = tiny_config()
        params = init_params(cfg, 2, seed=9)
        batch = Tensor(np.random.default_rng(10).standard_normal((2, 16, 2)))
        before = model_forward(batch, cfg, params).data
        path = str(tmp_path / "ckpt.json")
        save_checkpoint(path, cfg, params)
        cfg2, params2 = load_checkpoint(path)
        after = model_forward(batch, cfg2, params2).data
        assert np.array_equal(before, after)

    def test_corrupted_checkpoint_fails_audit(self, tmp_path):
        cfg = tiny_config()
        params = init_params(cfg, 2, seed=11)
        path = str(tmp_path / "ckpt.json")
        save_checkpoint(path, cfg, params)
        import json

        with open(path) as fh:
            payload = json.load(fh)
        payload["params"]["head.bias"]["shape"] = [5]
        payload["params"]["head.bias"]["values"] = [0.0] * 5
        with open(path, "w") as fh:
            json.dump(payload, fh)
        with pytest.raises(ShapeError):
            load_checkpoint(path)


class TestGradients:
    def test_no_dead_parameters_tiny_config(self):
        cfg = tiny_config(window_size=4, blocks_schedule=(2,))
        params = init_params(cfg, 2, seed=12)
        rng = np.random.default_rng(13)
        batch = Tensor(rng.standard_normal((4, 16, 2)))
        logits = model_forward(batch, cfg, params)
        mix = rng.standard_normal(logits.shape)
        mul(logits, mix).sum().backward()
        for name in params:
            grad = params[name].grad
            assert grad is not None and np.abs(grad).max() > 0, (
                f"{name} received no gradient"
            )

    def test_end_to_end_matches_finite_differences(self):
        # one stage, one block, T=16, C=2, against the central-difference oracle
        cfg = tiny_config()
        params = init_params(cfg, 2, seed=14)
        rng = np.random.default_rng(15)
        x0 = rng.standard_normal((1, 16, 2))
        mix = rng.standard_normal((1, cfg.num_classes))

        def loss_for_input(t):
            return mul(model_forward(t, cfg, params), mix).sum()

        x = Tensor(x0.copy(), requires_grad=True)
        loss_for_input(x).backward()
        fd = finite_difference_gradient(loss_for_input, Tensor(x0.copy()))
        assert max_relative_error(x.grad, fd) < 1e-4

    def test_parameter_gradient_matches_finite_differences(self):
        cfg = tiny_config()
        params = init_params(cfg, 2, seed=16)
        rng = np.random.default_rng(17)
        batch = Tensor(rng.standard_normal((1, 16, 2)))
        mix = rng.standard_normal((1, cfg.num_classes))
        name = "stage0.block0.attn.wv"

        def loss_with(t):
            params.tensors[name] = t
            return mul(model_forward(batch, cfg, params), mix).sum()

        original = params[name].data.copy()
        leaf = Tensor(original.copy(), requires_grad=True)
        loss_with(leaf).backward()
        fd = finite_difference_gradient(loss_with, Tensor(original.copy()))
        params.tensors[name] = Tensor(original, requires_grad=True)
        assert max_relative_error(leaf.grad, fd) < 1e-4
