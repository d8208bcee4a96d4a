import math
from dataclasses import replace

import numpy as np
import pytest

from fapft.angles import compute_angles
from fapft.arch import describe_arch, linear_probe_plan, manual_strategy
from fapft.checkpoint import diff_checkpoints
from fapft.errors import (
    DivergenceError,
    IncompatiblePlan,
    InvalidValue,
)
from fapft.model import ModelDims, init_params, loss_and_grads, param_shapes
from fapft.train import (
    OptimizerConfig,
    ScheduleConfig,
    SyntheticSpec,
    TrainConfig,
    _AdamW,
    cosine_warmup_lr,
    generate_dataset,
    grad_check,
    run_fapft_pipeline,
    train,
)

DIMS = ModelDims(depth=2, model_dim=16, heads=2, ffn_dim=32, seq_len=4, num_classes=4)
SPEC = SyntheticSpec(
    num_classes=4,
    seq_len=4,
    samples_per_class=20,
    feature_dim=16,
    noise_scale=0.5,
    shift_magnitude=1.5,
    seed=3,
)
OPT = OptimizerConfig()
SCHED = ScheduleConfig(epochs=3, warmup_epochs=1, batch_size=16)


def config(**over):
    base = dict(
        arch=DIMS, optimizer=OPT, schedule=SCHED, seed=7, dataset=SPEC, task="finetune"
    )
    base.update(over)
    return TrainConfig(**base)


def toy_arch(dims=DIMS):
    return describe_arch(
        "toy_vit",
        depth=dims.depth,
        model_dim=dims.model_dim,
        heads=dims.heads,
        ffn_dim=dims.ffn_dim,
        seq_len=dims.seq_len,
    )


@pytest.fixture(scope="module")
def pretrained():
    return train(config(task="pretrain", seed=1)).final_checkpoint


class TestDataset:
    def test_deterministic(self):
        d1 = generate_dataset(SPEC)
        d2 = generate_dataset(SPEC)
        assert d1.content_hash() == d2.content_hash()

    def test_zero_shift_identity(self):
        spec = replace(SPEC, shift_magnitude=0.0)
        data = generate_dataset(spec)
        assert np.array_equal(data.base_centers, data.shifted_centers)

    def test_noise_zero_samples_equal_centers(self):
        spec = replace(SPEC, noise_scale=0.0)
        data = generate_dataset(spec)
        for i in range(8):
            center = data.base_centers[data.pretrain_y[i]].astype(np.float32)
            assert np.array_equal(data.pretrain_x[i], np.broadcast_to(center, (4, 16)))

    def test_split_is_fixed_80_20(self):
        data = generate_dataset(SPEC)
        xt, yt, xv, yv = data.task_split("finetune")
        assert len(yt) == 64 and len(yv) == 16
        assert np.array_equal(xt[0], data.finetune_x[0])

    def test_degenerate_spec_rejected(self):
        with pytest.raises(InvalidValue):
            SyntheticSpec(num_classes=0, seq_len=4, samples_per_class=5, feature_dim=8)
        with pytest.raises(InvalidValue):
            SyntheticSpec(num_classes=2, seq_len=4, samples_per_class=0, feature_dim=8)

    def test_noise_zero_linear_probe_is_perfect(self):
        spec = replace(SPEC, noise_scale=0.0, shift_magnitude=0.0)
        cfg = config(
            dataset=spec,
            optimizer=OptimizerConfig(learning_rate=1e-2),
            schedule=ScheduleConfig(epochs=6, warmup_epochs=1, batch_size=16),
            freeze=linear_probe_plan(toy_arch()),
        )
        assert train(cfg).final_val_accuracy == 1.0


class TestSchedule:
    def test_warmup_start_peak_and_floor(self):
        lr, total, warmup = 1e-3, 50, 10
        assert cosine_warmup_lr(0, total, warmup, lr) == lr / warmup
        assert cosine_warmup_lr(warmup - 1, total, warmup, lr) == lr
        assert cosine_warmup_lr(warmup, total, warmup, lr) == lr
        assert abs(cosine_warmup_lr(total - 1, total, warmup, lr)) < 1e-12

    def test_monotone_decay_after_warmup(self):
        values = [cosine_warmup_lr(s, 40, 4, 1.0) for s in range(4, 40)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_no_warmup(self):
        assert cosine_warmup_lr(0, 10, 0, 1.0) == 1.0
        assert abs(cosine_warmup_lr(9, 10, 0, 1.0)) < 1e-12


class TestGradCheck:
    def test_full_two_block_model(self):
        cfg = config(schedule=ScheduleConfig(epochs=1, warmup_epochs=0, batch_size=8))
        result = grad_check(cfg, samples=200)
        assert result.max_rel_error <= 1e-4
        assert set(result.per_tensor) == set(param_shapes(DIMS))

    def test_head_only_model_is_tighter(self):
        dims = ModelDims(depth=0, model_dim=8, heads=1, ffn_dim=16, seq_len=4, num_classes=3)
        spec = SyntheticSpec(num_classes=3, seq_len=4, samples_per_class=10, feature_dim=8, seed=5)
        cfg = TrainConfig(
            arch=dims,
            optimizer=OPT,
            schedule=ScheduleConfig(epochs=1, warmup_epochs=0, batch_size=8),
            seed=1,
            dataset=spec,
        )
        assert grad_check(cfg, samples=200).max_rel_error <= 1e-7

    def test_corruption_detected_and_named(self):
        cfg = config(schedule=ScheduleConfig(epochs=1, warmup_epochs=0, batch_size=8))
        target = "blocks.1.mlp.fc1.weight"
        result = grad_check(cfg, samples=200, corrupt=target)
        assert result.max_rel_error > 1e-3
        assert result.worst_tensor == target

    def test_rejects_large_dims(self):
        dims = ModelDims(depth=3, model_dim=16, heads=2, ffn_dim=32, seq_len=4, num_classes=4)
        spec = replace(SPEC, feature_dim=16)
        cfg = TrainConfig(arch=dims, optimizer=OPT, schedule=SCHED, seed=1, dataset=spec)
        with pytest.raises(InvalidValue):
            grad_check(cfg)


class TestFreezing:
    def test_linear_probe_touches_only_head(self, pretrained):
        cfg = config(freeze=linear_probe_plan(toy_arch()))
        result = train(cfg, init=pretrained)
        report = diff_checkpoints(pretrained, result.final_checkpoint)
        changed = set(n for n, _ in report.value_diff) | {
            n for n, _, _ in report.shape_mismatch
        }
        assert changed <= {"head.weight", "head.bias"}
        assert set(report.value_equal) >= set(param_shapes(DIMS)) - {
            "head.weight",
            "head.bias",
        }

    def test_partial_plan_freezes_exactly(self, pretrained):
        arch = toy_arch()
        plan = manual_strategy(arch, "E")  # last-half attention layers
        result = train(config(freeze=plan), init=pretrained)
        trainable_tensors = set()
        for lid in plan.trainable_layer_ids:
            trainable_tensors.update(arch.layer_map[lid].tensors)
        trainable_tensors |= {"head.weight", "head.bias"}
        report = diff_checkpoints(pretrained, result.final_checkpoint)
        assert set(n for n, _ in report.value_diff) <= trainable_tensors
        frozen = set(param_shapes(DIMS)) - trainable_tensors
        assert frozen <= set(report.value_equal)

    def test_frozen_layers_have_exactly_zero_angle(self, pretrained):
        arch = toy_arch()
        plan = manual_strategy(arch, "B")
        result = train(config(freeze=plan), init=pretrained)
        report = compute_angles(pretrained, result.final_checkpoint, arch)
        trained = set(plan.trainable_layer_ids)
        for entry in report.entries:
            if entry.layer_id in trained:
                assert entry.angle > 0.0
            else:
                assert entry.angle == 0.0

    def test_plan_arch_mismatch(self, pretrained):
        vit = describe_arch("vit_b16")
        with pytest.raises(IncompatiblePlan):
            train(config(freeze=manual_strategy(vit, "B")), init=pretrained)


class TestOptimizer:
    def test_masked_step_equals_unmasked_on_trainable(self):
        dims = DIMS
        params_a = {
            n: a.astype(np.float64)
            for n, a in init_params(dims, np.random.default_rng(3)).items()
        }
        params_b = {n: a.copy() for n, a in params_a.items()}
        data = generate_dataset(SPEC)
        xt, yt, _, _ = data.task_split("finetune")
        _, grads = loss_and_grads(params_a, xt[:8], yt[:8], dims)

        subset = {"blocks.0.attn.qkv.weight", "head.weight", "norm.bias"}
        shapes = {n: a.shape for n, a in params_a.items()}
        full_opt = _AdamW(set(params_a), shapes, OPT)
        masked_opt = _AdamW(subset, shapes, OPT)
        full_opt.step(params_a, grads, lr=1e-3)
        masked_opt.step(params_b, grads, lr=1e-3)
        for name in params_a:
            if name in subset:
                assert np.array_equal(params_a[name], params_b[name])
            else:
                assert not np.array_equal(params_a[name], params_b[name])

    def test_weight_decay_skips_norms_and_biases(self):
        from fapft.train import _uses_weight_decay

        assert _uses_weight_decay("blocks.0.attn.qkv.weight")
        assert _uses_weight_decay("pos_embed")
        assert not _uses_weight_decay("blocks.0.norm1.weight")
        assert not _uses_weight_decay("norm.weight")
        assert not _uses_weight_decay("head.bias")


class TestTrain:
    def test_byte_identical_repeats(self):
        r1 = train(config())
        r2 = train(config())
        assert r1.final_checkpoint.content_hash == r2.final_checkpoint.content_hash
        assert r1.metrics == r2.metrics

    def test_metrics_shape(self):
        result = train(config())
        assert len(result.metrics) == SCHED.epochs
        lines = result.metrics_jsonl().strip().split("\n")
        assert len(lines) == SCHED.epochs

    def test_head_reinit_on_class_change(self, pretrained):
        dims9 = replace(DIMS, num_classes=9)
        spec9 = replace(SPEC, num_classes=9)
        result = train(config(arch=dims9, dataset=spec9), init=pretrained)
        assert result.final_checkpoint.tensors["head.weight"].shape == (9, 16)

    def test_divergence_reported_with_epoch(self):
        cfg = config(optimizer=OptimizerConfig(learning_rate=1e18))
        with pytest.raises(DivergenceError, match="epoch"):
            train(cfg)

    def test_config_json_round_trip(self):
        cfg = config(freeze=manual_strategy(toy_arch(), "E"))
        again = TrainConfig.from_json(cfg.to_json_text())
        assert again.to_json_text() == cfg.to_json_text()
        assert again.config_hash == cfg.config_hash

    def test_dataset_model_dim_tied(self):
        with pytest.raises(InvalidValue):
            config(dataset=replace(SPEC, feature_dim=8))


class TestPipeline:
    def test_limiting_cases_and_artifacts(self, pretrained):
        arch = toy_arch()
        result = run_fapft_pipeline(
            pretrained, config(), "challenging", topk=(DIMS.depth,)
        )
        assert set(result.plan.trainable_layer_ids) == {
            l.layer_id for l in arch.layers
        }
        probe = run_fapft_pipeline(pretrained, config(), "easy", topk=(0,))
        assert probe.plan.same_selection(linear_probe_plan(arch))
        assert len(result.angle_report.entries) == len(arch.layers)

    def test_default_policy_used(self, pretrained):
        result = run_fapft_pipeline(pretrained, config(), "challenging")
        assert result.policy.magnitude == "large"
        # depth 2 -> topk max(1, 2 // 3) == 1: one layer per group plus head
        assert result.policy.topk_per_stage == (1,)
        assert len(result.plan.trainable) == 2

    def test_deterministic(self, pretrained):
        r1 = run_fapft_pipeline(pretrained, config(), "challenging")
        r2 = run_fapft_pipeline(pretrained, config(), "challenging")
        assert (
            r1.fapft.final_checkpoint.content_hash
            == r2.fapft.final_checkpoint.content_hash
        )
        assert r1.angle_report.to_json_text() == r2.angle_report.to_json_text()
