import json

import numpy as np
import pytest

from fapft.arch import describe_arch, full_plan, manual_strategy
from fapft.checkpoint import Checkpoint, write_checkpoint
from fapft.errors import (
    EvaluationError,
    FormatError,
    IncompatibleCheckpoints,
    IncompatibleReports,
    InvalidValue,
)
from fapft.soup import (
    SoupInput,
    SoupRecipe,
    greedy_soup,
    soup_param_total,
    uniform_soup,
    uniform_soup_checkpoints,
)
from fapft.tensors import Tensor


def simple_ckpt(values_by_name, metadata=None):
    return Checkpoint(
        {n: Tensor(np.asarray(v, dtype=np.float32), name=n) for n, v in values_by_name.items()},
        metadata or {},
    )


class TestUniform:
    def test_midpoint(self):
        soup = uniform_soup_checkpoints(
            [simple_ckpt({"w": [0.0, 0.0]}), simple_ckpt({"w": [2.0, 2.0]})]
        )
        assert np.array_equal(soup.tensors["w"].array, [1.0, 1.0])

    def test_identical_inputs_identity(self):
        rng = np.random.default_rng(1)
        ckpt = simple_ckpt({"a": rng.normal(size=16), "b": rng.normal(size=(3, 3))})
        soup = uniform_soup_checkpoints([ckpt] * 5)
        for name in ckpt.tensors:
            assert soup.tensors[name].bitwise_equal(ckpt.tensors[name])

    def test_matches_independent_mean_oracle(self):
        rng = np.random.default_rng(2)
        ckpts = [
            simple_ckpt({"w": rng.normal(size=64), "v": rng.normal(size=(4, 4))})
            for _ in range(5)
        ]
        soup = uniform_soup_checkpoints(ckpts)
        for name in ("w", "v"):
            stack = np.stack([c.tensors[name].array.astype(np.float64) for c in ckpts])
            oracle = (stack.sum(axis=0) / 5).astype(np.float32)
            got = soup.tensors[name].array
            ulp = np.spacing(np.abs(oracle).astype(np.float32))
            assert np.all(np.abs(got - oracle) <= ulp)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        ckpts = [simple_ckpt({"w": rng.normal(size=32)}) for _ in range(4)]
        ws = [1.0, 2.0, 0.5, 3.0]
        soup1 = uniform_soup_checkpoints(ckpts, ws)
        perm = [3, 1, 0, 2]
        soup2 = uniform_soup_checkpoints([ckpts[i] for i in perm], [ws[i] for i in perm])
        assert soup1.tensors["w"].bitwise_equal(soup2.tensors["w"])

    def test_degree_one_homogeneity(self):
        rng = np.random.default_rng(4)
        ckpts = [simple_ckpt({"w": rng.normal(size=32)}) for _ in range(3)]
        scaled = [
            simple_ckpt({"w": c.tensors["w"].array * np.float32(2.0)}) for c in ckpts
        ]
        s1 = uniform_soup_checkpoints(ckpts)
        s2 = uniform_soup_checkpoints(scaled)
        assert np.allclose(s2.tensors["w"].array, 2.0 * s1.tensors["w"].array, rtol=1e-6)

    def test_name_mismatch(self):
        with pytest.raises(IncompatibleCheckpoints):
            uniform_soup_checkpoints(
                [simple_ckpt({"w": [1.0]}), simple_ckpt({"x": [1.0]})]
            )

    def test_shape_mismatch(self):
        with pytest.raises(IncompatibleCheckpoints):
            uniform_soup_checkpoints(
                [simple_ckpt({"w": [1.0]}), simple_ckpt({"w": [1.0, 2.0]})]
            )

    def test_metadata_records_inputs(self):
        a = simple_ckpt({"w": [0.0]})
        b = simple_ckpt({"w": [1.0]})
        soup = uniform_soup_checkpoints([a, b], [2.0, 1.0])
        recorded = json.loads(soup.metadata["pft.soup_inputs"])
        assert recorded == [
            {"hash": a.content_hash, "weight": 2.0},
            {"hash": b.content_hash, "weight": 1.0},
        ]


class TestRecipe:
    def test_round_trip_and_merge(self, tmp_path):
        rng = np.random.default_rng(5)
        paths = []
        for i in range(3):
            ckpt = simple_ckpt({"w": rng.normal(size=8)})
            p = tmp_path / f"run{i}.ckpt"
            write_checkpoint(ckpt, p)
            paths.append(str(p))
        recipe = SoupRecipe.from_json(
            {"inputs": [{"path": p} for p in paths], "mode": "uniform"}
        )
        soup = uniform_soup(recipe)
        assert set(soup.tensors) == {"w"}

    def test_plans_require_base(self):
        with pytest.raises(FormatError):
            SoupRecipe(
                inputs=(SoupInput("a.ckpt", plan_path="p.json"),), mode="uniform"
            )

    def test_bad_mode(self):
        with pytest.raises(FormatError):
            SoupRecipe(inputs=(SoupInput("a.ckpt"),), mode="fancy")

    def test_bad_weight(self):
        with pytest.raises(InvalidValue):
            SoupRecipe(inputs=(SoupInput("a.ckpt", weight=0.0),))

    def test_frozen_consistency_check(self, tmp_path):
        # toy arch run pair sharing a base: one honest, one tampered
        arch = describe_arch("toy_vit", depth=2, model_dim=8, heads=2, seq_len=4)
        rng = np.random.default_rng(6)
        shapes = arch.schema_shapes(3)
        base_tensors = {
            n: Tensor(rng.normal(size=s).astype(np.float32), name=n)
            for n, s in shapes.items()
        }
        meta = {
            "pft.arch_id": "toy_vit",
            "pft.arch_config": json.dumps(
                {"depth": 2, "model_dim": 8, "heads": 2, "ffn_dim": 32, "seq_len": 4},
                sort_keys=True,
            ),
        }
        base = Checkpoint(base_tensors, meta)
        plan = manual_strategy(arch, "B")  # FFN layers frozen everywhere
        frozen_name = "blocks.0.mlp.fc1.weight"

        def run_ckpt(tamper):
            tensors = dict(base_tensors)
            tensors["head.weight"] = Tensor(
                rng.normal(size=shapes["head.weight"]).astype(np.float32)
            )
            if tamper:
                tensors[frozen_name] = Tensor(
                    base_tensors[frozen_name].array + np.float32(1.0)
                )
            return Checkpoint(tensors, meta)

        base_path = tmp_path / "base.ckpt"
        write_checkpoint(base, base_path)
        plan_path = tmp_path / "plan.json"
        plan_path.write_text(plan.to_json_text())

        good_paths = []
        for i in range(2):
            p = tmp_path / f"good{i}.ckpt"
            write_checkpoint(run_ckpt(tamper=False), p)
            good_paths.append(str(p))
        recipe = SoupRecipe(
            inputs=tuple(
                SoupInput(p, plan_path=str(plan_path)) for p in good_paths
            ),
            base=str(base_path),
        )
        soup = uniform_soup(recipe)
        assert soup.tensors[frozen_name].bitwise_equal(base.tensors[frozen_name])

        bad = tmp_path / "bad.ckpt"
        write_checkpoint(run_ckpt(tamper=True), bad)
        tampered = SoupRecipe(
            inputs=tuple(
                SoupInput(p, plan_path=str(plan_path))
                for p in [good_paths[0], str(bad)]
            ),
            base=str(base_path),
        )
        with pytest.raises(IncompatibleCheckpoints):
            uniform_soup(tampered)


class TestParamTotal:
    def test_repeated_plan(self):
        arch = describe_arch("vit_b16")
        plan = manual_strategy(arch, "B")
        assert soup_param_total([plan] * 4, 1000) == 4 * plan.trainable_param_count(1000)

    def test_empty(self):
        assert soup_param_total([], 1000) == 0

    def test_fft_soup_total(self):
        arch = describe_arch("vit_b16")
        plans = [full_plan(arch)] * 5
        assert soup_param_total(plans, 1000) == 5 * 86_567_656

    def test_mixed_arch(self):
        vit = describe_arch("vit_b16")
        swin = describe_arch("swin_b")
        with pytest.raises(IncompatibleReports):
            soup_param_total([full_plan(vit), full_plan(swin)], 10)


class TestGreedy:
    def test_singleton(self):
        ckpt = simple_ckpt({"w": [1.0, 2.0]})
        out = greedy_soup([ckpt], lambda c: 0.5)
        assert out.tensors["w"].bitwise_equal(ckpt.tensors["w"])

    def test_all_improving_equals_uniform(self):
        rng = np.random.default_rng(7)
        ckpts = [simple_ckpt({"w": rng.normal(size=8)}) for _ in range(4)]
        target = uniform_soup_checkpoints(ckpts)

        def evaluate(c):
            # reward closeness to the full average: every addition helps
            return -float(
                np.abs(c.tensors["w"].array - target.tensors["w"].array).sum()
            )

        out = greedy_soup(ckpts, evaluate)
        assert out.tensors["w"].bitwise_equal(target.tensors["w"])

    def test_corrupted_member_rejected(self):
        rng = np.random.default_rng(8)
        good = [simple_ckpt({"w": rng.normal(size=8) * 0.01}) for _ in range(3)]
        corrupted = simple_ckpt({"w": rng.normal(size=8) * 100.0})

        def evaluate(c):
            return -float(np.abs(c.tensors["w"].array).sum())

        out = greedy_soup(good + [corrupted], evaluate)
        expected = uniform_soup_checkpoints(good)
        assert out.tensors["w"].bitwise_equal(expected.tensors["w"])

    def test_eval_failure_wrapped(self):
        def broken(c):
            raise RuntimeError("no data")

        with pytest.raises(EvaluationError):
            greedy_soup([simple_ckpt({"w": [1.0]})], broken)

    def test_non_finite_eval_rejected(self):
        with pytest.raises(EvaluationError):
            greedy_soup([simple_ckpt({"w": [1.0]})], lambda c: float("nan"))
