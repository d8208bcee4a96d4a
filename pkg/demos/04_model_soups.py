"""Partial fine-tuning as a soup dimension: average runs that differ only in top-k.

Five runs share every hyper-parameter and the pre-trained start; only the
number of layers selected per group changes. Their uniform average (the
soup) is evaluated on held-out data, and a greedy variant shows how a
deliberately corrupted candidate gets rejected.
"""

import time
from dataclasses import replace

import numpy as np

from fapft import (
    Checkpoint,
    ModelDims,
    OptimizerConfig,
    ScheduleConfig,
    SyntheticSpec,
    Tensor,
    TrainConfig,
    compute_angles,
    describe_arch,
    generate_dataset,
    greedy_soup,
    millions_str,
    plan_series,
    soup_millions_str,
    soup_param_total,
    train,
    uniform_soup_checkpoints,
)
from fapft.model import predict

dims = ModelDims(depth=6, model_dim=32, heads=4, ffn_dim=64, seq_len=8, num_classes=8)
spec = SyntheticSpec(
    num_classes=8, seq_len=8, samples_per_class=40, feature_dim=32,
    class_center_scale=1.0, noise_scale=3.0, shift_magnitude=4.0, seed=13,
)
config = TrainConfig(
    arch=dims,
    optimizer=OptimizerConfig(learning_rate=1e-3),
    schedule=ScheduleConfig(epochs=10, warmup_epochs=1, batch_size=16),
    seed=5,
    dataset=spec,
    task="pretrain",
)
arch = describe_arch("toy_vit", depth=6, model_dim=32, heads=4, ffn_dim=64, seq_len=8)

print("pre-training, then one full fine-tune to measure angles ...")
t0 = time.monotonic()
pretrained = train(config).final_checkpoint
finetune = replace(config, task="finetune", seed=6)
full = train(finetune, init=pretrained)
report = compute_angles(pretrained, full.final_checkpoint, arch)
print(f"  done in {time.monotonic() - t0:.1f}s")

plans = plan_series(report, arch, "large", [1, 2, 3, 4, 5])
data = generate_dataset(spec)
_, _, x_val, y_val = data.task_split("finetune")


def held_out_accuracy(ckpt: Checkpoint) -> float:
    params = {name: t.array for name, t in ckpt.tensors.items()}
    return float((predict(params, x_val, dims) == y_val).mean())


print("\nfive partial runs, varying only top-k:")
members = []
for k, plan in enumerate(plans, start=1):
    run = train(replace(finetune, freeze=plan), init=pretrained)
    members.append(run.final_checkpoint)
    count = plan.trainable_param_count(dims.num_classes)
    print(
        f"  top-{k}: val_acc={run.final_val_accuracy:.4f} "
        f"trainable={count} ({millions_str(count)}M)"
    )

soup = uniform_soup_checkpoints(members)
print(f"\nuniform soup: val_acc={held_out_accuracy(soup):.4f}")
total = soup_param_total(plans, dims.num_classes)
display = soup_millions_str(p.trainable_param_count(dims.num_classes) for p in plans)
print(f"soup budget = sum of per-run trainable counts: {total} ({display}M)")

print("\ngreedy soup with a corrupted candidate thrown in:")
rng = np.random.default_rng(99)
corrupted = Checkpoint(
    {
        name: Tensor(rng.normal(size=t.shape).astype(np.float32), name=name)
        for name, t in members[0].tensors.items()
    },
    dict(members[0].metadata),
)
greedy = greedy_soup(members + [corrupted], held_out_accuracy)
print(f"  greedy soup val_acc={held_out_accuracy(greedy):.4f}")
print(f"  corrupted member alone scores {held_out_accuracy(corrupted):.4f} and is rejected")
