"""Deterministic desk-scale pre-training and fine-tuning with layer-level freezing.

A run is fully specified by a :class:`TrainConfig`: model dimensions, AdamW
settings, cosine-with-warmup schedule, seed, synthetic data spec, which task
variant to train on, and an optional freeze plan. Identical configs produce
byte-identical final checkpoints.

Frozen tensors receive no updates and carry no optimizer state, so they stay
bitwise equal to their initialization for any number of epochs.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .arch import ArchDescriptor, FreezePlan, describe_arch, linear_probe_plan, plan_from_json
from .angles import AngleReport, compute_angles
from .checkpoint import Checkpoint
from .errors import (
    DivergenceError,
    FormatError,
    IncompatibleCheckpoints,
    IncompatiblePlan,
    InvalidValue,
)
from .model import (
    ModelDims,
    init_params,
    loss_and_grads,
    loss_only,
    param_shapes,
    predict,
    reinit_head,
)
from .planner import FapftPolicy, default_policy, plan_fapft
from .tensors import Tensor

__all__ = [
    "SyntheticSpec",
    "SyntheticDataset",
    "TrainConfig",
    "RunResult",
    "GradCheckResult",
    "PipelineResult",
    "generate_dataset",
    "train",
    "grad_check",
    "run_fapft_pipeline",
    "cosine_warmup_lr",
]

# independent rng streams per purpose, mixed with the run seed
_STREAM_INIT = 101
_STREAM_HEAD = 202
_STREAM_SHUFFLE = 303
_STREAM_DATA = 404
_STREAM_GRADCHECK = 505

TASKS = ("pretrain", "finetune")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Token-classification data: per-class centers plus Gaussian token noise.

    One spec defines two tasks sharing class structure: the pre-training task
    samples around the base centers, the fine-tuning task around centers
    relocated by ``shift_magnitude`` along a fixed random unit direction per
    class. Zero shift makes the tasks identical; larger shifts play the role
    of harder downstream datasets.
    """

    num_classes: int
    seq_len: int
    samples_per_class: int
    feature_dim: int
    class_center_scale: float = 1.0
    noise_scale: float = 0.25
    shift_magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_classes", "seq_len", "samples_per_class", "feature_dim"):
            if getattr(self, name) <= 0:
                raise InvalidValue(f"{name} must be positive")
        for name in ("class_center_scale", "noise_scale", "shift_magnitude"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidValue(f"{name} must be finite and >= 0")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "seq_len": self.seq_len,
            "samples_per_class": self.samples_per_class,
            "feature_dim": self.feature_dim,
            "class_center_scale": self.class_center_scale,
            "noise_scale": self.noise_scale,
            "shift_magnitude": self.shift_magnitude,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data) -> "SyntheticSpec":
        try:
            return cls(**data)
        except TypeError as exc:
            raise FormatError(f"malformed dataset spec: {exc}") from exc


@dataclass(frozen=True)
class SyntheticDataset:
    spec: SyntheticSpec
    pretrain_x: np.ndarray
    pretrain_y: np.ndarray
    finetune_x: np.ndarray
    finetune_y: np.ndarray
    base_centers: np.ndarray
    shifted_centers: np.ndarray

    def task_split(self, task: str):
        """(x_train, y_train, x_val, y_val) with the fixed 80/20 index split."""
        if task not in TASKS:
            raise InvalidValue(f"task must be one of {TASKS}")
        x = self.pretrain_x if task == "pretrain" else self.finetune_x
        y = self.pretrain_y if task == "pretrain" else self.finetune_y
        cut = int(0.8 * len(y))
        return x[:cut], y[:cut], x[cut:], y[cut:]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        for arr in (self.pretrain_x, self.pretrain_y, self.finetune_x, self.finetune_y):
            digest.update(arr.tobytes())
        return digest.hexdigest()


def generate_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic dataset generation; identical specs give identical bytes."""
    rng = np.random.default_rng([spec.seed, _STREAM_DATA])
    c, d, t = spec.num_classes, spec.feature_dim, spec.seq_len
    n = c * spec.samples_per_class

    centers = rng.normal(0.0, spec.class_center_scale, size=(c, d))
    directions = rng.normal(size=(c, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    shifted = centers + spec.shift_magnitude * directions

    y = (np.arange(n) % c).astype(np.int64)
    pre_noise = rng.normal(size=(n, t, d))
    ft_noise = rng.normal(size=(n, t, d))
    pre_x = (centers[y][:, None, :] + spec.noise_scale * pre_noise).astype(np.float32)
    ft_x = (shifted[y][:, None, :] + spec.noise_scale * ft_noise).astype(np.float32)
    return SyntheticDataset(
        spec=spec,
        pretrain_x=pre_x,
        pretrain_y=y,
        finetune_x=ft_x,
        finetune_y=y.copy(),
        base_centers=centers,
        shifted_centers=shifted,
    )


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.05

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise InvalidValue("learning_rate and epsilon must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidValue("betas must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidValue("weight_decay must be >= 0")


@dataclass(frozen=True)
class ScheduleConfig:
    epochs: int
    warmup_epochs: int
    batch_size: int

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise InvalidValue("epochs and batch_size must be positive")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise InvalidValue("warmup_epochs must lie in [0, epochs]")


@dataclass(frozen=True)
class TrainConfig:
    arch: ModelDims
    optimizer: OptimizerConfig
    schedule: ScheduleConfig
    seed: int
    dataset: SyntheticSpec
    task: str = "finetune"
    freeze: FreezePlan | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidValue(f"task must be one of {TASKS}")
        if self.dataset.feature_dim != self.arch.model_dim:
            raise InvalidValue("dataset feature_dim must equal model_dim")
        if self.dataset.seq_len != self.arch.seq_len:
            raise InvalidValue("dataset seq_len must equal the model seq_len")

    def descriptor(self) -> ArchDescriptor:
        return describe_arch(
            "toy_vit",
            depth=self.arch.depth,
            model_dim=self.arch.model_dim,
            heads=self.arch.heads,
            ffn_dim=self.arch.ffn_dim,
            seq_len=self.arch.seq_len,
        )

    def to_json_obj(self) -> dict:
        return {
            "arch": self.arch.to_dict(),
            "optimizer": {
                "learning_rate": self.optimizer.learning_rate,
                "beta1": self.optimizer.beta1,
                "beta2": self.optimizer.beta2,
                "epsilon": self.optimizer.epsilon,
                "weight_decay": self.optimizer.weight_decay,
            },
            "schedule": {
                "epochs": self.schedule.epochs,
                "warmup_epochs": self.schedule.warmup_epochs,
                "batch_size": self.schedule.batch_size,
            },
            "seed": self.seed,
            "dataset": self.dataset.to_dict(),
            "task": self.task,
            "freeze": self.freeze.to_json_obj() if self.freeze else None,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json_text().encode()).hexdigest()

    @classmethod
    def from_json(cls, data) -> "TrainConfig":
        if isinstance(data, (str, bytes)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise FormatError(f"malformed train config JSON: {exc}") from exc
        try:
            arch = ModelDims(**data["arch"])
            config = cls(
                arch=arch,
                optimizer=OptimizerConfig(**data["optimizer"]),
                schedule=ScheduleConfig(**data["schedule"]),
                seed=int(data["seed"]),
                dataset=SyntheticSpec.from_dict(data["dataset"]),
                task=data.get("task", "finetune"),
                freeze=None,
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed train config: {exc}") from exc
        if data.get("freeze"):
            plan = plan_from_json(data["freeze"], config.descriptor())
            config = replace(config, freeze=plan)
        return config


# ---------------------------------------------------------------------------
# schedule and optimizer
# ---------------------------------------------------------------------------


def cosine_warmup_lr(step: int, total_steps: int, warmup_steps: int, lr: float) -> float:
    """Linear warmup to ``lr`` then cosine decay to exactly zero at the last step."""
    if warmup_steps > 0 and step < warmup_steps:
        return lr * (step + 1) / warmup_steps
    decay_span = total_steps - warmup_steps
    if decay_span <= 1:
        return 0.0
    progress = (step - warmup_steps) / (decay_span - 1)
    return lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def _uses_weight_decay(name: str) -> bool:
    if name.endswith(".bias"):
        return False
    module = name.split(".")[-2] if "." in name else name
    return module not in ("norm", "norm1", "norm2")


class _AdamW:
    """Decoupled-weight-decay Adam over an explicit trainable-name set."""

    def __init__(self, trainable: set[str], shapes, config: OptimizerConfig):
        self.config = config
        self.trainable = trainable
        self.m = {n: np.zeros(shapes[n]) for n in trainable}
        self.v = {n: np.zeros(shapes[n]) for n in trainable}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads, lr: float):
        c = self.config
        self.t += 1
        bias1 = 1.0 - c.beta1**self.t
        bias2 = 1.0 - c.beta2**self.t
        for name in sorted(self.trainable):
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + c.epsilon)
            if c.weight_decay > 0.0 and _uses_weight_decay(name):
                update = update + c.weight_decay * params[name]
            params[name] = params[name] - lr * update


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val_accuracy: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
        }


@dataclass(frozen=True)
class RunResult:
    final_checkpoint: Checkpoint
    metrics: tuple[EpochMetrics, ...]
    config_hash: str
    wall_time: float  # informational only; never serialized into artifacts

    @property
    def final_val_accuracy(self) -> float:
        return self.metrics[-1].val_accuracy

    def metrics_jsonl(self) -> str:
        return "".join(
            json.dumps(m.to_dict(), sort_keys=True) + "\n" for m in self.metrics
        )


def _trainable_names(
    plan: FreezePlan | None, arch: ArchDescriptor, dims: ModelDims
) -> set[str]:
    all_names = set(param_shapes(dims))
    if plan is None:
        return all_names
    if plan.arch_id != arch.arch_id:
        raise IncompatiblePlan(
            f"plan is for {plan.arch_id!r}, run is {arch.arch_id!r}"
        )
    names: set[str] = set()
    for lid in plan.trainable_layer_ids:
        layer = arch.layer_map.get(lid)
        if layer is None:
            raise IncompatiblePlan(f"plan names unknown layer {lid!r}")
        names.update(layer.tensors)
    names.update({"head.weight", "head.bias"})
    if plan.non_residual_trainable:
        names.update(arch.non_residual)
    unknown = names - all_names
    if unknown:
        raise IncompatiblePlan(f"plan tensors missing from the model: {sorted(unknown)}")
    return names


def _params_from_init(init: Checkpoint, dims: ModelDims, seed: int):
    shapes = param_shapes(dims)
    params: dict[str, np.ndarray] = {}
    head_matches = (
        "head.weight" in init.tensors
        and init.tensors["head.weight"].shape == shapes["head.weight"]
    )
    for name, shape in shapes.items():
        tensor = init.tensors.get(name)
        if name in ("head.weight", "head.bias") and not head_matches:
            continue  # re-initialized below
        if tensor is None:
            raise IncompatibleCheckpoints(f"init checkpoint lacks tensor {name!r}")
        if tensor.shape != shape:
            raise IncompatibleCheckpoints(
                f"init tensor {name!r} has shape {tensor.shape}, model needs {shape}"
            )
        params[name] = tensor.array.copy()
    if not head_matches:
        params = reinit_head(params, dims, np.random.default_rng([seed, _STREAM_HEAD]))
    return params


def _final_checkpoint(params64, config: TrainConfig) -> Checkpoint:
    tensors = {
        name: Tensor(arr.astype(np.float32), name=name)
        for name, arr in params64.items()
    }
    metadata = {
        "pft.arch_id": "toy_vit",
        "pft.arch_config": json.dumps(config.arch.to_dict(), sort_keys=True),
        "pft.producer": "fapft-train",
        "pft.seed": str(config.seed),
        "pft.epoch": str(config.schedule.epochs),
        "pft.task": config.task,
        "pft.config_hash": config.config_hash,
    }
    return Checkpoint(tensors, metadata)


def _accuracy(params, x, y, dims) -> float:
    return float((predict(params, x, dims) == y).mean())


def train(config: TrainConfig, init: Checkpoint | None = None) -> RunResult:
    """Run one pre-training or fine-tuning job; deterministic for a fixed config.

    ``init=None`` starts from a fresh seed-derived initialization. With an
    init checkpoint, the head is re-initialized when its class count differs
    from the config's. Under a freeze plan, frozen tensors get no optimizer
    state and no updates.
    """
    started = time.monotonic()
    dims = config.arch
    arch = config.descriptor()
    data = generate_dataset(config.dataset)
    x_train, y_train, x_val, y_val = data.task_split(config.task)

    if init is None:
        params32 = init_params(dims, np.random.default_rng([config.seed, _STREAM_INIT]))
    else:
        params32 = _params_from_init(init, dims, config.seed)
    # 64-bit master weights during the run; storage stays 32-bit at both ends
    params = {n: a.astype(np.float64) for n, a in params32.items()}

    trainable = _trainable_names(config.freeze, arch, dims)
    optimizer = _AdamW(trainable, {n: a.shape for n, a in params.items()}, config.optimizer)

    n_train = len(y_train)
    batch = config.schedule.batch_size
    steps_per_epoch = max(1, math.ceil(n_train / batch))
    total_steps = config.schedule.epochs * steps_per_epoch
    warmup_steps = config.schedule.warmup_epochs * steps_per_epoch

    metrics = []
    step = 0
    for epoch in range(config.schedule.epochs):
        order = np.random.default_rng(
            [config.seed, _STREAM_SHUFFLE, epoch]
        ).permutation(n_train)
        loss_sum = 0.0
        for start in range(0, n_train, batch):
            idx = order[start : start + batch]
            loss, grads = loss_and_grads(params, x_train[idx], y_train[idx], dims)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            lr = cosine_warmup_lr(
                step, total_steps, warmup_steps, config.optimizer.learning_rate
            )
            optimizer.step(params, grads, lr)
            loss_sum += loss * len(idx)
            step += 1
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / n_train,
                val_accuracy=_accuracy(params, x_val, y_val, dims),
            )
        )

    return RunResult(
        final_checkpoint=_final_checkpoint(params, config),
        metrics=tuple(metrics),
        config_hash=config.config_hash,
        wall_time=time.monotonic() - started,
    )


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst_tensor: str
    per_tensor: dict[str, float] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "worst_tensor": self.worst_tensor,
            "per_tensor": dict(sorted(self.per_tensor.items())),
        }


def grad_check(
    config: TrainConfig,
    samples: int = 200,
    step_size: float = 1e-5,
    corrupt: str | None = None,
) -> GradCheckResult:
    """Analytic gradients vs central finite differences, fully in 64-bit.

    Coordinates are sampled across every tensor role. ``corrupt`` injects a
    deliberate error into one tensor's analytic gradient so tests can verify
    the check actually catches and names faults.
    """
    dims = config.arch
    if dims.model_dim > 16 or dims.depth > 2:
        raise InvalidValue("grad_check expects tiny dims (model_dim <= 16, depth <= 2)")
    data = generate_dataset(config.dataset)
    x_train, y_train, _, _ = data.task_split(config.task)
    take = min(config.schedule.batch_size, len(y_train))
    x, y = x_train[:take], y_train[:take]

    params32 = init_params(dims, np.random.default_rng([config.seed, _STREAM_INIT]))
    params = {n: a.astype(np.float64) for n, a in params32.items()}
    _, grads = loss_and_grads(params, x, y, dims)
    if corrupt is not None:
        if corrupt not in grads:
            raise InvalidValue(f"no tensor named {corrupt!r} to corrupt")
        grads[corrupt] = grads[corrupt] + 0.01 * (1.0 + np.abs(grads[corrupt]))

    rng = np.random.default_rng([config.seed, _STREAM_GRADCHECK])
    names = sorted(params)
    per_coord = max(2, math.ceil(samples / len(names)))
    per_tensor: dict[str, float] = {}
    for name in names:
        flat = params[name].ravel()
        count = min(per_coord, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        worst = 0.0
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + step_size
            plus = loss_only(params, x, y, dims)
            flat[coord] = original - step_size
            minus = loss_only(params, x, y, dims)
            flat[coord] = original
            numeric = (plus - minus) / (2.0 * step_size)
            analytic = float(grads[name].ravel()[coord])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, rel)
        per_tensor[name] = worst
    worst_tensor = max(per_tensor, key=lambda n: per_tensor[n])
    return GradCheckResult(
        max_rel_error=per_tensor[worst_tensor],
        worst_tensor=worst_tensor,
        per_tensor=per_tensor,
    )


# ---------------------------------------------------------------------------
# the four-step pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineResult:
    angle_report: AngleReport
    policy: FapftPolicy
    plan: FreezePlan
    fapft: RunResult
    full: RunResult
    linear_probe: RunResult


def run_fapft_pipeline(
    pre_ckpt: Checkpoint,
    config: TrainConfig,
    difficulty: str,
    topk: tuple[int, ...] | None = None,
    magnitude: str | None = None,
) -> PipelineResult:
    """Angle-guided partial fine-tuning, end to end, with shared hyper-parameters.

    1. fully fine-tune the pre-trained weights on the task;
    2. compute per-layer angles against the pre-trained weights;
    3. resolve the policy (guideline defaults for the difficulty, with
       optional explicit overrides) and select layers per group;
    4. partially fine-tune the pre-trained weights under the resulting plan,
       using the same hyper-parameters as the full run.

    Full fine-tuning and linear probing come back as baselines.
    """
    arch = config.descriptor()
    full_config = replace(config, task="finetune", freeze=None)
    full = train(full_config, init=pre_ckpt)
    report = compute_angles(pre_ckpt, full.final_checkpoint, arch)

    policy = default_policy(arch, difficulty)
    if topk is not None or magnitude is not None:
        policy = FapftPolicy(
            magnitude=magnitude or policy.magnitude,
            topk_per_stage=tuple(topk) if topk is not None else policy.topk_per_stage,
            difficulty_tag=difficulty,
        )
    plan = plan_fapft(report, arch, policy)

    fapft = train(replace(full_config, freeze=plan), init=pre_ckpt)
    probe = train(replace(full_config, freeze=linear_probe_plan(arch)), init=pre_ckpt)
    return PipelineResult(
        angle_report=report,
        policy=policy,
        plan=plan,
        fapft=fapft,
        full=full,
        linear_probe=probe,
    )
