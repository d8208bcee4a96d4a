"""Angle-guided partial fine-tuning toolkit.

Measures how far each residual layer of a transformer moved during
fine-tuning (the angle between its flattened pre-trained and fine-tuned
weight vectors), selects layers to train via per-group top-k policies, keeps
the parameter accounting exact for the reference architectures, merges runs
into model soups, and validates everything end to end on a deterministic
desk-scale trainer.
"""

__version__ = "0.1.0"

from . import errors
from .angles import (
    AngleEntry,
    AngleReport,
    ConsistencyMatrix,
    compute_angles,
    group_rank_table,
    rank_consistency,
    render_rank_table,
    report_from_json,
)
from .arch import (
    ArchDescriptor,
    FreezePlan,
    HomogeneousGroup,
    LayerRef,
    describe_arch,
    full_plan,
    linear_probe_plan,
    manual_strategy,
    map_tensors,
    millions_str,
    param_count,
    plan_from_json,
    soup_millions_str,
)
from .checkpoint import (
    Checkpoint,
    DiffReport,
    diff_checkpoints,
    read_checkpoint,
    write_checkpoint,
)
from .model import ModelDims
from .planner import FapftPolicy, default_policy, plan_fapft, plan_series
from .soup import (
    SoupInput,
    SoupRecipe,
    arch_from_checkpoint,
    greedy_soup,
    soup_param_total,
    uniform_soup,
    uniform_soup_checkpoints,
)
from .tensors import Tensor, kendall_tau, mean_stack, vec_angle
from .train import (
    GradCheckResult,
    OptimizerConfig,
    PipelineResult,
    RunResult,
    ScheduleConfig,
    SyntheticDataset,
    SyntheticSpec,
    TrainConfig,
    cosine_warmup_lr,
    generate_dataset,
    grad_check,
    run_fapft_pipeline,
    train,
)

__all__ = [
    "__version__",
    "errors",
    # tensors
    "Tensor",
    "vec_angle",
    "kendall_tau",
    "mean_stack",
    # checkpoints
    "Checkpoint",
    "DiffReport",
    "read_checkpoint",
    "write_checkpoint",
    "diff_checkpoints",
    # architectures and plans
    "ArchDescriptor",
    "LayerRef",
    "HomogeneousGroup",
    "FreezePlan",
    "describe_arch",
    "manual_strategy",
    "full_plan",
    "linear_probe_plan",
    "param_count",
    "map_tensors",
    "plan_from_json",
    "millions_str",
    "soup_millions_str",
    # angles
    "AngleEntry",
    "AngleReport",
    "ConsistencyMatrix",
    "compute_angles",
    "rank_consistency",
    "group_rank_table",
    "render_rank_table",
    "report_from_json",
    # planning
    "FapftPolicy",
    "default_policy",
    "plan_fapft",
    "plan_series",
    # soups
    "SoupInput",
    "SoupRecipe",
    "uniform_soup",
    "uniform_soup_checkpoints",
    "greedy_soup",
    "soup_param_total",
    "arch_from_checkpoint",
    # training
    "ModelDims",
    "OptimizerConfig",
    "ScheduleConfig",
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
