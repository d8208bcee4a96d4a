"""Turn an angle report into a freeze plan: top-k selection per homogeneous group.

Within each homogeneous group of a stage, the k layers with the largest
(``magnitude="large"``, for challenging tasks) or smallest (``"small"``, for
easy tasks) fine-tuned angles are selected for training; ties go to the
shallower layer. The same k applies to every group of a stage, so a one-stage
model with topk 2 trains 2 attention and 2 feed-forward layers plus the head.
"""

from __future__ import annotations

from dataclasses import dataclass

from .arch import ArchDescriptor, FreezePlan, describe_arch
from .angles import AngleReport
from .errors import IncompatibleReports, InvalidPolicy, InvalidValue, NoGuidelines

__all__ = [
    "FapftPolicy",
    "default_policy",
    "plan_fapft",
    "plan_series",
    "GUIDELINE_DEFAULTS",
]

MAGNITUDES = ("large", "small")
DIFFICULTIES = ("easy", "challenging")

# Per-architecture starting points: magnitude follows task difficulty (small
# angles preserve pre-trained knowledge on easy tasks, large angles adapt
# hardest on challenging ones); topk defaults select roughly a third of a
# one-stage model, and for four-stage models keep the first two stages fully
# tuned on easy tasks but frozen on challenging ones.
GUIDELINE_DEFAULTS: dict[str, dict[str, tuple[str, tuple[int, ...]]]] = {
    "vit_b16": {
        "easy": ("small", (4,)),
        "challenging": ("large", (4,)),
    },
    "swin_b": {
        "easy": ("small", (2, 2, 6, 1)),
        "challenging": ("large", (0, 0, 6, 2)),
    },
}


@dataclass(frozen=True)
class FapftPolicy:
    """Angle magnitude plus per-stage top-k; one-stage models use length 1."""

    magnitude: str
    topk_per_stage: tuple[int, ...]
    difficulty_tag: str | None = None

    def __post_init__(self):
        if self.magnitude not in MAGNITUDES:
            raise InvalidPolicy(f"magnitude must be one of {MAGNITUDES}")
        if self.difficulty_tag is not None and self.difficulty_tag not in DIFFICULTIES:
            raise InvalidPolicy(f"difficulty must be one of {DIFFICULTIES}")
        if not all(isinstance(k, int) and k >= 0 for k in self.topk_per_stage):
            raise InvalidPolicy("topk values must be non-negative ints")

    def validate_for(self, arch: ArchDescriptor):
        if len(self.topk_per_stage) != len(arch.stages):
            raise InvalidPolicy(
                f"{arch.arch_id} has {len(arch.stages)} stages but policy "
                f"has {len(self.topk_per_stage)} topk values"
            )
        for stage, k in zip(arch.stages, self.topk_per_stage):
            if k > stage.blocks:
                raise InvalidPolicy(
                    f"topk {k} exceeds stage {stage.index} size {stage.blocks}"
                )

    def to_json_obj(self) -> dict:
        return {
            "magnitude": self.magnitude,
            "topk_per_stage": list(self.topk_per_stage),
        }


def default_policy(arch: ArchDescriptor | str, difficulty: str) -> FapftPolicy:
    """Guideline starting policy for an architecture and task difficulty.

    The desk-scale ``toy_vit`` family uses the same one-third ratio as the
    one-stage reference model (topk = max(1, depth // 3)); it needs a full
    descriptor since its depth is configurable.
    """
    if difficulty not in DIFFICULTIES:
        raise InvalidValue(f"difficulty must be one of {DIFFICULTIES}")
    arch_id = arch if isinstance(arch, str) else arch.arch_id
    if arch_id == "toy_vit":
        descriptor = describe_arch("toy_vit") if isinstance(arch, str) else arch
        depth = descriptor.stages[0].blocks
        magnitude = "small" if difficulty == "easy" else "large"
        return FapftPolicy(magnitude, (max(1, depth // 3),), difficulty)
    table = GUIDELINE_DEFAULTS.get(arch_id)
    if table is None:
        raise NoGuidelines(
            f"no guideline defaults for {arch_id!r}; supply an explicit policy"
        )
    magnitude, topk = table[difficulty]
    return FapftPolicy(magnitude, topk, difficulty)


def plan_fapft(
    report: AngleReport, arch: ArchDescriptor, policy: FapftPolicy
) -> FreezePlan:
    """Select per-group top-k layers by angle and return the resulting plan."""
    if report.arch_id != arch.arch_id:
        raise IncompatibleReports(
            f"report is for {report.arch_id!r}, descriptor is {arch.arch_id!r}"
        )
    policy.validate_for(arch)
    reported = {e.layer_id for e in report.entries}
    missing = [l.layer_id for l in arch.layers if l.layer_id not in reported]
    if missing:
        raise IncompatibleReports(f"report lacks angles for layers: {missing}")

    sign = -1.0 if policy.magnitude == "large" else 1.0
    selected = []
    for group in arch.groups:
        k = policy.topk_per_stage[group.stage]
        order = sorted(
            group.members,
            key=lambda l: (sign * report.angle_of(l.layer_id), l.depth_key),
        )
        selected.extend(order[:k])

    from .arch import _make_plan  # shared constructor keeps ordering canonical

    return _make_plan(
        arch,
        "FAPFT",
        selected,
        policy={
            "magnitude": policy.magnitude,
            "topk_per_stage": list(policy.topk_per_stage),
        },
    )


def plan_series(
    report: AngleReport,
    arch: ArchDescriptor,
    magnitude: str,
    topk_values: list,
) -> list[FreezePlan]:
    """One plan per top-k value; the usual seed for soup experiments.

    Each element of ``topk_values`` is an int for one-stage models or a
    per-stage list for multi-stage ones.
    """
    plans = []
    for value in topk_values:
        topk = (value,) if isinstance(value, int) else tuple(value)
        plans.append(plan_fapft(report, arch, FapftPolicy(magnitude, topk)))
    return plans
