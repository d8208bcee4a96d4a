"""Declarative architecture descriptors and exact trainable-parameter accounting.

A *layer* is an entire residual-connected unit: the attention or feed-forward
module together with its preceding normalization. Layers with identical
structure and parameter count form a *homogeneous group*; multi-stage models
group per stage. Everything outside residual units (patch embedding, class
token, positional embedding, downsamplers, final norm) is *non-residual* and
frozen by default in every partial plan; the classifier head is always
trainable.

Parameter counts are closed-form functions of the stage dimensions. There are
no lookup tables of totals anywhere: a count is always the sum of the element
counts of concrete tensor shapes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .errors import (
    FormatError,
    IncompatiblePlan,
    InvalidValue,
    UnknownArchitecture,
    UnmappedTensor,
)

__all__ = [
    "ATTN",
    "FFN",
    "StageSpec",
    "LayerRef",
    "HomogeneousGroup",
    "ArchDescriptor",
    "FreezePlan",
    "describe_arch",
    "manual_strategy",
    "full_plan",
    "linear_probe_plan",
    "param_count",
    "map_tensors",
    "millions_str",
    "soup_millions_str",
    "MANUAL_STRATEGY_ALIASES",
]

ATTN = "ATTN"
FFN = "FFN"
_CATEGORIES = (ATTN, FFN)

# Buffers that real-world hierarchical checkpoints carry inside attention
# modules; they hold indices/masks, not parameters, and are skipped by
# map_tensors and every count.
_IGNORED_SUFFIXES = (".attn.relative_position_index", ".attn_mask")


def _numel(shape: Sequence[int]) -> int:
    n = 1
    for d in shape:
        n *= int(d)
    return n


@dataclass(frozen=True)
class StageSpec:
    """Dimensions of one stage: block count plus per-block widths."""

    index: int
    blocks: int
    dim: int
    heads: int
    ffn_dim: int
    window: int | None = None  # set for windowed attention (adds a bias table)


@dataclass(frozen=True)
class LayerRef:
    """One residual unit: its id, its tensors (with shapes), and its exact size."""

    stage: int
    block: int
    category: str
    tensors: Mapping[str, tuple[int, ...]]

    @property
    def layer_id(self) -> str:
        return f"s{self.stage}.b{self.block}.{self.category}"

    @property
    def param_count(self) -> int:
        return sum(_numel(s) for s in self.tensors.values())

    @property
    def depth_key(self) -> tuple[int, int, int]:
        return (self.stage, self.block, _CATEGORIES.index(self.category))


@dataclass(frozen=True)
class HomogeneousGroup:
    """Layers of one (stage, category) sharing structure and parameter count."""

    stage: int
    category: str
    members: tuple[LayerRef, ...]

    def __post_init__(self):
        counts = {m.param_count for m in self.members}
        shapes = {tuple(sorted(m.tensors.values())) for m in self.members}
        if len(counts) != 1 or len(shapes) != 1:
            raise InvalidValue(
                f"group s{self.stage}.{self.category} is not homogeneous"
            )

    @property
    def group_id(self) -> str:
        return f"s{self.stage}.{self.category}"

    @property
    def member_param_count(self) -> int:
        return self.members[0].param_count


def _attn_tensors(prefix: str, stage: StageSpec) -> dict[str, tuple[int, ...]]:
    d = stage.dim
    tensors = {
        f"{prefix}.norm1.weight": (d,),
        f"{prefix}.norm1.bias": (d,),
        f"{prefix}.attn.qkv.weight": (3 * d, d),
        f"{prefix}.attn.qkv.bias": (3 * d,),
        f"{prefix}.attn.proj.weight": (d, d),
        f"{prefix}.attn.proj.bias": (d,),
    }
    if stage.window is not None:
        side = 2 * stage.window - 1
        tensors[f"{prefix}.attn.relative_position_bias_table"] = (
            side * side,
            stage.heads,
        )
    return tensors


def _ffn_tensors(prefix: str, stage: StageSpec) -> dict[str, tuple[int, ...]]:
    d, f = stage.dim, stage.ffn_dim
    return {
        f"{prefix}.norm2.weight": (d,),
        f"{prefix}.norm2.bias": (d,),
        f"{prefix}.mlp.fc1.weight": (f, d),
        f"{prefix}.mlp.fc1.bias": (f,),
        f"{prefix}.mlp.fc2.weight": (d, f),
        f"{prefix}.mlp.fc2.bias": (d,),
    }


class ArchDescriptor:
    """Layer inventory, tensor-name schema, groups, and head schema of one architecture."""

    def __init__(
        self,
        arch_id: str,
        stages: Sequence[StageSpec],
        layers: Sequence[LayerRef],
        non_residual: Mapping[str, tuple[int, ...]],
        head_feature_dim: int,
        dims: Mapping[str, int] | None = None,
    ):
        self.arch_id = arch_id
        self.stages = tuple(stages)
        self.layers = tuple(sorted(layers, key=lambda l: l.depth_key))
        self.non_residual = dict(non_residual)
        self.head_feature_dim = head_feature_dim
        self.dims = dict(dims or {})
        self.layer_map: dict[str, LayerRef] = {l.layer_id: l for l in self.layers}
        groups = []
        for stage in self.stages:
            for category in _CATEGORIES:
                members = tuple(
                    l
                    for l in self.layers
                    if l.stage == stage.index and l.category == category
                )
                if members:
                    groups.append(HomogeneousGroup(stage.index, category, members))
        self.groups: tuple[HomogeneousGroup, ...] = tuple(groups)
        self._owner: dict[str, LayerRef | str] = {}
        for layer in self.layers:
            for name in layer.tensors:
                self._owner[name] = layer
        for name in self.non_residual:
            self._owner[name] = "non_residual"

    # -- schema ------------------------------------------------------------

    def head_shapes(self, num_classes: int) -> dict[str, tuple[int, ...]]:
        if num_classes <= 0:
            raise InvalidValue(f"num_classes must be positive, got {num_classes}")
        return {
            "head.weight": (num_classes, self.head_feature_dim),
            "head.bias": (num_classes,),
        }

    def schema_shapes(self, num_classes: int) -> dict[str, tuple[int, ...]]:
        """Every tensor name of a complete checkpoint, with its shape."""
        shapes: dict[str, tuple[int, ...]] = {}
        for layer in self.layers:
            shapes.update(layer.tensors)
        shapes.update(self.non_residual)
        shapes.update(self.head_shapes(num_classes))
        return shapes

    # -- counting ----------------------------------------------------------

    @property
    def residual_param_count(self) -> int:
        return sum(l.param_count for l in self.layers)

    @property
    def non_residual_param_count(self) -> int:
        return sum(_numel(s) for s in self.non_residual.values())

    def head_param_count(self, num_classes: int) -> int:
        if num_classes <= 0:
            raise InvalidValue(f"num_classes must be positive, got {num_classes}")
        return self.head_feature_dim * num_classes + num_classes

    def full_param_count(self, num_classes: int) -> int:
        return (
            self.residual_param_count
            + self.non_residual_param_count
            + self.head_param_count(num_classes)
        )

    def __repr__(self):
        return (
            f"ArchDescriptor({self.arch_id!r}, {len(self.layers)} layers, "
            f"{len(self.groups)} groups)"
        )


def _build_vit_b16() -> ArchDescriptor:
    stage = StageSpec(index=0, blocks=12, dim=768, heads=12, ffn_dim=3072)
    layers = []
    for b in range(stage.blocks):
        prefix = f"blocks.{b}"
        layers.append(LayerRef(0, b, ATTN, _attn_tensors(prefix, stage)))
        layers.append(LayerRef(0, b, FFN, _ffn_tensors(prefix, stage)))
    tokens = (224 // 16) ** 2 + 1  # patches + class token
    non_residual = {
        "patch_embed.proj.weight": (768, 3, 16, 16),
        "patch_embed.proj.bias": (768,),
        "cls_token": (1, 1, 768),
        "pos_embed": (1, tokens, 768),
        "norm.weight": (768,),
        "norm.bias": (768,),
    }
    return ArchDescriptor("vit_b16", [stage], layers, non_residual, 768)


def _build_swin_b() -> ArchDescriptor:
    depths = (2, 2, 18, 2)
    heads = (4, 8, 16, 32)
    stages = [
        StageSpec(
            index=s,
            blocks=depths[s],
            dim=128 * 2**s,
            heads=heads[s],
            ffn_dim=4 * 128 * 2**s,
            window=7,
        )
        for s in range(4)
    ]
    layers = []
    for stage in stages:
        for b in range(stage.blocks):
            prefix = f"stages.{stage.index}.blocks.{b}"
            layers.append(LayerRef(stage.index, b, ATTN, _attn_tensors(prefix, stage)))
            layers.append(LayerRef(stage.index, b, FFN, _ffn_tensors(prefix, stage)))
    non_residual: dict[str, tuple[int, ...]] = {
        "patch_embed.proj.weight": (128, 3, 4, 4),
        "patch_embed.proj.bias": (128,),
        "patch_embed.norm.weight": (128,),
        "patch_embed.norm.bias": (128,),
    }
    for s in range(3):  # patch merging between stages
        d = 128 * 2**s
        non_residual[f"stages.{s}.downsample.norm.weight"] = (4 * d,)
        non_residual[f"stages.{s}.downsample.norm.bias"] = (4 * d,)
        non_residual[f"stages.{s}.downsample.reduction.weight"] = (2 * d, 4 * d)
    non_residual["norm.weight"] = (1024,)
    non_residual["norm.bias"] = (1024,)
    return ArchDescriptor("swin_b", stages, layers, non_residual, 1024)


_TOY_DEFAULTS = {"depth": 4, "model_dim": 32, "heads": 4, "ffn_dim": None, "seq_len": 8}


def _build_toy_vit(**overrides) -> ArchDescriptor:
    unknown = set(overrides) - set(_TOY_DEFAULTS)
    if unknown:
        raise InvalidValue(f"unknown toy_vit dimensions: {sorted(unknown)}")
    dims = dict(_TOY_DEFAULTS)
    dims.update({k: v for k, v in overrides.items() if v is not None})
    if dims["ffn_dim"] is None:
        dims["ffn_dim"] = 4 * dims["model_dim"]
    for key, value in dims.items():
        if not isinstance(value, int) or value <= 0:
            raise InvalidValue(f"toy_vit dimension {key} must be a positive int")
    if dims["model_dim"] % dims["heads"] != 0:
        raise InvalidValue("model_dim must be divisible by heads")
    stage = StageSpec(
        index=0,
        blocks=dims["depth"],
        dim=dims["model_dim"],
        heads=dims["heads"],
        ffn_dim=dims["ffn_dim"],
    )
    layers = []
    for b in range(stage.blocks):
        prefix = f"blocks.{b}"
        layers.append(LayerRef(0, b, ATTN, _attn_tensors(prefix, stage)))
        layers.append(LayerRef(0, b, FFN, _ffn_tensors(prefix, stage)))
    non_residual = {
        "pos_embed": (dims["seq_len"], dims["model_dim"]),
        "norm.weight": (dims["model_dim"],),
        "norm.bias": (dims["model_dim"],),
    }
    return ArchDescriptor(
        "toy_vit", [stage], layers, non_residual, dims["model_dim"], dims
    )


def describe_arch(arch_id: str, **dims) -> ArchDescriptor:
    """Build the descriptor of a supported architecture.

    Only ``toy_vit`` accepts dimension overrides (depth, model_dim, heads,
    ffn_dim, seq_len); the reference architectures are fixed.
    """
    if arch_id == "toy_vit":
        return _build_toy_vit(**dims)
    if arch_id == "vit_b16":
        builder = _build_vit_b16
    elif arch_id == "swin_b":
        builder = _build_swin_b
    else:
        raise UnknownArchitecture(f"unknown architecture {arch_id!r}")
    if dims:
        raise InvalidValue(f"{arch_id} does not accept dimension overrides")
    return builder()


# ---------------------------------------------------------------------------
# freeze plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreezePlan:
    """The trainable set of one fine-tuning run.

    The classifier head is trainable in every plan (the head of a fresh task
    has to be learned, and linear probing consists of exactly that), while
    non-residual modules are frozen unless explicitly enabled.
    """

    arch_id: str
    strategy_tag: str
    trainable: tuple[LayerRef, ...]
    head_feature_dim: int
    non_residual_total: int
    head_trainable: bool = True
    non_residual_trainable: bool = False
    policy: Mapping[str, object] | None = None

    @property
    def trainable_layer_ids(self) -> tuple[str, ...]:
        return tuple(l.layer_id for l in self.trainable)

    def trainable_param_count(self, num_classes: int) -> int:
        if num_classes <= 0:
            raise InvalidValue(f"num_classes must be positive, got {num_classes}")
        total = sum(l.param_count for l in self.trainable)
        total += self.head_feature_dim * num_classes + num_classes
        if self.non_residual_trainable:
            total += self.non_residual_total
        return total

    def same_selection(self, other: "FreezePlan") -> bool:
        """Selection equality regardless of how the plan was produced."""
        return (
            self.arch_id == other.arch_id
            and set(self.trainable_layer_ids) == set(other.trainable_layer_ids)
            and self.head_trainable == other.head_trainable
            and self.non_residual_trainable == other.non_residual_trainable
        )

    def to_json_obj(self, classes: Iterable[int] = (100, 1000)) -> dict:
        return {
            "arch_id": self.arch_id,
            "strategy_tag": self.strategy_tag,
            "policy": dict(self.policy) if self.policy is not None else None,
            "trainable_layers": list(self.trainable_layer_ids),
            "head_trainable": self.head_trainable,
            "non_residual_trainable": self.non_residual_trainable,
            "param_count_by_classes": {
                str(n): self.trainable_param_count(n) for n in classes
            },
        }

    def to_json_text(self, classes: Iterable[int] = (100, 1000)) -> str:
        return json.dumps(self.to_json_obj(classes), sort_keys=True) + "\n"


def _make_plan(
    arch: ArchDescriptor,
    tag: str,
    layers: Iterable[LayerRef],
    non_residual_trainable: bool = False,
    policy: Mapping[str, object] | None = None,
) -> FreezePlan:
    ordered = tuple(sorted(layers, key=lambda l: l.depth_key))
    seen = set()
    for layer in ordered:
        if layer.layer_id in seen:
            raise InvalidValue(f"duplicate trainable layer {layer.layer_id}")
        seen.add(layer.layer_id)
    return FreezePlan(
        arch_id=arch.arch_id,
        strategy_tag=tag,
        trainable=ordered,
        head_feature_dim=arch.head_feature_dim,
        non_residual_total=arch.non_residual_param_count,
        non_residual_trainable=non_residual_trainable,
        policy=policy,
    )


def plan_from_json(data: Mapping | str, arch: ArchDescriptor) -> FreezePlan:
    """Rebuild a plan from its JSON form, resolving layers against ``arch``."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed plan JSON: {exc}") from exc
    required = {
        "arch_id",
        "strategy_tag",
        "policy",
        "trainable_layers",
        "head_trainable",
        "non_residual_trainable",
    }
    missing = required - set(data)
    if missing:
        raise FormatError(f"plan JSON missing fields: {sorted(missing)}")
    if data["arch_id"] != arch.arch_id:
        raise IncompatiblePlan(
            f"plan is for {data['arch_id']!r}, descriptor is {arch.arch_id!r}"
        )
    if data["head_trainable"] is not True:
        raise FormatError("head_trainable must be true in every plan")
    layers = []
    for lid in data["trainable_layers"]:
        if lid not in arch.layer_map:
            raise IncompatiblePlan(f"plan names unknown layer {lid!r}")
        layers.append(arch.layer_map[lid])
    plan = _make_plan(
        arch,
        str(data["strategy_tag"]),
        layers,
        non_residual_trainable=bool(data["non_residual_trainable"]),
        policy=data["policy"],
    )
    for classes, stored in (data.get("param_count_by_classes") or {}).items():
        if plan.trainable_param_count(int(classes)) != int(stored):
            raise FormatError(
                f"plan param_count_by_classes[{classes}] is {stored}, "
                f"recomputed {plan.trainable_param_count(int(classes))}"
            )
    return plan


MANUAL_STRATEGY_ALIASES = {
    "full": "A",
    "attn_only": "B",
    "ffn_only": "C",
    "first_half_attn": "D",
    "last_half_attn": "E",
    "first_half_ffn": "F",
    "last_half_ffn": "G",
    "first_half_blocks": "H",
    "last_half_blocks": "I",
}


def manual_strategy(arch: ArchDescriptor, tag: str) -> FreezePlan:
    """One of the nine manual partial fine-tuning strategies A..I.

    A is full fine-tuning (everything trainable, non-residual included);
    B/C train all attention / all feed-forward layers; D-G take the first or
    last half of one category by depth; H/I take the first or last half of
    the blocks (both layers of each block). Odd counts split floor/ceil with
    the extra element in the last half.
    """
    key = MANUAL_STRATEGY_ALIASES.get(tag.lower(), tag.upper())
    if key not in "ABCDEFGHI" or len(key) != 1:
        raise InvalidValue(f"unknown manual strategy {tag!r}")
    attn = [l for l in arch.layers if l.category == ATTN]
    ffn = [l for l in arch.layers if l.category == FFN]
    blocks = sorted({(l.stage, l.block) for l in arch.layers})
    if key == "A":
        return _make_plan(arch, "A", arch.layers, non_residual_trainable=True)
    if key == "B":
        return _make_plan(arch, "B", attn)
    if key == "C":
        return _make_plan(arch, "C", ffn)
    if key in "DE":
        half = len(attn) // 2
        return _make_plan(arch, key, attn[:half] if key == "D" else attn[half:])
    if key in "FG":
        half = len(ffn) // 2
        return _make_plan(arch, key, ffn[:half] if key == "F" else ffn[half:])
    half = len(blocks) // 2
    chosen = set(blocks[:half] if key == "H" else blocks[half:])
    layers = [l for l in arch.layers if (l.stage, l.block) in chosen]
    return _make_plan(arch, key, layers)


def full_plan(arch: ArchDescriptor) -> FreezePlan:
    return _make_plan(arch, "FULL", arch.layers, non_residual_trainable=True)


def linear_probe_plan(arch: ArchDescriptor) -> FreezePlan:
    return _make_plan(arch, "LINEAR_PROBE", ())


def param_count(arch: ArchDescriptor, plan: FreezePlan, num_classes: int) -> int:
    """Exact trainable-parameter total of ``plan`` under ``arch``."""
    if num_classes <= 0:
        raise InvalidValue(f"num_classes must be positive, got {num_classes}")
    if plan.arch_id != arch.arch_id:
        raise IncompatiblePlan(
            f"plan is for {plan.arch_id!r}, descriptor is {arch.arch_id!r}"
        )
    total = 0
    for lid in plan.trainable_layer_ids:
        layer = arch.layer_map.get(lid)
        if layer is None:
            raise IncompatiblePlan(f"plan names unknown layer {lid!r}")
        total += layer.param_count
    total += arch.head_param_count(num_classes)
    if plan.non_residual_trainable:
        total += arch.non_residual_param_count
    return total


def map_tensors(arch: ArchDescriptor, tensor_names: Iterable[str]):
    """Assign every tensor name to its layer, ``"non_residual"``, or ``"head"``.

    Known non-parameter buffers are skipped. Unmatched names raise
    UnmappedTensor listing all offenders.
    """
    assignment: dict[str, LayerRef | str] = {}
    unmatched = []
    for name in tensor_names:
        if name in ("head.weight", "head.bias"):
            assignment[name] = "head"
            continue
        owner = arch._owner.get(name)
        if owner is not None:
            assignment[name] = owner
            continue
        if any(name.endswith(suffix) for suffix in _IGNORED_SUFFIXES):
            continue
        unmatched.append(name)
    if unmatched:
        raise UnmappedTensor(
            f"{arch.arch_id}: unmapped tensor names: {sorted(unmatched)}"
        )
    return assignment


# ---------------------------------------------------------------------------
# display rounding
# ---------------------------------------------------------------------------


def millions_str(count: int) -> str:
    """Exact count rendered in millions at two decimals (half-up)."""
    value = Decimal(count) / Decimal(1_000_000)
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def soup_millions_str(counts: Iterable[int]) -> str:
    """Soup headline figure: round each run to 0.01M, sum, render at 0.1M.

    Rounding per run first is what makes five 86.57M runs display as 432.9
    rather than 432.8; the exact integers stay available separately.
    """
    total = sum(
        (Decimal(c) / Decimal(1_000_000)).quantize(
            Decimal("0.01"), rounding=ROUND_HALF_UP
        )
        for c in counts
    )
    return str(total.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))
