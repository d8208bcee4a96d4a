"""Per-layer fine-tuned angles between two checkpoints and ranking consistency.

For each residual layer, the layer's tensors from both checkpoints are
concatenated in lexicographic name order, flattened, and the angle between
the two resulting vectors is computed. A whole-model angle is computed the
same way over the concatenation of all residual layers. The classifier head
(freshly initialized per task, possibly with a different shape) and the
non-residual modules are excluded and recorded in the report's provenance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .arch import ArchDescriptor, LayerRef, map_tensors
from .checkpoint import Checkpoint
from .errors import (
    DegenerateVector,
    FormatError,
    IncompatibleCheckpoints,
    IncompatibleReports,
    InvalidValue,
)
from .tensors import kendall_tau

__all__ = [
    "AngleEntry",
    "AngleReport",
    "ConsistencyMatrix",
    "compute_angles",
    "rank_consistency",
    "group_rank_table",
    "render_rank_table",
]


class _AngleAccumulator:
    """Streaming angle over a concatenation of tensor pairs.

    Accumulates dot products and squared norms in 64-bit with a fixed
    per-tensor order, so the result is independent of map insertion order.
    Bitwise-equal and bitwise-negated concatenations resolve to exactly
    0 and pi.
    """

    def __init__(self):
        self.dot = 0.0
        self.naa = 0.0
        self.nbb = 0.0
        self.all_equal = True
        self.all_negated = True

    def update(self, a: np.ndarray, b: np.ndarray):
        a64 = a.ravel().astype(np.float64)
        b64 = b.ravel().astype(np.float64)
        self.dot += float(np.dot(a64, b64))
        self.naa += float(np.dot(a64, a64))
        self.nbb += float(np.dot(b64, b64))
        self.all_equal = self.all_equal and np.array_equal(a64, b64)
        self.all_negated = self.all_negated and np.array_equal(a64, -b64)

    def angle(self, label: str) -> float:
        if self.naa == 0.0 or self.nbb == 0.0:
            raise DegenerateVector(f"{label}: zero-norm weight vector")
        if self.all_equal:
            return 0.0
        if self.all_negated:
            return math.pi
        cos = self.dot / math.sqrt(self.naa * self.nbb)
        return math.acos(min(1.0, max(-1.0, cos)))


@dataclass(frozen=True)
class AngleEntry:
    layer_id: str
    group_id: str
    angle: float
    rank_in_group: int


@dataclass(frozen=True)
class AngleReport:
    """Per-layer angles with group ranks, plus provenance hashes."""

    arch_id: str
    entries: tuple[AngleEntry, ...]
    whole_model_angle: float
    pretrained_hash: str
    finetuned_hash: str
    excluded_tensors: tuple[str, ...]

    def angle_of(self, layer_id: str) -> float:
        return self._by_layer[layer_id].angle

    @property
    def _by_layer(self) -> dict[str, AngleEntry]:
        return {e.layer_id: e for e in self.entries}

    def angles_in_order(self) -> list[float]:
        """Angle values in the canonical layer order (depth-major)."""
        return [e.angle for e in self.entries]

    def global_ranks(self) -> dict[str, int]:
        """Rank over all residual layers, 1 = largest angle, ties by depth."""
        order = sorted(
            range(len(self.entries)), key=lambda i: (-self.entries[i].angle, i)
        )
        return {self.entries[i].layer_id: r + 1 for r, i in enumerate(order)}

    def to_json_obj(self) -> dict:
        return {
            "arch_id": self.arch_id,
            "whole_model_angle": self.whole_model_angle,
            "entries": [
                {
                    "layer_id": e.layer_id,
                    "group_id": e.group_id,
                    "angle": e.angle,
                    "rank_in_group": e.rank_in_group,
                }
                for e in self.entries
            ],
            "provenance": {
                "pretrained_hash": self.pretrained_hash,
                "finetuned_hash": self.finetuned_hash,
                "excluded_tensors": list(self.excluded_tensors),
            },
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True) + "\n"


def report_from_json(data) -> AngleReport:
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed angle report JSON: {exc}") from exc
    try:
        entries = tuple(
            AngleEntry(
                layer_id=e["layer_id"],
                group_id=e["group_id"],
                angle=float(e["angle"]),
                rank_in_group=int(e["rank_in_group"]),
            )
            for e in data["entries"]
        )
        return AngleReport(
            arch_id=data["arch_id"],
            entries=entries,
            whole_model_angle=float(data["whole_model_angle"]),
            pretrained_hash=data["provenance"]["pretrained_hash"],
            finetuned_hash=data["provenance"]["finetuned_hash"],
            excluded_tensors=tuple(data["provenance"]["excluded_tensors"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed angle report: {exc}") from exc


def _residual_pairs(pre: Checkpoint, ft: Checkpoint, layer: LayerRef):
    for name in sorted(layer.tensors):
        ta = pre.tensors.get(name)
        tb = ft.tensors.get(name)
        if ta is None or tb is None:
            side = "pre-trained" if ta is None else "fine-tuned"
            raise IncompatibleCheckpoints(
                f"residual tensor {name!r} missing from the {side} checkpoint"
            )
        if ta.shape != tb.shape:
            raise IncompatibleCheckpoints(
                f"residual tensor {name!r} has shape {ta.shape} vs {tb.shape}"
            )
        yield ta.array, tb.array


def compute_angles(
    pre: Checkpoint, ft: Checkpoint, arch: ArchDescriptor
) -> AngleReport:
    """Per-layer and whole-model angles between a pre-trained and a fine-tuned checkpoint."""
    # every name must be assignable under the architecture's schema
    map_tensors(arch, pre.tensors.keys())
    map_tensors(arch, ft.tensors.keys())

    angles: dict[str, float] = {}
    whole = _AngleAccumulator()
    for layer in arch.layers:
        acc = _AngleAccumulator()
        for a, b in _residual_pairs(pre, ft, layer):
            acc.update(a, b)
            whole.update(a, b)
        angles[layer.layer_id] = acc.angle(layer.layer_id)

    residual_names = {name for layer in arch.layers for name in layer.tensors}
    excluded = sorted(
        (set(pre.tensors) | set(ft.tensors)) - residual_names
    )

    entries = []
    for group in arch.groups:
        members = sorted(group.members, key=lambda l: l.depth_key)
        order = sorted(
            range(len(members)), key=lambda i: (-angles[members[i].layer_id], i)
        )
        ranks = {members[i].layer_id: r + 1 for r, i in enumerate(order)}
        for member in members:
            entries.append(
                AngleEntry(
                    layer_id=member.layer_id,
                    group_id=group.group_id,
                    angle=angles[member.layer_id],
                    rank_in_group=ranks[member.layer_id],
                )
            )
    entries.sort(key=lambda e: arch.layer_map[e.layer_id].depth_key)

    return AngleReport(
        arch_id=arch.arch_id,
        entries=tuple(entries),
        whole_model_angle=whole.angle("whole model"),
        pretrained_hash=pre.content_hash,
        finetuned_hash=ft.content_hash,
        excluded_tensors=tuple(excluded),
    )


@dataclass(frozen=True)
class ConsistencyMatrix:
    """Pairwise Kendall tau of angle rankings across several reports."""

    report_ids: tuple[str, ...]
    tau: tuple[tuple[float, ...], ...]
    mean_tau: float

    def to_json_obj(self) -> dict:
        return {
            "report_ids": list(self.report_ids),
            "tau": [list(row) for row in self.tau],
            "mean_tau": self.mean_tau,
        }


def rank_consistency(
    reports: list[AngleReport], ids: list[str] | None = None
) -> ConsistencyMatrix:
    """Pairwise tau-b over angle values in canonical layer order, plus their mean.

    Correlations are computed on raw angle values rather than pre-binned
    ranks; tau only depends on the ordering, and this avoids a second round
    of tie-breaking.
    """
    if len(reports) < 2:
        raise InvalidValue("need at least 2 reports for consistency")
    arch_ids = {r.arch_id for r in reports}
    if len(arch_ids) != 1:
        raise IncompatibleReports(f"mixed architectures: {sorted(arch_ids)}")
    layer_orders = {tuple(e.layer_id for e in r.entries) for r in reports}
    if len(layer_orders) != 1:
        raise IncompatibleReports("reports disagree on the layer inventory")
    if ids is None:
        ids = [r.finetuned_hash[:12] for r in reports]
    elif len(ids) != len(reports):
        raise InvalidValue("one id per report required")

    vectors = [r.angles_in_order() for r in reports]
    n = len(reports)
    tau = [[1.0] * n for _ in range(n)]
    off_diagonal = []
    for i in range(n):
        for j in range(i + 1, n):
            t = kendall_tau(vectors[i], vectors[j])
            tau[i][j] = tau[j][i] = t
            off_diagonal.append(t)
    return ConsistencyMatrix(
        report_ids=tuple(ids),
        tau=tuple(tuple(row) for row in tau),
        mean_tau=sum(off_diagonal) / len(off_diagonal),
    )


def group_rank_table(report: AngleReport):
    """Rows per group in (stage, category) order; within a group, depth order.

    Returns a list of ``(group_id, rows)`` where each row is
    ``(layer_id, angle, rank_in_group)``.
    """
    groups: dict[str, list[AngleEntry]] = {}
    for entry in report.entries:
        groups.setdefault(entry.group_id, []).append(entry)

    def group_key(gid: str):
        stage, category = gid.split(".")
        return (int(stage[1:]), category)

    table = []
    for gid in sorted(groups, key=group_key):
        rows = [(e.layer_id, e.angle, e.rank_in_group) for e in groups[gid]]
        table.append((gid, rows))
    return table


def render_rank_table(report: AngleReport) -> str:
    """Aligned text table: depth increases downward, rank annotated per row."""
    lines = [
        f"arch: {report.arch_id}",
        f"whole-model angle: {report.whole_model_angle:.6f} rad",
    ]
    for gid, rows in group_rank_table(report):
        lines.append("")
        lines.append(f"group {gid}")
        lines.append(f"  {'layer':<14} {'angle(rad)':>12} {'rank':>5}")
        for layer_id, angle, rank in rows:
            lines.append(f"  {layer_id:<14} {angle:>12.6f} {rank:>5}")
    if report.excluded_tensors:
        lines.append("")
        lines.append(f"excluded tensors: {', '.join(report.excluded_tensors)}")
    return "\n".join(lines) + "\n"
