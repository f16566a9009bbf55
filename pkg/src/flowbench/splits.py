"""
Train/test splits over workflows.

Three generalization splits hold out progressively more:

- SPLIT1: no TEST flow is seen in training
- SPLIT2: no TEST flow shares its action sequence with a TRAIN flow
- SPLIT3: SPLIT2, and no TEST flow shares a prefix group with a TRAIN flow
  of the same workflow group

STANDARD assigns every flow to both sides and partitions dialogues instead.
Constraints bind on knowledge-base sequences; observed sequences are only
reported.
"""

import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from importlib import resources
from types import MappingProxyType
from typing import Any

from pydantic import BaseModel, ValidationError

from .cache import compute_content_hash
from .config import STANDARD_TEST_FRACTION
from .dialogue import Dialogue
from .errors import ErrorCode, FlowbenchError
from .kb import KnowledgeBase, load_default_kb, prefix_of

logger = logging.getLogger(__name__)


class SplitKind(StrEnum):
    STANDARD = "STANDARD"
    SPLIT1 = "SPLIT1"
    SPLIT2 = "SPLIT2"
    SPLIT3 = "SPLIT3"


class Partition(StrEnum):
    TRAIN = "TRAIN"
    TEST = "TEST"
    BOTH = "BOTH"


class ViolationRule(StrEnum):
    UNASSIGNED = "UNASSIGNED"
    FLOW_OVERLAP = "FLOW_OVERLAP"
    ACTION_SEQUENCE = "ACTION_SEQUENCE"
    PREFIX_GROUP = "PREFIX_GROUP"


@dataclass(frozen=True)
class SplitSpec:
    kind: SplitKind
    assignment: Mapping[str, Partition]

    @property
    def train_flows(self) -> list[str]:
        return [f for f, p in self.assignment.items() if p != Partition.TEST]

    @property
    def test_flows(self) -> list[str]:
        return [f for f, p in self.assignment.items() if p != Partition.TRAIN]

    def partition_of(self, flow: str) -> Partition:
        try:
            return self.assignment[flow]
        except KeyError:
            raise FlowbenchError(
                ErrorCode.UNKNOWN_FLOW, f"Flow {flow} is not assigned in the split"
            ) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "assignment": {f: str(p) for f, p in self.assignment.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SplitSpec":
        try:
            doc = SplitDocument.model_validate(data)
        except ValidationError as e:
            raise FlowbenchError(ErrorCode.MALFORMED_DOCUMENT, str(e)) from e
        return cls(kind=doc.kind, assignment=MappingProxyType(dict(doc.assignment)))


class SplitDocument(BaseModel):
    kind: SplitKind
    assignment: dict[str, Partition]


@dataclass(frozen=True)
class SplitViolation:
    rule: ViolationRule
    test_flow: str
    train_flow: str | None
    detail: str


@dataclass
class SplitReport:
    kind: SplitKind
    violations: list[SplitViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "ok": self.ok,
            "violations": [
                {
                    "rule": str(v.rule),
                    "test_flow": v.test_flow,
                    "train_flow": v.train_flow,
                    "detail": v.detail,
                }
                for v in self.violations
            ],
        }


def _group_of(kb: KnowledgeBase, flow: str) -> str:
    return kb.workflow_groups.get(flow, "")


def validate_split(spec: SplitSpec, kb: KnowledgeBase) -> SplitReport:
    """
    Check a split against the constraints of its kind.

    Violations are collected and returned, never raised.
    """
    report = SplitReport(kind=spec.kind)
    for flow in kb.workflows:
        if flow not in spec.assignment:
            report.violations.append(
                SplitViolation(
                    ViolationRule.UNASSIGNED, flow, None, "flow has no partition"
                )
            )
    if spec.kind == SplitKind.STANDARD:
        return report

    trained = (Partition.TRAIN, Partition.BOTH)
    tested = (Partition.TEST, Partition.BOTH)
    train = [f for f in kb.workflows if spec.assignment.get(f) in trained]
    test = [f for f in kb.workflows if spec.assignment.get(f) in tested]
    for flow in test:
        if spec.assignment[flow] == Partition.BOTH:
            report.violations.append(
                SplitViolation(
                    ViolationRule.FLOW_OVERLAP,
                    flow,
                    flow,
                    "flow is both trained and tested",
                )
            )
    if spec.kind == SplitKind.SPLIT1:
        return report

    for t in test:
        t_spec = kb.workflows[t]
        for r in train:
            if r == t:
                continue
            r_spec = kb.workflows[r]
            if t_spec.action_sequence == r_spec.action_sequence:
                report.violations.append(
                    SplitViolation(
                        ViolationRule.ACTION_SEQUENCE,
                        t,
                        r,
                        "identical action sequence: "
                        + ", ".join(t_spec.action_sequence),
                    )
                )
            elif (
                spec.kind == SplitKind.SPLIT3
                and _group_of(kb, t) == _group_of(kb, r)
                and prefix_of(kb, t) == prefix_of(kb, r)
            ):
                report.violations.append(
                    SplitViolation(
                        ViolationRule.PREFIX_GROUP,
                        t,
                        r,
                        f"shared prefix group {prefix_of(kb, t)!r}",
                    )
                )
    return report


def canonical_split(kb: KnowledgeBase, kind: SplitKind) -> SplitSpec | None:
    """
    The published ABCD membership for ``kind``, if it covers exactly ``kb``'s flows.

    Returns None for knowledge bases other than ABCD (or perturbations of it).
    """
    if kind == SplitKind.STANDARD:
        return None
    data = json.loads(
        resources.files("flowbench")
        .joinpath("data/abcd_splits.json")
        .read_text("utf-8")
    )
    test_flows = set(data[kind.lower()])

    if set(kb.workflows) != set(load_default_kb().workflows):
        return None
    assignment = {
        f: Partition.TEST if f in test_flows else Partition.TRAIN for f in kb.workflows
    }
    return SplitSpec(kind=kind, assignment=MappingProxyType(assignment))


def _alternate(keys: list[Any]) -> dict[Any, Partition]:
    return {
        key: (Partition.TRAIN if i % 2 == 0 else Partition.TEST)
        for i, key in enumerate(keys)
    }


def _heuristic_split(kb: KnowledgeBase, kind: SplitKind) -> SplitSpec:
    ordered = sorted(
        kb.workflows, key=lambda f: (_group_of(kb, f), prefix_of(kb, f), f)
    )
    if kind == SplitKind.SPLIT1:
        assignment = _alternate(ordered)
    elif kind == SplitKind.SPLIT2:
        classes: list[tuple[str, ...]] = []
        for flow in ordered:
            sequence = kb.workflows[flow].action_sequence
            if sequence not in classes:
                classes.append(sequence)
        by_class = _alternate(classes)
        assignment = {f: by_class[kb.workflows[f].action_sequence] for f in ordered}
    else:
        group = {f: _group_of(kb, f) or prefix_of(kb, f) for f in ordered}
        by_group = _alternate(sorted(set(group.values())))
        assignment = {f: by_group[group[f]] for f in ordered}
    return SplitSpec(
        kind=kind, assignment=MappingProxyType({f: assignment[f] for f in kb.workflows})
    )


def _repair(spec: SplitSpec, kb: KnowledgeBase) -> SplitSpec:
    """Move offending flows to TEST until the split validates."""
    assignment = dict(spec.assignment)
    while True:
        report = validate_split(
            SplitSpec(kind=spec.kind, assignment=MappingProxyType(assignment)), kb
        )
        if report.ok:
            return SplitSpec(kind=spec.kind, assignment=MappingProxyType(assignment))
        moved = set()
        for v in report.violations:
            if v.rule in (ViolationRule.UNASSIGNED, ViolationRule.FLOW_OVERLAP):
                flow = v.test_flow
            else:
                flow = v.train_flow
            if assignment.get(flow) != Partition.TEST:
                assignment[flow] = Partition.TEST
                moved.add(flow)
        if not moved:
            raise FlowbenchError(
                ErrorCode.INFEASIBLE_SPLIT, f"Cannot satisfy {spec.kind} constraints"
            )
        logger.warning("Moved %s to TEST to satisfy %s", sorted(moved), spec.kind)


def make_split(
    dataset: Iterable[Dialogue],
    kb: KnowledgeBase,
    kind: SplitKind,
    use_canonical: bool = True,
) -> SplitSpec:
    """
    Build a split of ``kb``'s flows for ``kind``.

    The published ABCD membership is used when it applies and is repaired if
    it breaks its own constraints; otherwise flows are assigned greedily,
    alternating halves within prefix groups (SPLIT1), action-sequence classes
    (SPLIT2) or whole workflow groups (SPLIT3).

    Args:
        dataset: Dialogues the split will be applied to
        kb: Knowledge base defining the flows
        kind: Split kind
        use_canonical: Prefer the published membership when available

    Returns:
        SplitSpec that passes ``validate_split``

    Raises:
        FlowbenchError: UNKNOWN_FLOW for dialogues outside the KB,
            INFEASIBLE_SPLIT if no valid assignment leaves both sides nonempty
    """
    unknown = sorted({d.flow for d in dataset} - set(kb.workflows))
    if unknown:
        raise FlowbenchError(
            ErrorCode.UNKNOWN_FLOW, f"Dialogues use unknown flows: {unknown}"
        )
    if kind == SplitKind.STANDARD:
        everything = {f: Partition.BOTH for f in kb.workflows}
        return SplitSpec(kind=kind, assignment=MappingProxyType(everything))

    spec = canonical_split(kb, kind) if use_canonical else None
    if spec is None:
        spec = _heuristic_split(kb, kind)
    spec = _repair(spec, kb)
    if not spec.train_flows or not spec.test_flows:
        raise FlowbenchError(
            ErrorCode.INFEASIBLE_SPLIT, f"{kind} leaves one side without flows"
        )
    return spec


def partition_dialogues(
    dataset: Iterable[Dialogue],
    spec: SplitSpec,
    test_fraction: float = STANDARD_TEST_FRACTION,
) -> tuple[list[Dialogue], list[Dialogue]]:
    """
    Assign dialogues to (train, test) by their flow's partition.

    Dialogues of BOTH flows are bucketed by a stable hash of their id.
    """
    train: list[Dialogue] = []
    test: list[Dialogue] = []
    for d in dataset:
        partition = spec.partition_of(d.flow)
        if partition == Partition.BOTH:
            bucket = int(compute_content_hash(d.id)[:8], 16) / 0xFFFFFFFF
            partition = Partition.TEST if bucket < test_fraction else Partition.TRAIN
        (test if partition == Partition.TEST else train).append(d)
    return train, test


@dataclass(frozen=True)
class ObservedOverlap:
    dialogue_id: str
    flow: str
    sequence: tuple[str, ...]


def observed_sequence_report(
    dataset: Iterable[Dialogue], spec: SplitSpec
) -> list[ObservedOverlap]:
    """TEST dialogues whose executed action sequence also occurs in training."""
    train, test = partition_dialogues(dataset, spec)
    seen = {tuple(d.gold_actions()) for d in train}
    return [
        ObservedOverlap(d.id, d.flow, tuple(d.gold_actions()))
        for d in sorted(test, key=lambda d: d.id)
        if tuple(d.gold_actions()) in seen
    ]
