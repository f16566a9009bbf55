"""
Workflow knowledge base: loading, validation, queries and perturbation.

The knowledge base maps every workflow (flow) to its prescribed action
sequence and every action to the slots it needs before it can be executed.
A KnowledgeBase is immutable once loaded; perturbations return a new value.
"""

import itertools
import json
import logging
import re
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum
from functools import cache
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import ErrorCode, FlowbenchError

logger = logging.getLogger(__name__)

NAME_PATTERN = re.compile(r"^[a-z0-9]+(?:[_-][a-z0-9]+)*$")
PREFIX_PATTERN = re.compile(r"^[a-z0-9]+(?:[_-][a-z0-9]+)*_?$")


class RequirementKind(StrEnum):
    ALL = "ALL"
    ANY_K = "ANY_K"
    ONE_OF = "ONE_OF"
    NONE = "NONE"


@dataclass(frozen=True)
class SlotRequirement:
    """Slots an action needs before its button can be completed.

    ``mandatory`` slots are required on top of every admissible combination;
    ``provides`` lists slots that become known once the action has run.
    """

    kind: RequirementKind
    slots: tuple[str, ...] = ()
    k: int | None = None
    mandatory: tuple[str, ...] = ()
    provides: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.slots)
        if self.kind == RequirementKind.ANY_K:
            if self.k is None or not 1 <= self.k <= n:
                raise FlowbenchError(
                    ErrorCode.MALFORMED_DOCUMENT,
                    f"ANY_K requires 1 <= k <= {n}, got k={self.k}",
                )
        elif self.k is not None:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT,
                f"k is only valid for ANY_K, not {self.kind}",
            )
        if self.kind in (RequirementKind.ALL, RequirementKind.ONE_OF) and n == 0:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT, f"{self.kind} requires at least one slot"
            )
        if self.kind == RequirementKind.NONE and n:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT, "NONE requires an empty slot list"
            )
        for slot in (*self.slots, *self.mandatory, *self.provides):
            if not NAME_PATTERN.match(slot):
                raise FlowbenchError(
                    ErrorCode.MALFORMED_DOCUMENT, f"Invalid slot name: {slot!r}"
                )

    @property
    def all_slots(self) -> tuple[str, ...]:
        """Every slot the requirement can reference, mandatory ones last."""
        return self.slots + tuple(s for s in self.mandatory if s not in self.slots)

    def combinations(self) -> list[tuple[str, ...]]:
        """Admissible slot combinations, each extended with the mandatory slots."""
        match self.kind:
            case RequirementKind.ALL:
                combos = [self.slots]
            case RequirementKind.ANY_K:
                combos = list(itertools.combinations(self.slots, self.k))
            case RequirementKind.ONE_OF:
                combos = [(slot,) for slot in self.slots]
            case _:
                combos = [()]
        return [
            combo + tuple(s for s in self.mandatory if s not in combo)
            for combo in combos
        ]


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    action_sequence: tuple[str, ...]
    prefix: str
    group: str | None = None


@dataclass(frozen=True)
class KnowledgeBase:
    workflows: Mapping[str, WorkflowSpec]
    prefix_groups: Mapping[str, str]
    actions: Mapping[str, SlotRequirement]
    workflow_groups: Mapping[str, str] = field(
        default_factory=lambda: MappingProxyType({})
    )

    @property
    def flow_names(self) -> list[str]:
        return list(self.workflows)

    def workflow(self, flow: str) -> WorkflowSpec:
        """Return the workflow named ``flow`` or raise UNKNOWN_FLOW."""
        try:
            return self.workflows[flow]
        except KeyError:
            raise FlowbenchError(
                ErrorCode.UNKNOWN_FLOW, f"Unknown flow: {flow}"
            ) from None

    def requirement(self, action: str) -> SlotRequirement:
        try:
            return self.actions[action]
        except KeyError:
            raise FlowbenchError(
                ErrorCode.UNKNOWN_ACTION_REFERENCE, f"Unknown action: {action}"
            ) from None


@dataclass(frozen=True)
class KbPerturbation:
    """Insert ``provider_action`` before ``guarded_action`` everywhere it occurs."""

    new_slot: str
    guarded_action: str
    provider_action: str


EXTRA_VERIFICATION = KbPerturbation(
    new_slot="account-uncompromised",
    guarded_action="verify-identity",
    provider_action="extra-verification",
)


class ActionDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: RequirementKind
    k: int | None = None
    slots: list[str] = []
    mandatory: list[str] = []
    provides: list[str] = []


class KbDocument(BaseModel):
    """On-disk schema of a knowledge base document."""

    model_config = ConfigDict(extra="forbid")

    source: str | None = None
    workflows: dict[str, list[str]]
    prefix_groups: dict[str, str] = {}
    workflow_groups: dict[str, str] = {}
    actions: dict[str, ActionDocument]


class _PairsDict(dict):
    """dict that remembers keys repeated in the JSON object it came from."""

    duplicates: tuple[str, ...] = ()


def _pairs_hook(pairs: list[tuple[str, Any]]) -> _PairsDict:
    result = _PairsDict()
    seen: list[str] = []
    for key, value in pairs:
        if key in result:
            seen.append(key)
        result[key] = value
    result.duplicates = tuple(seen)
    return result


def _read_document(source: str | Path | Mapping[str, Any]) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source
    text = source
    if isinstance(source, Path) or not source.lstrip().startswith("{"):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as e:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT, f"Cannot read KB document: {e}"
            ) from e
    try:
        return json.loads(text, object_pairs_hook=_pairs_hook)
    except json.JSONDecodeError as e:
        raise FlowbenchError(ErrorCode.MALFORMED_DOCUMENT, f"Invalid JSON: {e}") from e


def fallback_prefix(flow: str) -> str:
    """Substring up to and including the first underscore, or the whole name."""
    head, sep, _ = flow.partition("_")
    return head + sep


def _check_name(name: str, what: str) -> None:
    if not NAME_PATTERN.match(name):
        raise FlowbenchError(
            ErrorCode.MALFORMED_DOCUMENT, f"Invalid {what} name: {name!r}"
        )


def load_kb(source: str | Path | Mapping[str, Any]) -> KnowledgeBase:
    """
    Load and validate a knowledge base document.

    Args:
        source: Parsed document, JSON text, or path to a JSON file

    Returns:
        Validated KnowledgeBase

    Raises:
        FlowbenchError: MALFORMED_DOCUMENT, UNKNOWN_ACTION_REFERENCE or
            DUPLICATE_WORKFLOW
    """
    raw = _read_document(source)
    if not isinstance(raw, Mapping):
        raise FlowbenchError(
            ErrorCode.MALFORMED_DOCUMENT, "KB document must be an object"
        )
    if isinstance(raw, _PairsDict) and raw.duplicates:
        raise FlowbenchError(
            ErrorCode.MALFORMED_DOCUMENT, f"Repeated top-level keys: {raw.duplicates}"
        )
    workflows_raw = raw.get("workflows")
    duplicated = getattr(workflows_raw, "duplicates", ())
    if duplicated:
        raise FlowbenchError(
            ErrorCode.DUPLICATE_WORKFLOW, f"Workflow declared twice: {duplicated[0]}"
        )

    try:
        doc = KbDocument.model_validate(dict(raw))
    except ValidationError as e:
        raise FlowbenchError(ErrorCode.MALFORMED_DOCUMENT, str(e)) from e
    if not doc.workflows:
        raise FlowbenchError(ErrorCode.MALFORMED_DOCUMENT, "Workflow table is empty")

    actions: dict[str, SlotRequirement] = {}
    for name, spec in doc.actions.items():
        _check_name(name, "action")
        actions[name] = SlotRequirement(
            kind=spec.kind,
            slots=tuple(spec.slots),
            k=spec.k,
            mandatory=tuple(spec.mandatory),
            provides=tuple(spec.provides),
        )

    for table in (doc.prefix_groups, doc.workflow_groups):
        stray = sorted(set(table) - set(doc.workflows))
        if stray:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT,
                f"Grouping names undeclared flows: {stray}",
            )

    workflows: dict[str, WorkflowSpec] = {}
    prefixes: dict[str, str] = {}
    for name, sequence in doc.workflows.items():
        _check_name(name, "workflow")
        if not sequence:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT, f"Workflow {name} has an empty sequence"
            )
        for action in sequence:
            if action not in actions:
                raise FlowbenchError(
                    ErrorCode.UNKNOWN_ACTION_REFERENCE,
                    f"Workflow {name} references undeclared action {action!r}",
                )
        for prev, cur in itertools.pairwise(sequence):
            if prev == cur:
                raise FlowbenchError(
                    ErrorCode.MALFORMED_DOCUMENT,
                    f"Workflow {name} repeats {cur} immediately",
                )
        prefix = doc.prefix_groups.get(name) or fallback_prefix(name)
        if not PREFIX_PATTERN.match(prefix) or not name.startswith(prefix):
            raise FlowbenchError(
                ErrorCode.MALFORMED_DOCUMENT,
                f"Prefix {prefix!r} does not prefix {name}",
            )
        prefixes[name] = prefix
        workflows[name] = WorkflowSpec(
            name=name,
            action_sequence=tuple(sequence),
            prefix=prefix,
            group=doc.workflow_groups.get(name),
        )

    kb = KnowledgeBase(
        workflows=MappingProxyType(workflows),
        prefix_groups=MappingProxyType(prefixes),
        actions=MappingProxyType(actions),
        workflow_groups=MappingProxyType(dict(doc.workflow_groups)),
    )
    logger.debug(
        "Loaded KB with %d workflows, %d actions", len(workflows), len(actions)
    )
    return kb


def serialize_kb(kb: KnowledgeBase) -> dict[str, Any]:
    """Render a KnowledgeBase back into its document form."""
    actions: dict[str, Any] = {}
    for name, req in kb.actions.items():
        entry: dict[str, Any] = {"kind": str(req.kind), "slots": list(req.slots)}
        if req.k is not None:
            entry["k"] = req.k
        if req.mandatory:
            entry["mandatory"] = list(req.mandatory)
        if req.provides:
            entry["provides"] = list(req.provides)
        actions[name] = entry
    document: dict[str, Any] = {
        "workflows": {n: list(w.action_sequence) for n, w in kb.workflows.items()},
        "prefix_groups": dict(kb.prefix_groups),
        "actions": actions,
    }
    if kb.workflow_groups:
        document["workflow_groups"] = dict(kb.workflow_groups)
    return document


def dump_kb(kb: KnowledgeBase, path: str | Path) -> None:
    text = json.dumps(serialize_kb(kb), indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


@cache
def load_default_kb() -> KnowledgeBase:
    """The embedded ABCD knowledge base (55 workflows, 30 actions)."""
    text = resources.files("flowbench").joinpath("data/abcd_kb.json").read_text("utf-8")
    return load_kb(text)


def prefix_of(kb: KnowledgeBase, flow: str) -> str:
    """
    Prefix group label of a flow.

    Flows missing from the KB fall back to everything up to and including the
    first underscore (``warranty`` maps to itself).
    """
    prefix = kb.prefix_groups.get(flow)
    return prefix if prefix is not None else fallback_prefix(flow)


def apply_perturbation(
    kb: KnowledgeBase, p: KbPerturbation
) -> tuple[KnowledgeBase, list[str]]:
    """
    Add a provider action in front of every occurrence of a guarded action.

    The guarded action gains ``p.new_slot`` as a mandatory slot, and the new
    provider action (requirement NONE) makes that slot known when it runs.

    Args:
        kb: Knowledge base to perturb (left untouched)
        p: Perturbation to apply

    Returns:
        Tuple of (perturbed KB, names of workflows whose sequence changed)
    """
    for name in (p.new_slot, p.guarded_action, p.provider_action):
        if not NAME_PATTERN.match(name):
            raise FlowbenchError(
                ErrorCode.INVALID_PERTURBATION, f"Invalid name: {name!r}"
            )
    if p.provider_action in kb.actions:
        raise FlowbenchError(
            ErrorCode.INVALID_PERTURBATION,
            f"Provider action {p.provider_action} already exists",
        )
    if p.guarded_action not in kb.actions:
        raise FlowbenchError(
            ErrorCode.INVALID_PERTURBATION,
            f"Guarded action {p.guarded_action} is not in the KB",
        )

    workflows: dict[str, WorkflowSpec] = {}
    changed: list[str] = []
    for name, spec in kb.workflows.items():
        sequence: list[str] = []
        for action in spec.action_sequence:
            if action == p.guarded_action:
                sequence.append(p.provider_action)
            sequence.append(action)
        if len(sequence) != len(spec.action_sequence):
            changed.append(name)
            spec = replace(spec, action_sequence=tuple(sequence))
        workflows[name] = spec

    guarded = kb.actions[p.guarded_action]
    actions = dict(kb.actions)
    actions[p.guarded_action] = replace(
        guarded, mandatory=(*guarded.mandatory, p.new_slot)
    )
    actions[p.provider_action] = SlotRequirement(
        kind=RequirementKind.NONE, provides=(p.new_slot,)
    )
    logger.info(
        "Perturbation %s -> %s changed %d workflows",
        p.provider_action,
        p.guarded_action,
        len(changed),
    )
    perturbed = replace(
        kb,
        workflows=MappingProxyType(workflows),
        actions=MappingProxyType(actions),
    )
    return perturbed, changed
