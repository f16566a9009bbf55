"""
Plan-augmented dialogue contexts and gold target strings.

A context is the serialized history, optionally preceded by the list of
legal flows (L) and followed by the flow name (F) and the remaining action
plan (P):

    legal_flows: f1, f2; <history> flow: <flow>; action_plan: a1, a2;
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

from .dialogue import Dialogue, Speaker, Turn, serialize_history, serialize_turn
from .errors import ErrorCode, FlowbenchError
from .planner import ActionPlan

logger = logging.getLogger(__name__)

LIST_SEPARATOR = ", "
CONFIG_LETTERS = {"L": "include_legal_flows", "F": "include_flow", "P": "include_plan"}


@dataclass(frozen=True)
class PromptConfig:
    include_legal_flows: bool = False
    include_flow: bool = False
    include_plan: bool = False
    include_plan_slots: bool = False

    def __post_init__(self) -> None:
        if self.include_plan and not self.include_flow:
            raise FlowbenchError(
                ErrorCode.INVALID_CONFIG, "An action plan must follow the flow label"
            )
        if self.include_plan_slots and not self.include_plan:
            raise FlowbenchError(
                ErrorCode.INVALID_CONFIG, "Plan slots require the action plan"
            )

    @classmethod
    def from_code(cls, code: str) -> "PromptConfig":
        """Parse a config code such as ``LFP``; ``S`` adds plan slots, ``-`` is none."""
        letters = set(code.upper().replace("-", "").replace("+", ""))
        unknown = letters - set(CONFIG_LETTERS) - {"S"}
        if unknown:
            raise FlowbenchError(
                ErrorCode.INVALID_CONFIG, f"Unknown config letters: {sorted(unknown)}"
            )
        flags = {field: letter in letters for letter, field in CONFIG_LETTERS.items()}
        return cls(**flags, include_plan_slots="S" in letters)

    @property
    def code(self) -> str:
        letters = "".join(k for k, f in CONFIG_LETTERS.items() if getattr(self, f))
        return (letters + ("S" if self.include_plan_slots else "")) or "-"


@dataclass(frozen=True)
class AugmentedContext:
    text: str
    turn_index: int
    config: PromptConfig


def render_plan(plan: ActionPlan, include_slots: bool = False) -> str:
    """``action_plan: a1, a2;`` or, with slots, ``action_plan: a1(s1, s2), a2();``."""
    if include_slots and plan.slots is not None:
        items = [
            f"{action}({LIST_SEPARATOR.join(slots)})"
            for action, slots in zip(plan.actions, plan.slots, strict=True)
        ]
    else:
        items = list(plan.actions)
    return f"action_plan: {LIST_SEPARATOR.join(items)};"


def build_context(
    d: Dialogue,
    upto: int,
    cfg: PromptConfig,
    legal_flows: Sequence[str] = (),
    flow: str | None = None,
    plan: ActionPlan | None = None,
) -> AugmentedContext:
    """
    Build the model input for predicting turn ``upto`` of ``d``.

    Args:
        d: Dialogue supplying the history
        upto: Index of the turn to predict; turns before it form the history
        cfg: Which augmentations to add
        legal_flows: Flow names listed under L, used as given
        flow: Flow label added under F
        plan: Remaining actions added under P

    Returns:
        AugmentedContext

    Raises:
        FlowbenchError: MISSING_FLOW or MISSING_PLAN when an enabled
            augmentation has no value
    """
    if cfg.include_flow and flow is None:
        raise FlowbenchError(ErrorCode.MISSING_FLOW, "Config requires a flow label")
    if cfg.include_plan and plan is None:
        raise FlowbenchError(ErrorCode.MISSING_PLAN, "Config requires an action plan")

    parts: list[str] = []
    if cfg.include_legal_flows:
        parts.append(f"legal_flows: {LIST_SEPARATOR.join(legal_flows)};")
    history = serialize_history(d, upto)
    if history:
        parts.append(history)
    if cfg.include_flow:
        parts.append(f"flow: {flow};")
    if cfg.include_plan:
        parts.append(render_plan(plan, include_slots=cfg.include_plan_slots))
    return AugmentedContext(text=" ".join(parts), turn_index=upto, config=cfg)


def build_target(t: Turn, flow: str) -> str:
    """Gold output for a turn: ``flow: <flow>; `` then the serialized turn."""
    if t.speaker == Speaker.CUSTOMER:
        raise FlowbenchError(
            ErrorCode.CUSTOMER_TURN, "Customer turns are never prediction targets"
        )
    return f"flow: {flow}; {serialize_turn(t)}"
