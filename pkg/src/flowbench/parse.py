"""
Parsing of model outputs into structured predictions.

Outputs are matched against the expected format of the turn being
predicted. An output of the wrong shape is a MALFORMED prediction, not an
error; its flow label is still recovered when one is present.
"""

import re
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

from .prompt import PromptConfig


class ExpectedKind(StrEnum):
    ACTION = "ACTION"
    UTTERANCE = "UTTERANCE"


class PredictionKind(StrEnum):
    ACTION = "ACTION"
    UTTERANCE = "UTTERANCE"
    MALFORMED = "MALFORMED"


FLOW_PART = r"(?P<flow_label>flow:)(?P<flow>[^;]*);\s*"
ACTION_PART = r"(?P<action_label>action:)(?P<action>[^:]*):(?P<slots>.*)"
UTTERANCE_PART = r"(?P<agent_text_label>agent:)(?P<agent_text>.*)"

PATTERNS = {
    (ExpectedKind.ACTION, True): re.compile(FLOW_PART + ACTION_PART, re.DOTALL),
    (ExpectedKind.ACTION, False): re.compile(
        f"(?:{FLOW_PART})?{ACTION_PART}", re.DOTALL
    ),
    (ExpectedKind.UTTERANCE, True): re.compile(FLOW_PART + UTTERANCE_PART, re.DOTALL),
    (ExpectedKind.UTTERANCE, False): re.compile(
        f"(?:{FLOW_PART})?{UTTERANCE_PART}", re.DOTALL
    ),
}
FLOW_ONLY = re.compile(r"\s*flow:(?P<flow>[^;]*);")


@dataclass(frozen=True)
class ParsedPrediction:
    kind: PredictionKind
    flow: str | None = None
    action_name: str | None = None
    slot_values: tuple[str, ...] = ()
    utterance: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "flow": self.flow,
            "action_name": self.action_name,
            "slot_values": list(self.slot_values),
            "utterance": self.utterance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ParsedPrediction":
        return cls(
            kind=PredictionKind(data["kind"]),
            flow=data.get("flow"),
            action_name=data.get("action_name"),
            slot_values=tuple(data.get("slot_values") or ()),
            utterance=data.get("utterance"),
        )


def split_slots(slots: str) -> tuple[str, ...]:
    """
    Split a comma-separated slot list.

    Values are not escaped when serialized, so a value that itself contains a
    comma comes back as several values.
    """
    slots = slots.strip()
    if not slots:
        return ()
    return tuple(value.strip() for value in slots.split(","))


def _malformed(text: str) -> ParsedPrediction:
    match = FLOW_ONLY.match(text)
    flow = match.group("flow").strip() if match else None
    return ParsedPrediction(kind=PredictionKind.MALFORMED, flow=flow or None)


def parse_prediction(
    text: str, expected_kind: ExpectedKind, cfg: PromptConfig | None = None
) -> ParsedPrediction:
    """
    Parse a model output for a turn of kind ``expected_kind``.

    The ``flow:`` label is required when ``cfg`` includes the flow and
    optional otherwise.

    Args:
        text: Raw model output
        expected_kind: ACTION or UTTERANCE
        cfg: Prompt config the output was produced under

    Returns:
        ParsedPrediction; MALFORMED if the output has the wrong shape
    """
    require_flow = cfg is None or cfg.include_flow
    match = PATTERNS[(expected_kind, require_flow)].fullmatch(text.strip())
    if match is None:
        return _malformed(text)

    flow = match.group("flow")
    flow = flow.strip() if flow is not None else None
    if expected_kind == ExpectedKind.ACTION:
        name = match.group("action").strip()
        if not name:
            return _malformed(text)
        return ParsedPrediction(
            kind=PredictionKind.ACTION,
            flow=flow,
            action_name=name,
            slot_values=split_slots(match.group("slots")),
        )
    return ParsedPrediction(
        kind=PredictionKind.UTTERANCE,
        flow=flow,
        utterance=match.group("agent_text").strip(),
    )


def emitted_action(text: str, cfg: PromptConfig | None = None) -> str | None:
    """Action named by ``text`` in the action format, whichever turn it answers."""
    return parse_prediction(text, ExpectedKind.ACTION, cfg).action_name
