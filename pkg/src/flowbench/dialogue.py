"""
Dialogue model and text serialization of turns and histories.

A dialogue is an ordered list of turns; each turn is either an utterance
(agent or customer) or an action call with its slot values. Turns are
serialized as ``agent: <text>``, ``customer: <text>`` and
``action: <name>: <v1>, <v2>``; a history is the space-joined serialization
of all earlier turns.
"""

import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import StrEnum
from importlib import resources
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ValidationError

from .errors import ErrorCode, FlowbenchError

logger = logging.getLogger(__name__)

VALUE_SEPARATOR = ", "
TURN_SEPARATOR = " "


class Speaker(StrEnum):
    AGENT = "agent"
    CUSTOMER = "customer"
    ACTION = "action"


@dataclass(frozen=True)
class ActionCall:
    name: str
    slot_values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise FlowbenchError(ErrorCode.INVALID_TURN, "Action name must be nonempty")


@dataclass(frozen=True)
class Turn:
    """One turn: exactly one of ``utterance`` and ``action`` is set."""

    speaker: Speaker
    utterance: str | None = None
    action: ActionCall | None = None

    def __post_init__(self) -> None:
        if (self.utterance is None) == (self.action is None):
            raise FlowbenchError(
                ErrorCode.INVALID_TURN,
                "A turn carries either an utterance or an action",
            )
        if (self.speaker == Speaker.ACTION) != (self.action is not None):
            raise FlowbenchError(
                ErrorCode.INVALID_TURN,
                f"Speaker {self.speaker} does not match the turn payload",
            )

    @classmethod
    def agent(cls, text: str) -> "Turn":
        return cls(Speaker.AGENT, utterance=text)

    @classmethod
    def customer(cls, text: str) -> "Turn":
        return cls(Speaker.CUSTOMER, utterance=text)

    @classmethod
    def act(cls, name: str, *values: str) -> "Turn":
        return cls(Speaker.ACTION, action=ActionCall(name, tuple(values)))

    @property
    def is_target(self) -> bool:
        """Agent and action turns are prediction targets; customer turns are not."""
        return self.speaker != Speaker.CUSTOMER


@dataclass(frozen=True)
class Dialogue:
    id: str
    flow: str
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if not self.turns:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DATASET, f"Dialogue {self.id} has no turns"
            )

    def gold_actions(self, upto: int | None = None) -> list[str]:
        """Names of the action turns before index ``upto``."""
        return [t.action.name for t in self.turns[:upto] if t.action is not None]


def serialize_turn(t: Turn) -> str:
    if t.action is not None:
        return f"action: {t.action.name}: {VALUE_SEPARATOR.join(t.action.slot_values)}"
    return f"{t.speaker}: {t.utterance}"


def parse_turn(text: str) -> Turn:
    """Inverse of ``serialize_turn``."""
    speaker, sep, rest = text.partition(": ")
    if not sep:
        raise FlowbenchError(ErrorCode.INVALID_TURN, f"Not a serialized turn: {text!r}")
    if speaker == Speaker.ACTION:
        name, sep, values = rest.partition(": ")
        if not sep:
            raise FlowbenchError(
                ErrorCode.INVALID_TURN, f"Action without values: {text!r}"
            )
        slot_values = tuple(values.split(VALUE_SEPARATOR)) if values else ()
        return Turn.act(name, *slot_values)
    try:
        return Turn(Speaker(speaker), utterance=rest)
    except ValueError:
        raise FlowbenchError(
            ErrorCode.INVALID_TURN, f"Unknown speaker {speaker!r}"
        ) from None


def serialize_history(d: Dialogue, upto: int) -> str:
    """Space-joined serialization of ``d.turns[:upto]``."""
    if not 0 <= upto <= len(d.turns):
        raise FlowbenchError(
            ErrorCode.INVALID_TURN, f"upto={upto} outside 0..{len(d.turns)} for {d.id}"
        )
    return TURN_SEPARATOR.join(serialize_turn(t) for t in d.turns[:upto])


class TurnRecord(BaseModel):
    speaker: Literal["agent", "customer", "action"]
    text: str | None = None
    name: str | None = None
    values: list[str] | None = None


class DialogueRecord(BaseModel):
    id: str | int
    flow: str
    turns: list[TurnRecord]


def dialogue_from_record(record: Mapping[str, Any]) -> Dialogue:
    try:
        parsed = DialogueRecord.model_validate(record)
    except ValidationError as e:
        raise FlowbenchError(ErrorCode.MALFORMED_DATASET, str(e)) from e
    turns = []
    for turn in parsed.turns:
        if turn.speaker == "action":
            if turn.name is None:
                raise FlowbenchError(
                    ErrorCode.MALFORMED_DATASET,
                    f"Action turn without name in {parsed.id}",
                )
            turns.append(Turn.act(turn.name, *(turn.values or [])))
        else:
            if turn.text is None:
                raise FlowbenchError(
                    ErrorCode.MALFORMED_DATASET,
                    f"Utterance turn without text in {parsed.id}",
                )
            turns.append(Turn(Speaker(turn.speaker), utterance=turn.text))
    return Dialogue(id=str(parsed.id), flow=parsed.flow, turns=tuple(turns))


def dialogue_to_record(d: Dialogue) -> dict[str, Any]:
    turns: list[dict[str, Any]] = []
    for t in d.turns:
        if t.action is not None:
            turns.append(
                {
                    "speaker": "action",
                    "name": t.action.name,
                    "values": list(t.action.slot_values),
                }
            )
        else:
            turns.append({"speaker": str(t.speaker), "text": t.utterance})
    return {"id": d.id, "flow": d.flow, "turns": turns}


def read_dataset_lines(lines: Iterable[str]) -> list[Dialogue]:
    dialogues = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise FlowbenchError(
                ErrorCode.MALFORMED_DATASET, f"Line {number} is not JSON: {e}"
            ) from e
        dialogues.append(dialogue_from_record(record))
    return dialogues


def load_dataset(path: str | Path) -> list[Dialogue]:
    """
    Load a JSON-lines dataset, one dialogue per line.

    Args:
        path: Path to the dataset file

    Returns:
        Dialogues in file order
    """
    with open(path, encoding="utf-8") as f:
        dialogues = read_dataset_lines(f)
    logger.info("Loaded %d dialogues from %s", len(dialogues), path)
    return dialogues


def dump_dataset(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in dialogues:
            f.write(json.dumps(dialogue_to_record(d), ensure_ascii=False) + "\n")


def load_default_dataset() -> list[Dialogue]:
    """The embedded fixture dialogues."""
    text = (
        resources.files("flowbench")
        .joinpath("data/sample_dialogues.jsonl")
        .read_text("utf-8")
    )
    return read_dataset_lines(text.splitlines())


def from_abcd_conversation(conversation: Mapping[str, Any]) -> Dialogue:
    """
    Convert one conversation of the raw ABCD release.

    Utterances come from the non-delexicalized ``original`` turns; action
    names and slot values come from the aligned ``delexed`` targets.
    """
    try:
        original = conversation["original"]
        delexed = conversation["delexed"]
        flow = conversation["scenario"]["subflow"]
        convo_id = conversation["convo_id"]
    except (KeyError, TypeError) as e:
        raise FlowbenchError(
            ErrorCode.MALFORMED_DATASET, f"Missing ABCD field: {e}"
        ) from e
    if len(original) != len(delexed):
        raise FlowbenchError(
            ErrorCode.MALFORMED_DATASET, f"Conversation {convo_id} is misaligned"
        )

    turns = []
    for (speaker, text), delex in zip(original, delexed, strict=True):
        if speaker == "action":
            targets = delex["targets"]
            turns.append(Turn.act(targets[2], *(str(v) for v in targets[3])))
        else:
            turns.append(Turn(Speaker(speaker), utterance=text))
    return Dialogue(id=str(convo_id), flow=flow, turns=tuple(turns))
