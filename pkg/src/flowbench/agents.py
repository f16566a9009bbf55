"""
Agents that answer one teacher-forced turn at a time.

- RemoteAgent posts ``{"context": ...}`` to an inference service and reads
  ``{"output": ...}`` back
- OracleAgent returns the gold target
- PlanFollowerAgent executes the head of the plan found in the context
"""

import logging
import random
import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Protocol

import httpx

from .config import resolve_endpoint, resolve_timeout
from .errors import ErrorCode, FlowbenchError
from .parse import ExpectedKind
from .prompt import AugmentedContext

logger = logging.getLogger(__name__)

ACKNOWLEDGEMENT = "Okay, one moment please."

PLAN_PATTERN = re.compile(r"flow: (?P<flow>[^;]*); action_plan: (?P<plan>[^;]*);\s*$")
LEGAL_PATTERN = re.compile(r"^legal_flows: (?P<flows>[^;]*);")
TURN_MARKER = re.compile(r"(?:^| )(agent|customer|action): ")
PLAN_HEAD = re.compile(r"^\s*(?P<head>[^,(]+)")


class AgentKind(StrEnum):
    REMOTE = "remote"
    ORACLE = "oracle"
    PLAN_FOLLOWER = "plan-follower"


@dataclass(frozen=True)
class AgentQuery:
    """Everything an agent may look at for one prediction turn.

    Only mocks look past ``context``: the oracle reads ``target`` and the plan
    follower reads ``expected_kind``.
    """

    context: AugmentedContext
    expected_kind: ExpectedKind
    target: str
    dialogue_id: str
    ordinal: int


class Agent(Protocol):
    def respond(self, query: AgentQuery) -> str: ...


class OracleAgent:
    def respond(self, query: AgentQuery) -> str:
        return query.target


def last_customer_value(history: str) -> str:
    """
    Slot value a customer most recently offered after the last action.

    Takes the last sentence of the last customer turn, keeps what follows its
    last ``is`` or colon, lowercases it and trims punctuation. Returns an
    empty string when no customer turn follows the last action.
    """
    markers = list(TURN_MARKER.finditer(history))
    value = None
    for index, marker in enumerate(markers):
        speaker = marker.group(1)
        if speaker == "action":
            value = None
        elif speaker == "customer":
            end = len(history)
            if index + 1 < len(markers):
                end = markers[index + 1].start()
            value = history[marker.end() : end]
    if not value:
        return ""
    sentences = [s for s in re.split(r"[.!?]+(?:\s|$)", value.strip()) if s.strip()]
    sentence = sentences[-1].lower() if sentences else value.lower()
    for separator in (" is ", ":"):
        if separator in sentence:
            sentence = sentence.rsplit(separator, 1)[1]
    return sentence.strip(" \t.,!?;\"'")


class PlanFollowerAgent:
    """
    Follows the action plan shown at the end of the context.

    On action turns it emits the plan's head with the customer's latest value;
    on utterance turns, or when the plan is empty, it acknowledges. With
    ``random_first_flow`` the flow label at the first prediction turn is drawn
    from the legal flows instead of copied from the context.
    """

    def __init__(
        self,
        seed: int = 0,
        random_first_flow: bool = False,
        flows: Sequence[str] = (),
    ):
        self.seed = seed
        self.random_first_flow = random_first_flow
        self.flows = list(flows)

    def respond(self, query: AgentQuery) -> str:
        return self.respond_to_context(query.context.text, query.expected_kind, query)

    def _flow(self, text: str, flow: str, query: AgentQuery | None) -> str:
        if not self.random_first_flow or query is None or query.ordinal != 0:
            return flow
        legal = LEGAL_PATTERN.match(text)
        choices = self.flows
        if legal:
            choices = [f.strip() for f in legal.group("flows").split(",")]
        if not choices:
            return flow
        return random.Random(f"{self.seed}:{query.dialogue_id}").choice(choices)

    def respond_to_context(
        self,
        text: str,
        expected_kind: ExpectedKind | None = None,
        query: AgentQuery | None = None,
    ) -> str:
        """
        Answer from the context text alone.

        Without ``expected_kind`` an action is emitted whenever the plan is
        nonempty.
        """
        match = PLAN_PATTERN.search(text)
        if match is None:
            raise FlowbenchError(
                ErrorCode.MISSING_PLAN_IN_CONTEXT, "Context carries no action plan"
            )
        flow = self._flow(text, match.group("flow").strip(), query)
        head = PLAN_HEAD.match(match.group("plan"))
        if head is None or expected_kind == ExpectedKind.UTTERANCE:
            return f"flow: {flow}; agent: {ACKNOWLEDGEMENT}"

        history = text[: match.start()]
        legal = LEGAL_PATTERN.match(history)
        if legal:
            history = history[legal.end() :]
        value = last_customer_value(history.strip())
        return f"flow: {flow}; action: {head.group('head').strip()}: {value}"


class RemoteAgent:
    """Client for an inference service speaking ``{"context"}`` -> ``{"output"}``."""

    def __init__(
        self,
        endpoint: str,
        timeout: float | None = None,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = resolve_timeout(timeout)
        self._owns_client = client is None
        self._client = client or httpx.Client(timeout=self.timeout)

    def respond(self, query: AgentQuery) -> str:
        try:
            response = self._client.post(
                self.endpoint,
                json={"context": query.context.text},
                timeout=self.timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except httpx.TimeoutException as e:
            raise FlowbenchError(
                ErrorCode.TIMEOUT, f"{self.endpoint} timed out after {self.timeout}s"
            ) from e
        except (httpx.HTTPError, ValueError) as e:
            raise FlowbenchError(
                ErrorCode.AGENT_UNAVAILABLE, f"{self.endpoint} failed: {e}"
            ) from e
        output = payload.get("output") if isinstance(payload, dict) else None
        if not isinstance(output, str):
            raise FlowbenchError(
                ErrorCode.AGENT_UNAVAILABLE,
                f"{self.endpoint} returned no output string",
            )
        return output

    def close(self) -> None:
        """Close the HTTP client if this agent created it."""
        if self._owns_client:
            self._client.close()

    def __enter__(self) -> "RemoteAgent":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


@dataclass(frozen=True)
class AgentClient:
    kind: AgentKind
    endpoint: str | None = None
    seed: int = 0
    timeout: float | None = None
    random_first_flow: bool = False

    def __post_init__(self) -> None:
        if self.kind == AgentKind.REMOTE and not self.endpoint:
            raise FlowbenchError(
                ErrorCode.INVALID_CONFIG, "REMOTE agents need an endpoint"
            )

    @classmethod
    def from_options(
        cls, kind: str, endpoint: str | None = None, seed: int = 0, **kwargs
    ) -> "AgentClient":
        """Resolve the endpoint through the environment, as the CLI does."""
        agent_kind = AgentKind(kind)
        if agent_kind == AgentKind.REMOTE:
            endpoint = resolve_endpoint(endpoint)
        return cls(kind=agent_kind, endpoint=endpoint, seed=seed, **kwargs)

    def create(
        self, flows: Sequence[str] = (), client: httpx.Client | None = None
    ) -> Agent:
        match self.kind:
            case AgentKind.REMOTE:
                return RemoteAgent(self.endpoint, timeout=self.timeout, client=client)
            case AgentKind.ORACLE:
                return OracleAgent()
            case _:
                return PlanFollowerAgent(
                    seed=self.seed,
                    random_first_flow=self.random_first_flow,
                    flows=flows,
                )
