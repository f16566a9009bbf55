"""
Teacher-forced prediction runs and their scoring.

Every agent/action turn of a dialogue is predicted from the gold history;
model outputs never flow back into later contexts. Dialogues run in
parallel, turns within a dialogue run in order.
"""

import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agents import Agent, AgentQuery
from .config import DEFAULT_CONCURRENCY
from .dialogue import Dialogue, Speaker
from .errors import ErrorCode, FlowbenchError
from .kb import KnowledgeBase
from .metrics import GoldTarget, MetricsReport, PredictionRecord, compute_report
from .parse import ExpectedKind, emitted_action, parse_prediction
from .planner import PlanMode, remaining_plan
from .prompt import AugmentedContext, PromptConfig, build_context, build_target
from .splits import Partition, SplitSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    prompt: PromptConfig = field(default_factory=PromptConfig)
    split: SplitSpec | None = None
    plan_mode: PlanMode = PlanMode.LOOKUP
    train_legal_flows: tuple[str, ...] = ()
    test_legal_flows: tuple[str, ...] = ()
    concurrency: int = DEFAULT_CONCURRENCY
    cache_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise FlowbenchError(ErrorCode.INVALID_CONFIG, "concurrency must be >= 1")

    @classmethod
    def for_kb(
        cls,
        kb: KnowledgeBase,
        prompt: PromptConfig,
        split: SplitSpec | None = None,
        **kwargs: Any,
    ) -> "RunConfig":
        """Config whose legal-flow lists are the split's TRAIN flows and all flows."""
        train = tuple(split.train_flows) if split is not None else tuple(kb.flow_names)
        return cls(
            prompt=prompt,
            split=split,
            train_legal_flows=train,
            test_legal_flows=tuple(kb.flow_names),
            **kwargs,
        )

    def legal_flows_for(self, flow: str) -> tuple[str, ...]:
        """TRAIN-only flows for training dialogues, the full list otherwise."""
        partition = self.split.assignment.get(flow) if self.split else None
        if partition == Partition.TRAIN:
            return self.train_legal_flows
        return self.test_legal_flows


@dataclass(frozen=True)
class TurnExample:
    dialogue_id: str
    turn_index: int
    ordinal: int
    expected_kind: ExpectedKind
    context: AugmentedContext
    target: str
    gold: GoldTarget


def iter_turn_examples(
    d: Dialogue, cfg: RunConfig, kb: KnowledgeBase
) -> Iterator[TurnExample]:
    """Gold context and target for every agent/action turn of ``d``."""
    kb.workflow(d.flow)
    legal = cfg.legal_flows_for(d.flow)
    ordinal = 0
    for index, turn in enumerate(d.turns):
        if not turn.is_target:
            continue
        plan = None
        if cfg.prompt.include_plan:
            plan = remaining_plan(
                kb,
                d.flow,
                executed=d.gold_actions(upto=index),
                mode=cfg.plan_mode,
                include_slots=cfg.prompt.include_plan_slots,
                cache_dir=cfg.cache_dir,
            )
        context = build_context(
            d, index, cfg.prompt, legal_flows=legal, flow=d.flow, plan=plan
        )
        if turn.speaker == Speaker.ACTION:
            kind = ExpectedKind.ACTION
            gold = GoldTarget(
                flow=d.flow,
                kind=kind,
                action_name=turn.action.name,
                slot_values=turn.action.slot_values,
            )
        else:
            kind = ExpectedKind.UTTERANCE
            gold = GoldTarget(flow=d.flow, kind=kind, utterance=turn.utterance)
        yield TurnExample(
            dialogue_id=d.id,
            turn_index=index,
            ordinal=ordinal,
            expected_kind=kind,
            context=context,
            target=build_target(turn, d.flow),
            gold=gold,
        )
        ordinal += 1


def predict_dialogue(
    agent: Agent, d: Dialogue, cfg: RunConfig, kb: KnowledgeBase
) -> list[PredictionRecord]:
    """
    Query ``agent`` once per agent/action turn of ``d`` under teacher forcing.

    Args:
        agent: Agent to query
        d: Dialogue whose flow is in ``kb``
        cfg: Run configuration
        kb: Knowledge base for plans and flow checks

    Returns:
        One PredictionRecord per prediction turn, in turn order

    Raises:
        FlowbenchError: UNKNOWN_FLOW, AGENT_UNAVAILABLE or TIMEOUT
    """
    records = []
    for example in iter_turn_examples(d, cfg, kb):
        output = agent.respond(
            AgentQuery(
                context=example.context,
                expected_kind=example.expected_kind,
                target=example.target,
                dialogue_id=example.dialogue_id,
                ordinal=example.ordinal,
            )
        )
        records.append(
            PredictionRecord(
                dialogue_id=d.id,
                turn_index=example.turn_index,
                ordinal=example.ordinal,
                expected_kind=example.expected_kind,
                gold=example.gold,
                predicted=parse_prediction(output, example.expected_kind, cfg.prompt),
                output=output,
                emitted_action=emitted_action(output, cfg.prompt),
            )
        )
    logger.debug("Predicted %d turns of dialogue %s", len(records), d.id)
    return records


def predict_dataset(
    agent: Agent,
    dataset: Iterable[Dialogue],
    cfg: RunConfig,
    kb: KnowledgeBase,
) -> list[PredictionRecord]:
    """Run ``predict_dialogue`` over a dataset; records are in dialogue-id order."""
    dialogues = sorted(dataset, key=lambda d: d.id)
    logger.info(
        "Predicting %d dialogues with config %s (concurrency %d)",
        len(dialogues),
        cfg.prompt.code,
        cfg.concurrency,
    )
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        results = pool.map(lambda d: predict_dialogue(agent, d, cfg, kb), dialogues)
        return [record for records in results for record in records]


def score_run(
    records: Sequence[PredictionRecord],
    split: SplitSpec | None,
    kb: KnowledgeBase,
    training_data: Iterable[Dialogue] = (),
) -> MetricsReport:
    if not records:
        raise FlowbenchError(ErrorCode.INVALID_CONFIG, "No prediction records to score")
    return compute_report(records, kb, split=split, training_data=training_data)


def build_examples(
    dataset: Iterable[Dialogue], cfg: RunConfig, kb: KnowledgeBase
) -> list[dict[str, Any]]:
    """``{"id", "turn", "context", "target"}`` records for every prediction turn."""
    return [
        {
            "id": example.dialogue_id,
            "turn": example.turn_index,
            "context": example.context.text,
            "target": example.target,
        }
        for d in sorted(dataset, key=lambda d: d.id)
        for example in iter_turn_examples(d, cfg, kb)
    ]


def write_records(records: Iterable[PredictionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def read_records(path: str | Path) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(PredictionRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise FlowbenchError(
                    ErrorCode.MALFORMED_DATASET, f"{path}:{number}: {e}"
                ) from e
    return records
