"""
Scoring of teacher-forced predictions.

Every metric takes a list of PredictionRecord. Fractions whose denominator
is empty are None, reported as NOT_APPLICABLE.
"""

import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from statistics import fmean
from typing import Any

from .dialogue import Dialogue
from .errors import ErrorCode, FlowbenchError
from .kb import KnowledgeBase, fallback_prefix, prefix_of
from .parse import ExpectedKind, ParsedPrediction, PredictionKind
from .splits import SplitSpec

logger = logging.getLogger(__name__)

BLANK = "<blank>"
OTHER = "OTHER"
NOT_APPLICABLE = "NOT_APPLICABLE"


class Denominator(StrEnum):
    EXPECTED = "EXPECTED"
    PREDICTED = "PREDICTED"
    LONGEST = "LONGEST"


@dataclass(frozen=True)
class GoldTarget:
    flow: str
    kind: ExpectedKind
    action_name: str | None = None
    slot_values: tuple[str, ...] = ()
    utterance: str | None = None


@dataclass(frozen=True)
class PredictionRecord:
    """One prediction turn: gold payload, parsed prediction and raw output.

    ``ordinal`` counts prediction turns (agent and action) within the dialogue.
    ``emitted_action`` is the action named by the output whatever the turn kind,
    so an action emitted on an agent turn still enters the action sequence.
    """

    dialogue_id: str
    turn_index: int
    ordinal: int
    expected_kind: ExpectedKind
    gold: GoldTarget
    predicted: ParsedPrediction
    output: str = ""
    emitted_action: str | None = None

    def __post_init__(self) -> None:
        if self.gold.kind != self.expected_kind:
            raise FlowbenchError(
                ErrorCode.INVALID_TURN,
                f"Gold kind {self.gold.kind} does not match {self.expected_kind}",
            )

    @property
    def predicted_action(self) -> str | None:
        if self.predicted.kind == PredictionKind.ACTION:
            return self.predicted.action_name
        return None

    @property
    def predicted_values(self) -> tuple[str, ...]:
        if self.predicted.kind == PredictionKind.ACTION:
            return self.predicted.slot_values
        return ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "ordinal": self.ordinal,
            "expected_kind": str(self.expected_kind),
            "gold": {
                "flow": self.gold.flow,
                "kind": str(self.gold.kind),
                "action_name": self.gold.action_name,
                "slot_values": list(self.gold.slot_values),
                "utterance": self.gold.utterance,
            },
            "predicted": self.predicted.to_dict(),
            "output": self.output,
            "emitted_action": self.emitted_action,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PredictionRecord":
        gold = data["gold"]
        return cls(
            dialogue_id=str(data["dialogue_id"]),
            turn_index=int(data["turn_index"]),
            ordinal=int(data["ordinal"]),
            expected_kind=ExpectedKind(data["expected_kind"]),
            gold=GoldTarget(
                flow=gold["flow"],
                kind=ExpectedKind(gold["kind"]),
                action_name=gold.get("action_name"),
                slot_values=tuple(gold.get("slot_values") or ()),
                utterance=gold.get("utterance"),
            ),
            predicted=ParsedPrediction.from_dict(data["predicted"]),
            output=data.get("output", ""),
            emitted_action=data.get("emitted_action"),
        )


def _mean(values: Iterable[float]) -> float | None:
    values = list(values)
    return fmean(values) if values else None


def _action_records(records: Iterable[PredictionRecord]) -> list[PredictionRecord]:
    return [r for r in records if r.expected_kind == ExpectedKind.ACTION]


def _is_correct(r: PredictionRecord) -> float:
    return float(r.predicted_action == r.gold.action_name)


def action_accuracy(records: Iterable[PredictionRecord]) -> float | None:
    """Exact action-name match over gold action turns; MALFORMED scores 0."""
    return _mean(_is_correct(r) for r in _action_records(records))


def flow_accuracy(records: Iterable[PredictionRecord]) -> float | None:
    return _mean(float(r.predicted.flow == r.gold.flow) for r in records)


def _prefix(kb: KnowledgeBase | None, flow: str) -> str:
    return prefix_of(kb, flow) if kb is not None else fallback_prefix(flow)


def flow_prefix_accuracy(
    records: Iterable[PredictionRecord], kb: KnowledgeBase | None = None
) -> float | None:
    return _mean(
        float(
            r.predicted.flow is not None
            and _prefix(kb, r.predicted.flow) == _prefix(kb, r.gold.flow)
        )
        for r in records
    )


def levenshtein_actions(
    predicted: Sequence[str], gold: Sequence[str], free_deletion: bool = False
) -> int:
    """
    Edit cost turning ``predicted`` into ``gold``.

    Adding or substituting an action costs 1; deleting one costs 1, or 0
    with ``free_deletion``.
    """
    delete_cost = 0 if free_deletion else 1
    m, n = len(predicted), len(gold)
    previous = list(range(n + 1))
    for i in range(1, m + 1):
        current = [previous[0] + delete_cost] + [0] * n
        for j in range(1, n + 1):
            substitute = previous[j - 1] + (predicted[i - 1] != gold[j - 1])
            current[j] = min(
                substitute,
                previous[j] + delete_cost,
                current[j - 1] + 1,
            )
        previous = current
    return previous[n]


def dialogue_sequences(
    records: Iterable[PredictionRecord],
) -> dict[str, tuple[list[str], list[str]]]:
    """
    Per dialogue: (actions emitted on every turn, gold actions).

    A turn counts the action its output names, on agent turns as well as
    action turns; records without ``emitted_action`` fall back to the parsed
    action.
    """
    by_dialogue: dict[str, list[PredictionRecord]] = defaultdict(list)
    for r in records:
        by_dialogue[r.dialogue_id].append(r)
    sequences = {}
    for dialogue_id in sorted(by_dialogue):
        turns = sorted(by_dialogue[dialogue_id], key=lambda r: r.turn_index)
        emitted = [r.emitted_action or r.predicted_action for r in turns]
        predicted = [action for action in emitted if action]
        gold = [r.gold.action_name for r in turns if r.gold.action_name]
        sequences[dialogue_id] = (predicted, gold)
    return sequences


def levenshtein_summary(
    records: Iterable[PredictionRecord], free_deletion: bool = False
) -> tuple[float | None, int]:
    """
    Mean per-dialogue Levenshtein cost.

    Returns:
        Tuple of (mean cost, number of dialogues excluded for having no gold actions)
    """
    costs = []
    excluded = 0
    for predicted, gold in dialogue_sequences(records).values():
        if not gold:
            excluded += 1
            continue
        costs.append(levenshtein_actions(predicted, gold, free_deletion))
    return _mean(costs), excluded


def slot_accuracy_ordered(
    records: Iterable[PredictionRecord],
) -> tuple[float | None, float | None]:
    """
    Positionwise slot accuracy on gold action turns.

    Predictions are padded or truncated to the gold length; zero-slot gold
    turns are vacuously correct.

    Returns:
        Tuple of (mean fraction correct, fraction of turns fully correct)
    """
    fractions = []
    for r in _action_records(records):
        gold = r.gold.slot_values
        if not gold:
            fractions.append(1.0)
            continue
        predicted = r.predicted_values
        correct = sum(
            1
            for i, value in enumerate(gold)
            if i < len(predicted) and predicted[i] == value
        )
        fractions.append(correct / len(gold))
    if not fractions:
        return None, None
    return fmean(fractions), fmean(float(f == 1.0) for f in fractions)


def slot_set_score(
    gold: Sequence[str],
    predicted: Sequence[str],
    denominator: Denominator,
    include_empty: bool = True,
) -> float | None:
    """Multiset slot overlap of one turn; None when excluded or undefined."""
    if not gold:
        if not include_empty:
            return None
        if not predicted:
            return 1.0
    correct = sum((Counter(gold) & Counter(predicted)).values())
    match denominator:
        case Denominator.EXPECTED:
            total = len(gold)
        case Denominator.PREDICTED:
            total = len(predicted)
        case _:
            total = max(len(gold), len(predicted))
    return correct / total if total else None


def slot_set_metrics(
    records: Iterable[PredictionRecord],
    denominator: Denominator = Denominator.EXPECTED,
    include_empty: bool = True,
) -> float | None:
    """Generous, order-free slot accuracy averaged over gold action turns."""
    return _mean(
        score
        for r in _action_records(records)
        if (
            score := slot_set_score(
                r.gold.slot_values, r.predicted_values, denominator, include_empty
            )
        )
        is not None
    )


@dataclass
class ConfusionMatrix:
    rows: list[str]
    columns: list[str]
    counts: dict[str, dict[str, int]]

    @property
    def total(self) -> int:
        return sum(sum(row.values()) for row in self.counts.values())

    @property
    def trace(self) -> int:
        return sum(self.counts.get(label, {}).get(label, 0) for label in self.rows)

    def count(self, row: str, column: str) -> int:
        return self.counts.get(row, {}).get(column, 0)

    def is_diagonal(self) -> bool:
        return self.trace == self.total

    def to_dict(self) -> dict[str, Any]:
        return {"rows": self.rows, "columns": self.columns, "counts": self.counts}


def _confusion(pairs: list[tuple[str, str | None]], known: set[str]) -> ConfusionMatrix:
    labels = sorted({gold for gold, _ in pairs})
    known = known | set(labels)
    counts: dict[str, dict[str, int]] = {label: {} for label in labels}
    extra: set[str] = set()
    for gold, predicted in pairs:
        if predicted is None:
            column = BLANK
        elif predicted in known:
            column = predicted
            if predicted not in labels:
                extra.add(predicted)
        else:
            column = OTHER
        counts[gold][column] = counts[gold].get(column, 0) + 1
    columns = [*labels, *sorted(extra), BLANK, OTHER]
    return ConfusionMatrix(rows=labels, columns=columns, counts=counts)


def action_confusion(
    records: Iterable[PredictionRecord], known_actions: Iterable[str] = ()
) -> ConfusionMatrix:
    """Gold action by predicted action over gold action turns."""
    pairs = [(r.gold.action_name, r.predicted_action) for r in _action_records(records)]
    return _confusion(pairs, set(known_actions))


def flow_confusion(
    records: Iterable[PredictionRecord], known_flows: Iterable[str] = ()
) -> ConfusionMatrix:
    pairs = [(r.gold.flow, r.predicted.flow) for r in records]
    return _confusion(pairs, set(known_flows))


def per_action_accuracy(records: Iterable[PredictionRecord]) -> dict[str, float]:
    outcomes: dict[str, list[float]] = defaultdict(list)
    for r in _action_records(records):
        outcomes[r.gold.action_name].append(_is_correct(r))
    return {action: fmean(values) for action, values in sorted(outcomes.items())}


@dataclass(frozen=True)
class TurnAccuracy:
    flow: float
    flow_prefix: float
    count: int


def per_turn_flow_accuracy(
    records: Iterable[PredictionRecord], kb: KnowledgeBase | None = None
) -> dict[int, TurnAccuracy]:
    """Flow and flow-prefix accuracy grouped by prediction-turn ordinal."""
    by_ordinal: dict[int, list[PredictionRecord]] = defaultdict(list)
    for r in records:
        by_ordinal[r.ordinal].append(r)
    return {
        ordinal: TurnAccuracy(
            flow=flow_accuracy(group),
            flow_prefix=flow_prefix_accuracy(group, kb),
            count=len(group),
        )
        for ordinal, group in sorted(by_ordinal.items())
    }


@dataclass(frozen=True)
class FlowSource:
    train: float
    test_only: float
    neither: float


def flow_source_breakdown(
    records: Iterable[PredictionRecord], split: SplitSpec
) -> FlowSource:
    """Shares of predicted flows that are TRAIN flows, TEST-only flows or unknown."""
    train = set(split.train_flows)
    test_only = set(split.test_flows) - train
    tally = Counter()
    for r in records:
        flow = r.predicted.flow
        if flow in train:
            tally["train"] += 1
        elif flow in test_only:
            tally["test_only"] += 1
        else:
            tally["neither"] += 1
    total = sum(tally.values())
    if not total:
        return FlowSource(0.0, 0.0, 0.0)
    return FlowSource(
        train=100 * tally["train"] / total,
        test_only=100 * tally["test_only"] / total,
        neither=100 * tally["neither"] / total,
    )


@dataclass
class ExposureBreakdown:
    """Action accuracy split by whether an action was seen in training.

    Theoretically seen: in some TRAIN workflow's sequence. Actually seen:
    executed in at least one training dialogue.
    """

    accuracy: dict[str, float | None]
    counts: dict[str, int]
    theoretically_seen: list[str]
    actually_seen: list[str]


def action_exposure_breakdown(
    records: Iterable[PredictionRecord],
    split: SplitSpec,
    training_data: Iterable[Dialogue],
    kb: KnowledgeBase,
) -> ExposureBreakdown:
    theoretical = {
        action
        for flow in split.train_flows
        for action in kb.workflow(flow).action_sequence
    }
    actual = {action for d in training_data for action in d.gold_actions()}

    buckets: dict[str, list[float]] = {
        "theoretical_seen": [],
        "theoretical_unseen": [],
        "actual_seen": [],
        "actual_unseen": [],
    }
    for r in _action_records(records):
        correct = _is_correct(r)
        action = r.gold.action_name
        seen = action in theoretical
        buckets["theoretical_seen" if seen else "theoretical_unseen"].append(correct)
        buckets["actual_seen" if action in actual else "actual_unseen"].append(correct)
    return ExposureBreakdown(
        accuracy={name: _mean(values) for name, values in buckets.items()},
        counts={name: len(values) for name, values in buckets.items()},
        theoretically_seen=sorted(theoretical),
        actually_seen=sorted(actual),
    )


@dataclass
class MetricsReport:
    action_acc: float | None
    flow_acc: float | None
    flow_prefix_acc: float | None
    lev_act: float | None
    lev_act_free_del: float | None
    lev_excluded_dialogues: int
    slot_mean: float | None
    slot_all: float | None
    slot_set: dict[str, float | None]
    num_records: int
    num_action_turns: int
    per_action: dict[str, float] = field(default_factory=dict)
    per_turn: dict[int, TurnAccuracy] = field(default_factory=dict)
    action_confusion: ConfusionMatrix | None = None
    flow_confusion: ConfusionMatrix | None = None
    flow_source: FlowSource | None = None
    exposure: ExposureBreakdown | None = None

    SCALARS = (
        "action_acc",
        "flow_acc",
        "flow_prefix_acc",
        "lev_act",
        "lev_act_free_del",
        "slot_mean",
        "slot_all",
    )

    def scalars(self) -> dict[str, float | None]:
        values = {name: getattr(self, name) for name in self.SCALARS}
        values.update({f"slot_set_{k}": v for k, v in self.slot_set.items()})
        return values

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready form; undefined fractions become ``NOT_APPLICABLE``."""

        def render(value: Any) -> Any:
            if value is None:
                return NOT_APPLICABLE
            if isinstance(value, dict):
                return {str(k): render(v) for k, v in value.items()}
            if isinstance(value, list):
                return [render(v) for v in value]
            return value

        data = {
            "num_records": self.num_records,
            "num_action_turns": self.num_action_turns,
            "lev_excluded_dialogues": self.lev_excluded_dialogues,
            **self.scalars(),
            "per_action": self.per_action,
            "per_turn": {k: asdict(v) for k, v in self.per_turn.items()},
        }
        for name in ("action_confusion", "flow_confusion"):
            matrix = getattr(self, name)
            data[name] = matrix.to_dict() if matrix is not None else None
        data["flow_source"] = asdict(self.flow_source) if self.flow_source else None
        data["exposure"] = asdict(self.exposure) if self.exposure else None
        return render(data)


def slot_set_variants(records: Sequence[PredictionRecord]) -> dict[str, float | None]:
    """Generous slot metrics for each denominator, with and without empty slots."""
    variants = {}
    for denominator in Denominator:
        variants[denominator.lower()] = slot_set_metrics(records, denominator, True)
        if denominator != Denominator.PREDICTED:
            variants[f"{denominator.lower()}_nonempty"] = slot_set_metrics(
                records, denominator, False
            )
    return variants


def compute_report(
    records: Sequence[PredictionRecord],
    kb: KnowledgeBase,
    split: SplitSpec | None = None,
    training_data: Iterable[Dialogue] = (),
) -> MetricsReport:
    """Run the full metric suite over one prediction run."""
    lev, excluded = levenshtein_summary(records)
    lev_free, _ = levenshtein_summary(records, free_deletion=True)
    slot_mean, slot_all = slot_accuracy_ordered(records)
    report = MetricsReport(
        action_acc=action_accuracy(records),
        flow_acc=flow_accuracy(records),
        flow_prefix_acc=flow_prefix_accuracy(records, kb),
        lev_act=lev,
        lev_act_free_del=lev_free,
        lev_excluded_dialogues=excluded,
        slot_mean=slot_mean,
        slot_all=slot_all,
        slot_set=slot_set_variants(records),
        num_records=len(records),
        num_action_turns=len(_action_records(records)),
        per_action=per_action_accuracy(records),
        per_turn=per_turn_flow_accuracy(records, kb),
        action_confusion=action_confusion(records, kb.actions),
        flow_confusion=flow_confusion(records, kb.workflows),
    )
    if split is not None:
        report.flow_source = flow_source_breakdown(records, split)
        report.exposure = action_exposure_breakdown(records, split, training_data, kb)
    logger.info(
        "Scored %d records: action=%s flow=%s",
        len(records),
        report.action_acc,
        report.flow_acc,
    )
    return report


def _scalar_view(report: MetricsReport | Mapping[str, Any]) -> dict[str, float | None]:
    if isinstance(report, MetricsReport):
        return report.scalars()
    return {
        name: (value if isinstance(value, int | float) else None)
        for name, value in report.items()
        if name in MetricsReport.SCALARS or name.startswith("slot_set_")
    }


def aggregate_reports(
    reports: Sequence[MetricsReport | Mapping[str, Any]],
) -> dict[str, float | None]:
    """Macro mean of every scalar metric across runs (e.g. seeds).

    Accepts reports or their ``to_dict`` form; NOT_APPLICABLE values are skipped.
    """
    if not reports:
        raise FlowbenchError(ErrorCode.INVALID_CONFIG, "No reports to aggregate")
    views = [_scalar_view(r) for r in reports]
    names = sorted({name for view in views for name in view})
    return {
        name: _mean(v for view in views if (v := view.get(name)) is not None)
        for name in names
    }
