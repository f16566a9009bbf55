"""
STRIPS core, workflow grounding and deterministic forward search.

A workflow from the knowledge base is compiled into a fully grounded,
propositional planning problem:

- ``get-slot slot_X`` gathers a slot from the customer
- ``complete-button-slot button_A slot_...`` fills action A's form with one
  admissible slot combination
- ``do action_A`` executes the action once its button is done
- ``choose-flow`` / ``next-step-flow`` / ``complete-flow`` walk the flow's
  step tokens ``s_0 .. s_k`` in sequence order

An action that repeats within a workflow gets step-indexed button and
``did-`` propositions for each later occurrence (``did-A_s2``), and its
operators carry the step (``do action_A s_2``).

Plans are found with breadth-first search over states, expanding operators
in name order, which yields the lexicographically smallest shortest plan.
"""

import logging
from collections import Counter, deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

from .cache import compute_content_hash, load_plan, save_plan
from .config import DEFAULT_NODE_CAP
from .errors import ErrorCode, FlowbenchError
from .kb import KnowledgeBase

logger = logging.getLogger(__name__)

type Proposition = str
type Fact = tuple[Proposition, bool]

GET_SLOT_PREFIX = "get-slot slot_"
DO_ACTION_PREFIX = "do action_"


class OperatorKind(StrEnum):
    GET_SLOT = "GET_SLOT"
    COMPLETE_BUTTON = "COMPLETE_BUTTON"
    DO_ACTION = "DO_ACTION"
    CHOOSE_FLOW = "CHOOSE_FLOW"
    NEXT_STEP = "NEXT_STEP"
    COMPLETE_FLOW = "COMPLETE_FLOW"


class PlanMode(StrEnum):
    LOOKUP = "LOOKUP"
    REPLAN = "REPLAN"


def slot_prop(slot: str) -> Proposition:
    return f"slot_{slot}"


def button_prop(action: str) -> Proposition:
    return f"button-done_{action}"


def did_prop(action: str) -> Proposition:
    return f"did-{action}"


def occurrence_suffixes(sequence: Iterable[str]) -> list[str]:
    """Empty for an action's first occurrence, ``_s<i>`` for a repeat at step i."""
    seen: set[str] = set()
    suffixes = []
    for index, action in enumerate(sequence):
        suffixes.append(f"_s{index}" if action in seen else "")
        seen.add(action)
    return suffixes


def step_prop(flow: str, index: int) -> Proposition:
    return f"flow-step_{flow}_s{index}"


def finished_prop(flow: str) -> Proposition:
    return f"finished-flow_{flow}"


def _consistent(facts: frozenset[Fact]) -> bool:
    positive = {p for p, v in facts if v}
    return not any(p in positive for p, v in facts if not v)


@dataclass(frozen=True)
class Operator:
    name: str
    preconditions: frozenset[Fact]
    effects: frozenset[Fact]
    kind: OperatorKind

    def __post_init__(self) -> None:
        if not _consistent(self.preconditions) or not _consistent(self.effects):
            raise FlowbenchError(
                ErrorCode.INCONSISTENT_OPERATOR,
                f"Operator {self.name!r} assigns a proposition both values",
            )

    @property
    def propositions(self) -> set[Proposition]:
        return {p for p, _ in self.preconditions} | {p for p, _ in self.effects}


@dataclass(frozen=True)
class State:
    """Total assignment over ``universe``; ``true_props`` holds the true ones."""

    true_props: frozenset[Proposition]
    universe: frozenset[Proposition]

    @classmethod
    def from_assignment(cls, assignment: Mapping[Proposition, bool]) -> "State":
        return cls(
            true_props=frozenset(p for p, v in assignment.items() if v),
            universe=frozenset(assignment),
        )

    @property
    def assignment(self) -> dict[Proposition, bool]:
        return {p: p in self.true_props for p in sorted(self.universe)}

    def __getitem__(self, prop: Proposition) -> bool:
        if prop not in self.universe:
            raise FlowbenchError(
                ErrorCode.UNKNOWN_PROPOSITION, f"Unknown proposition: {prop}"
            )
        return prop in self.true_props

    def satisfies(self, facts: Iterable[Fact]) -> bool:
        return all(self[p] == v for p, v in facts)


@dataclass(frozen=True)
class PlanningProblem:
    name: str
    propositions: frozenset[Proposition]
    operators: tuple[Operator, ...]
    initial: State
    goal: frozenset[Fact]

    def __post_init__(self) -> None:
        unknown = {p for p, _ in self.goal} - self.propositions
        for op in self.operators:
            unknown |= op.propositions - self.propositions
        unknown |= self.initial.universe ^ self.propositions
        if unknown:
            raise FlowbenchError(
                ErrorCode.UNKNOWN_PROPOSITION,
                f"Propositions outside the problem: {sorted(unknown)[:5]}",
            )

    def operator(self, name: str) -> Operator:
        for op in self.operators:
            if op.name == name:
                return op
        raise FlowbenchError(ErrorCode.NOT_APPLICABLE, f"No operator named {name!r}")


@dataclass(frozen=True)
class Plan:
    steps: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def do_actions(self) -> list[str]:
        """DO_ACTION projection of the plan."""
        return strip_plan(self).actions_list


@dataclass(frozen=True)
class ActionPlan:
    """Remaining actions, optionally with the slots gathered for each one."""

    actions: tuple[str, ...] = ()
    slots: tuple[tuple[str, ...], ...] | None = None

    @property
    def actions_list(self) -> list[str]:
        return list(self.actions)

    def flatten(self) -> list[str]:
        """Slot names interleaved before the action that consumes them."""
        if self.slots is None:
            return list(self.actions)
        flat: list[str] = []
        for action, slots in zip(self.actions, self.slots, strict=True):
            flat.extend(slots)
            flat.append(action)
        return flat


def applicable(s: State, o: Operator) -> bool:
    """True iff every precondition fact of ``o`` holds in ``s``."""
    return s.satisfies(o.preconditions)


def apply(s: State, o: Operator) -> State:
    """
    Successor state ``(s minus negative effects) plus positive effects``.

    Raises:
        FlowbenchError: NOT_APPLICABLE if a precondition fails,
            UNKNOWN_PROPOSITION if ``o`` mentions a proposition outside ``s``
    """
    if not applicable(s, o):
        raise FlowbenchError(
            ErrorCode.NOT_APPLICABLE, f"{o.name!r} is not applicable in this state"
        )
    unknown = sorted(p for p, _ in o.effects if p not in s.universe)
    if unknown:
        raise FlowbenchError(
            ErrorCode.UNKNOWN_PROPOSITION, f"Unknown propositions: {unknown}"
        )
    deleted = {p for p, v in o.effects if not v}
    added = {p for p, v in o.effects if v}
    return State(true_props=(s.true_props - deleted) | added, universe=s.universe)


def execute_plan(problem: PlanningProblem, plan: Plan) -> State:
    """Replay ``plan`` from the initial state, returning the final state."""
    state = problem.initial
    for name in plan.steps:
        state = apply(state, problem.operator(name))
    return state


def _op(
    name: str, kind: OperatorKind, pre: Iterable[Fact], eff: Iterable[Fact]
) -> Operator:
    return Operator(
        name=name, preconditions=frozenset(pre), effects=frozenset(eff), kind=kind
    )


def ground_problem(
    kb: KnowledgeBase,
    flow: str,
    initial_slots: Iterable[str] = (),
    executed: Iterable[str] = (),
) -> PlanningProblem:
    """
    Compile one workflow into a grounded STRIPS problem.

    Slots first needed at step ``i > 0`` can only be gathered once step
    ``i - 1`` has run, and a step's button and action require the flow to be
    at that step, so DO_ACTION steps always follow the workflow's sequence.

    Args:
        kb: Knowledge base holding the workflow and slot requirements
        flow: Workflow to compile
        initial_slots: Slots already known before planning starts
        executed: Actions already performed; those on the flow start done

    Returns:
        PlanningProblem with goal ``finished-flow_<flow>``
    """
    workflow = kb.workflow(flow)
    sequence = workflow.action_sequence
    requirements = [kb.requirement(a) for a in sequence]
    # Repeated actions get step-indexed propositions and operator names.
    suffixes = occurrence_suffixes(sequence)
    did = [did_prop(a) + sfx for a, sfx in zip(sequence, suffixes, strict=True)]
    button = [button_prop(a) + sfx for a, sfx in zip(sequence, suffixes, strict=True)]
    labels = [
        action + (f" s_{index}" if sfx else "")
        for index, (action, sfx) in enumerate(zip(sequence, suffixes, strict=True))
    ]

    first_use: dict[str, int] = {}
    provided: set[str] = set()
    for index, req in enumerate(requirements):
        for slot in req.all_slots:
            first_use.setdefault(slot, index)
        provided.update(req.provides)
    known = set(initial_slots)
    slots = sorted(set(first_use) | provided | known)

    propositions = {slot_prop(s) for s in slots}
    propositions |= {step_prop(flow, i) for i in range(len(sequence) + 1)}
    propositions.add(finished_prop(flow))

    operators: list[Operator] = []
    for slot in slots:
        if slot in provided:
            continue
        index = first_use.get(slot, 0)
        gate = [(did[index - 1], True)] if index > 0 else []
        gathered = [(slot_prop(slot), True)]
        operators.append(
            _op(f"get-slot slot_{slot}", OperatorKind.GET_SLOT, gate, gathered)
        )

    for index, (action, req) in enumerate(zip(sequence, requirements, strict=True)):
        propositions |= {button[index], did[index]}
        at_step = (step_prop(flow, index), True)
        for combo in req.combinations():
            name = " ".join(
                [
                    "complete-button-slot",
                    f"button_{labels[index]}",
                    *(f"slot_{s}" for s in combo),
                ]
            )
            operators.append(
                _op(
                    name,
                    OperatorKind.COMPLETE_BUTTON,
                    [at_step, *((slot_prop(s), True) for s in combo)],
                    [(button[index], True)],
                )
            )
        operators.append(
            _op(
                f"do action_{labels[index]}",
                OperatorKind.DO_ACTION,
                [(button[index], True), at_step],
                [
                    (did[index], True),
                    *((slot_prop(s), True) for s in req.provides),
                ],
            )
        )
        operators.append(
            _op(
                f"next-step-flow flow_{flow} s_{index} s_{index + 1} button_{action}",
                OperatorKind.NEXT_STEP,
                [at_step, (did[index], True)],
                [(step_prop(flow, index), False), (step_prop(flow, index + 1), True)],
            )
        )

    operators.append(
        _op(
            f"choose-flow flow_{flow}",
            OperatorKind.CHOOSE_FLOW,
            [],
            [(step_prop(flow, 0), True)],
        )
    )
    operators.append(
        _op(
            f"complete-flow flow_{flow} s_{len(sequence)}",
            OperatorKind.COMPLETE_FLOW,
            [(step_prop(flow, len(sequence)), True)],
            [(finished_prop(flow), True)],
        )
    )

    # The first n occurrences of an action executed n times start done.
    remaining_done = Counter(executed)
    initial_true = {slot_prop(s) for s in known}
    for index, action in enumerate(sequence):
        if remaining_done[action] > 0:
            remaining_done[action] -= 1
            initial_true |= {did[index], button[index]}
    universe = frozenset(propositions)
    problem = PlanningProblem(
        name=flow,
        propositions=universe,
        operators=tuple(sorted(operators, key=lambda o: o.name)),
        initial=State(true_props=frozenset(initial_true), universe=universe),
        goal=frozenset({(finished_prop(flow), True)}),
    )
    logger.debug(
        "Grounded %s: %d propositions, %d operators",
        flow,
        len(universe),
        len(operators),
    )
    return problem


def solve(p: PlanningProblem, node_cap: int = DEFAULT_NODE_CAP) -> Plan:
    """
    Breadth-first search with operators expanded in name order.

    Args:
        p: Problem to solve
        node_cap: Maximum number of distinct states generated

    Returns:
        Shortest plan, lexicographically smallest among shortest plans

    Raises:
        FlowbenchError: UNSOLVABLE if the goal is unreachable,
            SEARCH_BUDGET_EXCEEDED if ``node_cap`` states were generated
    """
    goal_true = frozenset(q for q, v in p.goal if v)
    goal_false = frozenset(q for q, v in p.goal if not v)

    def is_goal(state: frozenset[str]) -> bool:
        return goal_true <= state and goal_false.isdisjoint(state)

    compiled = [
        (
            op.name,
            frozenset(q for q, v in op.preconditions if v),
            frozenset(q for q, v in op.preconditions if not v),
            frozenset(q for q, v in op.effects if v),
            frozenset(q for q, v in op.effects if not v),
        )
        for op in sorted(p.operators, key=lambda o: o.name)
    ]

    start = p.initial.true_props
    if is_goal(start):
        return Plan()

    parents: dict[frozenset[str], tuple[frozenset[str], str] | None] = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for name, pos, neg, add, delete in compiled:
            if not pos <= state or not neg.isdisjoint(state):
                continue
            successor = (state - delete) | add
            if successor in parents:
                continue
            parents[successor] = (state, name)
            if is_goal(successor):
                steps: list[str] = []
                node = successor
                while (link := parents[node]) is not None:
                    node, op_name = link
                    steps.append(op_name)
                logger.debug("Solved %s with %d states", p.name, len(parents))
                return Plan(steps=tuple(reversed(steps)))
            if len(parents) >= node_cap:
                raise FlowbenchError(
                    ErrorCode.SEARCH_BUDGET_EXCEEDED,
                    f"Search for {p.name} exceeded {node_cap} states",
                )
            queue.append(successor)

    raise FlowbenchError(ErrorCode.UNSOLVABLE, f"Goal of {p.name} is unreachable")


def problem_key(p: PlanningProblem) -> str:
    """Content hash identifying a grounded problem."""
    return compute_content_hash(
        p.name,
        [[op.name, sorted(op.preconditions), sorted(op.effects)] for op in p.operators],
        sorted(p.initial.true_props),
        sorted(p.goal),
    )


def solve_cached(
    p: PlanningProblem,
    cache_dir: str | Path | None = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> Plan:
    """``solve`` backed by the on-disk plan cache."""
    key = problem_key(p)
    cached = load_plan(key, cache_dir)
    if cached is not None:
        return Plan(steps=tuple(cached))
    plan = solve(p, node_cap=node_cap)
    save_plan(key, p.name, list(plan.steps), cache_dir)
    return plan


def strip_plan(plan: Plan, include_slots: bool = False) -> ActionPlan:
    """
    Reduce an operator plan to the actions a prompt shows.

    With ``include_slots`` the GET_SLOT steps preceding each action are kept
    as that action's slot list; trailing slot gathering is dropped.
    """
    actions: list[str] = []
    groups: list[tuple[str, ...]] = []
    pending: list[str] = []
    for step in plan.steps:
        if step.startswith(DO_ACTION_PREFIX):
            actions.append(step.removeprefix(DO_ACTION_PREFIX).split(" ")[0])
            groups.append(tuple(pending))
            pending = []
        elif step.startswith(GET_SLOT_PREFIX):
            pending.append(step.removeprefix(GET_SLOT_PREFIX))
    return ActionPlan(
        actions=tuple(actions), slots=tuple(groups) if include_slots else None
    )


def lookup_remaining(sequence: Iterable[str], executed: Iterable[str]) -> list[str]:
    """Suffix of ``sequence`` left after matching ``executed`` in order."""
    remaining = list(sequence)
    position = 0
    for action in executed:
        if position < len(remaining) and remaining[position] == action:
            position += 1
    return remaining[position:]


def remaining_plan(
    kb: KnowledgeBase,
    flow: str,
    executed: Iterable[str] = (),
    mode: PlanMode = PlanMode.LOOKUP,
    include_slots: bool = False,
    initial_slots: Iterable[str] = (),
    cache_dir: str | Path | None = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> ActionPlan:
    """
    Actions still needed to finish ``flow`` given the actions executed so far.

    LOOKUP consumes the workflow's sequence in order, skipping executed
    actions that do not match the next expected step. REPLAN grounds a
    problem where executed actions are already done and solves it; passing
    ``cache_dir`` reuses previously solved plans.

    Args:
        kb: Knowledge base
        flow: Gold or predicted workflow
        executed: Actions performed so far, in order
        mode: LOOKUP or REPLAN
        include_slots: Attach per-action slot lists
        initial_slots: Slots already known (REPLAN only)
        cache_dir: Plan cache directory (REPLAN only)
        node_cap: Search budget (REPLAN only)

    Returns:
        ActionPlan of the remaining actions
    """
    workflow = kb.workflow(flow)
    executed = list(executed)
    if mode == PlanMode.LOOKUP:
        actions = lookup_remaining(workflow.action_sequence, executed)
        slots = None
        if include_slots:
            slots = tuple(kb.requirement(a).all_slots for a in actions)
        return ActionPlan(actions=tuple(actions), slots=slots)

    problem = ground_problem(kb, flow, initial_slots=initial_slots, executed=executed)
    if cache_dir is not None:
        plan = solve_cached(problem, cache_dir=cache_dir, node_cap=node_cap)
    else:
        plan = solve(problem, node_cap=node_cap)
    return strip_plan(plan, include_slots=include_slots)
