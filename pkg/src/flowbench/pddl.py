"""
PDDL emission and loading for grounded workflow problems.

Problems are written fully grounded: every operator becomes a parameterless
``:action`` and every proposition a nullary predicate. Spaces in operator
names are encoded as ``__`` so names survive as PDDL symbols. Loading goes
through pyperplan's parser and grounder.
"""

import logging
from pathlib import Path

from pyperplan import grounding
from pyperplan.pddl.parser import (
    TraversePDDLDomain,
    TraversePDDLProblem,
    parse_domain_def,
    parse_lisp_iterator,
    parse_problem_def,
)

from .planner import Fact, Operator, OperatorKind, PlanningProblem, State

logger = logging.getLogger(__name__)

NAME_SEPARATOR = "__"

KIND_PREFIXES = {
    "get-slot ": OperatorKind.GET_SLOT,
    "complete-button-slot ": OperatorKind.COMPLETE_BUTTON,
    "do ": OperatorKind.DO_ACTION,
    "choose-flow ": OperatorKind.CHOOSE_FLOW,
    "next-step-flow ": OperatorKind.NEXT_STEP,
    "complete-flow ": OperatorKind.COMPLETE_FLOW,
}


def encode_name(name: str) -> str:
    return name.replace(" ", NAME_SEPARATOR)


def decode_name(symbol: str) -> str:
    return symbol.strip("() ").replace(NAME_SEPARATOR, " ")


def _kind_of(name: str) -> OperatorKind:
    for prefix, kind in KIND_PREFIXES.items():
        if name.startswith(prefix):
            return kind
    raise ValueError(f"Cannot infer operator kind from {name!r}")


def _conjunction(facts: frozenset[Fact], indent: str) -> str:
    if not facts:
        return "(and)"
    parts = [f"({p})" if v else f"(not ({p}))" for p, v in sorted(facts)]
    return "(and\n" + "".join(f"{indent}  {part}\n" for part in parts) + f"{indent})"


def _action_block(op: Operator) -> str:
    return (
        f"  (:action {encode_name(op.name)}\n"
        f"    :parameters ()\n"
        f"    :precondition {_conjunction(op.preconditions, '    ')}\n"
        f"    :effect {_conjunction(op.effects, '    ')}\n"
        f"  )\n"
    )


def emit_pddl(p: PlanningProblem) -> tuple[str, str]:
    """
    Render a grounded problem as PDDL.

    Args:
        p: Problem to render

    Returns:
        Tuple of (domain text, problem text)
    """
    requirements = ":strips"
    if any(not v for op in p.operators for _, v in op.preconditions) or any(
        not v for _, v in p.goal
    ):
        requirements += " :negative-preconditions"

    predicates = "\n".join(f"    ({prop})" for prop in sorted(p.propositions))
    actions = "\n".join(_action_block(op) for op in p.operators)
    domain = (
        f"(define (domain flowbench-{p.name})\n"
        f"  (:requirements {requirements})\n\n"
        f"  (:predicates\n{predicates}\n  )\n\n"
        f"{actions})\n"
    )

    init = "\n".join(f"    ({prop})" for prop in sorted(p.initial.true_props))
    problem = (
        f"(define (problem {p.name})\n"
        f"  (:domain flowbench-{p.name})\n"
        f"  (:objects)\n\n"
        f"  (:init\n{init}\n  )\n\n"
        f"  (:goal {_conjunction(p.goal, '  ')})\n"
        f")\n"
    )
    return domain, problem


def write_pddl(p: PlanningProblem, directory: str | Path) -> tuple[Path, Path]:
    """Write ``<flow>-domain.pddl`` and ``<flow>-problem.pddl`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    domain_text, problem_text = emit_pddl(p)
    domain_path = out / f"{p.name}-domain.pddl"
    problem_path = out / f"{p.name}-problem.pddl"
    domain_path.write_text(domain_text, encoding="utf-8")
    problem_path.write_text(problem_text, encoding="utf-8")
    logger.info("Wrote PDDL for %s to %s", p.name, out)
    return domain_path, problem_path


def load_pddl(domain_text: str, problem_text: str) -> PlanningProblem:
    """
    Parse and ground PDDL text back into a PlanningProblem.

    Only positive STRIPS is supported, which is all ``emit_pddl`` produces
    for workflow problems.
    """
    domain_ast = parse_domain_def(parse_lisp_iterator(domain_text.split("\n")))
    domain_visitor = TraversePDDLDomain()
    domain_ast.accept(domain_visitor)

    problem_ast = parse_problem_def(parse_lisp_iterator(problem_text.split("\n")))
    problem_visitor = TraversePDDLProblem(domain_visitor.domain)
    problem_ast.accept(problem_visitor)

    task = grounding.ground(
        problem_visitor.get_problem(),
        remove_statics_from_initial_state=False,
        remove_irrelevant_operators=False,
    )

    operators = []
    for op in task.operators:
        name = decode_name(op.name)
        operators.append(
            Operator(
                name=name,
                preconditions=frozenset(
                    (decode_name(f), True) for f in op.preconditions
                ),
                effects=frozenset(
                    {(decode_name(f), True) for f in op.add_effects}
                    | {(decode_name(f), False) for f in op.del_effects}
                ),
                kind=_kind_of(name),
            )
        )

    universe = frozenset(
        decode_name(f) for f in (*task.facts, *task.initial_state, *task.goals)
    )
    return PlanningProblem(
        name=task.name,
        propositions=universe,
        operators=tuple(sorted(operators, key=lambda o: o.name)),
        initial=State(
            true_props=frozenset(decode_name(f) for f in task.initial_state),
            universe=universe,
        ),
        goal=frozenset((decode_name(f), True) for f in task.goals),
    )
