"""
flowbench - planning-augmented evaluation of task-oriented dialogue agents.

This SDK provides tools for:
- Loading and perturbing workflow knowledge bases
- Compiling workflows into STRIPS problems, solving them and emitting PDDL
- Generating and validating generalization splits
- Building plan-augmented contexts and parsing model outputs
- Teacher-forced prediction runs and the full metric suite
- HTTP API serving a plan-following policy
"""

__version__ = "0.1.0"

from .agents import AgentClient, AgentKind, OracleAgent, PlanFollowerAgent, RemoteAgent
from .dialogue import Dialogue, Turn, load_dataset, serialize_history, serialize_turn
from .errors import ErrorCode, FlowbenchError
from .harness import RunConfig, predict_dataset, predict_dialogue, score_run
from .kb import (
    EXTRA_VERIFICATION,
    KnowledgeBase,
    apply_perturbation,
    load_default_kb,
    load_kb,
    prefix_of,
)
from .metrics import MetricsReport, PredictionRecord, compute_report
from .parse import ExpectedKind, ParsedPrediction, parse_prediction
from .pddl import emit_pddl, load_pddl
from .planner import PlanMode, ground_problem, remaining_plan, solve, strip_plan
from .prompt import PromptConfig, build_context, build_target
from .splits import SplitKind, SplitSpec, make_split, validate_split

__all__ = [
    "EXTRA_VERIFICATION",
    "AgentClient",
    "AgentKind",
    "Dialogue",
    "ErrorCode",
    "ExpectedKind",
    "FlowbenchError",
    "KnowledgeBase",
    "MetricsReport",
    "OracleAgent",
    "ParsedPrediction",
    "PlanFollowerAgent",
    "PlanMode",
    "PredictionRecord",
    "PromptConfig",
    "RemoteAgent",
    "RunConfig",
    "SplitKind",
    "SplitSpec",
    "Turn",
    "apply_perturbation",
    "build_context",
    "build_target",
    "compute_report",
    "emit_pddl",
    "ground_problem",
    "load_dataset",
    "load_default_kb",
    "load_kb",
    "load_pddl",
    "make_split",
    "parse_prediction",
    "predict_dataset",
    "predict_dialogue",
    "prefix_of",
    "remaining_plan",
    "score_run",
    "serialize_history",
    "serialize_turn",
    "solve",
    "strip_plan",
    "validate_split",
]
