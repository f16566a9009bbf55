"""
Error codes and the single exception type raised across flowbench.

Outcomes that are part of normal evaluation (malformed model outputs, split
violations, undefined metrics) are returned as values, never raised.
"""

from enum import StrEnum


class ErrorCode(StrEnum):
    MALFORMED_DOCUMENT = "MALFORMED_DOCUMENT"
    UNKNOWN_ACTION_REFERENCE = "UNKNOWN_ACTION_REFERENCE"
    DUPLICATE_WORKFLOW = "DUPLICATE_WORKFLOW"
    INVALID_PERTURBATION = "INVALID_PERTURBATION"
    UNKNOWN_PROPOSITION = "UNKNOWN_PROPOSITION"
    INCONSISTENT_OPERATOR = "INCONSISTENT_OPERATOR"
    NOT_APPLICABLE = "NOT_APPLICABLE"
    UNKNOWN_FLOW = "UNKNOWN_FLOW"
    UNSOLVABLE = "UNSOLVABLE"
    SEARCH_BUDGET_EXCEEDED = "SEARCH_BUDGET_EXCEEDED"
    INVALID_TURN = "INVALID_TURN"
    MALFORMED_DATASET = "MALFORMED_DATASET"
    INFEASIBLE_SPLIT = "INFEASIBLE_SPLIT"
    MISSING_PLAN = "MISSING_PLAN"
    MISSING_FLOW = "MISSING_FLOW"
    INVALID_CONFIG = "INVALID_CONFIG"
    CUSTOMER_TURN = "CUSTOMER_TURN"
    AGENT_UNAVAILABLE = "AGENT_UNAVAILABLE"
    TIMEOUT = "TIMEOUT"
    MISSING_PLAN_IN_CONTEXT = "MISSING_PLAN_IN_CONTEXT"


class FlowbenchError(Exception):
    """Raised for every validation or runtime failure the library reports."""

    def __init__(self, code: ErrorCode, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
