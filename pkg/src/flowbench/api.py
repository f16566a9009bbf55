"""
HTTP API for flowbench.

Serves the plan-follower policy behind the REMOTE agent protocol
(``{"context"}`` -> ``{"output"}``) together with planning, PDDL and
split-validation endpoints, using FastAPI.
"""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .agents import PlanFollowerAgent
from .cache import get_cache_stats
from .errors import ErrorCode, FlowbenchError
from .kb import KnowledgeBase, load_default_kb
from .parse import ExpectedKind
from .pddl import emit_pddl
from .planner import PlanMode, ground_problem, remaining_plan
from .splits import SplitSpec, validate_split

logger = logging.getLogger(__name__)

NOT_FOUND_CODES = {ErrorCode.UNKNOWN_FLOW}
UNPROCESSABLE_CODES = {
    ErrorCode.MISSING_PLAN_IN_CONTEXT,
    ErrorCode.MALFORMED_DOCUMENT,
    ErrorCode.INVALID_CONFIG,
}


# Request/Response Models
class PredictRequest(BaseModel):
    context: str = Field(..., description="Augmented dialogue context")
    expected_kind: ExpectedKind | None = Field(
        None, description="ACTION or UTTERANCE; inferred from the plan when omitted"
    )


class PredictResponse(BaseModel):
    output: str


class PlanRequest(BaseModel):
    flow: str = Field(..., description="Workflow name")
    executed: list[str] = Field(default_factory=list, description="Actions done so far")
    mode: PlanMode = Field(PlanMode.LOOKUP, description="LOOKUP or REPLAN")
    include_slots: bool = Field(False, description="Attach per-action slot lists")
    initial_slots: list[str] = Field(default_factory=list, description="Known slots")


class PlanResponse(BaseModel):
    flow: str
    actions: list[str]
    slots: list[list[str]] | None = None


class PddlRequest(BaseModel):
    flow: str = Field(..., description="Workflow name")
    executed: list[str] = Field(default_factory=list)
    initial_slots: list[str] = Field(default_factory=list)


class PddlResponse(BaseModel):
    domain: str
    problem: str


class SplitRequest(BaseModel):
    kind: str
    assignment: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str
    workflows: int
    actions: int
    cache_stats: dict[str, Any]


# Thread pool for planner calls
executor = ThreadPoolExecutor(max_workers=8)


def run_in_threadpool(func, *args, **kwargs):
    """Run a blocking function in the thread pool."""
    loop = asyncio.get_running_loop()
    return loop.run_in_executor(executor, lambda: func(*args, **kwargs))


def status_for(code: ErrorCode) -> int:
    if code in NOT_FOUND_CODES:
        return 404
    if code in UNPROCESSABLE_CODES:
        return 422
    return 400


def create_app(kb: KnowledgeBase | None = None) -> FastAPI:
    """
    Build the FastAPI application.

    Args:
        kb: Knowledge base to serve; the embedded ABCD fixture by default

    Returns:
        FastAPI app
    """
    kb = kb or load_default_kb()
    policy = PlanFollowerAgent()

    app = FastAPI(
        title="flowbench API",
        description="Workflow planning and plan-following for dialogue agents",
        version=__version__,
    )
    app.state.kb = kb

    @app.exception_handler(FlowbenchError)
    async def flowbench_error_handler(request: Request, exc: FlowbenchError):
        logger.warning("%s %s failed: %s", request.method, request.url.path, exc)
        return JSONResponse(
            status_code=status_for(exc.code),
            content={"code": str(exc.code), "detail": exc.message},
        )

    @app.get("/health", response_model=HealthResponse)
    async def health_check():
        """Get service status and knowledge-base size."""
        cache_stats = await run_in_threadpool(get_cache_stats)
        return HealthResponse(
            status="healthy",
            version=__version__,
            workflows=len(kb.workflows),
            actions=len(kb.actions),
            cache_stats=cache_stats,
        )

    @app.post("/predict", response_model=PredictResponse)
    async def predict(request: PredictRequest):
        """Answer one turn by following the plan at the end of the context."""
        output = policy.respond_to_context(request.context, request.expected_kind)
        return PredictResponse(output=output)

    @app.post("/plan", response_model=PlanResponse)
    async def plan(request: PlanRequest):
        """Remaining actions of a workflow."""
        result = await run_in_threadpool(
            remaining_plan,
            kb,
            request.flow,
            executed=request.executed,
            mode=request.mode,
            include_slots=request.include_slots,
            initial_slots=request.initial_slots,
        )
        return PlanResponse(
            flow=request.flow,
            actions=result.actions_list,
            slots=[list(s) for s in result.slots] if result.slots is not None else None,
        )

    @app.post("/pddl", response_model=PddlResponse)
    async def pddl(request: PddlRequest):
        """PDDL domain and problem text for a workflow."""
        problem = await run_in_threadpool(
            ground_problem,
            kb,
            request.flow,
            initial_slots=request.initial_slots,
            executed=request.executed,
        )
        domain_text, problem_text = emit_pddl(problem)
        return PddlResponse(domain=domain_text, problem=problem_text)

    @app.post("/splits/validate")
    async def splits_validate(request: SplitRequest):
        """Check a split assignment; violations are returned, not raised."""
        spec = SplitSpec.from_dict(request.model_dump())
        report = await run_in_threadpool(validate_split, spec, kb)
        return report.to_dict()

    # Add CORS middleware for development
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )
    return app


if __name__ == "__main__":
    import uvicorn

    from .config import DEFAULT_HOST, DEFAULT_PORT

    uvicorn.run(create_app(), host=DEFAULT_HOST, port=DEFAULT_PORT)
