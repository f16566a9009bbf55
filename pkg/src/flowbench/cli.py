"""
Command-line interface.

Exit codes: 0 on success, 2 on validation failures (FlowbenchError or split
violations), 1 on anything else.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .agents import AgentClient, AgentKind, RemoteAgent
from .config import DEFAULT_CONCURRENCY, DEFAULT_HOST, DEFAULT_PORT
from .dialogue import Dialogue, load_dataset, load_default_dataset
from .errors import FlowbenchError
from .harness import (
    RunConfig,
    build_examples,
    predict_dataset,
    read_records,
    score_run,
    write_records,
)
from .kb import (
    EXTRA_VERIFICATION,
    KnowledgeBase,
    apply_perturbation,
    load_default_kb,
    load_kb,
)
from .metrics import aggregate_reports
from .pddl import write_pddl
from .planner import PlanMode, ground_problem, remaining_plan
from .prompt import PromptConfig, render_plan
from .report import read_report_json, write_report_csv, write_report_json
from .splits import (
    SplitKind,
    SplitSpec,
    make_split,
    partition_dialogues,
    validate_split,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _load_kb(args: argparse.Namespace) -> KnowledgeBase:
    kb = load_kb(args.kb) if args.kb else load_default_kb()
    if getattr(args, "perturb", False):
        kb, changed = apply_perturbation(kb, EXTRA_VERIFICATION)
        logger.info("Perturbation changed %d workflows", len(changed))
    return kb


def _load_data(args: argparse.Namespace) -> list[Dialogue]:
    return load_dataset(args.data) if args.data else load_default_dataset()


def _load_split(path: str | None) -> SplitSpec | None:
    if path is None:
        return None
    return SplitSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _write_json(data: object, out: str | None) -> None:
    text = json.dumps(data, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _comma_list(value: str | None) -> list[str]:
    return [item.strip() for item in (value or "").split(",") if item.strip()]


def cmd_plan(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    executed = _comma_list(args.executed)
    slots = _comma_list(args.slots)
    mode = PlanMode.REPLAN if args.replan else PlanMode.LOOKUP
    if slots and mode == PlanMode.LOOKUP:
        logger.info("Known slots only change REPLAN plans and emitted PDDL")
    plan = remaining_plan(
        kb,
        args.flow,
        executed=executed,
        mode=mode,
        include_slots=args.show_slots,
        initial_slots=slots,
        cache_dir=args.cache_dir,
    )
    print(render_plan(plan, include_slots=args.show_slots))
    if args.emit_pddl:
        problem = ground_problem(kb, args.flow, initial_slots=slots, executed=executed)
        domain_path, problem_path = write_pddl(problem, args.emit_pddl)
        print(f"Wrote {domain_path} and {problem_path}")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    spec = make_split(
        _load_data(args),
        kb,
        SplitKind(args.kind.upper()),
        use_canonical=not args.heuristic,
    )
    _write_json(spec.to_dict(), args.out)
    logger.info(
        "%s: %d TRAIN flows, %d TEST flows",
        spec.kind,
        len(spec.train_flows),
        len(spec.test_flows),
    )
    return EXIT_OK


def cmd_validate_split(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    report = validate_split(_load_split(args.split), kb)
    _write_json(report.to_dict(), args.out)
    return EXIT_OK if report.ok else EXIT_INVALID


def _run_config(args: argparse.Namespace, kb: KnowledgeBase) -> RunConfig:
    return RunConfig.for_kb(
        kb,
        PromptConfig.from_code(args.config),
        split=_load_split(args.split),
        plan_mode=PlanMode(args.plan_mode.upper()),
        concurrency=args.concurrency,
        cache_dir=Path(args.cache_dir) if args.cache_dir else None,
    )


def cmd_build_contexts(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    examples = build_examples(_load_data(args), _run_config(args, kb), kb)
    with open(args.out, "w", encoding="utf-8") as f:
        for example in examples:
            f.write(json.dumps(example, ensure_ascii=False) + "\n")
    logger.info("Wrote %d contexts to %s", len(examples), args.out)
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    cfg = _run_config(args, kb)
    client = AgentClient.from_options(
        args.agent,
        endpoint=args.endpoint,
        seed=args.seed,
        timeout=args.timeout,
        random_first_flow=args.random_first_flow,
    )
    agent = client.create(flows=kb.flow_names)
    try:
        dataset = _load_data(args)
        if cfg.split is not None and args.test_only:
            _, dataset = partition_dialogues(dataset, cfg.split)
        records = predict_dataset(agent, dataset, cfg, kb)
    finally:
        if isinstance(agent, RemoteAgent):
            agent.close()
    write_records(records, args.out)
    print(f"Wrote {len(records)} predictions to {args.out}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    split = _load_split(args.split)
    training_data: list[Dialogue] = []
    if split is not None:
        training_data, _ = partition_dialogues(_load_data(args), split)
    report = score_run(read_records(args.preds), split, kb, training_data)
    if args.out:
        write_report_json(report, args.out)
    else:
        print(json.dumps(report.to_dict(), indent=2))
    if args.csv_dir:
        write_report_csv(report, args.csv_dir)
    return EXIT_OK


def cmd_aggregate(args: argparse.Namespace) -> int:
    reports = [read_report_json(path) for path in args.reports]
    _write_json(aggregate_reports(reports), args.out)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(_load_kb(args)), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowbench",
        description="Planning-augmented evaluation of task-oriented dialogue agents",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
        p.add_argument("--kb", help="Knowledge-base JSON (default: embedded ABCD)")
        p.add_argument(
            "--perturb",
            action="store_true",
            help="Apply the extra-verification perturbation to the KB",
        )
        if data:
            p.add_argument("--data", help="Dataset JSONL (default: embedded sample)")

    def add_run(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default="-", help="Prompt config, e.g. LFP or LFPS")
        p.add_argument("--split", help="Split assignment JSON")
        p.add_argument("--plan-mode", default="lookup", choices=["lookup", "replan"])
        p.add_argument("--concurrency", type=int, default=DEFAULT_CONCURRENCY)
        p.add_argument("--cache-dir", help="Plan cache directory (REPLAN)")

    p = sub.add_parser("plan", help="Print the remaining plan of a workflow")
    add_common(p, data=False)
    p.add_argument("--flow", required=True)
    p.add_argument("--executed", help="Comma-separated executed actions")
    p.add_argument("--slots", help="Comma-separated slots already known")
    p.add_argument(
        "--replan", action="store_true", help="Search instead of sequence lookup"
    )
    p.add_argument("--show-slots", action="store_true", help="Show slots per action")
    p.add_argument("--emit-pddl", metavar="DIR", help="Also write PDDL files here")
    p.add_argument("--cache-dir", help="Plan cache directory")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("split", help="Generate a split assignment")
    add_common(p)
    p.add_argument("--kind", required=True, choices=[k.lower() for k in SplitKind])
    p.add_argument(
        "--heuristic", action="store_true", help="Ignore canonical membership"
    )
    p.add_argument("--out", help="Output JSON (default: stdout)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("validate-split", help="Check a split assignment")
    add_common(p, data=False)
    p.add_argument("--split", required=True)
    p.add_argument("--out", help="Output JSON (default: stdout)")
    p.set_defaults(func=cmd_validate_split)

    p = sub.add_parser("build-contexts", help="Write augmented contexts and targets")
    add_common(p)
    add_run(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_contexts)

    p = sub.add_parser("predict", help="Run teacher-forced prediction")
    add_common(p)
    add_run(p)
    p.add_argument("--agent", required=True, choices=[k.value for k in AgentKind])
    p.add_argument("--endpoint", help="Inference URL for --agent remote")
    p.add_argument("--timeout", type=float, help="Remote request timeout in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-first-flow", action="store_true")
    p.add_argument(
        "--test-only", action="store_true", help="Predict TEST dialogues only"
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="Score a predictions file")
    add_common(p)
    p.add_argument("--preds", required=True)
    p.add_argument("--split", help="Split assignment JSON (enables breakdowns)")
    p.add_argument("--out", help="Report JSON (default: stdout)")
    p.add_argument("--csv-dir", help="Also write CSV tables here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("aggregate", help="Average scalar metrics over reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="Output JSON (default: stdout)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("serve", help="Serve the HTTP API")
    add_common(p, data=False)
    p.add_argument("--host", default=DEFAULT_HOST)
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FlowbenchError as e:
        logger.error("%s", e)
        return EXIT_INVALID
    except Exception:
        logger.exception("flowbench %s failed", args.command)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
