#!/usr/bin/env python3
"""
Planner benchmarking harness for flowbench.

Measures how long grounding and breadth-first search take for every workflow
in the knowledge base, cold and through the on-disk plan cache, with and
without the extra-verification perturbation.
"""

import argparse
import json
import statistics
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from flowbench.errors import FlowbenchError
from flowbench.kb import (
    EXTRA_VERIFICATION,
    KnowledgeBase,
    apply_perturbation,
    load_default_kb,
)
from flowbench.planner import ground_problem, solve, solve_cached


@dataclass
class BenchmarkConfig:
    """Configuration for benchmark runs."""

    repeats: int = 5
    flows: list[str] = field(default_factory=list)
    test_perturbed: bool = True
    verbose: bool = False
    output_json: bool = True


@dataclass
class BenchmarkResult:
    """Results from one scenario over all selected workflows."""

    scenario: str
    num_flows: int
    failed_flows: list[str]

    ground_times: list[float]
    solve_times: list[float]
    cached_times: list[float]
    plan_lengths: list[int]

    @property
    def total_time_seconds(self) -> float:
        return sum(self.ground_times) + sum(self.solve_times)

    @property
    def plans_per_second(self) -> float:
        solved = len(self.solve_times)
        return solved / self.total_time_seconds if self.total_time_seconds else 0.0

    def to_dict(self) -> dict:
        def median(values: list[float]) -> float:
            return round(statistics.median(values), 6) if values else 0.0

        return {
            "scenario": self.scenario,
            "num_flows": self.num_flows,
            "failed_flows": self.failed_flows,
            "total_time_seconds": round(self.total_time_seconds, 3),
            "plans_per_second": round(self.plans_per_second, 1),
            "median_ground_time": median(self.ground_times),
            "median_solve_time": median(self.solve_times),
            "max_solve_time": round(max(self.solve_times, default=0.0), 6),
            "median_cached_time": median(self.cached_times),
            "max_plan_length": max(self.plan_lengths, default=0),
        }


class PlannerBenchmark:
    """Times the planner over a knowledge base."""

    def __init__(self, config: BenchmarkConfig):
        self.config = config
        self.results: list[BenchmarkResult] = []

    def run_scenario(self, name: str, kb: KnowledgeBase) -> BenchmarkResult:
        flows = self.config.flows or kb.flow_names
        print(f"\n{'=' * 60}")
        print(f"Running scenario: {name}")
        print(f"  Flows: {len(flows)}")
        print(f"  Repeats: {self.config.repeats}")
        print(f"{'=' * 60}")

        result = BenchmarkResult(
            scenario=name,
            num_flows=len(flows),
            failed_flows=[],
            ground_times=[],
            solve_times=[],
            cached_times=[],
            plan_lengths=[],
        )
        with tempfile.TemporaryDirectory() as cache_dir:
            for flow in flows:
                try:
                    for _ in range(self.config.repeats):
                        start = time.perf_counter()
                        problem = ground_problem(kb, flow)
                        result.ground_times.append(time.perf_counter() - start)

                        start = time.perf_counter()
                        plan = solve(problem)
                        result.solve_times.append(time.perf_counter() - start)

                    # First call fills the cache; the timed one reads it back.
                    solve_cached(problem, cache_dir)
                    start = time.perf_counter()
                    solve_cached(problem, cache_dir)
                    result.cached_times.append(time.perf_counter() - start)
                except FlowbenchError as e:
                    result.failed_flows.append(flow)
                    print(f"  ✗ {flow}: {e}")
                    continue

                result.plan_lengths.append(len(plan))
                if self.config.verbose:
                    print(f"  ✓ {flow}: {len(plan)} steps")

        print(f"\n{'-' * 40}")
        print(f"Scenario Results: {name}")
        print(f"{'-' * 40}")
        data = result.to_dict()
        print(f"Total time: {data['total_time_seconds']:.3f} seconds")
        print(f"Solved: {len(flows) - len(result.failed_flows)}/{len(flows)}")
        print(f"Throughput: {data['plans_per_second']:.1f} plans/second")
        print(f"  - Median ground: {data['median_ground_time'] * 1000:.2f}ms")
        print(f"  - Median solve: {data['median_solve_time'] * 1000:.2f}ms")
        print(f"  - Max solve: {data['max_solve_time'] * 1000:.2f}ms")
        print(f"  - Median cached: {data['median_cached_time'] * 1000:.2f}ms")
        print(f"  - Longest plan: {data['max_plan_length']} steps")
        return result

    def run_all_benchmarks(self) -> list[BenchmarkResult]:
        kb = load_default_kb()
        self.results = [self.run_scenario("base", kb)]
        if self.config.test_perturbed:
            perturbed, _ = apply_perturbation(kb, EXTRA_VERIFICATION)
            self.results.append(self.run_scenario("extra_verification", perturbed))
        return self.results

    def save_results_json(self, output_path: Path):
        data = {
            "timestamp": time.strftime("%Y-%m-%d %H:%M:%S"),
            "config": {
                "repeats": self.config.repeats,
                "flows": self.config.flows or "all",
            },
            "results": [r.to_dict() for r in self.results],
        }
        with open(output_path, "w") as f:
            json.dump(data, f, indent=2)
        print(f"\nResults saved to: {output_path}")


def main():
    """Main entry point for the benchmark script."""
    parser = argparse.ArgumentParser(
        description="flowbench planner benchmarking tool",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Time every workflow
  python benchmark_planner.py

  # A few workflows, more repeats
  python benchmark_planner.py --flows recover_password boots --repeats 20
        """,
    )
    parser.add_argument("--repeats", type=int, default=5, help="Runs per workflow")
    parser.add_argument("--flows", nargs="+", default=[], help="Workflows to time")
    parser.add_argument(
        "--no-perturbed", action="store_true", help="Skip the perturbed KB"
    )
    parser.add_argument("--verbose", action="store_true", help="Show each workflow")
    parser.add_argument(
        "--output",
        type=Path,
        default=Path("planner_benchmark.json"),
        help="Output JSON file path (default: planner_benchmark.json)",
    )
    parser.add_argument("--no-json", action="store_true", help="Don't save JSON")
    args = parser.parse_args()

    config = BenchmarkConfig(
        repeats=args.repeats,
        flows=args.flows,
        test_perturbed=not args.no_perturbed,
        verbose=args.verbose,
        output_json=not args.no_json,
    )
    benchmark = PlannerBenchmark(config)
    results = benchmark.run_all_benchmarks()
    if config.output_json:
        benchmark.save_results_json(args.output)
    return 1 if any(r.failed_flows for r in results) else 0


if __name__ == "__main__":
    sys.exit(main())
