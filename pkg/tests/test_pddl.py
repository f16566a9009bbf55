#!/usr/bin/env python3
"""
Tests for PDDL emission and loading.
"""

import sys
import tempfile
from pathlib import Path

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from flowbench.kb import EXTRA_VERIFICATION, apply_perturbation, load_default_kb
from flowbench.pddl import decode_name, emit_pddl, encode_name, load_pddl, write_pddl
from flowbench.planner import ground_problem, solve, strip_plan


def test_emitted_text_shape():
    """Domain and problem text carry the expected sections."""
    print("Testing PDDL text...")

    kb = load_default_kb()
    domain, problem = emit_pddl(ground_problem(kb, "recover_username"))

    assert domain.startswith("(define (domain flowbench-recover_username)")
    assert "(:requirements :strips)" in domain
    assert "(:action do__action_pull-up-account" in domain
    assert "(:action choose-flow__flow_recover_username" in domain
    assert "(slot_customer_name)" in domain
    assert "(define (problem recover_username)" in problem
    assert "(finished-flow_recover_username)" in problem
    assert domain.count("(") == domain.count(")")
    assert problem.count("(") == problem.count(")")

    print("  ✓ PDDL text well-formed")


def test_name_encoding():
    """Operator names survive encoding as PDDL symbols."""
    print("\nTesting name encoding...")

    name = "next-step-flow flow_reset_2fa s_0 s_1 button_pull-up-account"
    assert " " not in encode_name(name)
    assert decode_name(f"({encode_name(name)} )") == name

    print("  ✓ Names round-trip")


def test_round_trip_all_workflows():
    """Loading emitted PDDL and solving it yields the same action projection."""
    print("\nTesting PDDL round trip over all workflows...")

    kb = load_default_kb()
    for flow, spec in kb.workflows.items():
        original = ground_problem(kb, flow)
        loaded = load_pddl(*emit_pddl(original))
        assert loaded.name == flow
        names = {op.name for op in original.operators}
        assert {op.name for op in loaded.operators} == names
        assert strip_plan(solve(loaded)).actions == spec.action_sequence, flow

    print(f"  ✓ {len(kb.workflows)} workflows round-trip")


def test_round_trip_with_state():
    """Executed actions and known slots survive in the problem's init."""
    print("\nTesting PDDL round trip with initial state...")

    kb, _ = apply_perturbation(load_default_kb(), EXTRA_VERIFICATION)
    original = ground_problem(
        kb, "recover_username", initial_slots=["phone"], executed=["pull-up-account"]
    )
    loaded = load_pddl(*emit_pddl(original))
    assert loaded.initial.true_props == original.initial.true_props
    assert strip_plan(solve(loaded)).actions_list == [
        "extra-verification",
        "verify-identity",
    ]

    print("  ✓ Initial state preserved")


def test_write_pddl():
    """write_pddl puts both files in the directory."""
    print("\nTesting write_pddl...")

    kb = load_default_kb()
    problem = ground_problem(kb, "boots")
    with tempfile.TemporaryDirectory() as tmpdir:
        domain_path, problem_path = write_pddl(problem, Path(tmpdir) / "pddl")
        assert domain_path.name == "boots-domain.pddl"
        assert problem_path.name == "boots-problem.pddl"
        loaded = load_pddl(domain_path.read_text(), problem_path.read_text())
        assert strip_plan(solve(loaded)).actions_list == [
            "search-faq",
            "search-boots",
            "select-faq",
        ]

    print("  ✓ Files written")


def run_all_tests():
    """Run all PDDL tests."""
    print("=" * 60)
    print("PDDL TESTS")
    print("=" * 60)

    test_functions = [
        test_emitted_text_shape,
        test_name_encoding,
        test_round_trip_all_workflows,
        test_round_trip_with_state,
        test_write_pddl,
    ]

    failed_tests = []
    for test_func in test_functions:
        try:
            test_func()
        except AssertionError as e:
            failed_tests.append((test_func.__name__, str(e)))
            print(f"  ✗ {test_func.__name__} failed: {e}")

    print("\n" + "=" * 60)
    if failed_tests:
        print(f"FAILED: {len(failed_tests)} tests failed")
        return 1
    print(f"SUCCESS: All {len(test_functions)} PDDL tests passed!")
    return 0


if __name__ == "__main__":
    sys.exit(run_all_tests())
