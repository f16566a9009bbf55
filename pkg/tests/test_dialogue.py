#!/usr/bin/env python3
"""
Tests for dialogues, dataset files and train/test splits.
"""

import json
import sys
import tempfile
from pathlib import Path
from types import MappingProxyType

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import pytest

from flowbench.dialogue import (
    Dialogue,
    Speaker,
    Turn,
    dump_dataset,
    from_abcd_conversation,
    load_dataset,
    load_default_dataset,
    parse_turn,
    read_dataset_lines,
    serialize_history,
    serialize_turn,
)
from flowbench.errors import ErrorCode, FlowbenchError
from flowbench.kb import load_default_kb, load_kb
from flowbench.splits import (
    Partition,
    SplitKind,
    SplitSpec,
    ViolationRule,
    canonical_split,
    make_split,
    observed_sequence_report,
    partition_dialogues,
    validate_split,
)


def dialogue(dialogue_id):
    return next(d for d in load_default_dataset() if d.id == dialogue_id)


def test_serialize_turns():
    """Turns serialize to speaker-prefixed text and parse back."""
    print("Testing turn serialization...")

    turns = [
        Turn.agent("Okay, have a nice day"),
        Turn.customer("cm374950"),
        Turn.act("pull-up-account", "crystal minh"),
        Turn.act("verify-identity", "albert sanders", "69233", "330-822-4754"),
        Turn.act("make-password"),
    ]
    assert serialize_turn(turns[2]) == "action: pull-up-account: crystal minh"
    assert serialize_turn(turns[4]) == "action: make-password: "
    assert serialize_turn(turns[0]) == "agent: Okay, have a nice day"
    for turn in turns:
        assert parse_turn(serialize_turn(turn)) == turn

    with pytest.raises(FlowbenchError) as exc:
        parse_turn("narrator: once upon a time")
    assert exc.value.code == ErrorCode.INVALID_TURN

    with pytest.raises(FlowbenchError) as exc:
        Turn(Speaker.ACTION, utterance="hi")
    assert exc.value.code == ErrorCode.INVALID_TURN

    print("  ✓ Turns round-trip")


def test_history():
    """History is the space-joined serialization of earlier turns."""
    print("\nTesting history serialization...")

    d = dialogue("6601")
    assert serialize_history(d, 0) == ""
    assert serialize_history(d, 3) == (
        "agent: Hello, how can i help you today "
        "customer: Hi I forgot my password to my account. My name is Crystal Minh. "
        "action: pull-up-account: crystal minh"
    )
    assert d.gold_actions(upto=6) == ["pull-up-account", "enter-details"]
    assert d.gold_actions() == ["pull-up-account", "enter-details", "make-password"]

    with pytest.raises(FlowbenchError) as exc:
        serialize_history(d, len(d.turns) + 1)
    assert exc.value.code == ErrorCode.INVALID_TURN

    print("  ✓ History matches")


def test_dataset_files():
    """Datasets survive a dump/load cycle; bad lines are reported."""
    print("\nTesting dataset files...")

    dataset = load_default_dataset()
    assert len(dataset) == 8
    assert {d.flow for d in dataset} <= set(load_default_kb().workflows)

    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "data.jsonl"
        dump_dataset(dataset, path)
        assert load_dataset(path) == dataset

    with pytest.raises(FlowbenchError) as exc:
        read_dataset_lines(["{broken"])
    assert exc.value.code == ErrorCode.MALFORMED_DATASET

    bad = json.dumps({"id": 1, "flow": "boots", "turns": [{"speaker": "action"}]})
    with pytest.raises(FlowbenchError) as exc:
        read_dataset_lines([bad])
    assert exc.value.code == ErrorCode.MALFORMED_DATASET

    with pytest.raises(FlowbenchError) as exc:
        Dialogue(id="x", flow="boots", turns=())
    assert exc.value.code == ErrorCode.MALFORMED_DATASET

    print("  ✓ Dataset files work")


def test_abcd_adapter():
    """Raw ABCD conversations convert to dialogues."""
    print("\nTesting ABCD adapter...")

    conversation = {
        "convo_id": 6601,
        "scenario": {"subflow": "recover_password"},
        "original": [
            ["agent", "Hello, how can i help you today"],
            ["customer", "My name is Crystal Minh."],
            ["action", "Account has been pulled up for Crystal Minh."],
        ],
        "delexed": [
            {"targets": ["recover_password", "take_action", None, [], -1]},
            {"targets": ["recover_password", "retrieve_utterance", None, [], -1]},
            {
                "targets": [
                    "recover_password",
                    "take_action",
                    "pull-up-account",
                    ["crystal minh"],
                    -1,
                ]
            },
        ],
    }
    d = from_abcd_conversation(conversation)
    assert d.id == "6601"
    assert d.flow == "recover_password"
    assert d.turns[2] == Turn.act("pull-up-account", "crystal minh")
    assert d.turns[1].utterance == "My name is Crystal Minh."

    with pytest.raises(FlowbenchError) as exc:
        from_abcd_conversation({"convo_id": 1})
    assert exc.value.code == ErrorCode.MALFORMED_DATASET

    print("  ✓ Adapter converts")


def test_canonical_splits():
    """Published memberships: SPLIT1/3 validate, SPLIT2 needs two repairs."""
    print("\nTesting canonical splits...")

    kb = load_default_kb()
    split1 = canonical_split(kb, SplitKind.SPLIT1)
    split3 = canonical_split(kb, SplitKind.SPLIT3)
    assert validate_split(split1, kb).ok
    assert validate_split(split3, kb).ok
    assert split1.partition_of("reset_2fa") == Partition.TEST
    assert split3.partition_of("shopping_cart") == Partition.TEST
    assert split3.partition_of("pricing") == Partition.TRAIN

    raw2 = validate_split(canonical_split(kb, SplitKind.SPLIT2), kb)
    pairs = {(v.test_flow, v.train_flow) for v in raw2.violations}
    assert pairs == {("shopping_cart", "credit_card"), ("search_results", "slow_speed")}
    assert all(v.rule == ViolationRule.ACTION_SEQUENCE for v in raw2.violations)

    repaired = make_split([], kb, SplitKind.SPLIT2)
    assert validate_split(repaired, kb).ok
    assert repaired.partition_of("credit_card") == Partition.TEST
    assert repaired.partition_of("slow_speed") == Partition.TEST

    print("  ✓ Canonical splits behave")


def test_corrupted_split():
    """Splitting identical sequences across TRAIN/TEST is one violation."""
    print("\nTesting corrupted SPLIT2...")

    kb = load_default_kb()
    spec = make_split([], kb, SplitKind.SPLIT2)
    assignment = dict(spec.assignment)
    assignment["bad_price_competitor"] = Partition.TEST
    assignment["bad_price_yesterday"] = Partition.TRAIN
    corrupted = SplitSpec(SplitKind.SPLIT2, MappingProxyType(assignment))
    report = validate_split(corrupted, kb)

    assert len(report.violations) == 1
    violation = report.violations[0]
    assert violation.rule == ViolationRule.ACTION_SEQUENCE
    assert (violation.test_flow, violation.train_flow) == (
        "bad_price_competitor",
        "bad_price_yesterday",
    )

    all_train = {f: Partition.TRAIN for f in kb.workflows}
    all_train_spec = SplitSpec(SplitKind.SPLIT1, MappingProxyType(all_train))
    assert validate_split(all_train_spec, kb).ok

    missing = dict(all_train)
    del missing["boots"]
    report = validate_split(SplitSpec(SplitKind.SPLIT1, MappingProxyType(missing)), kb)
    assert [v.rule for v in report.violations] == [ViolationRule.UNASSIGNED]

    print("  ✓ Violations reported")


def test_heuristic_splits():
    """Generated splits for a non-ABCD KB always validate."""
    print("\nTesting heuristic splits...")

    kb = load_kb(
        {
            "workflows": {
                "status_a": ["look", "fix"],
                "status_b": ["look", "fix"],
                "status_c": ["look", "refund"],
                "manage_a": ["look", "change"],
                "manage_b": ["look", "refund"],
                "order_a": ["fix"],
            },
            "workflow_groups": {
                "status_a": "g1",
                "status_b": "g1",
                "status_c": "g1",
                "manage_a": "g2",
                "manage_b": "g2",
                "order_a": "g3",
            },
            "actions": {
                "look": {"kind": "NONE"},
                "fix": {"kind": "ONE_OF", "slots": ["order_id"]},
                "refund": {"kind": "ONE_OF", "slots": ["refund_amount"]},
                "change": {"kind": "NONE"},
            },
        }
    )
    assert canonical_split(kb, SplitKind.SPLIT1) is None
    for kind in (SplitKind.SPLIT1, SplitKind.SPLIT2, SplitKind.SPLIT3):
        spec = make_split([], kb, kind)
        assert validate_split(spec, kb).ok, kind
        assert spec.train_flows and spec.test_flows

    single = load_kb(
        {"workflows": {"boots": ["look"]}, "actions": {"look": {"kind": "NONE"}}}
    )
    with pytest.raises(FlowbenchError) as exc:
        make_split([], single, SplitKind.SPLIT1)
    assert exc.value.code == ErrorCode.INFEASIBLE_SPLIT

    print("  ✓ Heuristic splits validate")


def test_standard_split_and_partitions():
    """STANDARD puts every flow on both sides and partitions dialogues by id."""
    print("\nTesting STANDARD split...")

    kb = load_default_kb()
    dataset = load_default_dataset()
    spec = make_split(dataset, kb, SplitKind.STANDARD)
    assert set(spec.assignment.values()) == {Partition.BOTH}
    assert len(spec.train_flows) == len(spec.test_flows) == 55
    assert validate_split(spec, kb).ok

    train, test = partition_dialogues(dataset, spec)
    assert len(train) + len(test) == len(dataset)
    assert partition_dialogues(dataset, spec) == (train, test)

    split3 = make_split(dataset, kb, SplitKind.SPLIT3)
    train, test = partition_dialogues(dataset, split3)
    assert {d.flow for d in test} <= set(split3.test_flows)
    assert "9002" in {d.id for d in train}

    restored = SplitSpec.from_dict(split3.to_dict())
    assert dict(restored.assignment) == dict(split3.assignment)

    with pytest.raises(FlowbenchError) as exc:
        SplitSpec.from_dict({"kind": "SPLIT9", "assignment": {}})
    assert exc.value.code == ErrorCode.MALFORMED_DOCUMENT

    unknown = Dialogue("x", "fly_to_moon", (Turn.agent("hi"),))
    with pytest.raises(FlowbenchError) as exc:
        make_split([unknown], kb, SplitKind.SPLIT1)
    assert exc.value.code == ErrorCode.UNKNOWN_FLOW

    print("  ✓ STANDARD split works")


def test_observed_sequences():
    """Observed-sequence overlap is reported, never enforced."""
    print("\nTesting observed sequence report...")

    kb = load_default_kb()
    base = dialogue("9002")
    twin = Dialogue("9100", "jeans", base.turns)
    spec = make_split([base, twin], kb, SplitKind.SPLIT3)
    assert spec.partition_of("pricing") == Partition.TRAIN
    assert spec.partition_of("jeans") == Partition.TEST

    overlaps = observed_sequence_report([base, twin], spec)
    assert [o.dialogue_id for o in overlaps] == ["9100"]
    assert overlaps[0].sequence == ("search-faq", "search-pricing", "select-faq")

    print("  ✓ Overlap reported")


def run_all_tests():
    """Run all dialogue and split tests."""
    print("=" * 60)
    print("DIALOGUE AND SPLIT TESTS")
    print("=" * 60)

    test_functions = [
        test_serialize_turns,
        test_history,
        test_dataset_files,
        test_abcd_adapter,
        test_canonical_splits,
        test_corrupted_split,
        test_heuristic_splits,
        test_standard_split_and_partitions,
        test_observed_sequences,
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
    print(f"SUCCESS: All {len(test_functions)} dialogue tests passed!")
    return 0


if __name__ == "__main__":
    sys.exit(run_all_tests())
