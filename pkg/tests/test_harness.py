#!/usr/bin/env python3
"""
Tests for teacher-forced prediction runs, agents and report output.
"""

import json
import os
import sys
import tempfile
from pathlib import Path

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import httpx
import pytest
from fastapi.testclient import TestClient

from flowbench.agents import (
    ACKNOWLEDGEMENT,
    AgentClient,
    AgentKind,
    AgentQuery,
    OracleAgent,
    PlanFollowerAgent,
    RemoteAgent,
    last_customer_value,
)
from flowbench.api import create_app
from flowbench.config import ENDPOINT_ENV
from flowbench.dialogue import load_default_dataset
from flowbench.errors import ErrorCode, FlowbenchError
from flowbench.harness import (
    RunConfig,
    build_examples,
    iter_turn_examples,
    predict_dataset,
    predict_dialogue,
    read_records,
    score_run,
    write_records,
)
from flowbench.kb import load_default_kb
from flowbench.metrics import (
    action_accuracy,
    dialogue_sequences,
    flow_accuracy,
    per_turn_flow_accuracy,
)
from flowbench.parse import ExpectedKind
from flowbench.planner import remaining_plan
from flowbench.prompt import PromptConfig, render_plan
from flowbench.report import read_report_json, write_report_csv, write_report_json
from flowbench.splits import SplitKind, canonical_split, partition_dialogues

LFP = PromptConfig.from_code("LFP")
GOLD_FOLLOWING = ["6601", "9001", "9002", "9003", "9004", "9005"]


def dialogue(dialogue_id):
    return next(d for d in load_default_dataset() if d.id == dialogue_id)


class RecordingAgent:
    """Answers with a fixed wrong output and keeps every query."""

    def __init__(self):
        self.queries = []

    def respond(self, query):
        self.queries.append(query)
        return "flow: nowhere; agent: ???"


def test_run_config():
    """Legal-flow lists follow the split partition."""
    print("Testing run configs...")

    kb = load_default_kb()
    split = canonical_split(kb, SplitKind.SPLIT1)
    cfg = RunConfig.for_kb(kb, LFP, split)
    assert "reset_2fa" not in cfg.train_legal_flows
    assert len(cfg.test_legal_flows) == 55
    assert cfg.legal_flows_for("recover_password") == cfg.train_legal_flows
    assert cfg.legal_flows_for("reset_2fa") == cfg.test_legal_flows

    unsplit = RunConfig.for_kb(kb, LFP)
    assert unsplit.legal_flows_for("recover_password") == unsplit.test_legal_flows

    with pytest.raises(FlowbenchError) as exc:
        RunConfig(concurrency=0)
    assert exc.value.code == ErrorCode.INVALID_CONFIG

    print("  ✓ Configs resolve legal flows")


def test_oracle_run_scores_perfectly():
    """The oracle agent gets every metric right on the fixture."""
    print("\nTesting oracle run...")

    kb = load_default_kb()
    dataset = load_default_dataset()
    split = canonical_split(kb, SplitKind.SPLIT1)
    cfg = RunConfig.for_kb(kb, LFP, split)
    records = predict_dataset(OracleAgent(), dataset, cfg, kb)
    train, _ = partition_dialogues(dataset, split)
    report = score_run(records, split, kb, training_data=train)

    targets = sum(1 for d in dataset for t in d.turns if t.is_target)
    assert len(records) == targets
    for name in ("action_acc", "flow_acc", "flow_prefix_acc", "slot_mean", "slot_all"):
        assert getattr(report, name) == 1.0, name
    assert all(v == 1.0 for v in report.slot_set.values())
    assert report.lev_act == 0.0
    assert report.lev_act_free_del == 0.0
    assert report.action_confusion.is_diagonal()
    assert report.flow_confusion.is_diagonal()
    assert all(t.flow == 1.0 for t in report.per_turn.values())
    assert report.flow_source.neither == 0.0
    assert all(v in (None, 1.0) for v in report.exposure.accuracy.values())

    print(f"  {len(records)} records over {len(dataset)} dialogues")
    print("  ✓ Oracle is perfect")


def test_plan_follower_on_recover_password():
    """The plan follower reproduces the gold action turns of dialogue 6601."""
    print("\nTesting plan follower on 6601...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    records = predict_dialogue(PlanFollowerAgent(), dialogue("6601"), cfg, kb)
    outputs = {r.turn_index: r.output for r in records}

    assert outputs[2] == "flow: recover_password; action: pull-up-account: crystal minh"
    assert outputs[5] == "flow: recover_password; action: enter-details: cm374950"
    assert outputs[6] == "flow: recover_password; action: make-password: "
    assert outputs[0] == f"flow: recover_password; agent: {ACKNOWLEDGEMENT}"
    assert action_accuracy(records) == 1.0
    assert flow_accuracy(records) == 1.0

    print("  ✓ Action turns match")


def test_plan_follower_across_fixture():
    """Gold-following dialogues score perfectly; deviating ones do not."""
    print("\nTesting plan follower across the fixture...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    agent = PlanFollowerAgent()
    for dialogue_id in GOLD_FOLLOWING:
        records = predict_dialogue(agent, dialogue(dialogue_id), cfg, kb)
        assert action_accuracy(records) == 1.0, dialogue_id

    records = predict_dialogue(agent, dialogue("2049"), cfg, kb)
    outputs = {r.turn_index: r.output for r in records}
    assert outputs[11] == "flow: reset_2fa; action: enter-details: 69233"
    assert action_accuracy(records) < 0.5

    assert action_accuracy(predict_dialogue(agent, dialogue("9006"), cfg, kb)) < 1.0

    print("  ✓ Deviating dialogues are penalized")


def test_teacher_forcing():
    """One query per agent/action turn, each built from the gold history."""
    print("\nTesting teacher forcing...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    d = dialogue("2049")
    agent = RecordingAgent()
    records = predict_dialogue(agent, d, cfg, kb)

    targets = [i for i, t in enumerate(d.turns) if t.is_target]
    assert [q.context.turn_index for q in agent.queries] == targets
    assert [q.ordinal for q in agent.queries] == list(range(len(targets)))
    assert [r.turn_index for r in records] == targets

    gold_contexts = [e.context for e in iter_turn_examples(d, cfg, kb)]
    assert [q.context for q in agent.queries] == gold_contexts
    for query in agent.queries:
        index = query.context.turn_index
        plan = remaining_plan(kb, d.flow, executed=d.gold_actions(upto=index))
        assert query.context.text.endswith(render_plan(plan))
        expected = (
            ExpectedKind.ACTION if d.turns[index].action else ExpectedKind.UTTERANCE
        )
        assert query.expected_kind == expected

    assert action_accuracy(records) == 0.0

    print(f"  ✓ {len(targets)} queries, all teacher-forced")


def test_emitted_actions_on_agent_turns():
    """Actions named on agent turns are kept for the action sequence."""
    print("\nTesting emitted actions on agent turns...")

    class AlwaysActs:
        def respond(self, query):
            return "flow: recover_password; action: pull-up-account: x"

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    d = dialogue("2049")
    records = predict_dialogue(AlwaysActs(), d, cfg, kb)

    agent_turns = [r for r in records if r.expected_kind == ExpectedKind.UTTERANCE]
    assert agent_turns
    assert all(r.predicted_action is None for r in agent_turns)
    assert all(r.emitted_action == "pull-up-account" for r in records)
    predicted, _ = dialogue_sequences(records)[d.id]
    assert len(predicted) == len(records)

    print(f"  ✓ {len(agent_turns)} agent turns contribute an action")


def test_concurrency_invariance():
    """Records do not depend on the worker count."""
    print("\nTesting concurrency invariance...")

    kb = load_default_kb()
    dataset = load_default_dataset()
    serial = predict_dataset(
        PlanFollowerAgent(), dataset, RunConfig.for_kb(kb, LFP, concurrency=1), kb
    )
    parallel = predict_dataset(
        PlanFollowerAgent(), dataset, RunConfig.for_kb(kb, LFP, concurrency=8), kb
    )
    assert serial == parallel
    assert [r.dialogue_id for r in serial] == sorted(r.dialogue_id for r in serial)

    print("  ✓ Same records at any width")


def test_missing_plan():
    """The plan follower needs a plan in its context."""
    print("\nTesting contexts without a plan...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, PromptConfig.from_code("LF"))
    with pytest.raises(FlowbenchError) as exc:
        predict_dialogue(PlanFollowerAgent(), dialogue("6601"), cfg, kb)
    assert exc.value.code == ErrorCode.MISSING_PLAN_IN_CONTEXT

    print("  ✓ MISSING_PLAN_IN_CONTEXT raised")


def test_random_first_flow():
    """The first flow is drawn from the legal list; later turns copy the context."""
    print("\nTesting random first-turn flows...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    dataset = load_default_dataset()
    agent = PlanFollowerAgent(seed=3, random_first_flow=True)
    first = predict_dataset(agent, dataset, cfg, kb)
    again = predict_dataset(agent, dataset, cfg, kb)
    assert first == again
    assert all(r.predicted.flow in kb.workflows for r in first)
    series = per_turn_flow_accuracy(first, kb)
    assert all(series[i].flow == 1.0 for i in series if i > 0)

    openings = [next(iter_turn_examples(d, cfg, kb)) for d in dataset]
    hits = trials = 0
    for seed in range(200):
        sampler = PlanFollowerAgent(seed=seed, random_first_flow=True)
        for example in openings:
            output = sampler.respond(
                AgentQuery(
                    context=example.context,
                    expected_kind=example.expected_kind,
                    target=example.target,
                    dialogue_id=example.dialogue_id,
                    ordinal=0,
                )
            )
            hits += output.startswith(f"flow: {example.gold.flow};")
            trials += 1
    assert 0.002 < hits / trials < 0.05

    print(f"  First-turn accuracy {hits / trials:.3f} over {trials} draws")
    print("  ✓ First flows are uniform over the legal list")


def test_last_customer_value():
    """Values come from the last customer sentence after the last action."""
    print("\nTesting customer value extraction...")

    assert last_customer_value("customer: My name is Crystal Minh.") == "crystal minh"
    assert last_customer_value("agent: hi customer: Zip: 94107") == "94107"
    assert last_customer_value("customer: hi action: make-password: ") == ""
    assert last_customer_value("agent: hello") == ""

    print("  ✓ Values extracted")


def test_remote_agent_against_served_policy():
    """A REMOTE agent talks to the served plan follower."""
    print("\nTesting REMOTE agent against the API...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    with TestClient(create_app(kb)) as client:
        agent = AgentClient(AgentKind.REMOTE, endpoint="/predict").create(client=client)
        records = predict_dialogue(agent, dialogue("6601"), cfg, kb)
        assert action_accuracy(records) == 1.0
        actions = {r.turn_index: r.output for r in records if r.gold.action_name}
        assert actions[5] == "flow: recover_password; action: enter-details: cm374950"

        unplanned = RunConfig.for_kb(kb, PromptConfig.from_code("F"))
        with pytest.raises(FlowbenchError) as exc:
            predict_dialogue(agent, dialogue("6601"), unplanned, kb)
        assert exc.value.code == ErrorCode.AGENT_UNAVAILABLE

    print("  ✓ REMOTE agent round-trips")


def test_remote_agent_failures():
    """Dead endpoints, timeouts and bad payloads map to agent errors."""
    print("\nTesting REMOTE agent failures...")

    kb = load_default_kb()
    cfg = RunConfig.for_kb(kb, LFP)
    d = dialogue("9003")

    dead = RemoteAgent("http://127.0.0.1:9/predict", timeout=2.0)
    with pytest.raises(FlowbenchError) as exc:
        predict_dialogue(dead, d, cfg, kb)
    assert exc.value.code == ErrorCode.AGENT_UNAVAILABLE
    dead.close()

    def slow(request):
        raise httpx.ReadTimeout("too slow", request=request)

    slow_client = httpx.Client(transport=httpx.MockTransport(slow))
    with pytest.raises(FlowbenchError) as exc:
        predict_dialogue(RemoteAgent("http://model", client=slow_client), d, cfg, kb)
    assert exc.value.code == ErrorCode.TIMEOUT

    def wrong_shape(request):
        return httpx.Response(200, json={"text": "hello"})

    odd_client = httpx.Client(transport=httpx.MockTransport(wrong_shape))
    with pytest.raises(FlowbenchError) as exc:
        predict_dialogue(RemoteAgent("http://model", client=odd_client), d, cfg, kb)
    assert exc.value.code == ErrorCode.AGENT_UNAVAILABLE

    print("  ✓ Failures mapped")


def test_remote_agent_closes_own_client():
    """close() releases a client the agent created and leaves a borrowed one open."""
    print("\nTesting REMOTE agent close...")

    with RemoteAgent("http://model") as own:
        assert not own._client.is_closed
    assert own._client.is_closed

    borrowed = httpx.Client()
    agent = RemoteAgent("http://model", client=borrowed)
    agent.close()
    assert not borrowed.is_closed
    borrowed.close()

    print("  ✓ Only owned clients are closed")


def test_agent_client_options():
    """REMOTE needs an endpoint, which the environment may supply."""
    print("\nTesting agent client options...")

    with pytest.raises(FlowbenchError) as exc:
        AgentClient(AgentKind.REMOTE)
    assert exc.value.code == ErrorCode.INVALID_CONFIG

    previous = os.environ.get(ENDPOINT_ENV)
    os.environ[ENDPOINT_ENV] = "http://env-model/predict"
    try:
        client = AgentClient.from_options("remote", None)
        assert client.endpoint == "http://env-model/predict"
        client = AgentClient.from_options("remote", "http://arg-model/predict")
        assert client.endpoint == "http://env-model/predict"
        assert AgentClient.from_options("oracle").endpoint is None
    finally:
        if previous is None:
            os.environ.pop(ENDPOINT_ENV, None)
        else:
            os.environ[ENDPOINT_ENV] = previous

    assert isinstance(AgentClient(AgentKind.ORACLE).create(), OracleAgent)
    follower = AgentClient(AgentKind.PLAN_FOLLOWER, seed=5).create(flows=["boots"])
    assert isinstance(follower, PlanFollowerAgent)
    assert follower.seed == 5

    print("  ✓ Options resolved")


def test_examples_records_and_reports():
    """Examples, JSONL records and report files are written and read back."""
    print("\nTesting examples, records and reports...")

    kb = load_default_kb()
    dataset = load_default_dataset()
    split = canonical_split(kb, SplitKind.SPLIT1)
    cfg = RunConfig.for_kb(kb, LFP, split)

    examples = build_examples(dataset, cfg, kb)
    assert set(examples[0]) == {"id", "turn", "context", "target"}
    turn2 = next(e for e in examples if e["id"] == "6601" and e["turn"] == 2)
    assert turn2["context"].endswith(
        "action_plan: pull-up-account, enter-details, make-password;"
    )
    assert "reset_2fa" not in turn2["context"]

    records = predict_dataset(PlanFollowerAgent(), dataset, cfg, kb)
    report = score_run(records, split, kb)
    with tempfile.TemporaryDirectory() as tmpdir:
        records_path = Path(tmpdir) / "preds.jsonl"
        write_records(records, records_path)
        assert read_records(records_path) == records

        bad = Path(tmpdir) / "bad.jsonl"
        bad.write_text('{"dialogue_id": "x"}\n')
        with pytest.raises(FlowbenchError) as exc:
            read_records(bad)
        assert exc.value.code == ErrorCode.MALFORMED_DATASET

        json_path = write_report_json(report, Path(tmpdir) / "out" / "report.json")
        data = read_report_json(json_path)
        assert data["action_acc"] == report.action_acc
        assert data["num_records"] == len(records)

        written = write_report_csv(report, Path(tmpdir) / "csv")
        names = {p.name for p in written}
        assert {
            "metrics.csv",
            "per_action.csv",
            "per_turn.csv",
            "action_confusion.csv",
            "flow_confusion.csv",
            "flow_source.csv",
            "exposure.csv",
        } == names
        header = (Path(tmpdir) / "csv" / "metrics.csv").read_text().splitlines()[0]
        assert header == "metric,value"

    with pytest.raises(FlowbenchError) as exc:
        score_run([], split, kb)
    assert exc.value.code == ErrorCode.INVALID_CONFIG
    assert json.loads(json.dumps(report.to_dict()))["flow_acc"] == report.flow_acc

    print("  ✓ Files written and read back")


def run_all_tests():
    """Run all harness tests."""
    print("=" * 60)
    print("HARNESS TESTS")
    print("=" * 60)

    test_functions = [
        test_run_config,
        test_oracle_run_scores_perfectly,
        test_plan_follower_on_recover_password,
        test_plan_follower_across_fixture,
        test_teacher_forcing,
        test_emitted_actions_on_agent_turns,
        test_concurrency_invariance,
        test_missing_plan,
        test_random_first_flow,
        test_last_customer_value,
        test_remote_agent_against_served_policy,
        test_remote_agent_failures,
        test_remote_agent_closes_own_client,
        test_agent_client_options,
        test_examples_records_and_reports,
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
    print(f"SUCCESS: All {len(test_functions)} harness tests passed!")
    return 0


if __name__ == "__main__":
    sys.exit(run_all_tests())
