"""Live cluster tests: real node processes, TCP transport, fault injection."""

import pytest

from discedge.client import LiveTransport
from discedge.context import MODE_RAW, MODE_TOKENIZED, GenerationParams
from discedge.cluster import spawn_live_cluster
from discedge.harness import run_scenario
from discedge.node import ConsistencyPolicy
from discedge.scenario import NodeSpec, ScenarioConfig


def live_scenario(**over):
    defaults = dict(
        name="live-fixture",
        model_name="toy/model",
        user_id="u1",
        messages=("hello there", "how are you", "tell me more", "thanks a lot"),
        session_id="live-s1",
        seed=11,
        repeats=1,
        modes=(MODE_RAW, MODE_TOKENIZED),
        params=GenerationParams(seed=7, max_tokens=8),
        nodes=(NodeSpec("a"), NodeSpec("b")),
        policy=ConsistencyPolicy(mode="available", max_retries=3, backoff_ms=20.0),
        client_latency_ms=2.0,
        inter_node_latency_ms=2.0,
        mobility=((1, "a"),),
    )
    defaults.update(over)
    return ScenarioConfig(**defaults)


@pytest.fixture(scope="module")
def shared_cluster():
    scenario = live_scenario()
    with spawn_live_cluster(scenario) as cluster:
        yield scenario, cluster


def test_cluster_nodes_answer_health(shared_cluster):
    scenario, cluster = shared_cluster
    assert set(cluster.endpoints) == {"a", "b"}
    transport = LiveTransport(cluster.endpoints)
    try:
        for node_id in scenario.node_ids:
            reply, _ = transport(node_id, {"type": "health"})
            assert reply["type"] == "health_ok"
            assert reply["node_id"] == node_id
            assert reply["models"] == [scenario.model_id]
    finally:
        transport.close()


def test_live_run_matches_sim(shared_cluster):
    import dataclasses

    scenario, cluster = shared_cluster
    live = run_scenario(scenario, transport="live", endpoints=cluster.endpoints)
    assert [r.failed_turns for r in live.runs] == [(), ()]

    for mode in scenario.modes:
        # live runs isolate repeats by session id; give the simulated run
        # the same id so requests and stored keys are byte-compatible
        sim_scenario = dataclasses.replace(
            scenario, modes=(mode,), session_id=f"{scenario.session_id}-{mode}-r0")
        sim = run_scenario(sim_scenario, transport="sim")
        assert sim.runs[0].failed_turns == ()
        sim_rows = sim.rows_for(mode=mode)
        live_rows = live.rows_for(mode=mode)
        assert [r.turn for r in live_rows] == [r.turn for r in sim_rows]
        assert [r.text for r in live_rows] == [r.text for r in sim_rows]
        assert [r.consistency for r in live_rows] == [
            r.consistency for r in sim_rows]
        assert [r.tokens_generated for r in live_rows] == [
            r.tokens_generated for r in sim_rows]
        assert [r.request_bytes for r in live_rows] == [
            r.request_bytes for r in sim_rows]
        # replication carries the same frames over TCP as over the virtual
        # links, so the settled totals agree byte for byte
        assert live.runs_for(mode)[0].sync_totals == sim.runs[0].sync_totals


def test_killed_node_is_recorded_and_run_completes(tmp_path):
    scenario = live_scenario(
        messages=("hello there", "how are you", "tell me more",
                  "thanks a lot", "one more thing"),
        modes=(MODE_TOKENIZED,),
        policy=ConsistencyPolicy(mode="strong", max_retries=1, backoff_ms=5.0),
        mobility=((1, "a"), (3, "b")),
        session_id="live-fault",
    )
    with spawn_live_cluster(scenario, workdir=str(tmp_path)) as cluster:
        cluster.kill_node("b")
        report = run_scenario(scenario, transport="live",
                              endpoints=cluster.endpoints)
    run = report.runs[0]
    assert run.turns_attempted == 5
    # turns 1 and 2 are served by node a; every later message retargets the
    # dead node and stays at turn 3
    assert run.failed_turns == (3, 3, 3)
    errors = [r.error for r in report.rows]
    assert errors == ["", "", "unreachable", "unreachable", "unreachable"]
    assert [r.consistency for r in report.rows[:2]] == ["created", "fresh"]
    assert report.failed_turn_count == 3
