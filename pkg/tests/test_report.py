"""Report writer tests: file layout, determinism, round-trip reading."""

import csv
import os

from discedge.context import MODE_RAW, MODE_TOKENIZED, GenerationParams
from discedge.harness import run_scenario
from discedge.node import ConsistencyPolicy
from discedge.report import (
    COMPARISON_FILE,
    META_FILE,
    PER_TURN_FILE,
    RUNS_FILE,
    SUMMARY_FILE,
    read_report,
    write_report,
)
from discedge.scenario import NodeSpec, ScenarioConfig

EXPECTED_FILES = (
    META_FILE, PER_TURN_FILE, RUNS_FILE, COMPARISON_FILE, SUMMARY_FILE,
    "request_bytes.csv", "response_time_ms.csv", "tokens_per_second.csv",
    "sync_bytes.csv",
    "request_bytes.png", "response_time_ms.png", "tokens_per_second.png",
    "sync_bytes.png",
)


def small_scenario():
    return ScenarioConfig(
        name="report-fixture",
        model_name="toy/model",
        user_id="u1",
        messages=("hello there", "how are you", "tell me more"),
        seed=77,
        repeats=2,
        modes=(MODE_RAW, MODE_TOKENIZED),
        params=GenerationParams(seed=7, max_tokens=8),
        nodes=(NodeSpec("a"), NodeSpec("b")),
        policy=ConsistencyPolicy(mode="available", max_retries=2, backoff_ms=5.0),
        client_latency_ms=2.0,
        inter_node_latency_ms=2.0,
        mobility=((1, "a"),),
    )


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_report_writes_every_file(tmp_path):
    out = tmp_path / "report"
    run_scenario(small_scenario(), out_dir=str(out))
    for name in EXPECTED_FILES:
        path = out / name
        assert path.exists(), name
        assert path.stat().st_size > 0, name


def test_report_is_byte_identical_across_runs(tmp_path):
    scenario = small_scenario()
    first = tmp_path / "first"
    second = tmp_path / "second"
    run_scenario(scenario, out_dir=str(first))
    run_scenario(scenario, out_dir=str(second))
    for name in sorted(os.listdir(first)):
        assert read_bytes(first / name) == read_bytes(second / name), name


def test_read_report_round_trip(tmp_path):
    out = tmp_path / "report"
    report = run_scenario(small_scenario(), out_dir=str(out))
    loaded = read_report(str(out))
    assert loaded.scenario_name == report.scenario_name
    assert loaded.model_name == report.model_name
    assert loaded.transport == report.transport
    assert loaded.seed == report.seed
    assert loaded.modes == report.modes
    assert loaded.node_ids == report.node_ids
    assert len(loaded.rows) == len(report.rows)
    for got, want in zip(loaded.rows, report.rows):
        assert (got.mode, got.repeat, got.turn, got.node_id) == (
            want.mode, want.repeat, want.turn, want.node_id)
        assert got.request_bytes == want.request_bytes
        assert got.tokens_generated == want.tokens_generated
        assert got.consistency == want.consistency
        assert got.sync_bytes == want.sync_bytes
    assert len(loaded.runs) == len(report.runs)
    for got, want in zip(loaded.runs, report.runs):
        assert got.failed_turns == want.failed_turns
        assert got.sync_totals == want.sync_totals
        assert got.sync_total_bytes == want.sync_total_bytes


def test_per_turn_csv_shape(tmp_path):
    out = tmp_path / "report"
    report = run_scenario(small_scenario(), out_dir=str(out))
    with open(out / PER_TURN_FILE, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(report.rows)
    first = rows[0]
    assert first["mode"] == MODE_RAW
    assert first["consistency"] == "created"
    assert "sync_a_to_b" in first
    assert "sync_b_to_a" in first


def test_metric_csv_has_min_median_max_columns(tmp_path):
    out = tmp_path / "report"
    run_scenario(small_scenario(), out_dir=str(out))
    with open(out / "request_bytes.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "turn"
    for mode in (MODE_RAW, MODE_TOKENIZED):
        for stat in ("min", "median", "max"):
            assert f"{mode}_{stat}" in header


def test_summary_labels_spread_as_min_median_max(tmp_path):
    out = tmp_path / "report"
    run_scenario(small_scenario(), out_dir=str(out))
    text = (out / SUMMARY_FILE).read_text()
    assert "min / median / max" in text
    assert "confidence interval would be meaningless" in text
    assert MODE_RAW in text and MODE_TOKENIZED in text


def test_comparison_csv_rows(tmp_path):
    out = tmp_path / "report"
    run_scenario(small_scenario(), out_dir=str(out))
    with open(out / COMPARISON_FILE, newline="") as fh:
        rows = list(csv.DictReader(fh))
    metrics = {r["metric"] for r in rows}
    assert metrics == {
        "request_bytes", "response_time_ms", "tokens_per_second",
        "sync_total_bytes"}
    sync = [r for r in rows if r["metric"] == "sync_total_bytes"][0]
    assert float(sync["delta_pct"]) < 0  # tokenized replicates fewer bytes


def test_single_mode_report_skips_comparison(tmp_path):
    import dataclasses

    out = tmp_path / "report"
    scenario = dataclasses.replace(small_scenario(), modes=(MODE_RAW,))
    run_scenario(scenario, out_dir=str(out))
    assert not (out / COMPARISON_FILE).exists()
    assert (out / SUMMARY_FILE).exists()
