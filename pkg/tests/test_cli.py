"""CLI tests: argument handling, exit codes, seed override, outputs."""

import json
import os

import pytest
import yaml

from discedge.cli import build_parser, main
from discedge.tokenizer import load_vocab


def scenario_file(tmp_path, **harness_over):
    harness = {
        "seed": 5,
        "repeats": 1,
        "modes": ["raw", "tokenized"],
        "params": {"seed": 3, "temperature": 0.0, "n_predict": 8},
        "nodes": [{"id": "a"}, {"id": "b"}],
        "policy": {"mode": "available", "max_retries": 2, "backoff_ms": 5.0},
        "links": {"client_latency_ms": 2.0, "inter_node_latency_ms": 2.0,
                  "jitter_ms": 0.0},
        "mobility": {1: "a"},
    }
    harness.update(harness_over)
    doc = {
        "name": "cli-fixture",
        "model_name": "toy/model",
        "user_id": "u1",
        "messages": ["hello there", "how are you"],
        "harness": harness,
    }
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_run_sim_writes_report(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DISCEDGE_SEED", raising=False)
    out_dir = tmp_path / "report"
    code = main(["run", "--scenario", scenario_file(tmp_path), "--sim",
                 "--out", str(out_dir)])
    captured = capsys.readouterr()
    assert code == 0
    assert "raw repeat 0: 2 turns" in captured.out
    assert "tokenized repeat 0: 2 turns" in captured.out
    assert f"report written to {out_dir}" in captured.out
    assert (out_dir / "meta.json").exists()
    assert (out_dir / "summary.md").exists()


def test_run_without_out_prints_only(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DISCEDGE_SEED", raising=False)
    code = main(["run", "--scenario", scenario_file(tmp_path)])
    captured = capsys.readouterr()
    assert code == 0
    assert "report written" not in captured.out
    assert not os.listdir(tmp_path) == []


def test_run_exits_nonzero_on_strong_failures(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DISCEDGE_SEED", raising=False)
    path = scenario_file(
        tmp_path,
        modes=["tokenized"],
        policy={"mode": "strong", "max_retries": 1, "backoff_ms": 1.0},
        links={"client_latency_ms": 2.0, "inter_node_latency_ms": 1000.0,
               "jitter_ms": 0.0},
        mobility={1: "a", 2: "b"},
    )
    code = main(["run", "--scenario", path])
    captured = capsys.readouterr()
    assert code == 1
    assert "FAILED turns 2" in captured.out
    assert "failed under strong policy" in captured.err


def test_seed_env_overrides_scenario(tmp_path, capsys, monkeypatch):
    out_dir = tmp_path / "report"
    monkeypatch.setenv("DISCEDGE_SEED", "999")
    assert main(["run", "--scenario", scenario_file(tmp_path),
                 "--out", str(out_dir)]) == 0
    capsys.readouterr()
    meta = json.loads((out_dir / "meta.json").read_text())
    assert meta["seed"] == 999


def test_garbage_seed_is_a_usage_error(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DISCEDGE_SEED", "not-a-number")
    code = main(["run", "--scenario", scenario_file(tmp_path)])
    captured = capsys.readouterr()
    assert code == 2
    assert "DISCEDGE_SEED" in captured.err


def test_missing_scenario_is_an_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DISCEDGE_SEED", raising=False)
    code = main(["run", "--scenario", str(tmp_path / "ghost.yaml")])
    captured = capsys.readouterr()
    assert code == 2
    assert "error:" in captured.err


def test_compare_recomputes_deltas(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DISCEDGE_SEED", raising=False)
    out_dir = tmp_path / "report"
    main(["run", "--scenario", scenario_file(tmp_path), "--out", str(out_dir)])
    capsys.readouterr()
    comparison = out_dir / "comparison.csv"
    before = comparison.read_bytes()
    comparison.unlink()
    code = main(["compare", str(out_dir)])
    captured = capsys.readouterr()
    assert code == 0
    assert "raw -> tokenized" in captured.out
    assert "sync_total_bytes" in captured.out
    assert comparison.read_bytes() == before


def test_vocab_build_produces_loadable_vocab(tmp_path, capsys):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("the robot moved the arm and the robot stopped\n" * 3)
    out = tmp_path / "corpus.vocab"
    code = main(["vocab", "build", str(corpus), "-o", str(out),
                 "--max-words", "50"])
    captured = capsys.readouterr()
    assert code == 0
    assert "wrote" in captured.out
    vocab = load_vocab(str(out))
    assert "<|system|>" in vocab.entries
    assert "<|user|>" in vocab.entries
    assert "<|assistant|>" in vocab.entries
    assert any("robot" in e for e in vocab.entries)


def test_sim_and_live_are_mutually_exclusive(tmp_path):
    with pytest.raises(SystemExit):
        build_parser().parse_args([
            "run", "--scenario", "default", "--sim", "--live"])


def test_subcommand_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
