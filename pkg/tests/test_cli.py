from __future__ import annotations

import json
from pathlib import Path

import pytest

from pmharness.cli import main

CONFIG = """
seed: 3
n_cycles: 12
universe: {n_markets: 6}
agents:
  - {agent_id: ev, kind: ev, params: {stake: 40}}
  - {agent_id: hold, kind: hold}
  - {agent_id: rnd, kind: random, params: {trade_prob: 0.3}}
"""
HEADER = "Rank,Model,Final Value,Total PnL,Total Ret.,Win Rate (Early Exit),Max DD"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(CONFIG)
    return path


@pytest.fixture
def run_dir(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config_file), "--out", str(out)]) == 0
    capsys.readouterr()
    return out


def test_run_writes_outputs(run_dir):
    for name in ("events.jsonl", "leaderboard.csv", "categories.csv", "exits.csv", "report.json"):
        assert (run_dir / name).is_file()


def test_report_rows_match_agents(run_dir, capsys):
    assert main(["report", str(run_dir / "events.jsonl"), "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 4


def test_report_json_and_other_tables(run_dir, capsys):
    assert main(["report", str(run_dir / "events.jsonl"), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["leaderboard"]) == 3
    assert main(["report", str(run_dir / "events.jsonl"), "--table", "exit", "--win-rate", "all"]) == 0
    assert capsys.readouterr().out.startswith("Model,Closed,Settled")


def test_replay_command(run_dir, capsys):
    assert main(["replay", str(run_dir / "events.jsonl")]) == 0
    logged = json.loads(capsys.readouterr().out)
    assert main(["replay", str(run_dir / "events.jsonl"), "--recompute"]) == 0
    rebuilt = json.loads(capsys.readouterr().out)
    assert logged == rebuilt and sorted(logged) == ["ev", "hold", "rnd"]


def test_out_dir_from_environment(tmp_path, config_file, monkeypatch, capsys):
    monkeypatch.setenv("PMHARNESS_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(config_file)]) == 0
    assert (tmp_path / "env" / "small" / "events.jsonl").is_file()


def test_missing_files_fail(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nope.jsonl")]) == 1
    assert "pmharness: error:" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "nope.yaml")]) == 1
    assert main(["discover", str(tmp_path / "nope.jsonl"), "--kind", "VolumeTop"]) == 1


def test_bad_config_fails(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: 1\nn_cycles: 3\nagents: [{kind: telepath}]\n")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "telepath" in capsys.readouterr().err


def test_corrupt_log_fails(tmp_path, run_dir, capsys):
    lines = (run_dir / "events.jsonl").read_text().splitlines()
    lines[3] = "{garbage"
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["report", str(bad)]) == 1
    assert f"{bad}:4" in capsys.readouterr().err


@pytest.fixture
def universe_file(tmp_path):
    path = tmp_path / "u.jsonl"
    assert main(["universe", str(path), "--seed", "4", "--markets", "30", "--horizon", "20"]) == 0
    return path


def test_discover_volume_top(universe_file, capsys):
    assert main(["discover", str(universe_file), "--kind", "VolumeTop", "--limit", "5", "--cycle", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("Rank,Market")
    assert len(lines) == 6


def test_discover_impossible_filter_is_empty(universe_file, capsys):
    assert main(["discover", str(universe_file), "--kind", "VolumeTop", "--min-volume", "1e12"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1


def test_discover_bad_query(universe_file, capsys):
    assert main(["discover", str(universe_file), "--kind", "Keyword"]) == 1
    assert "pmharness: error:" in capsys.readouterr().err
