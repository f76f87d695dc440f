"""Command-line interface end-to-end with scripted providers."""

from __future__ import annotations

import json

import pytest

from plancache.cli import main

from support import synthetic_workload

pytestmark = pytest.mark.usefixtures("capsys")


def write_workload(tmp_path, n_classes=2, tasks_per_class=2, with_ground_truth=True):
    tasks, scripts = synthetic_workload(n_classes, tasks_per_class, with_ground_truth=with_ground_truth)
    tasks_file = tmp_path / "tasks.jsonl"
    tasks_file.write_text(
        "\n".join(
            json.dumps(
                {
                    "id": t.id,
                    "query": t.query,
                    "context": t.context,
                    **({"answer": t.ground_truth} if t.ground_truth else {}),
                }
            )
            for t in tasks
        ),
        encoding="utf-8",
    )
    script_file = tmp_path / "scripts.json"
    script_file.write_text(json.dumps({"scripts": scripts}), encoding="utf-8")
    return tasks_file, script_file


def test_run_plan_cache_end_to_end(tmp_path, capsys):
    tasks_file, script_file = write_workload(tmp_path)
    report_dir = tmp_path / "report"
    cache_file = tmp_path / "cache.json"
    code = main(
        [
            "run",
            "--strategy",
            "plan",
            "--tasks",
            str(tasks_file),
            "--format",
            "jsonl",
            "--provider",
            f"scripted:{script_file}",
            "--cache",
            str(cache_file),
            "--report",
            str(report_dir),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "strategy: plan" in out
    assert "hit_rate:" in out
    report = json.loads((report_dir / "report.json").read_text(encoding="utf-8"))
    assert report["total_tasks"] == 4
    assert report["hit_rate"] == 0.5
    assert (report_dir / "per_task.csv").exists()
    assert (report_dir / "ledger.csv").exists()
    cache_doc = json.loads(cache_file.read_text(encoding="utf-8"))
    assert len(cache_doc["entries"]) == 2


def test_run_warm_cache_round_trip(tmp_path, capsys):
    tasks_file, script_file = write_workload(tmp_path, n_classes=1, tasks_per_class=2)
    cache_file = tmp_path / "cache.json"
    assert (
        main(
            [
                "run",
                "--strategy",
                "plan",
                "--tasks",
                str(tasks_file),
                "--provider",
                f"scripted:{script_file}",
                "--cache",
                str(cache_file),
            ]
        )
        == 0
    )
    # Second run over the same tasks with a warm cache: every task hits, so
    # only keyword extraction, adaptation, and actor scripts are needed.
    tasks, scripts = synthetic_workload(1, 2, with_ground_truth=True)
    warm_scripts = {
        "keyword_extractor": scripts["keyword_extractor"],
        "small_planner": scripts["small_planner"] * 2,
        "actor": scripts["actor"],
        "judge": ["1", "1"],
    }
    script_file2 = tmp_path / "scripts2.json"
    script_file2.write_text(json.dumps({"scripts": warm_scripts}), encoding="utf-8")
    report_dir = tmp_path / "warm-report"
    code = main(
        [
            "run",
            "--strategy",
            "plan",
            "--tasks",
            str(tasks_file),
            "--provider",
            f"scripted:{script_file2}",
            "--cache",
            str(cache_file),
            "--warm-cache",
            "--report",
            str(report_dir),
        ]
    )
    assert code == 0
    report = json.loads((report_dir / "report.json").read_text(encoding="utf-8"))
    assert report["hit_rate"] == 1.0


def test_bad_provider_spec_is_config_error(tmp_path, capsys):
    tasks_file, _ = write_workload(tmp_path)
    assert main(["run", "--strategy", "plan", "--tasks", str(tasks_file), "--provider", "nope"]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_tasks_file_is_config_error(tmp_path, capsys):
    _, script_file = write_workload(tmp_path)
    code = main(
        [
            "run",
            "--strategy",
            "plan",
            "--tasks",
            str(tmp_path / "missing.jsonl"),
            "--provider",
            f"scripted:{script_file}",
        ]
    )
    assert code == 2


def test_warm_cache_without_cache_is_config_error(tmp_path, capsys):
    tasks_file, script_file = write_workload(tmp_path)
    code = main(
        [
            "run",
            "--strategy",
            "plan",
            "--tasks",
            str(tasks_file),
            "--provider",
            f"scripted:{script_file}",
            "--warm-cache",
        ]
    )
    assert code == 2


def test_live_provider_without_keys_is_config_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    monkeypatch.delenv("TOGETHER_API_KEY", raising=False)
    tasks_file, _ = write_workload(tmp_path)
    code = main(["run", "--strategy", "accuracy-opt", "--tasks", str(tasks_file)])
    assert code == 2


def test_match_subcommand(tmp_path, capsys):
    pairs_file = tmp_path / "pairs.jsonl"
    pairs_file.write_text(
        "\n".join(
            json.dumps(r)
            for r in [
                {
                    "query_a": "working capital for Costco",
                    "query_b": "working capital for Best Buy",
                    "keyword_a": "working capital ratio",
                    "keyword_b": "working capital ratio",
                    "label": "same_plan",
                },
                {
                    "query_a": "alpha beta",
                    "query_b": "alpha beta",
                    "keyword_a": "k1",
                    "keyword_b": "k2",
                    "label": "different_plan",
                },
            ]
        ),
        encoding="utf-8",
    )
    report_dir = tmp_path / "match-report"
    code = main(
        ["match", "--pairs", str(pairs_file), "--thresholds", "0:1:5", "--report", str(report_dir)]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "keyword matching:" in out
    lines = (report_dir / "matching.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 5 + 1  # header, five query thresholds, keyword row


def test_bad_threshold_spec_is_config_error(tmp_path, capsys):
    pairs_file = tmp_path / "pairs.jsonl"
    pairs_file.write_text(
        json.dumps(
            {
                "query_a": "a",
                "query_b": "b",
                "keyword_a": "k",
                "keyword_b": "k",
                "label": "same_plan",
            }
        ),
        encoding="utf-8",
    )
    assert main(["match", "--pairs", str(pairs_file), "--thresholds", "0:1"]) == 2
