"""Command-line interface: conversion, runs, stages, and analysis."""
from __future__ import annotations

import json
import sys

import pytest
from click.testing import CliRunner

from conftest import SITUATION_ROWS, STANDARD_BACKENDS
from mindseye import cli, datasets
from mindseye.types import ImaginationDirection


@pytest.fixture
def runner():
    return CliRunner()


def _write_run_files(tmp_path, instances):
    data = tmp_path / "data.jsonl"
    datasets.write_canonical(instances, data)
    manifest_obj = {
        "dataset": {"name": "sciq", "split": "test", "path": str(data)},
        "language_models": [
            {"model_id": "mock-lm", "strategy": "prompt"},
            {"model_id": "mock-nli", "strategy": "nli"},
            {"model_id": "mock-embed", "strategy": "embedding"},
        ],
        "vision_model": "mock-clip",
        "imagination": {"sources": ["recall", "synthesis"], "pool_recall": 4,
                        "pool_synthesis": 4, "top_k": 3},
        "search_backend": "mock-search",
        "generate_backend": "mock-gen",
        "seed": 42,
        "output_dir": str(tmp_path / "out"),
    }
    manifest_path = tmp_path / "run.json"
    manifest_path.write_text(json.dumps(manifest_obj), "utf-8")
    entries = [dict(entry, options={"mock_seed": 7})
               for entry in STANDARD_BACKENDS]
    backends_path = tmp_path / "backends.json"
    backends_path.write_text(json.dumps({"backends": entries}), "utf-8")
    return manifest_path, backends_path


# -- convert -------------------------------------------------------------


def test_convert_sciq(runner, tmp_path):
    raw = tmp_path / "sciq.json"
    raw.write_text(json.dumps([{
        "question": "What do bees collect?", "correct_answer": "nectar",
        "distractor1": "wood", "distractor2": "iron", "distractor3": "glass",
    }]), "utf-8")
    out = tmp_path / "sciq.jsonl"
    result = runner.invoke(cli.main, ["convert", "--dataset", "sciq",
                                      "--input", str(raw),
                                      "--output", str(out)])
    assert result.exit_code == 0, result.output
    assert "wrote 1 instances" in result.output
    assert "expected 1000" in result.output
    assert len(datasets.read_canonical(out)) == 1


def test_convert_situation(runner, tmp_path):
    raw = tmp_path / "situation.jsonl"
    raw.write_text("".join(json.dumps(row) + "\n" for row in SITUATION_ROWS),
                   "utf-8")
    out = tmp_path / "situation.canonical.jsonl"
    result = runner.invoke(cli.main, ["convert", "--dataset", "situation",
                                      "--input", str(raw),
                                      "--output", str(out),
                                      "--split", "dev"])
    assert result.exit_code == 0, result.output
    assert "wrote 4 instances" in result.output
    # Off-test splits carry no count expectation.
    assert "expected" not in result.output


def test_convert_wsd_with_definitions(runner, tmp_path):
    word_dir = tmp_path / "release" / "bank"
    word_dir.mkdir(parents=True)
    (word_dir / "classes_map.txt").write_text(
        json.dumps({"0": "bank_financial", "1": "bank_river"}), "utf-8")
    (word_dir / "test.data.txt").write_text("2\tthe bank was grassy\n", "utf-8")
    (word_dir / "test.gold.txt").write_text("1\n", "utf-8")
    gloss_path = tmp_path / "glosses.json"
    gloss_path.write_text(json.dumps({"bank_river": "land beside a river"}),
                          "utf-8")
    out = tmp_path / "wsd.jsonl"
    result = runner.invoke(cli.main, ["convert", "--dataset", "coarsewsd20",
                                      "--input", str(tmp_path / "release"),
                                      "--output", str(out),
                                      "--definitions", str(gloss_path)])
    assert result.exit_code == 0, result.output
    instances = datasets.read_canonical(out)
    assert instances[0].candidates[1].imagination_text == "land beside a river"


def test_convert_probe(runner, tmp_path):
    raw = tmp_path / "color.jsonl"
    rows = [
        {"subject": "sky", "distribution": {"blue": 6, "gray": 3, "white": 1}},
        {"subject": "grass", "distribution": {"green": 5, "yellow": 1, "brown": 1}},
        {"subject": "coal", "distribution": {"black": 4, "silver": 1}},
        {"subject": "flamingo",
         "distribution": {"pink": 3, "orange": 1, "red": 1, "purple": 1}},
    ]
    raw.write_text("".join(json.dumps(r) + "\n" for r in rows), "utf-8")
    out = tmp_path / "color.canonical.jsonl"
    result = runner.invoke(cli.main, ["convert", "--dataset", "vicomte_color",
                                      "--input", str(raw),
                                      "--output", str(out)])
    assert result.exit_code == 0, result.output
    assert "wrote 28 instances" in result.output


def test_convert_rejects_unknown_dataset(runner, tmp_path):
    raw = tmp_path / "x.json"
    raw.write_text("[]", "utf-8")
    result = runner.invoke(cli.main, ["convert", "--dataset", "imagenet",
                                      "--input", str(raw),
                                      "--output", str(tmp_path / "y")])
    assert result.exit_code == 2
    assert "imagenet" in result.output


# -- run and stage commands ----------------------------------------------


def test_run_command(runner, tmp_path, sciq_instances):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    result = runner.invoke(cli.main, ["run", "--manifest", str(manifest_path),
                                      "--backends", str(backends_path)])
    assert result.exit_code == 0, result.output
    assert "report:" in result.output
    assert "ens:mock-lm: accuracy=" in result.output
    assert (tmp_path / "out" / "report.json").exists()


def test_stage_command_stops_early(runner, tmp_path, sciq_instances):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    result = runner.invoke(cli.main, ["imagine",
                                      "--manifest", str(manifest_path),
                                      "--backends", str(backends_path)])
    assert result.exit_code == 0, result.output
    assert "stage imagine complete" in result.output
    stages = list((tmp_path / "out" / "stages").glob("*.json"))
    assert len(stages) == 1
    assert stages[0].name.startswith("imagine-")


def test_out_override(runner, tmp_path, sciq_instances):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    moved = tmp_path / "moved"
    result = runner.invoke(cli.main, ["run", "--manifest", str(manifest_path),
                                      "--backends", str(backends_path),
                                      "--out", str(moved)])
    assert result.exit_code == 0, result.output
    assert (moved / "report.json").exists()
    assert not (tmp_path / "out" / "report.json").exists()


def test_load_run_overrides(tmp_path, sciq_instances):
    manifest_path, _ = _write_run_files(tmp_path, sciq_instances)
    loaded = cli._load_run(str(manifest_path), out="elsewhere", seed=5,
                           sources="synthesis", pool="3,2", top_k=2,
                           direction="imagine_query")
    assert loaded.output_dir == "elsewhere"
    assert loaded.seed == 5
    assert loaded.imagination.sources == ("synthesis",)
    assert loaded.imagination.pool_recall == 3
    assert loaded.imagination.pool_synthesis == 2
    assert loaded.imagination.top_k == 2
    assert loaded.direction is ImaginationDirection.IMAGINE_QUERY


def test_load_run_without_overrides(tmp_path, sciq_instances):
    manifest_path, _ = _write_run_files(tmp_path, sciq_instances)
    loaded = cli._load_run(str(manifest_path), None, None, None, None, None, None)
    assert loaded.seed == 42
    assert loaded.imagination.top_k == 3
    assert loaded.direction is None


# -- analyze -------------------------------------------------------------


def test_analyze_command(runner, tmp_path, sciq_instances):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    assert runner.invoke(cli.main, ["run", "--manifest", str(manifest_path),
                                    "--backends", str(backends_path)
                                    ]).exit_code == 0
    report_path = tmp_path / "out" / "report.json"
    analysis_dir = tmp_path / "analysis"
    result = runner.invoke(cli.main, [
        "analyze", "--reports", str(report_path), "--out", str(analysis_dir),
        "--include-incorrect",
        "--gain-augmenter", "mock-clip", "--gain-bases", "mock-lm,mock-nli",
        "--sweep-manifest", str(manifest_path),
        "--sweep-backends", str(backends_path),
        "--sweep-counts", "2,8", "--sweep-top-k", "2",
    ])
    assert result.exit_code == 0, result.output
    for name in ("summary.json", "overlap_correct.csv", "overlap_incorrect.csv",
                 "pairwise_gain.csv", "image_count_sweep.csv"):
        assert (analysis_dir / name).exists()
    assert "streams:" in result.output


def test_analyze_gain_requires_bases(runner, tmp_path, sciq_instances):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    assert runner.invoke(cli.main, ["run", "--manifest", str(manifest_path),
                                    "--backends", str(backends_path)
                                    ]).exit_code == 0
    report_path = tmp_path / "out" / "report.json"
    result = runner.invoke(cli.main, [
        "analyze", "--reports", str(report_path),
        "--out", str(tmp_path / "analysis"),
        "--gain-augmenter", "mock-clip",
    ])
    assert result.exit_code == 2
    assert "--gain-bases is required" in result.output


def test_analyze_sweep_requires_counts(runner, tmp_path, sciq_instances):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    assert runner.invoke(cli.main, ["run", "--manifest", str(manifest_path),
                                    "--backends", str(backends_path)
                                    ]).exit_code == 0
    result = runner.invoke(cli.main, [
        "analyze", "--reports", str(tmp_path / "out" / "report.json"),
        "--out", str(tmp_path / "analysis"),
        "--sweep-manifest", str(manifest_path),
    ])
    assert result.exit_code == 2
    assert "--sweep-counts" in result.output


# -- entrypoint ----------------------------------------------------------


def test_entrypoint_maps_domain_errors(tmp_path, sciq_instances, monkeypatch,
                                       capsys):
    manifest_path, backends_path = _write_run_files(tmp_path, sciq_instances)
    obj = json.loads(manifest_path.read_text("utf-8"))
    obj["dataset"]["path"] = str(tmp_path / "absent.jsonl")
    manifest_path.write_text(json.dumps(obj), "utf-8")
    monkeypatch.setattr(sys, "argv", [
        "mindseye", "run", "--manifest", str(manifest_path),
        "--backends", str(backends_path)])
    with pytest.raises(SystemExit) as excinfo:
        cli.entrypoint()
    assert excinfo.value.code == 2
    assert "error:" in capsys.readouterr().err


def test_entrypoint_usage_errors(monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", ["mindseye", "run"])
    with pytest.raises(SystemExit) as excinfo:
        cli.entrypoint()
    assert excinfo.value.code == 2
    assert "Missing option" in capsys.readouterr().err
