"""Desk-scale smoke run against a word-sense release directory.

Drives the inference package purely through its external interfaces:
the ``mindseye`` CLI for dataset conversion and the run itself, JSON
files for run manifests and backend declarations, and the wire
protocol for every model call. The verdict compares the fused stream's
word-averaged macro F1 against the text-only language stream on a
seeded subsample, which is a directional check only: tiny or random
checkpoints make no promise about which side wins.
"""
from __future__ import annotations

import json
import random
import shutil
import subprocess
import sys
from pathlib import Path

from .errors import SidecarError


def _mindseye_argv() -> list[str]:
    """The inference CLI, preferring the installed console script."""
    executable = shutil.which("mindseye")
    if executable:
        return [executable]
    return [sys.executable, "-c",
            "from mindseye.cli import entrypoint; entrypoint()"]


def _run_cli(args: list[str]) -> str:
    process = subprocess.run(_mindseye_argv() + args, capture_output=True,
                             text=True)
    if process.returncode != 0:
        raise SidecarError(
            f"mindseye {' '.join(args[:2])} failed "
            f"({process.returncode}): {process.stderr.strip()[-2000:]}")
    return process.stdout


def subsample_instances(src: str | Path, dst: str | Path, limit: int,
                        seed: int) -> int:
    """Keep at most ``limit`` lines, spread evenly across target words.

    Selection shuffles within each word group under ``seed`` and then
    draws round-robin, so every word keeps instances for as long as the
    budget allows. Surviving lines keep their original bytes and file
    order, which preserves the canonical instance format untouched.
    """
    lines = Path(src).read_text("utf-8").splitlines()
    groups: dict[str, list[int]] = {}
    for index, line in enumerate(lines):
        word = json.loads(line).get("metadata", {}).get("target_word", "")
        groups.setdefault(word, []).append(index)
    rng = random.Random(seed)
    for indices in groups.values():
        rng.shuffle(indices)
    selected: set[int] = set()
    round_number = 0
    while len(selected) < min(limit, len(lines)):
        added = False
        for word in sorted(groups):
            indices = groups[word]
            if round_number < len(indices) and len(selected) < limit:
                selected.add(indices[round_number])
                added = True
        if not added:
            break
        round_number += 1
    kept = [lines[index] for index in range(len(lines)) if index in selected]
    Path(dst).write_text("".join(line + "\n" for line in kept), "utf-8")
    return len(kept)


def _pick_backend(backends: list[dict], kind: str, prefer: str | None = None
                  ) -> str:
    names = [entry["model_id"] for entry in backends if entry.get("kind") == kind]
    if prefer is not None:
        if prefer in names:
            return prefer
        raise SidecarError(f"backend {prefer!r} is not a {kind!r} entry")
    if not names:
        raise SidecarError(f"backends file declares no {kind!r} entry")
    return names[0]


def run_smoke(raw_dir: str | Path, backends_path: str | Path,
              out_dir: str | Path, *, lm: str | None = None, limit: int = 200,
              seed: int = 0, split: str = "test",
              definitions: str | Path | None = None,
              pool: tuple[int, int] = (10, 10), top_k: int = 5) -> dict:
    """Convert, subsample, run, and compare fused vs text-only macro F1."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backends = json.loads(Path(backends_path).read_text("utf-8"))["backends"]
    lm = _pick_backend(backends, "lm_prompt", lm)

    full_path = out_dir / "instances_full.jsonl"
    convert_args = ["convert", "--dataset", "coarsewsd20",
                    "--input", str(raw_dir), "--output", str(full_path),
                    "--split", split]
    if definitions is not None:
        convert_args += ["--definitions", str(definitions)]
    _run_cli(convert_args)
    sample_path = out_dir / "instances.jsonl"
    count = subsample_instances(full_path, sample_path, limit, seed)

    run_dir = out_dir / "run"
    manifest = {
        "dataset": {"name": "coarsewsd20", "split": split,
                    "path": str(sample_path)},
        "language_models": [{"model_id": lm, "strategy": "prompt"}],
        "vision_model": _pick_backend(backends, "vision_text"),
        "imagination": {"sources": ["recall", "synthesis"],
                        "pool_recall": pool[0], "pool_synthesis": pool[1],
                        "top_k": top_k},
        "search_backend": _pick_backend(backends, "search"),
        "generate_backend": _pick_backend(backends, "generate"),
        "ensemble": {"mode": "sigmoid_param_ratio", "fixed_weight": 0.5},
        "seed": seed,
        "output_dir": str(run_dir),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")
    _run_cli(["run", "--manifest", str(manifest_path),
              "--backends", str(backends_path)])

    report_path = run_dir / "report.json"
    aggregates = json.loads(report_path.read_text("utf-8"))["aggregates"]
    text_f1 = aggregates[lm]["word_f1"]
    fused_f1 = aggregates[f"ens:{lm}"]["word_f1"]
    return {
        "instances": count,
        "lm": lm,
        "text_word_f1": text_f1,
        "fused_word_f1": fused_f1,
        "passed": fused_f1 >= text_f1,
        "report_path": str(report_path),
    }
