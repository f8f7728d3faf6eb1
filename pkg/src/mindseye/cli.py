"""Command-line interface.

Stage commands (``imagine``, ``score``, ``fuse``, ``evaluate``) run the
pipeline up to that stage, reusing checkpoints where inputs are
unchanged; ``run`` is shorthand for ``evaluate``. ``convert`` turns
dataset release files into the canonical instance format and
``analyze`` compares finished reports.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click

from . import analysis, datasets, pipeline
from .backends import build_backends, load_manifests
from .errors import MindsEyeError
from .report import RunReport
from .types import ImaginationDirection


def _load_run(manifest_path: str, out: str | None, seed: int | None,
              sources: str | None, pool: str | None, top_k: int | None,
              direction: str | None) -> pipeline.RunManifest:
    manifest = pipeline.RunManifest.load(manifest_path)
    updates: dict = {}
    if out is not None:
        updates["output_dir"] = out
    if seed is not None:
        updates["seed"] = seed
    if direction is not None:
        updates["direction"] = ImaginationDirection(direction)
    imagination_updates: dict = {}
    if sources is not None:
        imagination_updates["sources"] = tuple(
            s.strip() for s in sources.split(",") if s.strip())
    if pool is not None:
        recall_n, synthesis_n = (int(p) for p in pool.split(","))
        imagination_updates["pool_recall"] = recall_n
        imagination_updates["pool_synthesis"] = synthesis_n
    if top_k is not None:
        imagination_updates["top_k"] = top_k
    if imagination_updates:
        updates["imagination"] = dataclasses.replace(
            manifest.imagination, **imagination_updates)
    return dataclasses.replace(manifest, **updates) if updates else manifest


def _stage_options(fn):
    fn = click.option("--manifest", "manifest_path", required=True,
                      type=click.Path(exists=True), help="Run manifest JSON.")(fn)
    fn = click.option("--backends", "backends_path", required=True,
                      type=click.Path(exists=True), help="Backends JSON.")(fn)
    fn = click.option("--out", default=None, help="Output directory override.")(fn)
    fn = click.option("--seed", default=None, type=int, help="Run seed override.")(fn)
    fn = click.option("--sources", default=None,
                      help="Imagination sources, comma separated.")(fn)
    fn = click.option("--pool", default=None,
                      help="Pool sizes as RECALL,SYNTHESIS.")(fn)
    fn = click.option("--top-k", default=None, type=int,
                      help="Images kept per imagined text.")(fn)
    fn = click.option("--direction", default=None,
                      type=click.Choice([d.value for d in ImaginationDirection]),
                      help="Imagination direction override.")(fn)
    return fn


def _run_stage(stage: str, manifest_path: str, backends_path: str,
               out: str | None, seed: int | None, sources: str | None,
               pool: str | None, top_k: int | None, direction: str | None) -> None:
    if stage == "run":
        stage = "evaluate"
    manifest = _load_run(manifest_path, out, seed, sources, pool, top_k, direction)
    backends = build_backends(load_manifests(backends_path))
    run = pipeline.PipelineRun(manifest, backends)
    result = run.run_stage(stage)
    if stage == "evaluate":
        click.echo(f"report: {Path(manifest.output_dir) / 'report.json'}")
        for stream in sorted(result.aggregates):
            metrics_str = ", ".join(
                f"{name}={value:.2f}"
                for name, value in sorted(result.aggregates[stream].items()))
            click.echo(f"  {stream}: {metrics_str}")
    else:
        click.echo(f"stage {stage} complete "
                   f"(checkpoints in {Path(manifest.output_dir) / 'stages'})")


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Zero-shot multiple-choice scoring with visual imagination."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")


def _make_stage_command(stage: str, help_text: str):
    @main.command(name=stage, help=help_text)
    @_stage_options
    def command(manifest_path, backends_path, out, seed, sources, pool,
                top_k, direction):
        _run_stage(stage, manifest_path, backends_path, out, seed, sources,
                   pool, top_k, direction)

    return command


_make_stage_command("imagine", "Retrieve, synthesize, and rank images.")
_make_stage_command("score", "Score all language and vision streams.")
_make_stage_command("fuse", "Fuse language and vision probabilities.")
_make_stage_command("evaluate", "Evaluate all streams and write the report.")
_make_stage_command("run", "Run every stage end to end.")


@main.command()
@click.option("--reports", "report_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="Report JSON files to compare.")
@click.option("--out", required=True, help="Directory for analysis outputs.")
@click.option("--include-incorrect", is_flag=True,
              help="Also write the overlap matrix over errors.")
@click.option("--gain-augmenter", default=None,
              help="Stream whose probabilities are fused into the bases.")
@click.option("--gain-bases", default=None,
              help="Comma-separated base streams for the gain table.")
@click.option("--gain-weight", default=0.5, type=float,
              help="Fusion weight for the gain table.")
@click.option("--sweep-manifest", default=None, type=click.Path(exists=True),
              help="Run manifest for the image-count sweep.")
@click.option("--sweep-backends", default=None, type=click.Path(exists=True),
              help="Backends file for the image-count sweep.")
@click.option("--sweep-counts", default=None,
              help="Comma-separated pool sizes to sweep.")
@click.option("--sweep-top-k", default=None, type=int,
              help="Override how many ranked images are kept per pool.")
def analyze(report_paths, out, include_incorrect, gain_augmenter, gain_bases,
            gain_weight, sweep_manifest, sweep_backends, sweep_counts,
            sweep_top_k) -> None:
    """Compare finished reports: overlaps, gains, baselines, sweeps."""
    reports = [RunReport.load(path) for path in report_paths]
    gain = None
    if gain_augmenter is not None:
        if gain_bases is None:
            raise click.UsageError("--gain-bases is required with --gain-augmenter")
        bases = [b.strip() for b in gain_bases.split(",") if b.strip()]
        gain = (gain_augmenter, bases, gain_weight)
    summary = analysis.analyze(reports, out, include_incorrect=include_incorrect,
                               gain=gain)
    if sweep_manifest is not None:
        if sweep_backends is None or sweep_counts is None:
            raise click.UsageError(
                "--sweep-backends and --sweep-counts are required with "
                "--sweep-manifest")
        counts = [int(c) for c in sweep_counts.split(",") if c.strip()]
        manifest = pipeline.RunManifest.load(sweep_manifest)
        backends = build_backends(load_manifests(sweep_backends))
        analysis.sweep_image_count(manifest, backends, counts,
                                   Path(out) / "image_count_sweep.csv",
                                   top_k=sweep_top_k)
        click.echo(f"sweep written to {Path(out) / 'image_count_sweep.csv'}")
    click.echo(f"analysis written to {out}")
    click.echo(f"streams: {', '.join(summary['streams'])}")


@main.command()
@click.option("--dataset", "dataset_name", required=True,
              type=click.Choice(sorted(datasets.DATASET_KINDS)),
              help="Which dataset format to read.")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Release file (or directory for coarsewsd20).")
@click.option("--output", "output_path", required=True,
              help="Canonical JSON-lines output path.")
@click.option("--split", default="test", help="Split name recorded in ids.")
@click.option("--definitions", default=None, type=click.Path(exists=True),
              help="JSON file of sense definitions (coarsewsd20 only).")
def convert(dataset_name, input_path, output_path, split, definitions) -> None:
    """Convert a dataset release file into canonical instances."""
    if dataset_name == "coarsewsd20":
        defs = None
        if definitions is not None:
            defs = json.loads(Path(definitions).read_text("utf-8"))
        instances = datasets.convert_coarsewsd20(input_path, split, defs)
    elif dataset_name in ("qasc", "arc_easy", "arc_challenge"):
        instances = datasets.convert_arc_style(input_path, dataset_name, split)
    elif dataset_name == "sciq":
        instances = datasets.convert_sciq(input_path, split)
    elif dataset_name == "agnews":
        instances = datasets.convert_agnews(input_path, split)
    elif dataset_name == "situation":
        instances = datasets.convert_situation(input_path, split)
    else:
        manifest = datasets.DatasetManifest(
            name=dataset_name, split=split, path=input_path)
        instances = datasets.load_probe(manifest)
    count = datasets.write_canonical(instances, output_path)
    expected = datasets.EXPECTED_TEST_COUNTS.get(dataset_name)
    note = ""
    if split == "test" and expected is not None and count != expected:
        note = f" (expected {expected} for the published test split)"
    click.echo(f"wrote {count} instances to {output_path}{note}")


def entrypoint() -> None:
    try:
        main(standalone_mode=False)
    except click.ClickException as err:
        err.show()
        sys.exit(err.exit_code)
    except click.Abort:
        sys.exit(1)
    except MindsEyeError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
