"""Command-line interface for the sidecar."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import checkpoints, clientfile, conformance, smoke
from .config import load_config
from .errors import SidecarError


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Serve, probe, and smoke-test wire-protocol model endpoints."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command("make-checkpoints")
@click.option("--dir", "directory", required=True,
              help="Root directory for the checkpoint set.")
@click.option("--seed", default=7, type=int,
              help="Weight seed; same seed, same checkpoints.")
def make_checkpoints(directory: str, seed: int) -> None:
    """Build the desk-scale checkpoint set plus a ready sidecar.json."""
    params = checkpoints.build_all(directory, seed)
    for name, count in sorted(params.items()):
        click.echo(f"{name}: {count} parameters")
    click.echo(f"wrote {Path(directory) / 'sidecar.json'}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Path to sidecar.json.")
def serve(config_path: str) -> None:
    """Load, contract-probe, and serve every configured model."""
    from .server import serve as run_server
    run_server(load_config(config_path))


@main.command("conformance")
@click.option("--url", required=True, help="Base URL of the running server.")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Path to sidecar.json.")
@click.option("--model", "only_model", default=None,
              help="Check a single model instead of all of them.")
def conformance_command(url: str, config_path: str, only_model: str | None) -> None:
    """Run the black-box contract checks against a live server."""
    config = load_config(config_path)
    names = [only_model] if only_model else sorted(config.models)
    failed = 0
    for name in names:
        entry = config.models.get(name)
        if entry is None:
            raise SidecarError(f"config declares no model {name!r}")
        results = conformance.run_conformance(
            url, name, entry.kind, space_id=entry.space_id, dim=entry.dim)
        for line in conformance.format_lines(name, results):
            click.echo(line)
        failed += sum(1 for result in results if not result.ok)
    if failed:
        raise SidecarError(f"{failed} conformance check(s) failed")
    click.echo("all conformance checks passed")


@main.command("emit-backends")
@click.option("--checkpoints", "checkpoint_root", required=True,
              type=click.Path(exists=True),
              help="Checkpoint root produced by make-checkpoints.")
@click.option("--url", required=True, help="Base URL the server listens on.")
@click.option("--out", "out_path", required=True,
              help="Where to write the client backends file.")
@click.option("--mock-search-seed", default=None, type=int,
              help="Also declare the in-process mock as search provider.")
def emit_backends_command(checkpoint_root: str, url: str, out_path: str,
                          mock_search_seed: int | None) -> None:
    """Write a client backends.json for a sidecar at --url."""
    payload = clientfile.emit_backends(checkpoint_root, url,
                                       mock_search_seed=mock_search_seed)
    Path(out_path).write_text(json.dumps(payload, indent=2) + "\n", "utf-8")
    click.echo(f"wrote {len(payload['backends'])} entries to {out_path}")


@main.command("smoke")
@click.option("--raw", "raw_dir", required=True, type=click.Path(exists=True),
              help="Word-sense release directory (one folder per word).")
@click.option("--backends", "backends_path", required=True,
              type=click.Path(exists=True), help="Client backends file.")
@click.option("--out", "out_dir", required=True,
              help="Working directory for the smoke run.")
@click.option("--lm", default=None, help="Which lm_prompt backend to score with.")
@click.option("--limit", default=200, type=int,
              help="Instance budget for the subsample.")
@click.option("--seed", default=0, type=int, help="Run and subsample seed.")
@click.option("--split", default="test", help="Release split to convert.")
@click.option("--definitions", default=None, type=click.Path(exists=True),
              help="Optional sense-definition JSON for imagination texts.")
def smoke_command(raw_dir: str, backends_path: str, out_dir: str,
                  lm: str | None, limit: int, seed: int, split: str,
                  definitions: str | None) -> None:
    """Run the directional fused-vs-text comparison end to end."""
    verdict = smoke.run_smoke(raw_dir, backends_path, out_dir, lm=lm,
                              limit=limit, seed=seed, split=split,
                              definitions=definitions)
    click.echo(json.dumps(verdict, indent=2))
    status = "PASS" if verdict["passed"] else "FAIL"
    click.echo(f"[SMOKE] fused {verdict['fused_word_f1']:.2f} vs "
               f"text {verdict['text_word_f1']:.2f}: {status}")
    if not verdict["passed"]:
        raise SidecarError("fused stream scored below the text-only stream")


def entrypoint() -> None:
    try:
        main(standalone_mode=False)
    except click.ClickException as err:
        err.show()
        sys.exit(err.exit_code)
    except click.Abort:
        sys.exit(130)
    except SidecarError as err:
        print(f"error: {err}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
