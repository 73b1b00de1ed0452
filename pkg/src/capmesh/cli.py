"""Operator CLI: boot the stack, seed demo fixtures, replay scenarios, and
normalize transcripts for golden comparison."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from . import harness
from .config import DEMO_DIR, load_config
from .errors import CapmeshError


@click.group()
def main() -> None:
    """Capability-collaboration agent runtime."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed-dir", type=click.Path(exists=True), default=str(DEMO_DIR))
@click.option("--no-seed", is_flag=True, help="Boot without loading fixtures.")
def boot(config_path: str | None, seed_dir: str, no_seed: bool) -> None:
    """Boot all capabilities and serve them over HTTP until interrupted."""
    from .http_api import APP_PORT_OFFSETS, serve

    config = load_config(config_path)
    stack = harness.boot(config)
    if not no_seed:
        counts = harness.seed(stack, seed_dir)
        click.echo(f"seeded: {json.dumps(counts)}")
    stack.broker.start_background()
    servers = serve(stack, host=config.http.host, base_port=config.http.base_port)
    for name, offset in APP_PORT_OFFSETS.items():
        click.echo(f"{name}: http://{config.http.host}:{config.http.base_port + offset}")
    click.echo("stack is up; Ctrl-C to stop")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        for server in servers:
            server.should_exit = True
        stack.shutdown()


@main.command()
@click.argument("fixture_dir", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def seed(fixture_dir: str, config_path: str | None) -> None:
    """Validate and load a fixture directory into a fresh stack."""
    config = load_config(config_path)
    stack = harness.boot(config)
    try:
        counts = harness.seed(stack, fixture_dir)
    except CapmeshError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(counts))
    stack.shutdown()


@main.command()
@click.argument("number", type=click.IntRange(1, 3))
@click.option("--golden", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed-dir", type=click.Path(exists=True), default=str(DEMO_DIR))
@click.option("--raw", is_flag=True, help="Print the transcript without normalizing.")
def scenario(
    number: int,
    golden: str | None,
    config_path: str | None,
    seed_dir: str,
    raw: bool,
) -> None:
    """Replay one demo scenario against a freshly booted and seeded stack.

    Exit code 0 iff the normalized transcript matches the golden file."""
    config = load_config(config_path)
    stack = harness.boot(config)
    harness.seed(stack, seed_dir)
    try:
        transcript = harness.run_scenario(stack, number)
    finally:
        stack.shutdown()
    shown = transcript if raw else harness.normalize_transcript(transcript)
    click.echo(json.dumps(shown, indent=2))
    golden_file = Path(golden) if golden else harness.golden_path(number)
    divergence = harness.compare_to_golden(transcript, golden_file)
    if divergence:
        click.echo(f"DIVERGES from {golden_file}: {divergence}", err=True)
        sys.exit(1)
    click.echo(f"matches golden {golden_file}", err=True)


@main.command()
@click.option("--normalize", is_flag=True, default=True)
@click.option("--in", "input_path", type=click.Path(exists=True), default=None)
def transcript(normalize: bool, input_path: str | None) -> None:
    """Normalize a transcript JSON (from --in or stdin) for golden diffing."""
    raw = (
        Path(input_path).read_text(encoding="utf-8")
        if input_path
        else sys.stdin.read()
    )
    doc = json.loads(raw)
    if normalize:
        doc = harness.normalize_transcript(doc)
    click.echo(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
