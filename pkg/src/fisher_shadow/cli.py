"""``fisher-shadow`` command-line entry point."""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click
from pydantic import ValidationError

from .config import COMMAND_CONFIGS, load_config
from .errors import BudgetExhausted
from .experiments import BUDGET_EXHAUSTED, CONFIG_ERROR, RUNNERS
from .serialization import config_hash, to_jsonable


def _csv_text(rows: list[dict], digest: str) -> str:
    buf = io.StringIO()
    if rows:
        fields = list(rows[0]) + ["config_hash"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(to_jsonable({**row, "config_hash": digest}))
    return buf.getvalue()


def execute(command: str, config_path: str | None, seed: int | None, out: str | None) -> int:
    """Run one command; returns the process exit code."""
    try:
        cfg = load_config(command, config_path, seed)
    except (ValidationError, ValueError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return CONFIG_ERROR
    cfg_json = to_jsonable(cfg.model_dump())
    digest = config_hash(cfg_json)
    try:
        result = RUNNERS[command](cfg)
    except BudgetExhausted as exc:
        click.echo(f"budget exhausted: {exc}", err=True)
        return BUDGET_EXHAUSTED
    except ValueError as exc:
        click.echo(f"config error: {exc}", err=True)
        return CONFIG_ERROR
    status = int(result.pop("status"))
    payload = to_jsonable({"command": command, "config": cfg_json, "config_hash": digest, **result})
    text = json.dumps(payload, indent=2, sort_keys=True)
    table = _csv_text(result.get("rows", []), digest)
    if out:
        folder = Path(out)
        folder.mkdir(parents=True, exist_ok=True)
        (folder / f"{command}.json").write_text(text + "\n")
        (folder / f"{command}.csv").write_text(table)
        click.echo(f"wrote {folder / command}.json and .csv (config {digest[:12]})")
    else:
        click.echo(table, nl=False)
    return status


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("command", type=click.Choice(sorted(COMMAND_CONFIGS)))
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Overrides the config seed.")
@click.option("--out", type=str, default=None, help="Directory for <command>.json and <command>.csv.")
def main(command: str, config_path: str | None, seed: int | None, out: str | None) -> None:
    """Fisher-information experiments for shadow tomography."""
    sys.exit(execute(command, config_path, seed, out))


if __name__ == "__main__":
    main()
