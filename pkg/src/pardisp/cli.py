"""Command-line surface: `pardisp run` and `pardisp verify`.

Exit codes: 0 success, 2 scenario/schema violation, 3 solver FAILED.
"""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from . import __version__
from .report import (report_payload, scenario_hash, write_csv, write_json,
                     write_plots)
from .runner import execute_scenario, verify_checks
from .scenario import Scenario, ScenarioError, load_scenario


@click.group()
def main():
    """Half-line parabolic-dispersive solver and verification suites."""


def _load(scenario_path: str, seed) -> Scenario:
    try:
        scn = load_scenario(scenario_path)
    except (ScenarioError, OSError) as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(2)
    if seed is not None:
        scn.seed = int(seed)
    return scn


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=False), help="scenario YAML file")
@click.option("--out", "out_dir", default="out", show_default=True,
              type=click.Path(), help="output directory")
@click.option("--threads", default=1, show_default=True, type=int)
@click.option("--seed", default=None, type=int,
              help="override the scenario seed")
def run(scenario_path, out_dir, threads, seed):
    """Execute the scenario's solve and write CSV/JSON artifacts."""
    scn = _load(scenario_path, seed)
    report = execute_scenario(scn, workers=threads)

    os.makedirs(out_dir, exist_ok=True)
    base = scn.name.replace(" ", "_")
    artifacts = {}

    if scn.outputs.get("csv", True) and "ledger" in report.energy:
        csv_path = os.path.join(out_dir, f"{base}.csv")
        write_csv(csv_path, report.energy["ledger"].as_columns())
        artifacts["csv"] = csv_path
    if scn.outputs.get("json", True):
        json_path = os.path.join(out_dir, f"{base}.json")
        payload = report_payload(report, scn)
        payload["energy"] = {k: v for k, v in payload["energy"].items()
                             if k != "ledger"}
        write_json(json_path, payload)
        artifacts["json"] = json_path
    if scn.outputs.get("plots", False):
        artifacts["plots"] = write_plots(out_dir, base, report)

    manifest = {
        "scenario_hash": scenario_hash(scenario_path),
        "code_version": __version__,
        "artifacts": artifacts,
        "status": report.status,
        "notes": report.notes,
    }
    write_json(os.path.join(out_dir, f"{base}_manifest.json"), manifest)

    click.echo(f"{scn.name}: {report.status}")
    for note in report.notes:
        click.echo(f"  note: {note}")
    for tag, res in report.residuals.items():
        click.echo(f"  residual[{tag}] max = {float(np.max(res)):.3e}")
    if report.status != "PASS":
        sys.exit(3)


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=False))
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="unused for verify; accepted for symmetry")
@click.option("--threads", default=1, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
def verify(scenario_path, out_dir, threads, seed):
    """Run only the property/inequality suites, one line per check."""
    scn = _load(scenario_path, seed)
    results = verify_checks(scn, seed=scn.seed)
    failed = False
    for name, status, detail in results:
        click.echo(f"{status:4s} {name}: {detail}")
        failed = failed or status != "PASS"
    if failed:
        sys.exit(3)


if __name__ == "__main__":
    main()
