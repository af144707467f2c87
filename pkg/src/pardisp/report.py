"""Artifact writers: deterministic CSV, JSON reports, SVG plots, run manifest."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Optional

import numpy as np


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, columns: dict):
    """One row per time node; fixed column order and float formatting, so
    identical runs produce bit-identical files."""
    names = list(columns)
    n = len(columns[names[0]])
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_fmt(columns[name][i]) for name in names))
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()
                if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (str, bool)) or obj is None:
        return obj
    return str(obj)


def write_json(path: str, payload: dict):
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def scenario_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def report_payload(report, scenario=None) -> dict:
    out = {
        "name": report.name,
        "status": report.status,
        "notes": report.notes,
        "bc_residual": report.bc_residual,
        "ic_residual": report.ic_residual,
        "residuals": {k: {"max": float(np.max(v)), "per_time": v}
                      for k, v in report.residuals.items()},
        "iteration_diffs": report.iteration_diffs,
        "cauchy_table": report.cauchy_table,
        "energy": report.energy,
        "diagnostics": {k: v for k, v in report.diagnostics.items()
                        if k != "runs"},
    }
    if scenario is not None:
        out["scenario"] = {"name": scenario.name, "kind": scenario.kind,
                           "alpha": scenario.params.alpha,
                           "T": scenario.params.T,
                           "eps_schedule": scenario.eps_schedule,
                           "seed": scenario.seed}
    return out


def write_plots(out_dir: str, base: str, report, ledger=None) -> list:
    """Vector-graphics summaries; returns the list of files written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    traj = report.trajectory
    if traj is not None:
        fig, ax = plt.subplots(figsize=(7, 4))
        x = traj.grid.x
        n_t = len(traj.times)
        for k in range(0, n_t, max(1, n_t // 8)):
            ax.plot(x, traj.values[k, :, 0], lw=0.9,
                    label=f"t={traj.times[k]:.3f}")
        ax.set_xlabel("x")
        ax.set_ylabel("u[0]")
        ax.legend(fontsize=7)
        ax.set_title("solution waterfall (component 0)")
        p = os.path.join(out_dir, f"{base}_waterfall.svg")
        fig.savefig(p)
        plt.close(fig)
        written.append(p)
    if report.cauchy_table:
        fig, ax = plt.subplots(figsize=(5, 4))
        eps = [row[0] for row in report.cauchy_table]
        diffs = [row[2] for row in report.cauchy_table]
        ax.loglog(eps, diffs, "o-", label="||u^eps - u^(eps/2)||")
        ax.loglog(eps, [d if d > 0 else np.nan for d in eps], "--",
                  label="slope 1")
        ax.set_xlabel("eps")
        ax.legend()
        ax.set_title("Cauchy rate")
        p = os.path.join(out_dir, f"{base}_cauchy.svg")
        fig.savefig(p)
        plt.close(fig)
        written.append(p)
    flat = report.energy.get("uniform_eps") if report.energy else None
    if flat and flat.get("included"):
        fig, ax = plt.subplots(figsize=(5, 4))
        e = [r[0] for r in flat["included"]]
        c = [r[1] for r in flat["included"]]
        ax.semilogx(e, c, "s-")
        ax.set_xlabel("eps")
        ax.set_ylabel("fitted C")
        ax.set_title("uniform-estimate constant vs eps")
        p = os.path.join(out_dir, f"{base}_flatness.svg")
        fig.savefig(p)
        plt.close(fig)
        written.append(p)
    return written
