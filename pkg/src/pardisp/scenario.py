"""Scenario files: schema-validated YAML describing one solve or check suite.

Sections (all top-level keys are validated; unknown keys are rejected):

  problem:    kind (lp1|lpp1|lpd1|lpd2), alpha, T, epsilon or eps_schedule,
              boundary vector e (lpd2 only)
  operator:   kind (vortex|delta|skew|zero|explicit), delta, w preset, seed,
              a0/a1/a2 expression matrices (explicit)
  data:       u0/f/w as presets, sympy expression lists, or a manufactured
              block {u_star: [...], equation: tag}; random_compatible block
  grid:       L, n_points, n_times
  tolerances: tol_res, tol_iter, tol_compat, alias_tol, max_iter, compat_order
  outputs:    csv, json, plots, checks (verify suites), derivative_orders
  seed:       integer, default 0
  name:       free label
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp
import yaml

from .core import X, T, Grid, OperatorCoeffs, Params, make_grid, vortex_operator
from .data import (DataSet, VectorFunc, manufactured_forcing, preset_u0,
                   preset_w, random_compatible_dataset, skew_operator)
from .solver import SolverOptions


class ScenarioError(ValueError):
    """Schema violation in a scenario file."""


_SECTIONS = {
    "problem": {"kind", "alpha", "T", "epsilon", "eps_schedule", "e"},
    "operator": {"kind", "delta", "w", "seed", "m", "a0", "a1", "a2"},
    "data": {"u0", "f", "w", "manufactured", "random_compatible", "m"},
    "grid": {"L", "n_points", "n_times"},
    "tolerances": {"tol_res", "tol_iter", "tol_compat", "alias_tol",
                   "max_iter", "compat_order", "jet_order", "pad_factor"},
    "outputs": {"csv", "json", "plots", "checks", "derivative_orders"},
}
_TOP = set(_SECTIONS) | {"seed", "name"}
_KINDS = {"lp1", "lpp1", "lpd1", "lpd2"}


@dataclass
class Scenario:
    name: str
    kind: str
    params: Params
    eps_schedule: list
    grid: Grid
    n_times: int
    data: DataSet
    operator: Optional[OperatorCoeffs]
    options: SolverOptions
    outputs: dict
    seed: int
    raw: dict = field(default_factory=dict)


def _check_keys(section: str, table: dict):
    if not isinstance(table, dict):
        raise ScenarioError(f"[{section}] must be a mapping")
    unknown = set(table) - _SECTIONS[section]
    if unknown:
        raise ScenarioError(f"unknown keys in [{section}]: {sorted(unknown)}")


def _parse_exprs(spec, m: int) -> VectorFunc:
    """A list of sympy expression strings in x and t."""
    if isinstance(spec, str):
        spec = [spec]
    if len(spec) != m:
        raise ScenarioError(f"expected {m} component expressions, got {len(spec)}")
    local = {"x": X, "t": T}
    try:
        exprs = [sp.sympify(s, locals=local) for s in spec]
    except (sp.SympifyError, TypeError) as exc:
        raise ScenarioError(f"bad expression: {exc}") from exc
    return VectorFunc(exprs)


def _build_field(spec, m: int, role: str, rng) -> VectorFunc:
    if spec is None or spec == "zero":
        return VectorFunc.zero(m)
    if isinstance(spec, str):
        if role == "w":
            return preset_w(spec)
        return preset_u0(spec, m, rng)
    if isinstance(spec, dict):
        if "preset" in spec:
            return preset_w(spec["preset"]) if role == "w" \
                else preset_u0(spec["preset"], m, rng)
        if "expr" in spec:
            return _parse_exprs(spec["expr"], 3 if role == "w" else m)
        raise ScenarioError(f"data.{role} needs 'preset' or 'expr'")
    if isinstance(spec, list):
        return _parse_exprs(spec, 3 if role == "w" else m)
    raise ScenarioError(f"cannot interpret data.{role}")


def _build_operator(table: dict, alpha: float, m: int) -> OperatorCoeffs:
    _check_keys("operator", table)
    kind = table.get("kind", "vortex")
    delta = float(table.get("delta", 1.0))
    if kind == "vortex":
        w = preset_w(table.get("w", "tilted"))
        return vortex_operator(w.exprs, alpha, delta)
    if kind == "delta":
        return OperatorCoeffs.identity_parabolic(m, delta)
    if kind == "zero":
        return OperatorCoeffs.zero(m)
    if kind == "skew":
        return skew_operator(m, delta, int(table.get("seed", 0)))
    if kind == "explicit":
        mats = []
        for key in ("a0", "a1", "a2"):
            rows = table.get(key)
            if rows is None:
                mats.append(sp.zeros(m, m))
                continue
            local = {"x": X, "t": T}
            mats.append(sp.Matrix([[sp.sympify(e, locals=local) for e in row]
                                   for row in rows]))
        return OperatorCoeffs(m, *mats, name="explicit")
    raise ScenarioError(f"unknown operator kind '{kind}'")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"malformed YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    unknown = set(raw) - _TOP
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown)}")
    for sec in ("problem", "grid"):
        if sec not in raw:
            raise ScenarioError(f"missing required section [{sec}]")

    prob = raw["problem"]
    _check_keys("problem", prob)
    kind = prob.get("kind", "lp1")
    if kind not in _KINDS:
        raise ScenarioError(f"unknown problem kind '{kind}'")
    alpha = float(prob.get("alpha", -1.0))
    if alpha == 0:
        raise ScenarioError("alpha must be nonzero")
    if kind in ("lp1", "lpp1", "lpd1") and alpha >= 0:
        raise ScenarioError(f"{kind} requires alpha < 0")
    if kind == "lpd2" and alpha <= 0:
        raise ScenarioError("lpd2 requires alpha > 0")
    T_hor = float(prob.get("T", 1.0))
    if "eps_schedule" in prob:
        eps_schedule = [float(e) for e in prob["eps_schedule"]]
    elif "epsilon" in prob:
        eps_schedule = [float(prob["epsilon"])]
    else:
        eps_schedule = [2.0 ** -k for k in range(3, 10)]
    if any(e <= 0 for e in eps_schedule):
        raise ScenarioError("epsilon values must be positive")

    gtab = raw["grid"]
    _check_keys("grid", gtab)
    try:
        grid = make_grid(float(gtab.get("L", 30.0)), int(gtab.get("n_points", 513)))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    n_times = int(gtab.get("n_times", 128))
    if n_times < 8:
        raise ScenarioError("n_times too small")

    seed = int(raw.get("seed", 0))
    rng = np.random.default_rng(seed)

    dtab = raw.get("data", {})
    _check_keys("data", dtab)
    m = int(dtab.get("m", raw.get("operator", {}).get("m", 3)))

    op = None
    if "operator" in raw:
        op = _build_operator(raw["operator"], alpha, m)
        m = op.m

    tol = raw.get("tolerances", {})
    _check_keys("tolerances", tol)
    opts = SolverOptions()
    if "tol_res" in tol:
        opts.tol_res = float(tol["tol_res"])
    if "tol_iter" in tol:
        opts.tol_iter = float(tol["tol_iter"])
    if "alias_tol" in tol:
        opts.alias_tol = float(tol["alias_tol"])
    if "max_iter" in tol:
        opts.max_iter = int(tol["max_iter"])
    if "compat_order" in tol:
        opts.compat_order = int(tol["compat_order"])
    if "jet_order" in tol:
        opts.jet_order = int(tol["jet_order"])
    if "pad_factor" in tol:
        opts.pad_factor = int(tol["pad_factor"])

    e_vec = None
    if "e" in prob and prob["e"] is not None:
        e_vec = np.asarray([float(v) for v in prob["e"]])

    eps0 = eps_schedule[0]
    params = Params(alpha=alpha, eps=eps0, delta=getattr(op, "_delta", 1.0)
                    if op else 1.0, T=T_hor, m=m, e=e_vec)
    if "operator" in raw:
        params.delta = float(raw["operator"].get("delta", 1.0))

    if "manufactured" in dtab:
        mtab = dtab["manufactured"]
        u_star = _parse_exprs(mtab["u_star"], m)
        tag = mtab.get("equation", "lp1" if kind == "lp1" else
                       ("nr+" if kind == "lpd2" else "lpp1"))
        forcing = manufactured_forcing(u_star, tag, alpha, eps0, op)
        data = DataSet(m, VectorFunc(u_star.exprs.subs(T, 0)), forcing,
                       _build_field(dtab.get("w"), m, "w", rng) if "w" in dtab else None,
                       name="manufactured")
        data.u_star = u_star
    elif "random_compatible" in dtab:
        rtab = dtab["random_compatible"]
        if op is None:
            raise ScenarioError("random_compatible data needs an operator")
        data = random_compatible_dataset(m, op, alpha,
                                         int(rtab.get("order", opts.compat_order)),
                                         int(rtab.get("seed", seed)))
    else:
        u0 = _build_field(dtab.get("u0", "zero"), m, "u0", rng)
        f = _build_field(dtab.get("f", "zero"), m, "f", rng)
        w = _build_field(dtab["w"], m, "w", rng) if "w" in dtab else None
        data = DataSet(m, u0, f, w)

    outputs = dict(raw.get("outputs", {}))
    _check_keys("outputs", outputs)
    outputs.setdefault("csv", True)
    outputs.setdefault("json", True)
    outputs.setdefault("plots", False)
    outputs.setdefault("checks", ["root_lemma", "kernel_contraction"])

    return Scenario(name=str(raw.get("name", "scenario")), kind=kind,
                    params=params, eps_schedule=eps_schedule, grid=grid,
                    n_times=n_times, data=data, operator=op, options=opts,
                    outputs=outputs, seed=seed, raw=raw)
