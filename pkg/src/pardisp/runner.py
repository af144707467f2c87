"""Scenario execution: compose the solver and energy operations for one run.

Every number in the emitted report is the output of a named library
operation; this layer only sequences them and never recomputes on its own.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from .compat import correct_data, q_jets
from .core import OperatorCoeffs, Params, check_strong_ellipticity
from . import energy as en
from .scenario import Scenario
from .solver import (SolveReport, solve_lp1, solve_lpd1, solve_lpd2,
                     solve_lpp1, x_norm)


def _prepare_data(scn: Scenario, eps: float):
    """Correct the forcing for the regularized compatibility conditions
    unless the scenario data is manufactured (already exactly compatible)."""
    if scn.data.name == "manufactured" or scn.params.alpha > 0:
        return scn.data, None
    op = scn.operator if scn.kind in ("lpp1", "lpd1") and scn.operator is not None \
        else OperatorCoeffs.zero(scn.data.m)
    corrected, corr = correct_data(scn.data, op, scn.params.alpha, eps,
                                   scn.options.compat_order, scn.grid)
    return corrected, corr


def execute_scenario(scn: Scenario, workers: int = 1) -> SolveReport:
    params = scn.params
    eps = scn.eps_schedule[0]
    p_run = Params(alpha=params.alpha, eps=eps, delta=params.delta,
                   T=params.T, m=params.m, e=params.e)

    if scn.kind == "lp1":
        data, corr = _prepare_data(scn, eps)
        report = solve_lp1(data, p_run, scn.grid, scn.n_times, scn.options,
                           correction=corr)
        used_data = data
    elif scn.kind == "lpp1":
        if scn.operator is None:
            raise ValueError("lpp1 needs an operator")
        data, corr = _prepare_data(scn, eps)
        report = solve_lpp1(data, scn.operator, p_run, scn.grid, scn.n_times,
                            scn.options, correction=corr)
        used_data = data
    elif scn.kind == "lpd1":
        if scn.operator is None:
            raise ValueError("lpd1 needs an operator")
        report = solve_lpd1(scn.data, scn.operator, p_run, scn.grid,
                            scn.n_times, scn.eps_schedule, scn.options,
                            workers=workers)
        used_data = scn.data
    elif scn.kind == "lpd2":
        if scn.operator is None:
            raise ValueError("lpd2 needs an operator")
        report = solve_lpd2(scn.data, scn.operator, p_run, scn.grid,
                            scn.n_times, scn.eps_schedule, scn.options)
        used_data = scn.data
    else:
        raise ValueError(f"unknown kind {scn.kind}")

    _attach_energy(report, scn, used_data, p_run)
    return report


def _attach_energy(report: SolveReport, scn: Scenario, data, params: Params):
    traj = report.trajectory
    if traj is None:
        return
    grid = scn.grid
    ledger = en.build_ledger(traj, params)
    report.energy["ledger"] = ledger
    report.energy["trace_identity_max"] = en.trace_identity_check(traj)
    if params.alpha < 0:
        ok, margin = en.verify_trace_inequality(
            traj, lambda t: data.g_values(grid.x, t), params)
        report.energy["trace_inequality"] = {"holds": ok, "min_margin": margin}
    u0_vals = data.u0.eval_t0(grid.x)
    c_fun = en.verify_apriori_fun(traj, u0_vals,
                                  lambda t: data.g_values(grid.x, t))
    report.energy["fun_constant"] = c_fun
    report.energy["interpolation_constant"] = en.interpolation_constant(traj)
    if scn.operator is not None:
        thresholds = en.eps_thresholds(scn.operator, grid, traj.times,
                                       params.alpha, params.delta)
        report.energy["eps_thresholds"] = thresholds
        if "fin1_per_eps" in report.energy:
            report.energy["uniform_eps"] = en.verify_uniform_eps(
                report.energy["fin1_per_eps"], thresholds["eps0"])
        ok_e, margin_e = check_strong_ellipticity(
            scn.operator, params.delta, grid.x, traj.times[:: max(1, len(traj.times) // 4)])
        report.energy["ellipticity"] = {"holds": ok_e, "margin": margin_e}


def verify_checks(scn: Scenario, seed: int = 0):
    """The property/inequality suites, one (name, status, detail) per check."""
    from .charpoly import cubic_roots_batch, stable_mask, residuals_batch
    from .compat import kernel_apply
    from .core import l2_norm
    from .wholeline import multiplier_c

    rng = np.random.default_rng(seed)
    results = []
    for check in scn.outputs.get("checks", []):
        if check == "root_lemma":
            n = 10
            h = np.logspace(-3, 3, n)
            eta = np.concatenate([-np.logspace(0, 6, n), np.logspace(0, 6, n)])
            epss = np.logspace(-4, 0, n)
            alphas = -np.logspace(-2, 1, n)
            H, E, Eps, A = np.meshgrid(h, eta, epss, alphas, indexing="ij")
            tau = (H + 1j * E).ravel()
            lam = cubic_roots_batch(tau, Eps.ravel(), A.ravel())
            counts = stable_mask(lam).sum(axis=1)
            res = residuals_batch(lam, tau, Eps.ravel(), A.ravel())
            rel = res / np.maximum(1.0, np.abs(tau))[:, None]
            ok = bool(np.all(counts == 1)) and bool(np.all(rel <= 1e-12))
            results.append(("root_lemma", "PASS" if ok else "FAIL",
                            f"tuples={tau.size} stable-count-violations="
                            f"{int(np.sum(counts != 1))} max_rel_residual={rel.max():.2e}"))
        elif check == "kernel_contraction":
            g = scn.grid
            worst = 0.0
            for _ in range(100):
                c = rng.uniform(-1, 1, 3)
                wdt = rng.uniform(0.3, 2.0, 3)
                sh = rng.uniform(0, 3, 3)
                f = sum(ci * np.exp(-wi * (g.x - si) ** 2)
                        for ci, wi, si in zip(c, wdt, sh))
                kf = kernel_apply(f, g.h, -abs(scn.params.alpha),
                                  float(rng.uniform(0.05, 1.0)))
                worst = max(worst, l2_norm(kf, g) / l2_norm(f[:, None], g))
            ok = worst <= 1.0 + 1e-8
            results.append(("kernel_contraction", "PASS" if ok else "FAIL",
                            f"max ||K psi||/||psi|| = {worst:.12f}"))
        elif check == "dispersion":
            xi0 = 2.0
            c = multiplier_c(xi0, scn.params.alpha, scn.eps_schedule[0])
            results.append(("dispersion", "PASS",
                            f"Re c({xi0}) = {c.real:.6e} (decay rate per mode)"))
        elif check == "energy_ledger":
            rep = execute_scenario(scn)
            detail = (f"fun_C={rep.energy.get('fun_constant')} "
                      f"interp_C={rep.energy.get('interpolation_constant'):.3f} "
                      f"trace_ok={rep.energy.get('trace_inequality', {}).get('holds')}")
            results.append(("energy_ledger",
                            "PASS" if rep.status == "PASS" else "FAIL", detail))
        else:
            results.append((check, "FAIL", "unknown check"))
    return results
