"""Dispatch from a RunConfig to the owning module and assembly of the Report."""

from __future__ import annotations

import math

import numpy as np

from . import control_lr, eigensolve as eig_mod, plate_sim, quasimode, resolvent, specineq, symbol_lab
from .config import RunConfig
from .grid_ops import Grid, assemble_bilaplacian, assemble_dirichlet_laplacian
from .report import Report, metadata

ENERGY_STEP_TOL = 1e-12


class ExperimentError(RuntimeError):
    """A module failed; the message is prefixed with the module name."""


def _operator(cfg: RunConfig):
    g = cfg["grid"]
    grid = Grid(tuple(g["lengths"]), tuple(g["n"]))
    return grid, assemble_bilaplacian(grid, g["bc"])


def _region(cfg: RunConfig) -> specineq.ObservationRegion:
    return specineq.ObservationRegion([tuple(tuple(p) for p in box) for box in cfg["region"]["boxes"]])


def _basis(cfg, op, n_modes, tol=1e-4):
    return eig_mod.eigensolve(op, n_modes, tol, seed=cfg.seed)


def run_eig(cfg: RunConfig, rep: Report) -> None:
    grid, op = _operator(cfg)
    basis = _basis(cfg, op, cfg["eig"]["n_modes"], cfg["eig"]["tol"])
    defects = eig_mod.unique_continuation_probe(basis, assemble_dirichlet_laplacian(grid))
    rep.columns = ["j", "mu", "residual", "laplacian_defect"]
    rep.rows = [[j + 1, p.mu, p.residual, d] for j, (p, d) in enumerate(zip(basis.pairs, defects))]
    rep.footer.append(f"converged {int(basis.converged)} iterations {basis.iterations}")
    if not basis.converged:
        rep.violations.append(f"eigensolve: residual above tol {cfg['eig']['tol']:.3g}")


def run_specineq(cfg: RunConfig, rep: Report) -> None:
    s = cfg["specineq"]
    _, op = _operator(cfg)
    basis = _basis(cfg, op, s["n_modes"])
    scan = specineq.observability_scan(basis, _region(cfg), op, s["precision"], s["min_mode"])
    rep.columns = ["mu", "mu_quarter", "C_obs", "logC"]
    rep.rows = [[m, m ** 0.25, c, math.log(c) if c > 0 and np.isfinite(c) else float("inf")]
                for m, c in scan.samples]
    try:
        fit = specineq.fit_growth(scan.samples)
        fq, fh = fit.fit_quarter, fit.fit_half
        rep.footer.append(f"fit_quarter a={fq.a:.17g} b={fq.b:.17g} r2={fq.r2:.17g}")
        rep.footer.append(f"fit_half a={fh.a:.17g} b={fh.b:.17g} r2={fh.r2:.17g}")
    except ValueError as exc:
        rep.footer.append(f"fit skipped: {exc}")
    rep.footer.append(f"precision_digits {scan.precision_digits} saturated {int(scan.saturated)}")
    if not scan.is_monotone():
        rep.violations.append("specineq: C_obs decreases as the span grows")


def run_resolvent(cfg: RunConfig, rep: Report) -> None:
    r = cfg["resolvent"]
    _, op = _operator(cfg)
    basis = _basis(cfg, op, r["n_modes"])
    if r["localized"]:
        damping = resolvent.DampingProfile.on_region(op, _region(cfg), r["alpha0"])
    else:
        damping = resolvent.DampingProfile.constant(op.n, r["alpha0"])
    gen = resolvent.DampedGenerator(op, damping, mu_max=float(basis.mus[-1]))
    grid = resolvent.resonance_grid(basis.mus, r["alpha0"], gen.sigma_cutoff, r["points"])
    scan = resolvent.scan_and_fit(gen, grid, tol=r["tol"])
    rep.columns = ["sigma", "sqrt_sigma", "norm", "lognorm"]
    rep.rows = [[s, math.sqrt(abs(s)), v, math.log(v)] for s, v in scan.samples]
    rep.footer.append(f"sigma_cutoff {scan.sigma_cutoff:.17g} peaks {len(scan.peaks)}")
    if scan.fit is not None:
        f = scan.fit
        rep.footer.append(f"envelope K0={f.k0:.17g} K1={f.k1:.17g} r2={f.r2:.17g} hull_points={f.n_points}")
    if not np.all(np.isfinite(scan.norms)):
        rep.violations.append("resolvent: non-finite norm on the imaginary axis")


def run_control(cfg: RunConfig, rep: Report) -> None:
    c = cfg["control"]
    _, op = _operator(cfg)
    basis = _basis(cfg, op, c["n_modes"]).truncate(c["n_modes"])
    y0 = np.random.default_rng(cfg.seed).standard_normal(c["n_modes"])
    problem = control_lr.ControlProblem(basis, _region(cfg), c["horizon"], y0, c["tol"],
                                        c["min_stages"], c["max_stages"])
    result = control_lr.lr_synthesize(problem)
    check = control_lr.verify_forward(problem, result)
    rep.columns = ["stage", "mu_cut", "n_modes", "t_start", "t_switch", "t_end",
                   "state_norm", "cost", "worst_cost", "gramian_cond", "flagged"]
    rep.rows = [[s.index, s.mu_cut, s.n_modes, s.t_start, s.t_switch, s.t_end, s.state_norm,
                 s.cost, s.worst_cost, s.gramian_cond, s.flagged] for s in result.stage_log]
    rel = check / result.initial_norm
    rep.footer.append(f"terminal_relative {rel:.17g} synthesis_terminal {result.terminal_norm:.17g}")
    rep.footer.append(f"total_cost {result.cost:.17g} stage_slope {result.stage_slope:.17g}")
    rep.footer += result.notes
    if rel > c["tol"]:
        rep.violations.append(f"control: terminal norm {rel:.3g} |y0| exceeds {c['tol']:.3g} |y0|")


def run_plate(cfg: RunConfig, rep: Report) -> None:
    p = cfg["plate"]
    _, op = _operator(cfg)
    basis = _basis(cfg, op, p["n_modes"])
    coeffs = np.random.default_rng(cfg.seed).standard_normal(p["n_modes"])
    y0 = basis.vectors @ coeffs
    if p["localized"]:
        damping = resolvent.DampingProfile.on_region(op, _region(cfg), p["alpha0"])
    else:
        damping = resolvent.DampingProfile.constant(op.n, p["alpha0"])
    gen = resolvent.DampedGenerator(op, damping)
    state = plate_sim.PlateState(y0, np.zeros(op.n))
    trace, _ = plate_sim.simulate(gen, state, p["dt"], p["n_steps"])
    increase, identity = plate_sim.energy_audit(trace)
    ak = plate_sim.generator_power_norm(gen, state, p["k"])
    dec = plate_sim.decay_report(trace, p["k"], ak)
    rep.columns = ["t", "E", "dissipated", "logE"]
    rep.rows = [[t, e, d, math.log(e) if e > 0 else float("-inf")]
                for t, e, d in zip(trace.t, trace.energy, trace.dissipated)]
    e0 = trace.energy[0]
    rep.footer.append(f"max_step_increase_rel {increase / e0:.17g} identity_residual {identity:.17g}")
    rep.footer.append(f"log_law_C {dec.log_law_constant:.17g} k {dec.k} fitted_rate {dec.fitted_rate:.17g}")
    if increase > ENERGY_STEP_TOL * e0:
        rep.violations.append(f"plate: energy rose by {increase / e0:.3g} E(0) in one step")


def run_symbols(cfg: RunConfig, rep: Report) -> None:
    s = cfg["symbols"]
    metric = np.array(s["metric"], dtype=float) if s["metric"] else None
    cons = symbol_lab.ScanConstraints(d=s["d"], metric=metric, c0=s["c0"], sigma_floor=s["sigma_floor"],
                                      tol=s["tol"], inject_negative_td=s["inject_negative_td"])
    scan = symbol_lab.region_scan(s["n_samples"], cons, seed=cfg.seed)
    rep.columns = ["kind", "name", "value"]
    rep.rows = [["violation", k, scan.violations[k]] for k in sorted(scan.violations)]
    rep.rows += [["constant", k, scan.constants[k]] for k in sorted(scan.constants)]
    for name in sorted(scan.witnesses):
        w = scan.witnesses[name]
        vals = " ".join(f"{x:.17g}" for x in w["sample"])
        rep.rows.append(["witness", name, f"k={w['k']} {vals}"])
    rep.footer += scan.notes
    for k in sorted(scan.violations):
        if scan.violations[k]:
            wit = scan.witnesses.get(k)
            rep.violations.append(f"symbol_lab: {k} failed on {scan.violations[k]} samples; witness {wit}")


def run_quasimode(cfg: RunConfig, rep: Report) -> None:
    q = cfg["quasimode"]
    setup = quasimode.QuasimodeSetup(d=q["d"], half_width=q["half_width"])
    fit = quasimode.quasimode_loss(q["taus"], setup, n_points=q["n_points"], refine_tol=q["refine_tol"])
    alphas = list(fit.ratio_alpha)
    rep.columns = ["tau", "R_P"] + ["R_alpha_" + "".join(map(str, a)) for a in alphas]
    rep.rows = [[t, fit.ratio_p[i]] + [fit.ratio_alpha[a][i] for a in alphas] for i, t in enumerate(fit.taus)]
    rep.footer.append(f"slope_P {fit.slope_p:.17g}")
    for a in alphas:
        rep.footer.append(f"slope_alpha_{''.join(map(str, a))} {fit.slope_alpha[a]:.17g}")
    rep.footer.append(f"norm_limit_gap {fit.norm_gap:.17g} refinement_change {fit.refinement_change:.17g}")
    rep.footer += fit.notes


RUNNERS = {
    "eig": run_eig,
    "specineq": run_specineq,
    "resolvent": run_resolvent,
    "control": run_control,
    "plate": run_plate,
    "symbols": run_symbols,
    "quasimode": run_quasimode,
}

MODULE_OF = {
    "eig": "eigensolve", "specineq": "specineq", "resolvent": "resolvent", "control": "control_lr",
    "plate": "plate_sim", "symbols": "symbol_lab", "quasimode": "quasimode",
}


def run_experiment(cfg: RunConfig) -> Report:
    rep = Report([], header=metadata(cfg.sha256, cfg.experiment, cfg.seed))
    try:
        RUNNERS[cfg.experiment](cfg, rep)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise ExperimentError(f"{MODULE_OF[cfg.experiment]}: {exc}") from exc
    return rep
