"""Operation entry points: config mapping in, named CSV payloads out.

Each op takes the flat config mapping (the parsed `key = value` file) plus an
optional seed override and returns (files, summary): files maps output names
to text content, summary holds the headline numbers. The service exposes
these verbatim; the CLI writes the files wherever the caller asked.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from dataclasses import replace

from . import harness, lyapunov, randdemod
from .configfile import (
    get_float,
    get_float_list,
    get_int,
    get_int_list,
    get_str,
    render_config,
)
from .harness import Scenario, derive_seed
from .modulation import MeasurementRecord, make_problem, measure
from .signals import SparseCoeffs, gen_sparse_coeffs, relative_error, support_metrics
from .solver import irnls_solve
from .systems import builtin, burn_in_state, integrate


def _resolved_echo(scenario: Scenario, extra: dict) -> str:
    echo = scenario.to_mapping()
    echo.update(extra)
    return render_config(echo)


def op_measure(cfg: dict[str, str], seed: Optional[int] = None):
    """Generate a seeded sparse signal and measure it."""
    scenario = Scenario.from_mapping(cfg)
    trial_seed = seed if seed is not None else derive_seed(scenario.base_seed, 0)
    rng_signal = np.random.default_rng(derive_seed(trial_seed, 1))
    coeffs = gen_sparse_coeffs(scenario.basis, scenario.K, scenario.dist,
                               scenario.amp_limit, rng_signal)
    if scenario.system in harness.CHAOTIC_SYSTEMS:
        config = scenario.modulation_config()
        record, _traj = measure(config, (coeffs, scenario.basis),
                                seed=derive_seed(trial_seed, 2))
    else:
        rd_config = randdemod.RDConfig(
            basis=scenario.basis, T=scenario.T, chip_rate=scenario.chip_rate,
            seed=derive_seed(trial_seed, 2))
        y = randdemod.build_rd_matrix(rd_config) @ np.asarray(coeffs)
        record = MeasurementRecord(
            z=y, T=scenario.T, obs_index=0,
            config_fingerprint=f"rdemod|chip_rate={scenario.chip_rate:g}|T={scenario.T:g}",
            seed=rd_config.seed, system_name="rdemod")
    files = {
        "measurements.csv": record.to_csv(),
        "true_coeffs.csv": coeffs.to_csv(),
        "config_echo.txt": _resolved_echo(scenario, {"trial_seed": trial_seed}),
    }
    summary = {
        "system": scenario.system, "M": record.M, "T": scenario.T,
        "K": scenario.K, "seed": trial_seed,
    }
    return files, summary


def _solve_from_record(scenario: Scenario, record: MeasurementRecord,
                       trial_seed: int):
    if scenario.system in harness.CHAOTIC_SYSTEMS:
        config = scenario.modulation_config()
        problem = make_problem(config, record, scenario.basis)
        rng_solver = np.random.default_rng(derive_seed(trial_seed, 3))
        return irnls_solve(problem, scenario.solver_config(), rng_solver)
    if record.seed is None:
        raise ValueError("rdemod reconstruction needs the chip seed in the record")
    rd_config = randdemod.RDConfig(
        basis=scenario.basis, T=scenario.T, chip_rate=scenario.chip_rate,
        seed=record.seed)
    phi = randdemod.build_rd_matrix(rd_config)
    return randdemod.irls_solve(phi, record.z, scenario.solver_config())


def op_reconstruct(cfg: dict[str, str], seed: Optional[int] = None,
                   measurements_csv: Optional[str] = None,
                   truth_csv: Optional[str] = None):
    """Reconstruct coefficients, either from a posted measurement record or
    from a fully seeded generate-measure-reconstruct trial."""
    scenario = Scenario.from_mapping(cfg)
    trial_seed = seed if seed is not None else derive_seed(scenario.base_seed, 0)
    files = {}
    truth = SparseCoeffs.from_csv(truth_csv) if truth_csv else None
    if measurements_csv is not None:
        record = MeasurementRecord.from_csv(measurements_csv)
    else:
        meas_files, _ = op_measure(cfg, trial_seed)
        record = MeasurementRecord.from_csv(meas_files["measurements.csv"])
        truth = SparseCoeffs.from_csv(meas_files["true_coeffs.csv"])
        files["measurements.csv"] = meas_files["measurements.csv"]
        files["true_coeffs.csv"] = meas_files["true_coeffs.csv"]

    a_hat, diag = _solve_from_record(scenario, record, trial_seed)
    est = SparseCoeffs(a_hat)
    files["estimate.csv"] = est.to_csv()
    files["diagnostics.csv"] = diag.to_csv()
    files["config_echo.txt"] = _resolved_echo(scenario, {"trial_seed": trial_seed})
    summary = {
        "system": scenario.system, "M": record.M, "K": scenario.K,
        "outer_iters": diag.n_outer, "converged": diag.converged,
        "seed": trial_seed,
    }
    if truth is not None:
        precision, recall = support_metrics(est, truth)
        summary.update({
            "err": relative_error(est, truth),
            "support_precision": precision,
            "support_recall": recall,
        })
    return files, summary


def op_slle(cfg: dict[str, str], seed: Optional[int] = None):
    """Threshold scan of the largest supreme local Lyapunov exponent."""
    system = get_str(cfg, "system", "lorenz", choices=set(harness.CHAOTIC_SYSTEMS))
    obs_index = get_int(cfg, "obs_index", 2)
    t_grid = get_float_list(cfg, "T_grid", [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4])
    t_l = get_float(cfg, "T_L", 50.0)
    n_init = get_int(cfg, "n_init", 100)
    h = get_float(cfg, "h", 1.0e-3)
    base_seed = seed if seed is not None else get_int(cfg, "base_seed", 20240901)
    sys = builtin(system)

    u = None
    k_sparsity = get_int(cfg, "K", 0)
    if k_sparsity > 0:  # modulated scan: include a seeded signal
        scenario = Scenario.from_mapping(cfg)
        rng_signal = np.random.default_rng(derive_seed(base_seed, 1))
        coeffs = gen_sparse_coeffs(scenario.basis, scenario.K, scenario.dist,
                                   scenario.amp_limit, rng_signal)
        u = (coeffs, scenario.basis)

    scan = lyapunov.threshold_scan(
        sys, obs_index, t_grid, T_L=t_l, n_init=n_init,
        rng=np.random.default_rng(derive_seed(base_seed, 2)), h=h, u=u,
        mod_row=get_int(cfg, "mod_row", 2), mod_state=get_int(cfg, "mod_state", 1))
    lo, hi = scan.crossing
    files = {
        "slle_scan.csv": scan.to_csv(),
        "config_echo.txt": render_config({
            "system": system, "obs_index": obs_index,
            "T_grid": ",".join(repr(t) for t in scan.T_grid),
            "T_L": t_l, "n_init": n_init, "h": h, "K": k_sparsity,
            "base_seed": base_seed,
        }),
    }
    summary = {
        "system": system, "obs_index": obs_index,
        "crossing_lo": lo, "crossing_hi": hi,
        "largest_at_min_T": float(scan.largest[0]),
        "largest_at_max_T": float(scan.largest[-1]),
    }
    return files, summary


def op_bandwidth(cfg: dict[str, str], seed: Optional[int] = None):
    """98%-energy bandwidth of one state of an autonomous built-in system."""
    system = get_str(cfg, "system", "lorenz", choices=set(harness.CHAOTIC_SYSTEMS))
    state_index = get_int(cfg, "state_index", 1)
    span = get_float(cfg, "span", 200.0)
    burn_in = get_float(cfg, "burn_in", 20.0)
    h = get_float(cfg, "h", 1.0e-3)
    base_seed = seed if seed is not None else get_int(cfg, "base_seed", 20240901)
    sys = builtin(system)
    rng = np.random.default_rng(base_seed)
    extra = round(float(rng.uniform(0.0, 5.0)) / h) * h
    x0 = burn_in_state(sys, burn_in, extra, h=h)
    traj = integrate(sys, x0, 0.0, span, h)
    bw = lyapunov.bandwidth_98(traj, state_index)
    files = {
        "spectrum.csv": lyapunov.spectrum_csv(traj, state_index),
        "config_echo.txt": render_config({
            "system": system, "state_index": state_index, "span": span,
            "burn_in": burn_in, "h": h, "base_seed": base_seed,
        }),
    }
    summary = {"system": system, "state_index": state_index, "bandwidth_98": bw}
    return files, summary


def op_sweep(cfg: dict[str, str], seed: Optional[int] = None,
             workers: int = 1):
    """Monte-Carlo sweep over systems x dists x K x T."""
    template = Scenario.from_mapping(cfg)
    if seed is not None:
        template = replace(template, base_seed=seed)
    systems = tuple(get_str(cfg, "systems", template.system).split(","))
    dists = tuple(get_str(cfg, "dists", template.dist).split(","))
    grid = harness.SweepGrid(
        template=template,
        systems=tuple(s.strip() for s in systems),
        dists=tuple(d.strip() for d in dists),
        K_grid=tuple(get_int_list(cfg, "K_grid", [template.K])),
        T_grid=tuple(get_float_list(cfg, "T_grid", [template.T])),
    )
    cells = harness.run_sweep(grid, workers=workers)
    echo = template.to_mapping()
    echo.update({
        "systems": ",".join(grid.systems), "dists": ",".join(grid.dists),
        "K_grid": ",".join(str(k) for k in grid.K_grid),
        "T_grid": ",".join(repr(t) for t in grid.T_grid),
        "workers": workers,
    })
    files = harness.render_sweep_outputs(cells, echo)
    summary = {
        "cells": len(cells),
        "trials_per_cell": template.trials,
        "failures": sum(c.failures for c in cells),
        "median_err_overall": float(np.median([c.median_err for c in cells]))
        if cells else float("nan"),
    }
    return files, summary
