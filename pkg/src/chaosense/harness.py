"""Experiment orchestration: seeded trials, Monte-Carlo sweeps, CSV emission.

Every trial is reproducible from (base_seed, trial_index) alone: a splitmix64
mix derives the trial seed, and further role-specific seeds (signal,
measurement burn-in, solver restarts) are derived from that. Sweep cells and
trials are independent; a process pool can fan them out, and rows are sorted
before writing so concurrency never changes the output bytes.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import randdemod
from .configfile import (
    get_float,
    get_float_list,
    get_int,
    get_int_list,
    get_str,
    render_config,
)
from .modulation import ModulationConfig, measure, make_problem
from .signals import BasisParams, SparseCoeffs, gen_sparse_coeffs, relative_error, support_metrics
from .solver import InnerControls, IRNLSConfig, irnls_solve
from .systems import DivergenceError, builtin

_MASK64 = (1 << 64) - 1


def derive_seed(base: int, index: int) -> int:
    """splitmix64-style integer mixing; pure function of (base, index)."""
    x = (base + 0x9E3779B97F4A7C15 * (index + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


CHAOTIC_SYSTEMS = ("lorenz", "liu")
SYSTEM_CHOICES = CHAOTIC_SYSTEMS + ("rdemod",)
DIST_CHOICES = ("gaussian", "bernoulli")


def default_solver_config(system: str) -> IRNLSConfig:
    """Scenario solver defaults.

    Chaotic systems get a near-zero first start plus random restarts in
    [-0.3, 0.3] with objective selection (the occasional instance whose
    near-zero path commits to a wrong support is usually rescued by one of
    the draws); the linear baseline needs neither.
    """
    if system in CHAOTIC_SYSTEMS:
        return IRNLSConfig(init_range=(-0.3, 0.3), restarts=4)
    return IRNLSConfig()


@dataclass(frozen=True)
class Scenario:
    """One Monte-Carlo cell: a system, a signal family and solver settings."""

    system: str = "lorenz"
    dist: str = "gaussian"
    K: int = 10
    T: float = 0.2
    W: float = 5.0
    T_u: float = 10.0
    h: float = 1.0e-3
    amp_limit: float = 4.0
    trials: int = 21
    base_seed: int = 20240901
    mod_row: int = 2
    mod_state: int = 1
    obs_index: int = 2
    burn_in: float = 20.0
    chip_rate: float = 10.0
    max_retries: int = 3
    solver: Optional[IRNLSConfig] = None

    def __post_init__(self):
        if self.system not in SYSTEM_CHOICES:
            raise ValueError(f"unknown system {self.system!r}")
        if self.dist not in DIST_CHOICES:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.basis  # validates W, T_u
        if self.system in CHAOTIC_SYSTEMS:
            self.modulation_config()  # validates T, h, indices

    @property
    def basis(self) -> BasisParams:
        return BasisParams(self.W, self.T_u)

    def solver_config(self) -> IRNLSConfig:
        return self.solver if self.solver is not None else default_solver_config(self.system)

    def modulation_config(self) -> ModulationConfig:
        return ModulationConfig(
            sys=builtin(self.system), mod_row=self.mod_row,
            mod_state=self.mod_state, obs_index=self.obs_index, T=self.T,
            h=self.h, T_u=self.T_u, burn_in=self.burn_in)

    def to_mapping(self) -> dict:
        s = self.solver_config()
        return {
            "system": self.system, "dist": self.dist, "K": self.K,
            "T": self.T, "W": self.W, "T_u": self.T_u, "h": self.h,
            "amp_limit": self.amp_limit, "trials": self.trials,
            "base_seed": self.base_seed, "mod_row": self.mod_row,
            "mod_state": self.mod_state, "obs_index": self.obs_index,
            "burn_in": self.burn_in, "chip_rate": self.chip_rate,
            "max_retries": self.max_retries,
            "mu": s.mu, "eps0": s.eps0, "c": s.c, "lambda": s.lam,
            "p": s.p, "err": s.err, "max_outer": s.max_outer,
            "restarts": s.restarts,
            "init_range": f"{s.init_range[0]},{s.init_range[1]}",
            "inner_max_iter": s.inner.max_iter,
            "inner_damping0": s.inner.damping0,
        }

    @classmethod
    def from_mapping(cls, cfg: dict[str, str]) -> "Scenario":
        system = get_str(cfg, "system", "lorenz", choices=set(SYSTEM_CHOICES))
        base = default_solver_config(system)
        init_range = get_float_list(cfg, "init_range", list(base.init_range))
        if len(init_range) != 2:
            raise ValueError("init_range must be 'lo,hi'")
        solver = IRNLSConfig(
            mu=get_float(cfg, "mu", base.mu),
            eps0=get_float(cfg, "eps0", base.eps0),
            c=get_float(cfg, "c", base.c),
            lam=get_float(cfg, "lambda", base.lam),
            p=get_float(cfg, "p", base.p),
            err=get_float(cfg, "err", base.err),
            max_outer=get_int(cfg, "max_outer", base.max_outer),
            restarts=get_int(cfg, "restarts", base.restarts),
            init_range=(init_range[0], init_range[1]),
            inner=InnerControls(
                max_iter=get_int(cfg, "inner_max_iter", base.inner.max_iter),
                damping0=get_float(cfg, "inner_damping0", base.inner.damping0),
            ),
        )
        return cls(
            system=system,
            dist=get_str(cfg, "dist", "gaussian", choices=set(DIST_CHOICES)),
            K=get_int(cfg, "K", 10),
            T=get_float(cfg, "T", 0.2),
            W=get_float(cfg, "W", 5.0),
            T_u=get_float(cfg, "T_u", 10.0),
            h=get_float(cfg, "h", 1.0e-3),
            amp_limit=get_float(cfg, "amp_limit", 4.0),
            trials=get_int(cfg, "trials", 21),
            base_seed=get_int(cfg, "base_seed", 20240901),
            mod_row=get_int(cfg, "mod_row", 2),
            mod_state=get_int(cfg, "mod_state", 1),
            obs_index=get_int(cfg, "obs_index", 2),
            burn_in=get_float(cfg, "burn_in", 20.0),
            chip_rate=get_float(cfg, "chip_rate", 10.0),
            max_retries=get_int(cfg, "max_retries", 3),
            solver=solver,
        )


@dataclass
class TrialResult:
    trial_index: int
    seed: int
    err: float
    support_precision: float
    support_recall: float
    outer_iters: int
    wall_time: float
    retries: int = 0
    converged: bool = True
    failed: bool = False
    message: str = ""


def _reconstruct_chaotic(scenario: Scenario, trial_seed: int):
    """One seeded generate/measure/solve pass; raises DivergenceError upward."""
    rng_signal = np.random.default_rng(derive_seed(trial_seed, 1))
    coeffs = gen_sparse_coeffs(scenario.basis, scenario.K, scenario.dist,
                               scenario.amp_limit, rng_signal)
    config = scenario.modulation_config()
    record, _traj = measure(config, (coeffs, scenario.basis),
                            seed=derive_seed(trial_seed, 2))
    problem = make_problem(config, record, scenario.basis)
    rng_solver = np.random.default_rng(derive_seed(trial_seed, 3))
    a_hat, diag = irnls_solve(problem, scenario.solver_config(), rng_solver)
    return coeffs, a_hat, diag


def _reconstruct_rdemod(scenario: Scenario, trial_seed: int):
    rng_signal = np.random.default_rng(derive_seed(trial_seed, 1))
    coeffs = gen_sparse_coeffs(scenario.basis, scenario.K, scenario.dist,
                               scenario.amp_limit, rng_signal)
    rd_config = randdemod.RDConfig(
        basis=scenario.basis, T=scenario.T, chip_rate=scenario.chip_rate,
        seed=derive_seed(trial_seed, 2))
    phi = randdemod.build_rd_matrix(rd_config)
    y = phi @ np.asarray(coeffs)
    a_hat, diag = randdemod.irls_solve(phi, y, scenario.solver_config())
    return coeffs, a_hat, diag


def run_trial(scenario: Scenario, trial_index: int) -> TrialResult:
    """Deterministic trial: seed derivation, signal, measurement, solve, score.

    A diverged measurement retries with a re-derived seed up to max_retries;
    exhausting retries yields a failed result instead of an exception.
    """
    trial_seed = derive_seed(scenario.base_seed, trial_index)
    t_start = time.perf_counter()
    retries = 0
    seed_used = trial_seed
    while True:
        try:
            if scenario.system in CHAOTIC_SYSTEMS:
                coeffs, a_hat, diag = _reconstruct_chaotic(scenario, seed_used)
            else:
                coeffs, a_hat, diag = _reconstruct_rdemod(scenario, seed_used)
            break
        except DivergenceError as exc:
            retries += 1
            if retries > scenario.max_retries:
                return TrialResult(
                    trial_index=trial_index, seed=seed_used, err=float("nan"),
                    support_precision=0.0, support_recall=0.0, outer_iters=0,
                    wall_time=time.perf_counter() - t_start, retries=retries - 1,
                    converged=False, failed=True, message=str(exc))
            seed_used = derive_seed(trial_seed, 1000 + retries)
    est = SparseCoeffs(a_hat)
    err = relative_error(est, coeffs)
    precision, recall = support_metrics(est, coeffs)
    return TrialResult(
        trial_index=trial_index, seed=seed_used, err=err,
        support_precision=precision, support_recall=recall,
        outer_iters=diag.n_outer, wall_time=time.perf_counter() - t_start,
        retries=retries, converged=diag.converged)


@dataclass
class CellResult:
    scenario: Scenario
    trials: list[TrialResult]

    def _ok(self) -> list[TrialResult]:
        return [t for t in self.trials if not t.failed]

    @property
    def failures(self) -> int:
        return sum(1 for t in self.trials if t.failed)

    def err_quartiles(self) -> tuple[float, float, float]:
        errs = [t.err for t in self._ok()]
        if not errs:
            return (float("nan"),) * 3
        q1, med, q3 = np.percentile(errs, [25.0, 50.0, 75.0])
        return float(med), float(q1), float(q3)

    @property
    def median_err(self) -> float:
        return self.err_quartiles()[0]

    @property
    def mean_recall(self) -> float:
        ok = self._ok()
        if not ok:
            return float("nan")
        return float(np.mean([t.support_recall for t in ok]))


def run_cell(scenario: Scenario) -> CellResult:
    return CellResult(scenario, [run_trial(scenario, i) for i in range(scenario.trials)])


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian sweep specification over a template scenario."""

    template: Scenario
    systems: tuple[str, ...] = ("lorenz",)
    dists: tuple[str, ...] = ("gaussian",)
    K_grid: tuple[int, ...] = (5, 10, 15, 20)
    T_grid: tuple[float, ...] = (0.2, 0.25)

    def cells(self) -> list[Scenario]:
        out = []
        for system in self.systems:
            for dist in self.dists:
                for k in self.K_grid:
                    for t in self.T_grid:
                        out.append(replace(
                            self.template, system=system, dist=dist, K=k, T=t,
                            solver=self.template.solver))
        out.sort(key=lambda s: (s.system, s.dist, s.K, s.T))
        return out


def _trial_task(args):
    scenario, cell_idx, trial_idx = args
    return cell_idx, trial_idx, run_trial(scenario, trial_idx)


def run_sweep(grid, workers: int = 1) -> list[CellResult]:
    """Run every (cell, trial) pair; cell order is (system, dist, K, T).

    ``grid`` is a SweepGrid or an iterable of Scenarios. Individual trial
    failures are recorded in their cell, never raised.
    """
    if isinstance(grid, SweepGrid):
        cells = grid.cells()
    else:
        cells = sorted(grid, key=lambda s: (s.system, s.dist, s.K, s.T))
    if not cells:
        return []
    tasks = [(sc, ci, ti) for ci, sc in enumerate(cells) for ti in range(sc.trials)]
    results: dict[tuple[int, int], TrialResult] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for ci, ti, res in pool.map(_trial_task, tasks, chunksize=1):
                results[(ci, ti)] = res
    else:
        for task in tasks:
            ci, ti, res = _trial_task(task)
            results[(ci, ti)] = res
    return [
        CellResult(sc, [results[(ci, ti)] for ti in range(sc.trials)])
        for ci, sc in enumerate(cells)
    ]


SWEEP_CSV_HEADER = "system,dist,K,T,trials,median_err,q1_err,q3_err,support_recall_mean,failures"


def sweep_csv(cells: list[CellResult]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for cell in cells:
        sc = cell.scenario
        med, q1, q3 = cell.err_quartiles()
        lines.append(
            f"{sc.system},{sc.dist},{sc.K},{sc.T!r},{sc.trials},"
            f"{med!r},{q1!r},{q3!r},{cell.mean_recall!r},{cell.failures}")
    return "\n".join(lines) + "\n"


TRIALS_CSV_HEADER = ("system,dist,K,T,trial,seed,err,support_precision,"
                     "support_recall,outer_iters,retries,converged,failed")


def trials_csv(cells: list[CellResult]) -> str:
    lines = [TRIALS_CSV_HEADER]
    for cell in cells:
        sc = cell.scenario
        for t in cell.trials:
            lines.append(
                f"{sc.system},{sc.dist},{sc.K},{sc.T!r},{t.trial_index},{t.seed},"
                f"{t.err!r},{t.support_precision!r},{t.support_recall!r},"
                f"{t.outer_iters},{t.retries},{int(t.converged)},{int(t.failed)}")
    return "\n".join(lines) + "\n"


def _series_csv(cells: list[CellResult], x_attr: str, series_attrs: tuple[str, ...]) -> str:
    lines = ["x,y,series"]
    for cell in cells:
        sc = cell.scenario
        series = "/".join(f"{a}={getattr(sc, a)!r}" if not isinstance(getattr(sc, a), str)
                          else f"{getattr(sc, a)}" for a in series_attrs)
        lines.append(f"{getattr(sc, x_attr)!r},{cell.median_err!r},{series}")
    return "\n".join(lines) + "\n"


def render_sweep_outputs(cells: list[CellResult], config_echo: dict) -> dict[str, str]:
    """All sweep artifacts as name -> content; deterministic given inputs."""
    return {
        "sweep.csv": sweep_csv(cells),
        "trials.csv": trials_csv(cells),
        "config_echo.txt": render_config(config_echo),
        "fig_err_vs_K.csv": _series_csv(cells, "K", ("system", "dist", "T")),
        "fig_err_vs_T.csv": _series_csv(cells, "T", ("system", "dist", "K")),
    }


def emit_outputs(files: dict[str, str], out_dir) -> list[str]:
    """Write rendered outputs under out_dir; returns the paths written."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, content in files.items():
        path = os.path.join(out_dir, name)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(content)
        except OSError as exc:
            raise OSError(f"cannot write output file {path}: {exc}") from exc
        written.append(path)
    return written
