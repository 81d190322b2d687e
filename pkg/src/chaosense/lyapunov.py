"""Reconstructability analysis via local Lyapunov exponents of the error system.

The impulsive error dynamics between the measurement system and its clamped
replica are linearized along the driving trajectory; the observed row of the
propagator is zeroed at every sample instant. Per-direction growth rates over
a duration T_L are the local exponents; their maxima over a set of initial
states approximate the supremum. A negative largest supremum certifies that
the replica synchronizes, hence that the excitation is reconstructable.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .signals import BasisParams, SparseCoeffs, basis_on_grid
from .systems import (
    DivergenceError,
    SystemSpec,
    Trajectory,
    _REGISTRY,
    burn_in_state,
    integrate,
)

DEFAULT_T_L = 50.0
DEFAULT_N_INIT = 100
INIT_SPACING = 1.0  # time units between scanned initial states


@dataclass
class SLLEResult:
    """Supreme local Lyapunov exponents for one sampling interval."""

    T: float
    T_L: float
    obs_index: int
    exponents: np.ndarray  # descending; entry i is max over inits of the i-th LLE
    n_init: int
    per_init: Optional[np.ndarray] = None  # (n_init, n) descending per row

    @property
    def largest(self) -> float:
        return float(self.exponents[0])


def _periodic_signal_half_grid(signal: tuple[SparseCoeffs, BasisParams],
                               h: float, n_steps: int) -> np.ndarray:
    """Signal samples on the half grid; tones are T_u-periodic so evaluating
    the raw basis beyond T_u extends the signal periodically and exactly."""
    coeffs, basis = signal
    grid = basis_on_grid(basis, 0.5 * h, 2 * n_steps + 1)
    return grid @ np.asarray(coeffs)


def _tangent_run(sys: SystemSpec, inits: np.ndarray, T: Optional[float],
                 obs_index: int, T_L: float, h: float,
                 u: Optional[tuple] = None,
                 mod_row: int = 2, mod_state: int = 1) -> np.ndarray:
    if not (1 <= obs_index <= sys.n):
        raise ValueError(f"obs_index = {obs_index} outside [1, {sys.n}]")
    n_steps = round(T_L / h)
    if n_steps < 1 or abs(T_L / h - n_steps) > 1e-6:
        raise ValueError(f"T_L = {T_L} is not a whole multiple of h = {h}")
    steps_per_t = 0
    if T is not None:
        steps_per_t = round(T / h)
        if steps_per_t < 1 or abs(T / h - steps_per_t) > 1e-6:
            raise ValueError(f"T = {T} is not a whole multiple of h = {h}")
        if steps_per_t > n_steps:
            steps_per_t = 0  # no sample instant falls inside the duration

    fd = _REGISTRY[sys.field_id]
    if fd.kernel_fid is None:
        return _tangent_run_generic(sys, inits, steps_per_t, obs_index, T_L,
                                    h, n_steps, u, mod_row, mod_state)

    if u is not None:
        u_half = _periodic_signal_half_grid(u, h, n_steps)
        mr0, ms0 = mod_row - 1, mod_state - 1
    else:
        u_half = np.empty(0)
        mr0, ms0 = 0, 0

    packed = fd.pack_params(sys.params)
    logs, _qf, div = kernels.tangent_batch(
        fd.kernel_fid, packed, np.ascontiguousarray(inits, dtype=float), h,
        n_steps, steps_per_t, obs_index - 1, u_half, mr0, ms0, 100)
    bad = np.flatnonzero(div >= 0)
    if bad.size:
        raise DivergenceError(
            f"driving trajectory diverged for initial state {bad[0]} "
            f"at step {div[bad[0]]}", int(div[bad[0]]), div[bad[0]] * h)
    lles = logs / T_L
    return np.sort(lles, axis=1)[:, ::-1]


def _tangent_run_generic(sys, inits, steps_per_t, obs_index, T_L, h, n_steps,
                         u, mod_row, mod_state):
    from .systems import DriveInput, integrate_with_tangent

    drive = None
    if u is not None:
        u_half = _periodic_signal_half_grid(u, h, n_steps)
        drive = DriveInput(u=u_half, mod_row=mod_row, mod_state=mod_state)
    resets = (steps_per_t * h, obs_index) if steps_per_t > 0 else None
    lles = np.empty((inits.shape[0], sys.n))
    for b in range(inits.shape[0]):
        _traj, prop = integrate_with_tangent(sys, inits[b], 0.0, n_steps * h,
                                             h, input=drive, resets=resets)
        lles[b] = prop.log_singular_values / T_L
    return lles


def local_lles(sys: SystemSpec, obs_index: int, T: Optional[float], x0,
               T_L: float = DEFAULT_T_L, h: float = 1.0e-3,
               u: Optional[tuple] = None, mod_row: int = 2,
               mod_state: int = 1) -> np.ndarray:
    """Descending local Lyapunov exponents of the error system from x0.

    ``T=None`` (or T > T_L) disables resets, giving the plain finite-time
    exponents of the driving system. ``u=(coeffs, basis)`` applies the
    modulating signal, extended T_u-periodically over the duration.
    """
    x0 = np.asarray(x0, dtype=float)
    lles = _tangent_run(sys, x0[None, :], T, obs_index, T_L, h, u,
                        mod_row, mod_state)
    return lles[0]


def supreme_lles(sys: SystemSpec, obs_index: int, T: float,
                 T_L: float = DEFAULT_T_L, n_init: int = DEFAULT_N_INIT,
                 rng: Optional[np.random.Generator] = None,
                 h: float = 1.0e-3, u: Optional[tuple] = None,
                 mod_row: int = 2, mod_state: int = 1,
                 inits: Optional[np.ndarray] = None,
                 keep_per_init: bool = False) -> SLLEResult:
    """Componentwise max of the local exponents over scanned initial states.

    Initial states are sampled at equal time spacing along a burn-in attractor
    trajectory (a seeded burn-in offset decorrelates repeated calls); pass
    ``inits`` to reuse one set across scans.
    """
    if inits is None:
        inits = attractor_initial_states(sys, n_init, rng, h)
    lles = _tangent_run(sys, inits, T, obs_index, T_L, h, u, mod_row, mod_state)
    return SLLEResult(
        T=T, T_L=T_L, obs_index=obs_index,
        exponents=lles.max(axis=0),
        n_init=inits.shape[0],
        per_init=lles if keep_per_init else None,
    )


def attractor_initial_states(sys: SystemSpec, n_init: int,
                             rng: Optional[np.random.Generator] = None,
                             h: float = 1.0e-3,
                             spacing: float = INIT_SPACING) -> np.ndarray:
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    extra = 0.0
    if rng is not None:
        extra = round(float(rng.uniform(0.0, 5.0)) / h) * h
    x0 = burn_in_state(sys, 20.0, extra, h=h)
    traj = integrate(sys, x0, 0.0, n_init * spacing, h)
    stride = round(spacing / h)
    return traj.states[::stride][:n_init].copy()


@dataclass
class ThresholdScan:
    """Largest SLLE per sampling interval and the sign-change bracket."""

    T_grid: np.ndarray
    largest: np.ndarray
    crossing: tuple[Optional[float], Optional[float]]

    def to_csv(self) -> str:
        lo, hi = self.crossing
        buf = io.StringIO()
        buf.write("T,largest_slle,crossing_flag\n")
        for T, lam in zip(self.T_grid, self.largest):
            flag = int(lo is not None and hi is not None and lo <= T < hi)
            buf.write(f"{float(T)!r},{float(lam)!r},{flag}\n")
        return buf.getvalue()


def threshold_scan(sys: SystemSpec, obs_index: int, T_grid,
                   T_L: float = DEFAULT_T_L, n_init: int = DEFAULT_N_INIT,
                   rng: Optional[np.random.Generator] = None,
                   h: float = 1.0e-3, u: Optional[tuple] = None,
                   mod_row: int = 2, mod_state: int = 1) -> ThresholdScan:
    """Largest SLLE over a sorted grid of sampling intervals.

    One shared set of initial states is used for every T so the scan is
    comparable across the grid. The crossing is the first bracket where the
    sign flips from negative to positive; (None, T_min) means positive on the
    whole grid (crossing below it), (T_max, None) negative on the whole grid.
    """
    T_grid = np.asarray(sorted(float(t) for t in T_grid))
    if T_grid.size < 1:
        raise ValueError("T grid is empty")
    inits = attractor_initial_states(sys, n_init, rng, h)
    largest = np.array([
        supreme_lles(sys, obs_index, T, T_L, n_init, None, h, u,
                     mod_row, mod_state, inits=inits).largest
        for T in T_grid
    ])
    crossing: tuple[Optional[float], Optional[float]]
    signs = largest > 0.0
    if signs.all():
        crossing = (None, float(T_grid[0]))
    elif not signs.any():
        crossing = (float(T_grid[-1]), None)
    else:
        flip = int(np.argmax(signs))  # first positive entry
        if flip == 0:
            crossing = (None, float(T_grid[0]))
        else:
            crossing = (float(T_grid[flip - 1]), float(T_grid[flip]))
    return ThresholdScan(T_grid=T_grid, largest=largest, crossing=crossing)


MIN_SPECTRUM_SAMPLES = 1000
ENERGY_FRACTION = 0.98


def bandwidth_98(traj: Trajectory, index: int) -> float:
    """Smallest frequency containing 98% of the component's spectral energy.

    Mean-removed single-segment periodogram of state ``index`` (1-based) at
    the trajectory's own step; no windowing.
    """
    if not (1 <= index <= traj.states.shape[1]):
        raise ValueError(f"state index {index} outside [1, {traj.states.shape[1]}]")
    x = traj.states[:, index - 1]
    if x.size < MIN_SPECTRUM_SAMPLES:
        raise ValueError(
            f"trajectory too short for a spectrum: {x.size} samples "
            f"< {MIN_SPECTRUM_SAMPLES}")
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, d=traj.h)
    cum = np.cumsum(power)
    idx = int(np.searchsorted(cum, ENERGY_FRACTION * cum[-1]))
    return float(freqs[min(idx, freqs.size - 1)])


def spectrum_csv(traj: Trajectory, index: int) -> str:
    """Plot-ready periodogram: frequency, power, cumulative energy fraction."""
    x = traj.states[:, index - 1]
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, d=traj.h)
    cum = np.cumsum(power)
    cum = cum / cum[-1]
    buf = io.StringIO()
    buf.write("freq,power,cum_energy\n")
    for f, pw, ce in zip(freqs, power, cum):
        buf.write(f"{float(f)!r},{float(pw)!r},{float(ce)!r}\n")
    return buf.getvalue()
