"""Measurement by chaotic state modulation and the impulsively driven replica.

The measurement side integrates the signal-modulated system from a seeded
on-attractor state and samples one state every T. The reconstruction side
re-runs a replica excited by candidate coefficients, clamping the observed
state to the measured samples at every sample instant; the pre-clamp values
define the measurement map whose misfit the solver minimizes.

Recording happens BEFORE the clamp. Post-clamp recording would return the
measured data itself for any candidate and make the misfit identically zero.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .signals import BasisParams, SparseCoeffs, signal_on_half_grid
from .systems import (
    DIVERGENCE_BOUND,
    DivergenceError,
    SystemSpec,
    Trajectory,
    _REGISTRY,
    burn_in_state,
)

RESIDUAL_CLAMP = kernels.RESIDUAL_CLAMP

# Long-run state means of the built-in attractors (1000 time units, h = 1e-3),
# used to initialize the unobserved replica components.
ATTRACTOR_MEANS = {
    "lorenz": (0.0, 0.0, 44.4),
    "liu": (0.0, 0.0, 41.2),
}

BURN_IN_EXTRA_MAX = 10.0


@dataclass(frozen=True)
class ModulationConfig:
    """Wiring of the measurement subsystem.

    mod_row/mod_state: the term u(t)*x[mod_state] is added to state equation
    mod_row. obs_index: the sampled (and impulsively reset) state. All state
    indices are 1-based. T must be a whole multiple of the step h.
    """

    sys: SystemSpec
    mod_row: int = 2
    mod_state: int = 1
    obs_index: int = 2
    T: float = 0.2
    h: float = 1.0e-3
    T_u: float = 10.0
    burn_in: float = 20.0

    def __post_init__(self):
        n = self.sys.n
        for label, idx in (("mod_row", self.mod_row), ("mod_state", self.mod_state),
                           ("obs_index", self.obs_index)):
            if not (1 <= idx <= n):
                raise ValueError(f"{label} = {idx} outside [1, {n}]")
        if self.h <= 0 or self.T <= 0 or self.T_u <= 0:
            raise ValueError("T, h and T_u must be positive")
        spt = self.T / self.h
        if abs(spt - round(spt)) > 1e-6 or round(spt) < 1:
            raise ValueError(f"T = {self.T} is not a positive whole multiple of h = {self.h}")
        if self.n_samples < 1:
            raise ValueError("T_u too short: no sample instants fit")

    @property
    def steps_per_t(self) -> int:
        return round(self.T / self.h)

    @property
    def n_samples(self) -> int:
        return int(np.floor(self.T_u / self.T + 1e-9))

    @property
    def n_steps(self) -> int:
        steps = self.T_u / self.h
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError(f"T_u = {self.T_u} is not a whole multiple of h = {self.h}")
        return round(steps)

    def fingerprint(self) -> str:
        pp = ",".join(f"{k}={v:g}" for k, v in sorted(self.sys.params.items()))
        return (f"{self.sys.name}({pp})|mod={self.mod_row},{self.mod_state}"
                f"|obs={self.obs_index}|T={self.T:g}|h={self.h:g}|Tu={self.T_u:g}")


@dataclass
class MeasurementRecord:
    """Sub-Nyquist samples z_m = x[obs_index](m*T), m = 1..M.

    ``x0`` is the driving system's initial state. The measurement system,
    its state included, is reproducible at the reconstruction side (that is
    the premise of chaos-based sensing, exactly as the chip seed is shared in
    random demodulation), so the record carries it as part of the protocol.
    """

    z: np.ndarray
    T: float
    obs_index: int
    config_fingerprint: str
    seed: Optional[int] = None
    system_name: str = ""
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 1 or self.z.size < 1:
            raise ValueError("measurement vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("measurements must be finite")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)

    @property
    def M(self) -> int:
        return self.z.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# system = {self.system_name}\n")
        buf.write(f"# T = {self.T!r}\n")
        buf.write(f"# M = {self.M}\n")
        buf.write(f"# obs_index = {self.obs_index}\n")
        buf.write(f"# seed = {'' if self.seed is None else self.seed}\n")
        buf.write(f"# fingerprint = {self.config_fingerprint}\n")
        if self.x0 is not None:
            buf.write(f"# x0 = {';'.join(repr(float(v)) for v in self.x0)}\n")
        buf.write("m,t,z\n")
        for m, val in enumerate(self.z, start=1):
            buf.write(f"{m},{float(m * self.T)!r},{float(val)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementRecord":
        meta: dict[str, str] = {}
        rows = []
        header_seen = False
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln:
                continue
            if ln.startswith("#"):
                key, _, val = ln[1:].partition("=")
                meta[key.strip()] = val.strip()
                continue
            if not header_seen:
                if ln != "m,t,z":
                    raise ValueError("measurement CSV must have header 'm,t,z'")
                header_seen = True
                continue
            m_s, _t_s, z_s = ln.split(",")
            rows.append((int(m_s), float(z_s)))
        rows.sort()
        z = np.array([v for _, v in rows])
        seed_s = meta.get("seed", "")
        x0_s = meta.get("x0", "")
        return cls(
            z=z,
            T=float(meta["T"]),
            obs_index=int(meta["obs_index"]),
            config_fingerprint=meta.get("fingerprint", ""),
            seed=int(seed_s) if seed_s else None,
            system_name=meta.get("system", ""),
            x0=np.array([float(v) for v in x0_s.split(";")]) if x0_s else None,
        )


def _kernel_ids(config: ModulationConfig):
    fd = _REGISTRY[config.sys.field_id]
    if fd.kernel_fid is None:
        raise ValueError(
            f"system {config.sys.name!r} has no measurement kernel; "
            "only the built-in chaotic systems can be modulated")
    return fd.kernel_fid, fd.pack_params(config.sys.params)


def measure(config: ModulationConfig, signal: tuple[SparseCoeffs, BasisParams],
            seed: int) -> tuple[MeasurementRecord, Trajectory]:
    """Excite the system with the signal and sample the observed state.

    The driving initial state comes from a fixed-plus-seeded burn-in of the
    autonomous system, so distinct seeds start at distinct attractor points.
    Returns the measurement record and the true driving trajectory; the
    latter exists for test oracles and is not part of the measurement output.

    Callers are responsible for keeping the signal bandwidth below the
    modulating state's own 98%-energy bandwidth (see lyapunov.bandwidth_98);
    tones outside the system's pass band are not sensed effectively.
    """
    coeffs, basis = signal
    if abs(basis.T_u - config.T_u) > 1e-9:
        raise ValueError(f"signal duration {basis.T_u} != config T_u {config.T_u}")
    rng = np.random.default_rng(seed)
    extra = float(rng.uniform(0.0, BURN_IN_EXTRA_MAX))
    extra = round(extra / config.h) * config.h
    x0 = burn_in_state(config.sys, config.burn_in, extra, h=config.h)

    fid, packed = _kernel_ids(config)
    n_steps = config.n_steps
    u_half = signal_on_half_grid(coeffs, basis, config.h, n_steps)
    states, div = kernels.integrate_states(
        fid, packed, x0, config.h, n_steps, u_half,
        config.mod_row - 1, config.mod_state - 1)
    if div >= 0:
        peak = float(np.max(np.abs(u_half)))
        raise DivergenceError(
            f"modulated system diverged at step {div} (t = {div * config.h:g}); "
            f"signal amplitude peak {peak:g} drove the system out of chaos",
            div, div * config.h)
    traj = Trajectory(0.0, config.h, states)
    idx = config.steps_per_t * np.arange(1, config.n_samples + 1)
    z = states[idx, config.obs_index - 1].copy()
    record = MeasurementRecord(
        z=z, T=config.T, obs_index=config.obs_index,
        config_fingerprint=config.fingerprint(), seed=seed,
        system_name=config.sys.name, x0=x0.copy())
    return record, traj


def heuristic_replica_init(config: ModulationConfig, z: MeasurementRecord) -> np.ndarray:
    """Data-only replica start: observed component from the first sample,
    the rest from the attractor's long-run means. Synchronization erases the
    resulting transient over the run, but the early misfit it produces is
    large; estimation quality needs replica_init instead."""
    means = ATTRACTOR_MEANS.get(config.sys.name)
    if means is None:
        raise ValueError(f"no stored attractor means for system {config.sys.name!r}")
    y0 = np.array(means, dtype=float)
    y0[config.obs_index - 1] = z.z[0]
    return y0


def replica_init(config: ModulationConfig, z: MeasurementRecord) -> np.ndarray:
    """Default replica start: the recorded driving initial state when the
    record carries one (the shared-system protocol), else the heuristic."""
    if z.x0 is not None:
        return np.asarray(z.x0, dtype=float)
    return heuristic_replica_init(config, z)


def _check_record(config: ModulationConfig, z: MeasurementRecord):
    if z.M != config.n_samples:
        raise ValueError(f"record has M = {z.M}, config implies {config.n_samples}")
    if abs(z.T - config.T) > 1e-12:
        raise ValueError(f"record T = {z.T} != config T = {config.T}")
    if z.obs_index != config.obs_index:
        raise ValueError(f"record obs_index = {z.obs_index} != config {config.obs_index}")


def driven_response(config: ModulationConfig, z: MeasurementRecord,
                    coeffs, basis: BasisParams, y0) -> np.ndarray:
    """Pre-clamp observations of the replica excited by candidate coefficients.

    At each sample instant the observed component is recorded and then reset
    to the measured value. A diverged replica yields the remaining entries
    pinned at z_m + RESIDUAL_CLAMP instead of an exception, so optimizers see
    a retreatable plateau.
    """
    _check_record(config, z)
    fid, packed = _kernel_ids(config)
    n_steps = config.steps_per_t * config.n_samples
    u_half = signal_on_half_grid(SparseCoeffs(np.asarray(coeffs)), basis, config.h, n_steps)
    y0 = np.asarray(y0, dtype=float)
    zbar, _yf, _div = kernels.driven_response(
        fid, packed, y0, config.h, config.steps_per_t, config.n_samples, z.z,
        u_half, config.mod_row - 1, config.mod_state - 1, config.obs_index - 1)
    return zbar


def residual(config: ModulationConfig, z: MeasurementRecord, coeffs,
             basis: BasisParams, y0=None) -> np.ndarray:
    """Measurement misfit for a candidate, clamped to +-RESIDUAL_CLAMP."""
    if y0 is None:
        y0 = replica_init(config, z)
    zbar = driven_response(config, z, coeffs, basis, y0)
    r = zbar - z.z
    return np.clip(np.nan_to_num(r, nan=RESIDUAL_CLAMP), -RESIDUAL_CLAMP, RESIDUAL_CLAMP)


def residual_jacobian(config: ModulationConfig, z: MeasurementRecord, coeffs,
                      basis: BasisParams, y0=None) -> np.ndarray:
    """d residual / d coefficients via forward sensitivities."""
    _r, jac = residual_and_jacobian(config, z, coeffs, basis, y0)
    return jac


def residual_and_jacobian(config: ModulationConfig, z: MeasurementRecord, coeffs,
                          basis: BasisParams, y0=None) -> tuple[np.ndarray, np.ndarray]:
    """Residual and its Jacobian from one co-integration.

    The sensitivity co-integration differentiates the RK4 map exactly; the
    clamp is data, so sensitivity rows of the observed state are zeroed at
    every sample instant and the recorded row is the pre-clamp sensitivity.
    """
    _check_record(config, z)
    if y0 is None:
        y0 = replica_init(config, z)
    fid, packed = _kernel_ids(config)
    n_steps = config.steps_per_t * config.n_samples
    alpha = np.asarray(coeffs, dtype=float)
    if alpha.shape[0] != basis.n_basis:
        raise ValueError(f"coefficient length {alpha.shape[0]} != basis size {basis.n_basis}")
    from .signals import basis_on_grid

    psi_half = basis_on_grid(basis, 0.5 * config.h, 2 * n_steps + 1)
    u_half = psi_half @ alpha
    y0 = np.asarray(y0, dtype=float)
    zbar, jac, _yf, _sf, _div = kernels.driven_response_with_sens(
        fid, packed, y0, config.h, config.steps_per_t, config.n_samples, z.z,
        u_half, psi_half, config.mod_row - 1, config.mod_state - 1,
        config.obs_index - 1)
    r = zbar - z.z
    r = np.clip(np.nan_to_num(r, nan=RESIDUAL_CLAMP), -RESIDUAL_CLAMP, RESIDUAL_CLAMP)
    return r, jac


def make_problem(config: ModulationConfig, z: MeasurementRecord,
                 basis: BasisParams):
    """Least-squares problem closures over (config, record) for the solver."""
    from .solver import LeastSquaresProblem

    return LeastSquaresProblem(
        residual=lambda a: residual(config, z, a, basis),
        jacobian=lambda a: residual_jacobian(config, z, a, basis),
        n=basis.n_basis,
        residual_and_jacobian=lambda a: residual_and_jacobian(config, z, a, basis),
    )
