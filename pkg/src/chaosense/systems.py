"""Continuous-time dynamical systems and fixed-step RK4 integration.

State indices in the public API are 1-based, matching the x1, x2, x3 naming
used throughout the configuration files; they are converted to 0-based array
indices internally. The built-in chaotic systems integrate through compiled
kernels; anything registered with plain Python callables goes through a
generic numpy path with identical stepping semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from . import kernels

DEFAULT_STEP = 1.0e-3
DIVERGENCE_BOUND = kernels.DIVERGENCE_BOUND
REORTH_EVERY = 100


class DivergenceError(RuntimeError):
    """State norm crossed the divergence bound during integration."""

    def __init__(self, message: str, step: int, t: float):
        super().__init__(message)
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SystemSpec:
    """A named continuous-time system with fixed parameters."""

    name: str
    n: int
    params: Mapping[str, float]
    field_id: str
    has_jacobian: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"state dimension must be >= 1, got {self.n}")
        for key, val in self.params.items():
            if not math.isfinite(val):
                raise ValueError(f"parameter {key!r} is not finite: {val}")
        if self.field_id not in _REGISTRY:
            raise ValueError(f"unknown field_id {self.field_id!r}")


@dataclass(frozen=True)
class FieldDef:
    """Registry entry: vector field, optional Jacobian, optional fast kernel."""

    dim: int
    fieldfn: Callable[[Mapping[str, float], np.ndarray], np.ndarray]
    jacfn: Optional[Callable[[Mapping[str, float], np.ndarray], np.ndarray]] = None
    kernel_fid: Optional[int] = None
    pack_params: Optional[Callable[[Mapping[str, float]], np.ndarray]] = None


_REGISTRY: dict[str, FieldDef] = {}


def register_system(field_id: str, fd: FieldDef) -> None:
    _REGISTRY[field_id] = fd


def _lorenz_field(p, x):
    sigma, r, b = p["sigma"], p["r"], p["b"]
    return np.array([
        sigma * (x[1] - x[0]),
        r * x[0] - x[1] - x[0] * x[2],
        x[0] * x[1] - b * x[2],
    ])


def _lorenz_jac(p, x):
    sigma, r, b = p["sigma"], p["r"], p["b"]
    return np.array([
        [-sigma, sigma, 0.0],
        [r - x[2], -1.0, -x[0]],
        [x[1], x[0], -b],
    ])


def _liu_field(p, x):
    sigma, r, b, c = p["sigma"], p["r"], p["b"], p["c"]
    return np.array([
        sigma * (x[1] - x[0]),
        r * x[0] - x[0] * x[2],
        c * x[0] * x[0] - b * x[2],
    ])


def _liu_jac(p, x):
    sigma, r, b, c = p["sigma"], p["r"], p["b"], p["c"]
    return np.array([
        [-sigma, sigma, 0.0],
        [r - x[2], 0.0, -x[0]],
        [2.0 * c * x[0], 0.0, -b],
    ])


register_system("lorenz", FieldDef(
    dim=3, fieldfn=_lorenz_field, jacfn=_lorenz_jac,
    kernel_fid=kernels.FID_LORENZ,
    pack_params=lambda p: np.array([p["sigma"], p["r"], p["b"], 0.0]),
))
register_system("liu", FieldDef(
    dim=3, fieldfn=_liu_field, jacfn=_liu_jac,
    kernel_fid=kernels.FID_LIU,
    pack_params=lambda p: np.array([p["sigma"], p["r"], p["b"], p["c"]]),
))


def lorenz(sigma: float = 30.0, r: float = 50.0, b: float = 3.0) -> SystemSpec:
    return SystemSpec("lorenz", 3, {"sigma": sigma, "r": r, "b": b}, "lorenz")


def liu(sigma: float = 30.0, r: float = 42.0, b: float = 2.5, c: float = 4.0) -> SystemSpec:
    return SystemSpec("liu", 3, {"sigma": sigma, "r": r, "b": b, "c": c}, "liu")


def builtin(name: str) -> SystemSpec:
    if name == "lorenz":
        return lorenz()
    if name == "liu":
        return liu()
    raise ValueError(f"no built-in system named {name!r}")


@dataclass(frozen=True)
class DriveInput:
    """Scalar input u(t) injected as u(t)*x[mod_state] into row mod_row.

    ``u`` is either a callable of time or an array already sampled on the
    half-step grid t0, t0+h/2, ... of the integration about to run.
    """

    u: Union[Callable[[float], float], np.ndarray]
    mod_row: int
    mod_state: int


@dataclass
class Trajectory:
    """Fixed-step trajectory: states[k] is the state at t0 + k*h."""

    t0: float
    h: float
    states: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def t1(self) -> float:
        return self.t0 + self.n_steps * self.h

    @property
    def span(self) -> float:
        return self.n_steps * self.h

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.states.shape[0])


@dataclass
class TangentPropagator:
    """Scale-managed fundamental matrix of the linearized flow.

    The represented matrix is orthogonal @ diag(exp(log_scales)); keeping the
    scales in log form survives strongly contracting spans that would
    underflow a raw matrix product.
    """

    orthogonal: np.ndarray
    log_scales: np.ndarray
    t_span: float

    @property
    def log_singular_values(self) -> np.ndarray:
        return np.sort(self.log_scales)[::-1]

    @property
    def log_abs_det(self) -> float:
        return float(self.log_scales.sum())

    def singular_values(self) -> np.ndarray:
        return np.exp(self.log_singular_values)


def _check_state(sys: SystemSpec, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (sys.n,):
        raise ValueError(f"state must have shape ({sys.n},), got {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ValueError("state contains non-finite entries")
    return state


def _check_mod(sys: SystemSpec, mod) -> tuple[int, int, float]:
    mod_row, mod_state, u_value = mod
    if not (1 <= mod_row <= sys.n and 1 <= mod_state <= sys.n):
        raise ValueError(f"modulation indices must lie in [1, {sys.n}]")
    return int(mod_row), int(mod_state), float(u_value)


def eval_vector_field(sys: SystemSpec, state, mod=None) -> np.ndarray:
    """dx/dt at ``state``; ``mod=(mod_row, mod_state, u_value)`` adds
    u_value*state[mod_state] to component mod_row (1-based indices)."""
    state = _check_state(sys, state)
    fd = _REGISTRY[sys.field_id]
    dx = np.asarray(fd.fieldfn(sys.params, state), dtype=float)
    if mod is not None:
        mr, ms, u = _check_mod(sys, mod)
        dx[mr - 1] += u * state[ms - 1]
    return dx


def eval_jacobian(sys: SystemSpec, state, mod=None) -> np.ndarray:
    """Exact partial derivatives of eval_vector_field at ``state``."""
    state = _check_state(sys, state)
    fd = _REGISTRY[sys.field_id]
    if fd.jacfn is None:
        raise ValueError(f"system {sys.name!r} has no Jacobian registered")
    jac = np.asarray(fd.jacfn(sys.params, state), dtype=float)
    if mod is not None:
        mr, ms, u = _check_mod(sys, mod)
        jac = jac.copy()
        jac[mr - 1, ms - 1] += u
    return jac


def _resolve_steps(t0: float, t1: float, h: float) -> int:
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if t1 <= t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    ratio = (t1 - t0) / h
    n_steps = round(ratio)
    if n_steps < 1 or abs(ratio - n_steps) > 1e-6:
        raise ValueError(f"(t1-t0)/h = {ratio} is not a whole number of steps")
    return n_steps


def sample_on_half_grid(u, t0: float, h: float, n_steps: int) -> np.ndarray:
    """u evaluated at t0, t0+h/2, ..., t0+n_steps*h (RK4 stage times)."""
    if isinstance(u, np.ndarray):
        if u.shape != (2 * n_steps + 1,):
            raise ValueError(
                f"precomputed input must have length {2 * n_steps + 1}, got {u.shape}")
        return u
    tgrid = t0 + 0.5 * h * np.arange(2 * n_steps + 1)
    return np.array([float(u(t)) for t in tgrid])


def _resolve_input(sys: SystemSpec, input: Optional[DriveInput], t0, h, n_steps):
    if input is None:
        return np.empty(0), 0, 0
    mr, ms, _ = _check_mod(sys, (input.mod_row, input.mod_state, 0.0))
    u_half = sample_on_half_grid(input.u, t0, h, n_steps)
    return u_half, mr - 1, ms - 1


def integrate(sys: SystemSpec, x0, t0: float, t1: float, h: float = DEFAULT_STEP,
              input: Optional[DriveInput] = None) -> Trajectory:
    """Classical 4th-order Runge-Kutta with fixed step h.

    Raises DivergenceError if the state norm crosses DIVERGENCE_BOUND.
    """
    x0 = _check_state(sys, x0)
    n_steps = _resolve_steps(t0, t1, h)
    u_half, mr0, ms0 = _resolve_input(sys, input, t0, h, n_steps)
    fd = _REGISTRY[sys.field_id]
    if fd.kernel_fid is not None:
        packed = fd.pack_params(sys.params)
        states, div = kernels.integrate_states(
            fd.kernel_fid, packed, x0, h, n_steps, u_half, mr0, ms0)
        if div >= 0:
            raise DivergenceError(
                f"state norm exceeded {DIVERGENCE_BOUND:g} at step {div} "
                f"(t = {t0 + div * h:g})", div, t0 + div * h)
        return Trajectory(t0, h, states)
    return _integrate_generic(sys, fd, x0, t0, h, n_steps, u_half, mr0, ms0)


def _integrate_generic(sys, fd, x0, t0, h, n_steps, u_half, mr0, ms0):
    f = fd.fieldfn
    p = sys.params
    modulated = u_half.shape[0] > 0
    states = np.empty((n_steps + 1, sys.n))
    x = x0.copy()
    states[0] = x
    bound_sq = DIVERGENCE_BOUND * DIVERGENCE_BOUND
    for i in range(n_steps):
        k1 = np.asarray(f(p, x), dtype=float)
        if modulated:
            k1[mr0] += u_half[2 * i] * x[ms0]
        y = x + 0.5 * h * k1
        k2 = np.asarray(f(p, y), dtype=float)
        if modulated:
            k2[mr0] += u_half[2 * i + 1] * y[ms0]
        y = x + 0.5 * h * k2
        k3 = np.asarray(f(p, y), dtype=float)
        if modulated:
            k3[mr0] += u_half[2 * i + 1] * y[ms0]
        y = x + h * k3
        k4 = np.asarray(f(p, y), dtype=float)
        if modulated:
            k4[mr0] += u_half[2 * i + 2] * y[ms0]
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[i + 1] = x
        s2 = float(np.dot(x, x))
        if not np.isfinite(s2) or s2 > bound_sq:
            raise DivergenceError(
                f"state norm exceeded {DIVERGENCE_BOUND:g} at step {i + 1} "
                f"(t = {t0 + (i + 1) * h:g})", i + 1, t0 + (i + 1) * h)
    return Trajectory(t0, h, states)


def integrate_with_tangent(sys: SystemSpec, x0, t0: float, t1: float,
                           h: float = DEFAULT_STEP,
                           input: Optional[DriveInput] = None,
                           resets: Optional[tuple[float, int]] = None,
                           ) -> tuple[Trajectory, TangentPropagator]:
    """Co-integrate the variational equation E' = J(x(t)) E alongside the state.

    ``resets=(T, reset_index)`` zeroes row reset_index (1-based) of the
    propagator at every t = t0 + m*T, the linearization of the impulsive map
    e[reset_index] <- 0. The factorization is re-orthogonalized every
    REORTH_EVERY steps and at each reset so the scales stay representable.
    """
    x0 = _check_state(sys, x0)
    n_steps = _resolve_steps(t0, t1, h)
    u_half, mr0, ms0 = _resolve_input(sys, input, t0, h, n_steps)

    steps_per_t = 0
    obs0 = 0
    if resets is not None:
        T, reset_index = resets
        if not (1 <= reset_index <= sys.n):
            raise ValueError(f"reset index must lie in [1, {sys.n}]")
        steps_per_t = round(T / h)
        if steps_per_t < 1 or abs(T / h - steps_per_t) > 1e-6:
            raise ValueError(f"reset interval T = {T} is not a whole multiple of h = {h}")
        obs0 = reset_index - 1

    fd = _REGISTRY[sys.field_id]
    if fd.kernel_fid is not None:
        packed = fd.pack_params(sys.params)
        traj = integrate(sys, x0, t0, t1, h, input)
        logs, qf, div = kernels.tangent_batch(
            fd.kernel_fid, packed, x0[None, :], h, n_steps, steps_per_t, obs0,
            u_half, mr0, ms0, REORTH_EVERY)
        prop = TangentPropagator(qf[0], logs[0], n_steps * h)
        return traj, prop
    return _tangent_generic(sys, fd, x0, t0, h, n_steps, u_half, mr0, ms0,
                            steps_per_t, obs0)


def _tangent_generic(sys, fd, x0, t0, h, n_steps, u_half, mr0, ms0,
                     steps_per_t, obs0):
    if fd.jacfn is None:
        raise ValueError(f"system {sys.name!r} has no Jacobian registered")
    f, jf, p = fd.fieldfn, fd.jacfn, sys.params
    n = sys.n
    modulated = u_half.shape[0] > 0
    states = np.empty((n_steps + 1, n))
    x = x0.copy()
    states[0] = x
    e_mat = np.eye(n)
    logs = np.zeros(n)
    since_orth = 0
    bound_sq = DIVERGENCE_BOUND * DIVERGENCE_BOUND

    def stage(xs, es, u):
        k = np.asarray(f(p, xs), dtype=float)
        jm = np.asarray(jf(p, xs), dtype=float)
        if modulated:
            k = k.copy()
            jm = jm.copy()
            k[mr0] += u * xs[ms0]
            jm[mr0, ms0] += u
        return k, jm @ es

    for i in range(n_steps):
        u0 = u_half[2 * i] if modulated else 0.0
        u1 = u_half[2 * i + 1] if modulated else 0.0
        u2 = u_half[2 * i + 2] if modulated else 0.0
        k1, g1 = stage(x, e_mat, u0)
        k2, g2 = stage(x + 0.5 * h * k1, e_mat + 0.5 * h * g1, u1)
        k3, g3 = stage(x + 0.5 * h * k2, e_mat + 0.5 * h * g2, u1)
        k4, g4 = stage(x + h * k3, e_mat + h * g3, u2)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        e_mat = e_mat + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        states[i + 1] = x
        s2 = float(np.dot(x, x))
        if not np.isfinite(s2) or s2 > bound_sq:
            raise DivergenceError(
                f"state norm exceeded {DIVERGENCE_BOUND:g} at step {i + 1} "
                f"(t = {t0 + (i + 1) * h:g})", i + 1, t0 + (i + 1) * h)

        since_orth += 1
        at_reset = steps_per_t > 0 and (i + 1) % steps_per_t == 0
        if at_reset:
            e_mat[obs0, :] = 0.0
        if at_reset or since_orth >= REORTH_EVERY or i == n_steps - 1:
            q_mat, r_mat = np.linalg.qr(e_mat)
            diag = np.abs(np.diag(r_mat))
            diag = np.maximum(diag, 1.0e-300)
            logs += np.log(diag)
            q_mat = q_mat * np.sign(np.diag(r_mat) + (np.diag(r_mat) == 0.0))
            e_mat = q_mat
            since_orth = 0

    traj = Trajectory(t0, h, states)
    return traj, TangentPropagator(e_mat, logs, n_steps * h)


def burn_in_state(sys: SystemSpec, burn_in: float = 20.0, extra: float = 0.0,
                  x_start=(1.0, 1.0, 1.0), h: float = DEFAULT_STEP) -> np.ndarray:
    """On-attractor state: integrate the autonomous system for burn_in + extra."""
    total_steps = round(burn_in / h) + round(extra / h)
    if total_steps < 1:
        raise ValueError("burn-in span must cover at least one step")
    x0 = _check_state(sys, np.asarray(x_start, dtype=float))
    traj = integrate(sys, x0, 0.0, total_steps * h, h)
    return traj.final_state
