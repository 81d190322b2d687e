"""JIT-compiled fixed-step integration kernels for the built-in 3-state systems.

These are the hot paths: plain-Python RK4 stepping is two to three orders of
magnitude too slow for the Monte-Carlo reconstruction runs and the Lyapunov
scans. Everything here operates on raw float64 arrays with 0-based state
indices; the public modules translate to and from the friendlier API types.

Conventions shared by all kernels:

- ``fid`` selects the vector field (``FID_LORENZ`` or ``FID_LIU``); ``p`` is
  the packed parameter vector (sigma, r, b[, c]).
- ``u_half`` holds the modulating signal sampled on the half-step grid
  t0, t0+h/2, t0+h, ... (length 2*n_steps+1, or length 0 for no modulation),
  so the RK4 stages at t, t+h/2 and t+h read exact grid values.
- A step whose new state norm exceeds ``DIVERGENCE_BOUND`` stops the kernel;
  the 1-based offending step is reported instead of a NaN trail.
"""

import numpy as np
from numba import njit

FID_LORENZ = 0
FID_LIU = 1

DIVERGENCE_BOUND = 1.0e6

# Residual clamp for diverged reconstruction candidates: the optimizer sees a
# flat plateau of large residuals instead of NaNs and can retreat.
RESIDUAL_CLAMP = 1.0e3

# Floor applied to QR scale factors. Impulsive resets make the propagator
# exactly singular; flooring keeps the per-direction log-scales finite while
# leaving collapsed directions unmistakably collapsed.
_SCALE_FLOOR = 1.0e-300

_BOUND_SQ = DIVERGENCE_BOUND * DIVERGENCE_BOUND


@njit(cache=True)
def _field(fid, p, x, out):
    if fid == FID_LORENZ:
        out[0] = p[0] * (x[1] - x[0])
        out[1] = p[1] * x[0] - x[1] - x[0] * x[2]
        out[2] = x[0] * x[1] - p[2] * x[2]
    else:
        out[0] = p[0] * (x[1] - x[0])
        out[1] = p[1] * x[0] - x[0] * x[2]
        out[2] = p[3] * x[0] * x[0] - p[2] * x[2]


@njit(cache=True)
def _jacobian(fid, p, x, jac):
    if fid == FID_LORENZ:
        jac[0, 0] = -p[0]
        jac[0, 1] = p[0]
        jac[0, 2] = 0.0
        jac[1, 0] = p[1] - x[2]
        jac[1, 1] = -1.0
        jac[1, 2] = -x[0]
        jac[2, 0] = x[1]
        jac[2, 1] = x[0]
        jac[2, 2] = -p[2]
    else:
        jac[0, 0] = -p[0]
        jac[0, 1] = p[0]
        jac[0, 2] = 0.0
        jac[1, 0] = p[1] - x[2]
        jac[1, 1] = 0.0
        jac[1, 2] = -x[0]
        jac[2, 0] = 2.0 * p[3] * x[0]
        jac[2, 1] = 0.0
        jac[2, 2] = -p[2]


@njit(cache=True)
def integrate_states(fid, p, x0, h, n_steps, u_half, mod_row, mod_state):
    """Classical RK4 trajectory of the (optionally modulated) system.

    Returns (states, div_step): states has shape (n_steps+1, 3) and
    div_step is -1 on success, else the 1-based step where the norm bound
    was crossed (entries beyond it are unspecified).
    """
    n = 3
    states = np.empty((n_steps + 1, n))
    x = x0.copy()
    states[0] = x
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    y = np.empty(n)
    modulated = u_half.shape[0] > 0
    for i in range(n_steps):
        _field(fid, p, x, k1)
        if modulated:
            k1[mod_row] += u_half[2 * i] * x[mod_state]
        for d in range(n):
            y[d] = x[d] + 0.5 * h * k1[d]
        _field(fid, p, y, k2)
        if modulated:
            k2[mod_row] += u_half[2 * i + 1] * y[mod_state]
        for d in range(n):
            y[d] = x[d] + 0.5 * h * k2[d]
        _field(fid, p, y, k3)
        if modulated:
            k3[mod_row] += u_half[2 * i + 1] * y[mod_state]
        for d in range(n):
            y[d] = x[d] + h * k3[d]
        _field(fid, p, y, k4)
        if modulated:
            k4[mod_row] += u_half[2 * i + 2] * y[mod_state]
        s2 = 0.0
        for d in range(n):
            x[d] = x[d] + (h / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
            s2 += x[d] * x[d]
        states[i + 1] = x
        if not np.isfinite(s2) or s2 > _BOUND_SQ:
            return states, i + 1
    return states, -1


@njit(cache=True)
def driven_response(fid, p, y0, h, steps_per_t, n_samples, z, u_half,
                    mod_row, mod_state, obs):
    """Impulsively clamped replica response.

    Integrates the candidate-excited system; at every sample instant records
    the observed state BEFORE clamping it to the measured value z[m]. After a
    divergence the remaining samples are filled with z[m] + RESIDUAL_CLAMP so
    the residual plateaus instead of exploding.

    Returns (zbar, y_final, div_step).
    """
    n = 3
    y = y0.copy()
    zbar = np.empty(n_samples)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    w = np.empty(n)
    for m in range(n_samples):
        for j in range(steps_per_t):
            i = m * steps_per_t + j
            _field(fid, p, y, k1)
            k1[mod_row] += u_half[2 * i] * y[mod_state]
            for d in range(n):
                w[d] = y[d] + 0.5 * h * k1[d]
            _field(fid, p, w, k2)
            k2[mod_row] += u_half[2 * i + 1] * w[mod_state]
            for d in range(n):
                w[d] = y[d] + 0.5 * h * k2[d]
            _field(fid, p, w, k3)
            k3[mod_row] += u_half[2 * i + 1] * w[mod_state]
            for d in range(n):
                w[d] = y[d] + h * k3[d]
            _field(fid, p, w, k4)
            k4[mod_row] += u_half[2 * i + 2] * w[mod_state]
            s2 = 0.0
            for d in range(n):
                y[d] = y[d] + (h / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
                s2 += y[d] * y[d]
            if not np.isfinite(s2) or s2 > _BOUND_SQ:
                for mm in range(m, n_samples):
                    zbar[mm] = z[mm] + RESIDUAL_CLAMP
                return zbar, y, i + 1
        zbar[m] = y[obs]
        y[obs] = z[m]
    return zbar, y, -1


@njit(cache=True)
def driven_response_with_sens(fid, p, y0, h, steps_per_t, n_samples, z,
                              u_half, psi_half, mod_row, mod_state, obs):
    """Clamped replica response plus forward sensitivities w.r.t. coefficients.

    The sensitivity matrix S (3 x N) obeys the variational dynamics of the
    RK4 map itself (stage states of the primal are reused), driven by the
    basis samples psi_half (2*n_steps+1, N). Clamping the observed state to
    data zeroes the corresponding sensitivity row at each sample instant.
    The recorded Jacobian row is the pre-clamp sensitivity of the observation.

    Returns (zbar, jac, y_final, S_final, div_step). After a divergence the
    remaining zbar entries are clamped as in driven_response and the
    corresponding Jacobian rows stay zero.
    """
    n = 3
    nc = psi_half.shape[1]
    y = y0.copy()
    s_mat = np.zeros((n, nc))
    zbar = np.empty(n_samples)
    jac = np.zeros((n_samples, nc))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    w = np.empty(n)
    jm = np.empty((n, n))
    ks1 = np.empty((n, nc))
    ks2 = np.empty((n, nc))
    ks3 = np.empty((n, nc))
    ks4 = np.empty((n, nc))
    ws = np.empty((n, nc))

    for m in range(n_samples):
        for j in range(steps_per_t):
            i = m * steps_per_t + j
            i0 = 2 * i
            i1 = 2 * i + 1
            i2 = 2 * i + 2

            # stage 1 at t
            u = u_half[i0]
            _field(fid, p, y, k1)
            k1[mod_row] += u * y[mod_state]
            _jacobian(fid, p, y, jm)
            jm[mod_row, mod_state] += u
            for c in range(nc):
                s0 = s_mat[0, c]
                s1 = s_mat[1, c]
                s2v = s_mat[2, c]
                ks1[0, c] = jm[0, 0] * s0 + jm[0, 1] * s1 + jm[0, 2] * s2v
                ks1[1, c] = jm[1, 0] * s0 + jm[1, 1] * s1 + jm[1, 2] * s2v
                ks1[2, c] = jm[2, 0] * s0 + jm[2, 1] * s1 + jm[2, 2] * s2v
            ym = y[mod_state]
            for c in range(nc):
                ks1[mod_row, c] += ym * psi_half[i0, c]

            # stage 2 at t + h/2
            u = u_half[i1]
            for d in range(n):
                w[d] = y[d] + 0.5 * h * k1[d]
            for d in range(n):
                for c in range(nc):
                    ws[d, c] = s_mat[d, c] + 0.5 * h * ks1[d, c]
            _field(fid, p, w, k2)
            k2[mod_row] += u * w[mod_state]
            _jacobian(fid, p, w, jm)
            jm[mod_row, mod_state] += u
            for c in range(nc):
                s0 = ws[0, c]
                s1 = ws[1, c]
                s2v = ws[2, c]
                ks2[0, c] = jm[0, 0] * s0 + jm[0, 1] * s1 + jm[0, 2] * s2v
                ks2[1, c] = jm[1, 0] * s0 + jm[1, 1] * s1 + jm[1, 2] * s2v
                ks2[2, c] = jm[2, 0] * s0 + jm[2, 1] * s1 + jm[2, 2] * s2v
            ym = w[mod_state]
            for c in range(nc):
                ks2[mod_row, c] += ym * psi_half[i1, c]

            # stage 3 at t + h/2
            for d in range(n):
                w[d] = y[d] + 0.5 * h * k2[d]
            for d in range(n):
                for c in range(nc):
                    ws[d, c] = s_mat[d, c] + 0.5 * h * ks2[d, c]
            _field(fid, p, w, k3)
            k3[mod_row] += u * w[mod_state]
            _jacobian(fid, p, w, jm)
            jm[mod_row, mod_state] += u
            for c in range(nc):
                s0 = ws[0, c]
                s1 = ws[1, c]
                s2v = ws[2, c]
                ks3[0, c] = jm[0, 0] * s0 + jm[0, 1] * s1 + jm[0, 2] * s2v
                ks3[1, c] = jm[1, 0] * s0 + jm[1, 1] * s1 + jm[1, 2] * s2v
                ks3[2, c] = jm[2, 0] * s0 + jm[2, 1] * s1 + jm[2, 2] * s2v
            ym = w[mod_state]
            for c in range(nc):
                ks3[mod_row, c] += ym * psi_half[i1, c]

            # stage 4 at t + h
            u = u_half[i2]
            for d in range(n):
                w[d] = y[d] + h * k3[d]
            for d in range(n):
                for c in range(nc):
                    ws[d, c] = s_mat[d, c] + h * ks3[d, c]
            _field(fid, p, w, k4)
            k4[mod_row] += u * w[mod_state]
            _jacobian(fid, p, w, jm)
            jm[mod_row, mod_state] += u
            for c in range(nc):
                s0 = ws[0, c]
                s1 = ws[1, c]
                s2v = ws[2, c]
                ks4[0, c] = jm[0, 0] * s0 + jm[0, 1] * s1 + jm[0, 2] * s2v
                ks4[1, c] = jm[1, 0] * s0 + jm[1, 1] * s1 + jm[1, 2] * s2v
                ks4[2, c] = jm[2, 0] * s0 + jm[2, 1] * s1 + jm[2, 2] * s2v
            ym = w[mod_state]
            for c in range(nc):
                ks4[mod_row, c] += ym * psi_half[i2, c]

            s2 = 0.0
            for d in range(n):
                y[d] = y[d] + (h / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
                s2 += y[d] * y[d]
            for d in range(n):
                for c in range(nc):
                    s_mat[d, c] = s_mat[d, c] + (h / 6.0) * (
                        ks1[d, c] + 2.0 * ks2[d, c] + 2.0 * ks3[d, c] + ks4[d, c])
            if not np.isfinite(s2) or s2 > _BOUND_SQ:
                for mm in range(m, n_samples):
                    zbar[mm] = z[mm] + RESIDUAL_CLAMP
                return zbar, jac, y, s_mat, i + 1

        zbar[m] = y[obs]
        for c in range(nc):
            jac[m, c] = s_mat[obs, c]
        y[obs] = z[m]
        for c in range(nc):
            s_mat[obs, c] = 0.0
    return zbar, jac, y, s_mat, -1


@njit(cache=True)
def tangent_batch(fid, p, x0_batch, h, n_steps, steps_per_t, obs, u_half,
                  mod_row, mod_state, reorth_every):
    """Tangent (variational) propagation for a batch of initial states.

    For each initial state the fundamental matrix of the linearized flow is
    carried as an orthogonal factor with per-direction log-scale accumulators,
    re-orthogonalized by QR every ``reorth_every`` steps and at every
    impulsive reset (steps_per_t > 0), where the observed row of the
    propagator is zeroed. QR scale factors are floored at a tiny positive
    value so collapsed directions stay finite.

    Returns (log_scales (B,3), q_final (B,3,3), div_steps (B,)).
    """
    n = 3
    nb = x0_batch.shape[0]
    logs = np.zeros((nb, n))
    qf = np.empty((nb, n, n))
    div = np.full(nb, -1, dtype=np.int64)
    modulated = u_half.shape[0] > 0

    for b in range(nb):
        x = x0_batch[b].copy()
        e_mat = np.eye(n)
        lg = np.zeros(n)
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        w = np.empty(n)
        jm = np.empty((n, n))
        ke1 = np.empty((n, n))
        ke2 = np.empty((n, n))
        ke3 = np.empty((n, n))
        ke4 = np.empty((n, n))
        we = np.empty((n, n))
        since_orth = 0
        diverged = False

        for i in range(n_steps):
            i0 = 2 * i
            i1 = 2 * i + 1
            i2 = 2 * i + 2

            # stage 1
            u = u_half[i0] if modulated else 0.0
            _field(fid, p, x, k1)
            _jacobian(fid, p, x, jm)
            if modulated:
                k1[mod_row] += u * x[mod_state]
                jm[mod_row, mod_state] += u
            for r in range(n):
                for c in range(n):
                    ke1[r, c] = jm[r, 0] * e_mat[0, c] + jm[r, 1] * e_mat[1, c] + jm[r, 2] * e_mat[2, c]

            # stage 2
            u = u_half[i1] if modulated else 0.0
            for d in range(n):
                w[d] = x[d] + 0.5 * h * k1[d]
            for r in range(n):
                for c in range(n):
                    we[r, c] = e_mat[r, c] + 0.5 * h * ke1[r, c]
            _field(fid, p, w, k2)
            _jacobian(fid, p, w, jm)
            if modulated:
                k2[mod_row] += u * w[mod_state]
                jm[mod_row, mod_state] += u
            for r in range(n):
                for c in range(n):
                    ke2[r, c] = jm[r, 0] * we[0, c] + jm[r, 1] * we[1, c] + jm[r, 2] * we[2, c]

            # stage 3
            for d in range(n):
                w[d] = x[d] + 0.5 * h * k2[d]
            for r in range(n):
                for c in range(n):
                    we[r, c] = e_mat[r, c] + 0.5 * h * ke2[r, c]
            _field(fid, p, w, k3)
            _jacobian(fid, p, w, jm)
            if modulated:
                k3[mod_row] += u * w[mod_state]
                jm[mod_row, mod_state] += u
            for r in range(n):
                for c in range(n):
                    ke3[r, c] = jm[r, 0] * we[0, c] + jm[r, 1] * we[1, c] + jm[r, 2] * we[2, c]

            # stage 4
            u = u_half[i2] if modulated else 0.0
            for d in range(n):
                w[d] = x[d] + h * k3[d]
            for r in range(n):
                for c in range(n):
                    we[r, c] = e_mat[r, c] + h * ke3[r, c]
            _field(fid, p, w, k4)
            _jacobian(fid, p, w, jm)
            if modulated:
                k4[mod_row] += u * w[mod_state]
                jm[mod_row, mod_state] += u
            for r in range(n):
                for c in range(n):
                    ke4[r, c] = jm[r, 0] * we[0, c] + jm[r, 1] * we[1, c] + jm[r, 2] * we[2, c]

            s2 = 0.0
            for d in range(n):
                x[d] = x[d] + (h / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
                s2 += x[d] * x[d]
            for r in range(n):
                for c in range(n):
                    e_mat[r, c] = e_mat[r, c] + (h / 6.0) * (
                        ke1[r, c] + 2.0 * ke2[r, c] + 2.0 * ke3[r, c] + ke4[r, c])
            if not np.isfinite(s2) or s2 > _BOUND_SQ:
                div[b] = i + 1
                diverged = True
                break

            since_orth += 1
            at_reset = steps_per_t > 0 and (i + 1) % steps_per_t == 0
            if at_reset:
                for c in range(n):
                    e_mat[obs, c] = 0.0
            if at_reset or since_orth >= reorth_every or i == n_steps - 1:
                q_mat, r_mat = np.linalg.qr(e_mat)
                for d in range(n):
                    rd = r_mat[d, d]
                    mag = abs(rd)
                    if mag < _SCALE_FLOOR:
                        mag = _SCALE_FLOOR
                    lg[d] += np.log(mag)
                    if rd < 0.0:
                        for r in range(n):
                            q_mat[r, d] = -q_mat[r, d]
                for r in range(n):
                    for c in range(n):
                        e_mat[r, c] = q_mat[r, c]
                since_orth = 0

        logs[b] = lg
        qf[b] = e_mat
        if diverged:
            continue
    return logs, qf, div


def warmup():
    """Force compilation of all kernels (cached to disk after first run)."""
    x0 = np.array([1.0, 1.0, 1.0])
    p = np.array([30.0, 50.0, 3.0, 0.0])
    empty = np.empty(0)
    integrate_states(FID_LORENZ, p, x0, 1e-3, 2, empty, 0, 0)
    u = np.zeros(5)
    psi = np.zeros((5, 2))
    z = np.zeros(2)
    driven_response(FID_LORENZ, p, x0, 1e-3, 1, 2, z, u, 1, 0, 1)
    driven_response_with_sens(FID_LORENZ, p, x0, 1e-3, 1, 2, z, u, psi, 1, 0, 1)
    tangent_batch(FID_LORENZ, p, x0[None, :], 1e-3, 2, 1, 1, empty, 1, 0, 100)
