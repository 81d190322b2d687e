"""Random-demodulation baseline: chipping measurement and linear reweighted IRLS.

The demodulator multiplies the signal by a +-1 chipping sequence switching at
the chip rate, integrates over each output period, and dumps (integrate-and-
dump). Because the basis is sinusoidal the measurement matrix entries are
exact piecewise integrals with closed-form antiderivatives, chip cell by chip
cell; output windows need not align with chip boundaries.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .signals import BasisParams, SparseCoeffs
from .solver import IRNLSConfig, OuterIteration, SolveDiagnostics, compute_weights


@dataclass(frozen=True)
class RDConfig:
    """Chipping-sequence demodulator configuration."""

    basis: BasisParams
    T: float
    chip_rate: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.T <= 0 or self.chip_rate <= 0:
            raise ValueError("T and chip_rate must be positive")
        if self.n_samples < 1:
            raise ValueError("T_u too short: no output windows fit")

    @property
    def n_samples(self) -> int:
        return int(np.floor(self.basis.T_u / self.T + 1e-9))

    @property
    def n_chips(self) -> int:
        return int(np.ceil(self.basis.T_u * self.chip_rate - 1e-9))


def chip_sequence(config: RDConfig) -> np.ndarray:
    """The +-1 chip values, one per chip cell, from the config seed."""
    rng = np.random.default_rng(config.seed)
    return rng.integers(0, 2, size=config.n_chips) * 2.0 - 1.0


def _basis_antiderivative(basis: BasisParams, t: float) -> np.ndarray:
    """Columnwise antiderivative of the basis at time t."""
    half = basis.n_basis // 2
    omega = 2.0 * np.pi * basis.delta_f * np.arange(1, half + 1)
    return np.concatenate([np.sin(omega * t) / omega, -np.cos(omega * t) / omega])


def rd_matrix_from_chips(config: RDConfig, chips: np.ndarray) -> np.ndarray:
    """Measurement matrix for explicit chip values.

    Entry (m, n) integrates chip(t) * psi_n(t) over the m-th output window;
    chip cells are clipped to the window so fractional chips-per-window are
    handled exactly.
    """
    chips = np.asarray(chips, dtype=float)
    if chips.shape != (config.n_chips,):
        raise ValueError(f"need {config.n_chips} chip values, got {chips.shape}")
    basis = config.basis
    n = basis.n_basis
    m_rows = config.n_samples
    chip_len = 1.0 / config.chip_rate
    phi = np.zeros((m_rows, n))
    for m in range(m_rows):
        t_a = m * config.T
        t_b = (m + 1) * config.T
        j_first = int(np.floor(t_a / chip_len + 1e-12))
        j_last = int(np.ceil(t_b / chip_len - 1e-12)) - 1
        row = np.zeros(n)
        for j in range(j_first, j_last + 1):
            lo = max(t_a, j * chip_len)
            hi = min(t_b, (j + 1) * chip_len)
            if hi <= lo:
                continue
            row += chips[j] * (_basis_antiderivative(basis, hi)
                               - _basis_antiderivative(basis, lo))
        phi[m] = row
    return phi


def build_rd_matrix(config: RDConfig) -> np.ndarray:
    return rd_matrix_from_chips(config, chip_sequence(config))


def rd_measure(config: RDConfig, coeffs: SparseCoeffs) -> np.ndarray:
    alpha = np.asarray(coeffs)
    if alpha.shape[0] != config.basis.n_basis:
        raise ValueError(
            f"coefficient length {alpha.shape[0]} != basis size {config.basis.n_basis}")
    return build_rd_matrix(config) @ alpha


def irls_solve(phi: np.ndarray, y: np.ndarray, config: IRNLSConfig,
               rng: Optional[np.random.Generator] = None,
               ) -> tuple[np.ndarray, SolveDiagnostics]:
    """Reweighted linear solve: the outer schedule of the nonlinear solver
    with the inner step replaced by the closed-form weighted ridge solution.

    The first inner solve is global, so the initialization only sets the
    first weights; with no rng the start is the zero vector (uniform first
    weights).
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    if phi.ndim != 2 or y.shape != (phi.shape[0],):
        raise ValueError(f"shape mismatch: phi {phi.shape}, y {y.shape}")
    n = phi.shape[1]
    if rng is None:
        a = np.zeros(n)
    else:
        lo, hi = config.init_range
        a = rng.uniform(lo, hi, size=n)
    gram = phi.T @ phi
    rhs = phi.T @ y
    eps = config.eps0
    diag = SolveDiagnostics()
    for j in range(config.max_outer):
        w = compute_weights(a, eps, config.p)
        lhs = gram.copy()
        lhs[np.diag_indices_from(lhs)] += config.mu * w
        a_new = np.linalg.solve(lhs, rhs)
        denom = float(np.linalg.norm(a))
        diff = float(np.linalg.norm(a_new - a))
        if denom > 0.0:
            ratio = diff / denom
        else:
            ratio = 0.0 if diff == 0.0 else float("inf")
        r = phi @ a_new - y
        cost = float(r @ r) + config.mu * float(np.sum(np.abs(a_new) ** config.p))
        diag.iterations.append(OuterIteration(j, cost, eps, ratio, 1))
        a = a_new
        if ratio <= config.err:
            diag.converged = True
            break
        if ratio <= config.c * np.sqrt(eps):
            eps = config.lam * eps
    return a, diag


def matrix_csv(phi: np.ndarray) -> str:
    """Debug export: row, col, value triplets."""
    buf = io.StringIO()
    buf.write("row,col,value\n")
    for i in range(phi.shape[0]):
        for j in range(phi.shape[1]):
            buf.write(f"{i + 1},{j + 1},{phi[i, j]!r}\n")
    return buf.getvalue()
