"""Real Fourier basis, sparse multi-tone synthesis and error metrics.

A band-limited signal of duration T_u and bandwidth W lives on N = 2*W*T_u
basis functions: cosines at frequencies i/T_u for i = 1..N/2 followed by the
matching sines. All tones are periodic in T_u, so evaluating the basis at
t modulo T_u extends a signal beyond its nominal duration exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class BasisParams:
    """Real Fourier basis of bandwidth W over [0, T_u)."""

    W: float
    T_u: float

    def __post_init__(self):
        if self.W <= 0 or self.T_u <= 0:
            raise ValueError("bandwidth and duration must be positive")
        n = 2.0 * self.W * self.T_u
        if abs(n - round(n)) > 1e-9 or round(n) < 2 or round(n) % 2 != 0:
            raise ValueError(f"2*W*T_u must be a positive even integer, got {n}")

    @property
    def n_basis(self) -> int:
        return round(2.0 * self.W * self.T_u)

    @property
    def delta_f(self) -> float:
        return 1.0 / self.T_u


@dataclass
class SparseCoeffs:
    """Coefficient vector on a real Fourier basis; K is its nonzero count."""

    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.ndim != 1:
            raise ValueError("coefficient vector must be 1-D")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("coefficients must be finite")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def k(self) -> int:
        return int(np.count_nonzero(self.alpha))

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.alpha.astype(dtype)
        return self.alpha

    def to_csv(self) -> str:
        """One (index, value) line per coefficient, 1-based indices."""
        buf = io.StringIO()
        buf.write("index,value\n")
        for i, v in enumerate(self.alpha, start=1):
            buf.write(f"{i},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SparseCoeffs":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0].strip() != "index,value":
            raise ValueError("coefficient CSV must start with 'index,value'")
        pairs = []
        for ln in lines[1:]:
            idx_s, val_s = ln.split(",")
            pairs.append((int(idx_s), float(val_s)))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(1, len(pairs) + 1)):
            raise ValueError("coefficient CSV indices must be 1..N")
        return cls(np.array([v for _, v in pairs]))


def _check_time(params: BasisParams, t: float) -> float:
    t = float(t)
    if not (0.0 <= t < params.T_u):
        raise ValueError(f"t = {t} outside [0, {params.T_u})")
    return t


def eval_basis(params: BasisParams, t: float) -> np.ndarray:
    """Basis vector at time t: cos(2*pi*i*df*t) for i=1..N/2, then the sines."""
    t = _check_time(params, t)
    half = params.n_basis // 2
    phase = 2.0 * np.pi * params.delta_f * t * np.arange(1, half + 1)
    return np.concatenate([np.cos(phase), np.sin(phase)])


def synthesize(coeffs: SparseCoeffs, params: BasisParams, t: float) -> float:
    """Signal value at time t: inner product of coefficients with the basis."""
    alpha = np.asarray(coeffs)
    if alpha.shape[0] != params.n_basis:
        raise ValueError(
            f"coefficient length {alpha.shape[0]} != basis size {params.n_basis}")
    return float(alpha @ eval_basis(params, t))


@lru_cache(maxsize=8)
def _basis_grid_cached(W: float, T_u: float, step: float, n_points: int) -> np.ndarray:
    params = BasisParams(W, T_u)
    half = params.n_basis // 2
    t = step * np.arange(n_points)
    phase = 2.0 * np.pi * params.delta_f * np.outer(t, np.arange(1, half + 1))
    return np.hstack([np.cos(phase), np.sin(phase)])


def basis_on_grid(params: BasisParams, step: float, n_points: int) -> np.ndarray:
    """(n_points, N) basis samples at t = 0, step, 2*step, ... (cached).

    Times are reduced modulo T_u before evaluation is needed; since every
    tone has period T_u the raw grid values are already exact for any span.
    """
    return _basis_grid_cached(params.W, params.T_u, step, n_points)


def signal_on_half_grid(coeffs: SparseCoeffs, params: BasisParams, h: float,
                        n_steps: int) -> np.ndarray:
    """u(t) on the RK4 half-step grid of n_steps steps starting at t = 0."""
    grid = basis_on_grid(params, 0.5 * h, 2 * n_steps + 1)
    return grid @ np.asarray(coeffs)


AMPLITUDE_HEADROOM = 0.95
SCALING_GRID_STEP = 1.0e-3


def gen_sparse_coeffs(params: BasisParams, K: int, dist: str, amp_limit: float,
                      rng: np.random.Generator) -> SparseCoeffs:
    """K-sparse coefficients with chaos-preserving amplitude scaling.

    Positions are uniform without replacement; values are standard Gaussian
    or Bernoulli +-1; the vector is rescaled so the maximum of |u(t)| over a
    1 ms grid equals AMPLITUDE_HEADROOM * amp_limit.
    """
    n = params.n_basis
    if not (1 <= K <= n):
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    if amp_limit <= 0:
        raise ValueError("amp_limit must be positive")
    positions = rng.choice(n, size=K, replace=False)
    if dist == "gaussian":
        values = rng.standard_normal(K)
        while np.any(values == 0.0):  # zero draws would break the K contract
            values[values == 0.0] = rng.standard_normal(np.count_nonzero(values == 0.0))
    elif dist == "bernoulli":
        values = rng.integers(0, 2, size=K) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown coefficient distribution {dist!r}")
    alpha = np.zeros(n)
    alpha[positions] = values

    n_grid = round(params.T_u / SCALING_GRID_STEP)
    grid = basis_on_grid(params, SCALING_GRID_STEP, n_grid)
    peak = float(np.max(np.abs(grid @ alpha)))
    alpha *= AMPLITUDE_HEADROOM * amp_limit / peak
    return SparseCoeffs(alpha)


def relative_error(est: SparseCoeffs, truth: SparseCoeffs) -> float:
    """Euclidean relative error ||est - truth|| / ||truth||."""
    a = np.asarray(est)
    b = np.asarray(truth)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(b))
    if denom == 0.0:
        raise ValueError("truth vector has zero norm")
    return float(np.linalg.norm(a - b)) / denom


def support_metrics(est: SparseCoeffs, truth: SparseCoeffs) -> tuple[float, float]:
    """Precision and recall of the top-K estimated positions vs true support.

    K is the true sparsity; the estimated support is the positions of the K
    largest-magnitude estimated coefficients (ties broken by index).
    """
    a = np.asarray(est)
    b = np.asarray(truth)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    true_support = set(np.flatnonzero(b).tolist())
    k = len(true_support)
    if k == 0:
        raise ValueError("truth vector has empty support")
    order = np.argsort(-np.abs(a), kind="stable")
    est_support = set(order[:k].tolist())
    hits = len(true_support & est_support)
    return hits / k, hits / k
