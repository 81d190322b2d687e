"""Chaotic-modulation analog-to-information conversion toolkit.

Core subpackages:

- systems: built-in chaotic systems, RK4 integration, tangent propagation
- signals: real Fourier basis, sparse multi-tone synthesis, error metrics
- modulation: sub-Nyquist measurement and the impulsively clamped replica
- solver: reweighted l_p nonlinear least squares
- lyapunov: reconstructability analysis (local/supreme Lyapunov exponents)
- randdemod: random-demodulation baseline
- harness: seeded Monte-Carlo trials and sweeps
- service / cli: HTTP service and its thin command-line client
"""

__version__ = "0.1.0"
