import numpy as np
import pytest

from chaosense import modulation, signals, systems


def register_test_systems():
    """Small analytic systems used as integration oracles."""
    reg = systems._REGISTRY
    if "zero2" not in reg:
        systems.register_system("zero2", systems.FieldDef(
            dim=2,
            fieldfn=lambda p, x: np.zeros(2),
            jacfn=lambda p, x: np.zeros((2, 2)),
        ))
    if "expdecay" not in reg:
        systems.register_system("expdecay", systems.FieldDef(
            dim=1,
            fieldfn=lambda p, x: -x,
            jacfn=lambda p, x: np.array([[-1.0]]),
        ))
    if "diag2" not in reg:
        systems.register_system("diag2", systems.FieldDef(
            dim=2,
            fieldfn=lambda p, x: np.array([-x[0], -2.0 * x[1]]),
            jacfn=lambda p, x: np.diag([-1.0, -2.0]),
        ))
    if "blowup" not in reg:
        systems.register_system("blowup", systems.FieldDef(
            dim=1,
            fieldfn=lambda p, x: 1.0 + x * x,
            jacfn=lambda p, x: np.array([[2.0 * x[0]]]),
        ))
    if "lorenz_nokernel" not in reg:
        fd = reg["lorenz"]
        systems.register_system("lorenz_nokernel", systems.FieldDef(
            dim=3, fieldfn=fd.fieldfn, jacfn=fd.jacfn))


register_test_systems()


def make_system(field_id, n, params=None):
    return systems.SystemSpec(field_id, n, params or {}, field_id)


@pytest.fixture(scope="session")
def basis_std():
    """The headline scenario basis: W=5, T_u=10, N=100."""
    return signals.BasisParams(5.0, 10.0)


@pytest.fixture(scope="session")
def measured_k10(basis_std):
    """One verified K=10 chaotic measurement shared across test modules."""
    rng = np.random.default_rng(1)
    coeffs = signals.gen_sparse_coeffs(basis_std, 10, "gaussian", 4.0, rng)
    config = modulation.ModulationConfig(sys=systems.lorenz())
    record, traj = modulation.measure(config, (coeffs, basis_std), seed=100)
    return config, coeffs, record, traj
