import numpy as np
import pytest

from chaosense import systems as S
from conftest import make_system


class TestVectorField:
    def test_lorenz_origin_is_equilibrium(self):
        assert np.array_equal(S.eval_vector_field(S.lorenz(), [0, 0, 0]), [0, 0, 0])

    def test_lorenz_at_ones(self):
        np.testing.assert_allclose(
            S.eval_vector_field(S.lorenz(), [1, 1, 1]), [0.0, 48.0, -2.0])

    def test_modulated_lorenz_adds_u_times_state(self):
        np.testing.assert_allclose(
            S.eval_vector_field(S.lorenz(), [1, 1, 1], mod=(2, 1, 2.0)),
            [0.0, 50.0, -2.0])

    def test_liu_at_ones(self):
        np.testing.assert_allclose(
            S.eval_vector_field(S.liu(), [1, 1, 1]), [0.0, 41.0, 1.5])

    def test_rejects_bad_state(self):
        with pytest.raises(ValueError):
            S.eval_vector_field(S.lorenz(), [1.0, 2.0])
        with pytest.raises(ValueError):
            S.eval_vector_field(S.lorenz(), [1.0, np.nan, 0.0])

    def test_rejects_bad_mod_indices(self):
        with pytest.raises(ValueError):
            S.eval_vector_field(S.lorenz(), [1, 1, 1], mod=(4, 1, 1.0))

    def test_unknown_field_id(self):
        with pytest.raises(ValueError):
            S.SystemSpec("x", 3, {}, "no_such_field")

    def test_builtin_defaults(self):
        assert S.lorenz().params == {"sigma": 30.0, "r": 50.0, "b": 3.0}
        assert S.liu().params == {"sigma": 30.0, "r": 42.0, "b": 2.5, "c": 4.0}


class TestJacobian:
    def test_lorenz_at_origin(self):
        np.testing.assert_allclose(
            S.eval_jacobian(S.lorenz(), [0, 0, 0]),
            [[-30, 30, 0], [50, -1, 0], [0, 0, -3]])

    def test_lorenz_at_123(self):
        np.testing.assert_allclose(
            S.eval_jacobian(S.lorenz(), [1, 2, 3]),
            [[-30, 30, 0], [47, -1, -1], [2, 1, -3]])

    def test_modulation_entry(self):
        jac = S.eval_jacobian(S.lorenz(), [0, 0, 0], mod=(2, 1, 1.5))
        assert jac[1, 0] == 50.0 + 1.5

    @pytest.mark.parametrize("sys", [S.lorenz(), S.liu()])
    def test_matches_central_finite_differences(self, sys):
        # independent oracle: central differences of the vector field
        rng = np.random.default_rng(2024)
        delta = 1e-6
        worst = 0.0
        for _ in range(100):
            x = rng.uniform(-20.0, 20.0, size=3)
            jac = S.eval_jacobian(sys, x)
            fd = np.empty((3, 3))
            for j in range(3):
                e = np.zeros(3)
                e[j] = delta
                fd[:, j] = (S.eval_vector_field(sys, x + e)
                            - S.eval_vector_field(sys, x - e)) / (2 * delta)
            scale = max(1.0, np.abs(jac).max())
            worst = max(worst, np.abs(jac - fd).max() / scale)
        assert worst <= 1e-6


class TestIntegrate:
    def test_zero_field_keeps_state(self):
        sys = make_system("zero2", 2)
        traj = S.integrate(sys, [3.0, -4.0], 0.0, 1.0, 1e-2)
        assert np.all(traj.states == [3.0, -4.0])

    def test_exponential_decay_matches_analytic(self):
        sys = make_system("expdecay", 1)
        traj = S.integrate(sys, [1.0], 0.0, 1.0, 1e-3)
        assert abs(traj.final_state[0] - np.exp(-1.0)) < 1e-10

    def test_rk4_order_under_step_halving(self):
        sys = make_system("expdecay", 1)
        exact = np.exp(-1.0)
        err_coarse = abs(S.integrate(sys, [1.0], 0.0, 1.0, 0.1).final_state[0] - exact)
        err_fine = abs(S.integrate(sys, [1.0], 0.0, 1.0, 0.05).final_state[0] - exact)
        ratio = err_coarse / err_fine
        assert 12.0 < ratio < 20.0

    def test_lorenz_attractor_bounded(self):
        traj = S.integrate(S.lorenz(), [1.0, 1.0, 1.0], 0.0, 100.0, 1e-3)
        assert np.all(np.isfinite(traj.states))
        assert np.abs(traj.states).max() < 200.0

    def test_divergence_reports_step(self):
        sys = make_system("blowup", 1)
        with pytest.raises(S.DivergenceError) as exc:
            S.integrate(sys, [0.0], 0.0, 2.0, 1e-3)
        assert 0 < exc.value.step <= 2000
        assert exc.value.t == pytest.approx(exc.value.step * 1e-3)

    def test_rejects_non_integer_span(self):
        with pytest.raises(ValueError):
            S.integrate(S.lorenz(), [1, 1, 1], 0.0, 0.0105, 1e-2)
        with pytest.raises(ValueError):
            S.integrate(S.lorenz(), [1, 1, 1], 1.0, 0.5, 1e-3)

    def test_deterministic_bit_identical(self):
        t1 = S.integrate(S.lorenz(), [1.0, 1.0, 1.0], 0.0, 5.0, 1e-3)
        t2 = S.integrate(S.lorenz(), [1.0, 1.0, 1.0], 0.0, 5.0, 1e-3)
        assert np.array_equal(t1.states, t2.states)

    def test_kernel_path_matches_generic_path(self):
        x0 = [2.0, -1.0, 30.0]
        fast = S.integrate(S.lorenz(), x0, 0.0, 2.0, 1e-3)
        slow = S.integrate(make_system("lorenz_nokernel", 3,
                                       {"sigma": 30.0, "r": 50.0, "b": 3.0}),
                           x0, 0.0, 2.0, 1e-3)
        np.testing.assert_allclose(fast.states, slow.states, rtol=1e-12, atol=1e-12)

    def test_modulated_kernel_matches_generic(self):
        u = lambda t: 2.0 * np.sin(3.0 * t)
        drive = S.DriveInput(u=u, mod_row=2, mod_state=1)
        x0 = [2.0, -1.0, 30.0]
        fast = S.integrate(S.lorenz(), x0, 0.0, 2.0, 1e-3, input=drive)
        slow = S.integrate(make_system("lorenz_nokernel", 3,
                                       {"sigma": 30.0, "r": 50.0, "b": 3.0}),
                           x0, 0.0, 2.0, 1e-3, input=drive)
        np.testing.assert_allclose(fast.states, slow.states, rtol=1e-12, atol=1e-12)
        autonomous = S.integrate(S.lorenz(), x0, 0.0, 2.0, 1e-3)
        assert not np.array_equal(fast.states, autonomous.states)

    def test_trajectory_length_contract(self):
        traj = S.integrate(S.lorenz(), [1, 1, 1], 0.0, 0.5, 1e-3)
        assert traj.states.shape == (501, 3)
        assert traj.t1 == pytest.approx(0.5)


class TestTangent:
    def test_constant_diagonal_flow(self):
        sys = make_system("diag2", 2)
        _, prop = S.integrate_with_tangent(sys, [1.0, 1.0], 0.0, 1.0, 1e-3)
        np.testing.assert_allclose(
            prop.singular_values(), [np.exp(-1.0), np.exp(-2.0)], rtol=1e-9)

    def test_lorenz_logdet_trace_identity(self):
        x0 = S.burn_in_state(S.lorenz(), 20.0)
        _, prop = S.integrate_with_tangent(S.lorenz(), x0, 0.0, 50.0, 1e-3)
        assert prop.log_abs_det / 50.0 == pytest.approx(-34.0, rel=0.01)

    def test_modulated_lorenz_trace_identity(self):
        # the u*x1 term enters row 2 off-diagonal: trace stays -34
        u = lambda t: 3.0 * np.cos(2.0 * np.pi * t)
        drive = S.DriveInput(u=u, mod_row=2, mod_state=1)
        x0 = S.burn_in_state(S.lorenz(), 20.0)
        _, prop = S.integrate_with_tangent(S.lorenz(), x0, 0.0, 20.0, 1e-3, input=drive)
        assert prop.log_abs_det / 20.0 == pytest.approx(-34.0, rel=0.01)

    def test_reset_every_step_collapses_direction(self):
        x0 = S.burn_in_state(S.lorenz(), 20.0)
        _, prop = S.integrate_with_tangent(
            S.lorenz(), x0, 0.0, 1.0, 1e-3, resets=(1e-3, 2))
        assert prop.log_scales.min() < -1e4
        assert np.all(np.isfinite(prop.log_scales))

    def test_generic_tangent_matches_kernel(self):
        x0 = np.array([2.0, -1.0, 30.0])
        _, fast = S.integrate_with_tangent(S.lorenz(), x0, 0.0, 2.0, 1e-3,
                                           resets=(0.2, 2))
        _, slow = S.integrate_with_tangent(
            make_system("lorenz_nokernel", 3, {"sigma": 30.0, "r": 50.0, "b": 3.0}),
            x0, 0.0, 2.0, 1e-3, resets=(0.2, 2))
        # the reset-collapsed direction's magnitude is a floor convention;
        # only the surviving directions are comparable
        np.testing.assert_allclose(fast.log_singular_values[:2],
                                   slow.log_singular_values[:2],
                                   rtol=1e-8, atol=1e-8)
        assert fast.log_singular_values[2] < -1e3
        assert slow.log_singular_values[2] < -1e3

    def test_reset_interval_must_align_with_step(self):
        with pytest.raises(ValueError):
            S.integrate_with_tangent(S.lorenz(), [1, 1, 1], 0.0, 1.0, 1e-3,
                                     resets=(0.00015, 2))

    def test_propagator_factor_shapes(self):
        _, prop = S.integrate_with_tangent(S.lorenz(), [1, 1, 1], 0.0, 0.5, 1e-3)
        assert prop.orthogonal.shape == (3, 3)
        np.testing.assert_allclose(prop.orthogonal.T @ prop.orthogonal,
                                   np.eye(3), atol=1e-10)
        assert prop.log_abs_det == pytest.approx(prop.log_scales.sum())


class TestBurnIn:
    def test_on_attractor(self):
        x = S.burn_in_state(S.lorenz(), 20.0, 1.5)
        assert np.all(np.isfinite(x)) and np.abs(x).max() < 200.0

    def test_deterministic(self):
        assert np.array_equal(S.burn_in_state(S.lorenz(), 20.0),
                              S.burn_in_state(S.lorenz(), 20.0))
