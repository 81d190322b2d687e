import numpy as np
import pytest

from chaosense import randdemod as rd
from chaosense import signals as sig
from chaosense.solver import IRNLSConfig


@pytest.fixture(scope="module")
def basis():
    return sig.BasisParams(5.0, 10.0)


@pytest.fixture(scope="module")
def config(basis):
    return rd.RDConfig(basis=basis, T=0.2, chip_rate=10.0, seed=123)


class TestMatrix:
    def test_row_count(self, basis):
        assert rd.build_rd_matrix(rd.RDConfig(basis=basis, T=0.2)).shape == (50, 100)

    def test_chip_doubling_doubles_entries(self, config):
        chips = rd.chip_sequence(config)
        a = rd.rd_matrix_from_chips(config, chips)
        b = rd.rd_matrix_from_chips(config, 2.0 * chips)
        np.testing.assert_allclose(b, 2.0 * a, rtol=1e-14)

    def test_entries_match_quadrature(self, basis, config):
        # oracle: composite midpoint quadrature at step 1e-4
        phi = rd.build_rd_matrix(config)
        chips = rd.chip_sequence(config)
        step = 1e-4
        rows = (0, 7, 49)
        for m in rows:
            t = m * 0.2 + step * (np.arange(round(0.2 / step)) + 0.5)
            chip_vals = chips[np.floor(t * 10.0).astype(int)]
            grid = np.hstack([
                np.cos(2 * np.pi * basis.delta_f * np.outer(t, np.arange(1, 51))),
                np.sin(2 * np.pi * basis.delta_f * np.outer(t, np.arange(1, 51))),
            ])
            quad = (chip_vals[:, None] * grid).sum(axis=0) * step
            assert np.abs(phi[m] - quad).max() < 1e-6

    def test_fractional_chips_per_window(self, basis):
        # T = 0.25 with chip rate 10: 2.5 chips per output window
        config = rd.RDConfig(basis=basis, T=0.25, chip_rate=10.0, seed=5)
        phi = rd.build_rd_matrix(config)
        assert phi.shape == (40, 100)
        chips = rd.chip_sequence(config)
        step = 1e-4
        m = 3  # window [0.75, 1.0) spans chips 7, 8, 9 partially
        t = m * 0.25 + step * (np.arange(round(0.25 / step)) + 0.5)
        chip_vals = chips[np.floor(t * 10.0).astype(int)]
        grid = np.hstack([
            np.cos(2 * np.pi * basis.delta_f * np.outer(t, np.arange(1, 51))),
            np.sin(2 * np.pi * basis.delta_f * np.outer(t, np.arange(1, 51))),
        ])
        quad = (chip_vals[:, None] * grid).sum(axis=0) * step
        assert np.abs(phi[m] - quad).max() < 1e-6

    def test_same_seed_identical(self, basis):
        a = rd.build_rd_matrix(rd.RDConfig(basis=basis, T=0.2, seed=9))
        b = rd.build_rd_matrix(rd.RDConfig(basis=basis, T=0.2, seed=9))
        assert np.array_equal(a, b)

    def test_csv_export(self, basis):
        phi = np.array([[1.0, 2.0], [3.0, 4.0]])
        lines = rd.matrix_csv(phi).strip().splitlines()
        assert lines[0] == "row,col,value"
        assert len(lines) == 5


class TestMeasure:
    def test_zero_coefficients(self, config):
        y = rd.rd_measure(config, sig.SparseCoeffs(np.zeros(100)))
        assert np.array_equal(y, np.zeros(50))

    def test_linearity(self, config):
        rng = np.random.default_rng(3)
        a = rng.standard_normal(100)
        b = rng.standard_normal(100)
        ya = rd.rd_measure(config, sig.SparseCoeffs(a))
        yb = rd.rd_measure(config, sig.SparseCoeffs(b))
        yab = rd.rd_measure(config, sig.SparseCoeffs(a + 2.0 * b))
        np.testing.assert_allclose(yab, ya + 2.0 * yb, atol=1e-12)

    def test_matches_time_domain_simulation(self, basis, config):
        # oracle: synthesize -> chip -> integrate-and-dump, midpoint rule;
        # chip edges align with the grid so no cell straddles a discontinuity
        coeffs = sig.gen_sparse_coeffs(basis, 4, "gaussian", 4.0,
                                       np.random.default_rng(8))
        y = rd.rd_measure(config, coeffs)
        chips = rd.chip_sequence(config)
        step = 1e-4
        t = step * (np.arange(round(10.0 / step)) + 0.5)
        phase = 2 * np.pi * basis.delta_f * np.outer(t, np.arange(1, 51))
        u = np.hstack([np.cos(phase), np.sin(phase)]) @ np.asarray(coeffs)
        chip_vals = chips[np.floor(t * 10.0).astype(int)]
        prod = chip_vals * u
        window = round(0.2 / step)
        dump = prod.reshape(50, window).sum(axis=1) * step
        assert np.abs(y - dump).max() < 1e-6

    def test_length_mismatch(self, config):
        with pytest.raises(ValueError):
            rd.rd_measure(config, sig.SparseCoeffs(np.zeros(10)))


class TestIrlsSolve:
    def test_zero_measurements_give_zero(self, config):
        phi = rd.build_rd_matrix(config)
        a, diag = rd.irls_solve(phi, np.zeros(50), IRNLSConfig())
        assert np.array_equal(a, np.zeros(100))
        assert diag.converged

    def test_single_tone_recovery(self, basis):
        config = rd.RDConfig(basis=basis, T=0.5, chip_rate=10.0, seed=21)
        phi = rd.build_rd_matrix(config)
        assert phi.shape == (20, 100)
        truth = np.zeros(100)
        truth[37] = 1.7
        y = phi @ truth
        # light regularization and a tight stop: the planted solution is
        # exact, so the remaining error is pure mu-bias
        a, _ = rd.irls_solve(phi, y, IRNLSConfig(mu=1e-4, err=1e-5))
        assert np.linalg.norm(a - truth) / np.linalg.norm(truth) < 1e-3

    def test_p2_matches_closed_form_ridge(self, config):
        # oracle: direct SPD solve of the ridge normal equations
        phi = rd.build_rd_matrix(config)
        rng = np.random.default_rng(5)
        y = rng.standard_normal(50)
        mu = 1e-2
        expected = np.linalg.solve(phi.T @ phi + mu * np.eye(100), phi.T @ y)
        a, _ = rd.irls_solve(phi, y, IRNLSConfig(mu=mu, p=2.0))
        assert np.linalg.norm(a - expected) / np.linalg.norm(expected) < 1e-8

    def test_inner_step_solves_normal_equations(self, config):
        phi = rd.build_rd_matrix(config)
        rng = np.random.default_rng(6)
        y = rng.standard_normal(50)
        cfg = IRNLSConfig(max_outer=1, err=1e-30)
        a, _ = rd.irls_solve(phi, y, cfg)
        w = np.full(100, (cfg.eps0) ** ((cfg.p - 2.0) / 2.0))
        lhs = phi.T @ phi + np.diag(cfg.mu * w)
        resid = lhs @ a - phi.T @ y
        assert np.linalg.norm(resid) / np.linalg.norm(phi.T @ y) <= 1e-10

    def test_recovery_degrades_with_sparsity(self, basis):
        config = rd.RDConfig(basis=basis, T=0.2, chip_rate=10.0, seed=77)
        phi = rd.build_rd_matrix(config)
        medians = []
        for k in (2, 10, 30):
            errs = []
            for trial in range(7):
                rng = np.random.default_rng(1000 * k + trial)
                coeffs = sig.gen_sparse_coeffs(basis, k, "gaussian", 4.0, rng)
                truth = np.asarray(coeffs)
                a, _ = rd.irls_solve(phi, phi @ truth, IRNLSConfig())
                errs.append(np.linalg.norm(a - truth) / np.linalg.norm(truth))
            medians.append(np.median(errs))
        assert medians[0] < medians[1] < medians[2]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rd.irls_solve(np.eye(3), np.zeros(4), IRNLSConfig())
