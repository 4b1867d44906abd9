"""Trainer tests: scale solvers, descent bookkeeping, determinism,
and the linear special case where the optimum is known in closed form.
"""

import numpy as np
import pytest

from dpdnet.errors import GAUSSIAN, LAPLACE
from dpdnet.loss import DpdConfig, EtaPoint, loss
from dpdnet.network import IDENTITY, TANH, glorot_init, mlp
from dpdnet.training import (
    DESCENT_TOL,
    DegenerateDenominatorError,
    NonFiniteLossError,
    TrainConfig,
    fit,
    init_sigma_mad,
    predict,
    sigma_update_fixed_point,
    sigma_update_qn,
    write_trace_csv,
)


def _linear_data(n=60, seed=0, noise=0.05):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1, 1, (n, 1))
    ys = 1.0 + 2.0 * xs[:, 0] + noise * rng.standard_normal(n)
    return xs, ys


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(sigma_solver="newton")
        with pytest.raises(ValueError):
            TrainConfig(max_outer=0)


class TestSigmaSolvers:
    def test_qn_beta0_gaussian_equals_rms(self):
        # at beta = 0 the Gaussian profile optimum is sqrt(mean r^2)
        xs, ys = _linear_data()
        spec = mlp(1, [])
        theta = np.array([0.7, 1.4])
        r = ys - predict(spec, theta, xs)
        sig = sigma_update_qn(
            DpdConfig(0.0), spec, GAUSSIAN, theta, xs, ys, 1.0,
            TrainConfig(sigma_gtol=1e-9),
        )
        assert abs(sig - np.sqrt(np.mean(r * r))) < 1e-6

    def test_fixed_point_zeroes_the_derivative(self):
        from dpdnet.loss import grad_sigma_at_residuals

        xs, ys = _linear_data(seed=3)
        spec = mlp(1, [])
        theta = np.array([0.9, 1.9])
        for beta in (0.2, 0.5, 1.0):
            sig = sigma_update_fixed_point(
                spec, theta, xs, ys, 0.5, beta, rel_tol=1e-14
            )
            r = ys - predict(spec, theta, xs)
            g = grad_sigma_at_residuals(DpdConfig(beta), GAUSSIAN, r, sig)
            assert abs(g) < 1e-8, (beta, g)

    def test_solvers_agree(self):
        xs, ys = _linear_data(seed=5)
        spec = mlp(1, [])
        theta = np.array([0.5, 1.0])
        cfg = TrainConfig(sigma_gtol=1e-9)
        for beta in (0.1, 0.5, 0.9):
            s_qn = sigma_update_qn(DpdConfig(beta), spec, GAUSSIAN, theta, xs, ys, 0.4, cfg)
            s_fp = sigma_update_fixed_point(spec, theta, xs, ys, 0.4, beta, rel_tol=1e-14)
            assert abs(s_qn - s_fp) < 1e-6, beta

    def test_qn_respects_floor(self):
        # exact interpolation drives sigma to the configured floor
        spec = mlp(1, [])
        theta = np.array([1.0, 2.0])
        xs = np.linspace(-1, 1, 11).reshape(-1, 1)
        ys = 1.0 + 2.0 * xs[:, 0]
        sig = sigma_update_qn(
            DpdConfig(0.0, sigma0=0.001), spec, GAUSSIAN, theta, xs, ys, 0.3,
            TrainConfig(),
        )
        assert sig == pytest.approx(0.001)

    def test_qn_rejects_nonfinite(self):
        spec = mlp(1, [])
        theta = np.array([0.0, 0.0])
        xs = np.ones((4, 1))
        ys = np.array([1.0, 2.0, np.inf, 0.0])
        with pytest.raises(NonFiniteLossError):
            sigma_update_qn(DpdConfig(0.0), spec, GAUSSIAN, theta, xs, ys, 1.0, TrainConfig())

    def test_fixed_point_degenerate_denominator(self):
        # one huge residual at small sigma: every weight underflows to 0
        spec = mlp(1, [])
        theta = np.array([0.0, 0.0])
        xs = np.ones((3, 1))
        ys = np.array([1e9, -1e9, 1e9])
        with pytest.raises(DegenerateDenominatorError):
            sigma_update_fixed_point(spec, theta, xs, ys, 1e-3, 1.0)

    def test_mad_initialization(self):
        spec = mlp(1, [])
        theta = np.zeros(2)
        xs = np.zeros((5, 1))
        ys = np.array([1.0, 2.0, 3.0, 4.0, 100.0])
        # residuals = ys; med = 3, |r - 3| = [2,1,0,1,97], mad = 1
        assert init_sigma_mad(spec, theta, xs, ys) == pytest.approx(1.4826)
        # exact fit floors at sigma0
        assert init_sigma_mad(spec, theta, xs, np.zeros(5), sigma0=0.02) == 0.02


class TestFit:
    def test_linear_beta0_matches_least_squares(self):
        xs, ys = _linear_data(n=80, seed=1)
        spec = mlp(1, [])
        cfg = TrainConfig(
            epochs=300, batch_size=1000, step_size=0.01, max_outer=8, seed=0
        )
        res = fit(DpdConfig(0.0), spec, GAUSSIAN, xs, ys, cfg)
        X = np.column_stack([np.ones(len(ys)), xs[:, 0]])
        coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
        np.testing.assert_allclose(
            predict(spec, res.theta, xs), X @ coef, atol=1e-5
        )
        # profile optimum ties sigma to the residual RMS
        r = ys - predict(spec, res.theta, xs)
        assert abs(res.sigma - np.sqrt(np.mean(r * r))) < 1e-5

    def test_full_batch_monotone_descent(self):
        xs, ys = _linear_data(n=50, seed=2)
        spec = mlp(1, [3], TANH)
        cfg = TrainConfig(epochs=50, batch_size=1000, max_outer=10, seed=4)
        res = fit(DpdConfig(0.5), spec, GAUSSIAN, xs, ys, cfg)
        assert res.descent_violations == 0
        diffs = np.diff(res.loss_trace)
        assert np.all(diffs <= DESCENT_TOL)

    def test_trace_semantics(self):
        xs, ys = _linear_data(n=30, seed=6)
        spec = mlp(1, [])
        cfg = TrainConfig(epochs=20, max_outer=5, seed=1)
        res = fit(DpdConfig(0.3), spec, GAUSSIAN, xs, ys, cfg)
        # entry 0 is the objective at initialization, before any update
        theta0 = glorot_init(spec, np.random.SeedSequence(1).spawn(2)[0])
        sigma0 = init_sigma_mad(spec, theta0, xs, ys)
        init_loss = loss(DpdConfig(0.3), spec, GAUSSIAN, EtaPoint(theta0, sigma0), xs, ys)
        assert res.loss_trace[0] == pytest.approx(init_loss, rel=1e-12)
        assert len(res.loss_trace) == res.outer_iters + 1
        assert len(res.sigma_trace) == len(res.loss_trace)

    def test_seed_determinism(self):
        xs, ys = _linear_data(n=40, seed=9)
        spec = mlp(1, [4], TANH)
        cfg = TrainConfig(epochs=15, max_outer=3, seed=7)
        a = fit(DpdConfig(0.4), spec, GAUSSIAN, xs, ys, cfg)
        b = fit(DpdConfig(0.4), spec, GAUSSIAN, xs, ys, cfg)
        np.testing.assert_array_equal(a.theta, b.theta)
        assert a.sigma == b.sigma
        c = fit(DpdConfig(0.4), spec, GAUSSIAN, xs, ys, TrainConfig(epochs=15, max_outer=3, seed=8))
        assert not np.array_equal(a.theta, c.theta)

    def test_fixed_point_solver_inside_fit(self):
        xs, ys = _linear_data(n=45, seed=12)
        spec = mlp(1, [])
        cfg = TrainConfig(epochs=40, max_outer=6, seed=2, sigma_solver="fixed_point")
        res = fit(DpdConfig(0.5), spec, GAUSSIAN, xs, ys, cfg)
        assert res.descent_violations == 0
        assert res.sigma > 0

    def test_non_gaussian_model_fit_runs(self):
        xs, ys = _linear_data(n=40, seed=13)
        cfg = TrainConfig(epochs=20, max_outer=3, seed=0)
        res = fit(DpdConfig(0.3), mlp(1, []), LAPLACE, xs, ys, cfg)
        assert np.isfinite(res.loss_trace).all()

    def test_outlier_resistance_of_positive_beta(self):
        xs, ys = _linear_data(n=60, seed=10, noise=0.05)
        ys_bad = ys.copy()
        ys_bad[:12] += 50.0
        spec = mlp(1, [])
        cfg = TrainConfig(epochs=150, batch_size=1000, step_size=0.01, max_outer=10, seed=3)
        res_rob = fit(DpdConfig(0.5), spec, GAUSSIAN, xs, ys_bad, cfg)
        res_mle = fit(DpdConfig(0.0), spec, GAUSSIAN, xs, ys_bad, cfg)
        clean_mse_rob = np.mean((predict(spec, res_rob.theta, xs) - (1 + 2 * xs[:, 0])) ** 2)
        clean_mse_mle = np.mean((predict(spec, res_mle.theta, xs) - (1 + 2 * xs[:, 0])) ** 2)
        assert clean_mse_rob < 0.01
        assert clean_mse_mle > 10 * clean_mse_rob

    def test_predict_shapes(self):
        spec = mlp(2, [])
        theta = np.array([1.0, 1.0, -1.0])
        assert predict(spec, theta, np.array([[2.0, 1.0]])).shape == (1,)
        # a single p-dim point stays a point, not p scalar inputs
        xs1 = np.array([[2.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(predict(spec, theta, xs1), [2.0, 1.0])


class TestTraceCsv:
    def test_format(self, tmp_path):
        xs, ys = _linear_data(n=25, seed=4)
        res = fit(DpdConfig(0.2), mlp(1, []), GAUSSIAN, xs, ys,
                  TrainConfig(epochs=10, max_outer=3, seed=0))
        path = tmp_path / "trace.csv"
        write_trace_csv(res, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "outer,loss,sigma,descent_ok"
        assert len(lines) == len(res.loss_trace) + 1
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == res.loss_trace[0]
