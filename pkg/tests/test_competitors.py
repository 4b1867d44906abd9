"""Competitor-loss tests.

Frozen values, hand-derived:
  Huber, c = 1.345:  rho(2) = c (|r| - c/2) = 1.7854875
  Tukey, c = 4.685:  rho(1) = (c^2/6)(1 - (1 - (1/c)^2)^3) = 0.4775661000571406
                     saturation c^2/6 = 3.658204166666666
  LMLS: rho(2) = ln(1 + 4/2) = ln 3
"""

import numpy as np
import pytest

from dpdnet.competitors import (
    CompetitorLoss,
    comp_grad,
    comp_loss,
    fit_competitor,
    huber,
    lmls,
    lta,
    lts,
    mae,
    mse,
    tukey,
)
from dpdnet.errors import GAUSSIAN
from dpdnet.loss import DpdConfig
from dpdnet.network import TANH, glorot_init, mlp
from dpdnet.training import TrainConfig, fit, predict


class TestLossValues:
    def test_mse_mae(self):
        r = np.array([1.0, -2.0, 3.0])
        assert comp_loss(mse(), r) == pytest.approx(np.mean(r * r))
        assert comp_loss(mae(), r) == pytest.approx(2.0)

    def test_huber_frozen_value(self):
        assert comp_loss(huber(), np.array([2.0])) == pytest.approx(1.7854875, abs=1e-10)
        # quadratic inside the elbow
        assert comp_loss(huber(), np.array([0.5])) == pytest.approx(0.125)

    def test_huber_continuity_at_elbow(self):
        c = 1.345
        lo = comp_loss(huber(), np.array([c - 1e-9]))
        hi = comp_loss(huber(), np.array([c + 1e-9]))
        assert abs(lo - hi) < 1e-8

    def test_tukey_frozen_values(self):
        assert comp_loss(tukey(), np.array([1.0])) == pytest.approx(
            0.4775661000571406, abs=1e-12
        )
        # redescending: constant beyond c
        sat = 3.658204166666666
        assert comp_loss(tukey(), np.array([4.685])) == pytest.approx(sat, abs=1e-12)
        assert comp_loss(tukey(), np.array([100.0])) == pytest.approx(sat, abs=1e-12)

    def test_lmls_value(self):
        assert comp_loss(lmls(), np.array([2.0])) == pytest.approx(np.log(3.0))

    def test_trimmed_losses(self):
        r = np.array([1.0, -1.0, 2.0, -10.0])
        # default h = ceil(0.75 * 4) = 3 smallest
        assert comp_loss(lts(), r) == pytest.approx((1 + 1 + 4) / 3)
        assert comp_loss(lta(), r) == pytest.approx((1 + 1 + 2) / 3)
        # full coverage reduces LTS to MSE
        assert comp_loss(lts(coverage=4), r) == pytest.approx(comp_loss(mse(), r))

    def test_coverage_validation(self):
        with pytest.raises(ValueError):
            comp_loss(lts(coverage=9), np.zeros(4))
        with pytest.raises(ValueError):
            CompetitorLoss("nonsense")


class TestGradients:
    @pytest.mark.parametrize(
        "loss", [mse(), mae(), lmls(), huber(), tukey(), lts(), lta()]
    )
    def test_grad_matches_fd(self, loss):
        spec = mlp(2, [3], TANH)
        theta = glorot_init(spec, 31)
        rng = np.random.default_rng(17)
        xs = rng.standard_normal((10, 2))
        ys = rng.standard_normal(10) * 2.0
        g = comp_grad(loss, spec, theta, xs, ys)
        h = 1e-7
        fd = np.zeros_like(g)

        def val(t):
            return comp_loss(loss, ys - predict(spec, t, xs))

        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            fd[k] = (val(tp) - val(tm)) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=2e-4, atol=1e-7)

    def test_tukey_gradient_vanishes_past_cutoff(self):
        spec = mlp(1, [])
        theta = np.zeros(2)
        xs = np.ones((1, 1))
        ys = np.array([1e3])  # residual far beyond c
        np.testing.assert_array_equal(comp_grad(tukey(), spec, theta, xs, ys), 0.0)


class TestFitCompetitor:
    def test_mse_matches_beta0_dpd_trajectory(self):
        # both objectives have proportional gradients; within one outer
        # round ADAM's normalized steps coincide, so the fits must agree
        rng = np.random.default_rng(2)
        xs = rng.uniform(-1, 1, (50, 1))
        ys = np.sin(2 * xs[:, 0]) + 0.1 * rng.standard_normal(50)
        spec = mlp(1, [6], TANH)
        cfg = TrainConfig(epochs=40, max_outer=1, seed=5)
        res_comp = fit_competitor(mse(), spec, xs, ys, cfg)
        res_dpd = fit(DpdConfig(0.0), spec, GAUSSIAN, xs, ys, cfg)
        np.testing.assert_allclose(
            predict(spec, res_comp.theta, xs),
            predict(spec, res_dpd.theta, xs),
            atol=1e-4,
        )

    def test_competitor_result_has_no_scale(self):
        xs = np.linspace(-1, 1, 30).reshape(-1, 1)
        ys = xs[:, 0] ** 2
        res = fit_competitor(huber(), mlp(1, [3], TANH), xs, ys,
                             TrainConfig(epochs=10, max_outer=2, seed=0))
        assert res.sigma is None
        assert len(res.loss_trace) == res.outer_iters + 1

    def test_determinism(self):
        xs = np.linspace(0, 1, 25).reshape(-1, 1)
        ys = 3 * xs[:, 0]
        cfg = TrainConfig(epochs=8, max_outer=2, seed=9)
        a = fit_competitor(lta(), mlp(1, [2], TANH), xs, ys, cfg)
        b = fit_competitor(lta(), mlp(1, [2], TANH), xs, ys, cfg)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_lts_ignores_gross_outliers(self):
        rng = np.random.default_rng(8)
        xs = rng.uniform(-1, 1, (60, 1))
        ys = 1.0 + 2.0 * xs[:, 0] + 0.02 * rng.standard_normal(60)
        ys[:10] += 100.0
        spec = mlp(1, [])
        cfg = TrainConfig(epochs=200, batch_size=1000, step_size=0.02, max_outer=1, seed=1)
        res = fit_competitor(lts(), spec, xs, ys, cfg)
        clean = np.mean((predict(spec, res.theta, xs) - (1 + 2 * xs[:, 0])) ** 2)
        assert clean < 0.01
