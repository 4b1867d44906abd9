"""Acceptance gates for the package: twelve end-to-end checks.

Each criterion is one test that exercises a full behavior at fixed
tolerances: closed-form constants against quadrature, analytic gradients
against finite differences, robustness of benchmark fits under planted
contamination, influence-curve geometry, and bit-level reproducibility of
the CLI. Every test finishes with a single printed PASS line (visible
under `pytest -s`); the verbose test id itself is the pass/fail record.

These tests deliberately re-derive expectations from scratch (quadrature,
finite differences, direct formulas) instead of calling the code paths
they gate.
"""

import math
import time
from dataclasses import replace

import numpy as np

from dpdnet.benchmarks import (
    DgpSpec,
    breakdown_stress,
    competitor_method,
    default_network,
    dpd_method,
    gen_dataset,
    kfold_cv,
    run_replications,
)
from dpdnet.cli import main as cli_main
from dpdnet.errors import GAUSSIAN, LAPLACE, LOGISTIC, ErrorModel
from dpdnet.influence import (
    curve_predictor,
    curve_sigma,
    if_relu_limit,
    one_node_example_setup,
)
from dpdnet.loss import (
    DpdConfig,
    EtaPoint,
    grad_sigma_at_residuals,
    grad_theta_loss,
    loss,
    loss_at_residuals,
)
from dpdnet.network import (
    GELU,
    IDENTITY,
    RELU,
    SIGMOID,
    TANH,
    act_value,
    forward,
    mlp,
    softplus,
    unpack,
)
from dpdnet.training import (
    TrainConfig,
    fit,
    sigma_update_fixed_point,
    sigma_update_qn,
)

ALL_MODELS = (GAUSSIAN, LAPLACE, LOGISTIC)


def test_criterion_01_gaussian_constants_match_quadrature():
    t0 = time.perf_counter()
    worst = 0.0
    for beta in (0.1, 0.3, 0.5, 0.7, 1.0):
        for i, j in ((0, 0), (0, 2), (2, 2), (1, 2)):
            closed = GAUSSIAN.c_constant(i, j, beta)
            quad = GAUSSIAN.c_quadrature(i, j, beta)
            worst = max(worst, abs(closed - quad))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-8, f"max |closed - quadrature| = {worst:.3e}"
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    print(f"PASS: criterion 1 - Gaussian moment constants match quadrature "
          f"(max err {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_02_constant_identities_all_models():
    worst_id = 0.0
    worst_par = 0.0
    for model in ALL_MODELS:
        for beta in (0.1, 0.5, 1.0):
            for i in (1, 2, 3):
                lhs = model.c_constant(i, 1, beta)
                rhs = -(i / (1.0 + beta)) * model.c_constant(i - 1, 0, beta)
                worst_id = max(worst_id, abs(lhs - rhs))
            for i, j in ((1, 0), (0, 1), (2, 1), (1, 2), (0, 3)):
                worst_par = max(worst_par, abs(model.c_constant(i, j, beta)))
    assert worst_id < 1e-8, f"integration-by-parts identity off by {worst_id:.3e}"
    assert worst_par < 1e-10, f"odd-moment constant nonzero: {worst_par:.3e}"
    print(f"PASS: criterion 2 - moment identities hold for all models "
          f"(identity {worst_id:.2e}, parity {worst_par:.2e})")


def _hidden_kink_distance(spec, theta, xs):
    """Smallest |preactivation| across ReLU hidden layers (inf if none)."""
    parts = unpack(spec, theta)
    h = np.asarray(xs, dtype=float)
    dist = math.inf
    for layer in range(spec.depth):
        z = h @ parts[2 * layer] + parts[2 * layer + 1]
        if spec.activations[layer].kind == "relu":
            dist = min(dist, float(np.min(np.abs(z))))
        h = act_value(spec.activations[layer], z)
    return dist


def test_criterion_03_loss_gradients_match_finite_differences():
    t0 = time.perf_counter()
    archs = ([], [4], [3, 2], [5])
    acts = (SIGMOID, TANH, GELU, softplus(5.0), RELU)
    rng = np.random.default_rng(np.random.SeedSequence(20260816))
    for k in range(20):
        model = ALL_MODELS[k % 3]
        hidden = archs[k % 4]
        act = acts[k % 5]
        spec = mlp(1 + k % 3, hidden, act)
        beta = (0.0, 1.0, 0.37, 0.62, 0.81)[k % 5]
        cfg = DpdConfig(beta)
        sigma = float(rng.uniform(0.6, 1.8))
        n = 12
        for _ in range(60):
            xs = rng.normal(0.0, 1.0, (n, spec.input_dim))
            theta = rng.normal(0.0, 0.6, spec.param_count)
            if _hidden_kink_distance(spec, theta, xs) > 1e-2:
                break
        mu = forward(spec, theta, xs)
        ys = mu + rng.normal(0.0, sigma, n)
        # keep residuals clear of the Laplace score kink
        r = ys - mu
        ys = ys + np.where(np.abs(r) < 5e-3, np.where(r >= 0, 0.05, -0.05), 0.0)

        eta = EtaPoint(theta, sigma)
        g = grad_theta_loss(cfg, spec, model, eta, xs, ys)
        g_fd = np.empty_like(g)
        for d in range(theta.shape[0]):
            h = 1e-6 * max(1.0, abs(theta[d]))
            tp, tm = theta.copy(), theta.copy()
            tp[d] += h
            tm[d] -= h
            g_fd[d] = (
                loss(cfg, spec, model, EtaPoint(tp, sigma), xs, ys)
                - loss(cfg, spec, model, EtaPoint(tm, sigma), xs, ys)
            ) / (2.0 * h)
        rtol = 1e-4 if act.kind == "relu" else 1e-5
        np.testing.assert_allclose(g, g_fd, rtol=rtol, atol=1e-8)

        gs = grad_sigma_at_residuals(cfg, model, ys - mu, sigma)
        hs = 1e-6 * sigma
        gs_fd = (
            loss_at_residuals(cfg, model, ys - mu, sigma + hs)
            - loss_at_residuals(cfg, model, ys - mu, sigma - hs)
        ) / (2.0 * hs)
        np.testing.assert_allclose(gs, gs_fd, rtol=rtol, atol=1e-8)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    print(f"PASS: criterion 3 - analytic gradients match central differences "
          f"on 20 random instances ({elapsed:.2f}s)")


def test_criterion_04_small_beta_approaches_likelihood():
    rng = np.random.default_rng(np.random.SeedSequence(404))
    worst3 = 0.0
    worst4 = 0.0
    for model in ALL_MODELS:
        for sigma in (0.7, 1.1):
            r = rng.normal(0.0, 1.3, 200)
            base = loss_at_residuals(DpdConfig(0.0), model, r, sigma)
            worst3 = max(
                worst3, abs(loss_at_residuals(DpdConfig(1e-3), model, r, sigma) - base)
            )
            worst4 = max(
                worst4, abs(loss_at_residuals(DpdConfig(1e-4), model, r, sigma) - base)
            )
    assert worst3 <= 0.02, f"beta=1e-3 gap {worst3:.4f}"
    assert worst4 <= 0.002, f"beta=1e-4 gap {worst4:.5f}"
    print(f"PASS: criterion 4 - objective is continuous at beta=0 "
          f"(gaps {worst3:.2e} @1e-3, {worst4:.2e} @1e-4)")


def test_criterion_05_full_batch_descent_is_monotone():
    t0 = time.perf_counter()
    train, _ = gen_dataset(DgpSpec(2, delta=0.1, seed=0))
    cfg = TrainConfig(
        seed=0, epochs=50, batch_size=256, step_size=1e-3,
        max_outer=20, outer_tol=1e-300,
    )
    res = fit(DpdConfig(0.5), default_network(2), GAUSSIAN, train.xs, train.ys, cfg)
    elapsed = time.perf_counter() - t0
    assert res.outer_iters == 20
    assert res.descent_violations == 0
    diffs = np.diff(np.asarray(res.loss_trace))
    assert np.all(diffs <= 1e-12), f"max rise {diffs.max():.3e}"
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    print(f"PASS: criterion 5 - 20 full-batch outer rounds, zero descent "
          f"violations ({elapsed:.1f}s)")


def test_criterion_06_sigma_solvers_agree():
    lin = mlp(1, [], IDENTITY)
    theta0 = np.zeros(2)
    rng = np.random.default_rng(np.random.SeedSequence(606))
    tcfg = TrainConfig(sigma_gtol=1e-9)
    worst = 0.0
    for _ in range(10):
        n = 40
        ys = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2.0), n)
        xs = np.zeros((n, 1))
        beta = float(rng.uniform(0.05, 1.0))
        s_init = float(rng.uniform(0.5, 2.0))
        cfg = DpdConfig(beta)
        s_fp = sigma_update_fixed_point(
            lin, theta0, xs, ys, s_init, beta, rel_tol=1e-14
        )
        # the fixed point must sit on a positive denominator
        w = np.exp(-0.5 * beta * ys**2 / s_fp**2)
        assert w.sum() - n * beta / (1.0 + beta) ** 1.5 > 0.0
        s_qn = sigma_update_qn(cfg, lin, GAUSSIAN, theta0, xs, ys, s_init, tcfg)
        worst = max(worst, abs(s_fp - s_qn))
    assert worst < 1e-6, f"solver disagreement {worst:.3e}"
    # at beta = 0 the quasi-Newton solver lands on the root-mean-square
    for _ in range(3):
        ys = rng.normal(0.5, 1.5, 60)
        s_qn = sigma_update_qn(
            DpdConfig(0.0), lin, GAUSSIAN, theta0, np.zeros((60, 1)), ys, 1.0, tcfg
        )
        assert abs(s_qn - math.sqrt(float(np.mean(ys**2)))) < 1e-6
    print(f"PASS: criterion 6 - fixed-point and quasi-Newton scale steps agree "
          f"(max gap {worst:.2e})")


def test_criterion_07_angle_benchmark_robust_fit_beats_lse():
    dgp = DgpSpec(5, delta=0.30, seed=0)
    cfg = TrainConfig(seed=0, epochs=100, max_outer=2)
    reports = run_replications(
        dgp, [competitor_method("lse"), dpd_method(0.3)], 100, cfg
    )
    lse_mse = reports[0].summary("test_mse")[0]
    dpd_mse = reports[1].summary("test_mse")[0]
    assert 0.005 <= dpd_mse <= 0.025, f"robust test MSE {dpd_mse:.4f}"
    assert lse_mse >= 2.0 * dpd_mse, f"lse {lse_mse:.4f} vs robust {dpd_mse:.4f}"
    print(f"PASS: criterion 7 - surface 5 at 30% contamination: robust MSE "
          f"{dpd_mse:.4f}, least squares {lse_mse:.4f}")


def test_criterion_08_oscillation_benchmark_trimmed_train_error():
    dgp = DgpSpec(2, delta=0.20, seed=0)
    cfg = TrainConfig(seed=0, epochs=100, max_outer=16)
    reports = run_replications(
        dgp, [competitor_method("lse"), dpd_method(0.3)], 100, cfg
    )
    lse_tmse = reports[0].summary("train_tmse")[0]
    dpd_tmse = reports[1].summary("train_tmse")[0]
    assert dpd_tmse < 0.02, f"robust trimmed MSE {dpd_tmse:.4f}"
    assert lse_tmse > 0.10, f"least squares trimmed MSE {lse_tmse:.4f}"
    print(f"PASS: criterion 8 - surface 2 at 20% contamination: trimmed train "
          f"MSE {dpd_tmse:.4f} (robust) vs {lse_tmse:.4f} (least squares)")


def test_criterion_09_influence_curves_redescend():
    t0 = time.perf_counter()
    st = one_node_example_setup("sigmoid", 0.5)
    mu_i = st.mu_i
    ts = mu_i + st.sigma * np.linspace(-10.0, 10.0, 4001)
    curve = curve_predictor(st, ts, st.xs[st.index])
    vals = np.abs(np.asarray(curve.values))
    peak = float(vals.max())
    assert vals[0] < 1e-3 * peak and vals[-1] < 1e-3 * peak, (
        f"edges {vals[0]:.2e}, {vals[-1]:.2e} vs peak {peak:.2e}"
    )

    st0 = one_node_example_setup("sigmoid", 0.0)
    near = abs(float(curve_sigma(st0, np.array([st0.mu_i + st0.sigma])).values[0]))
    far = abs(
        float(curve_sigma(st0, np.array([st0.mu_i + 1000.0 * st0.sigma])).values[0])
    )
    assert far > 1e4 * near, f"unbounded tail {far:.3e} vs near {near:.3e}"

    st_r = one_node_example_setup("relu", 0.5)
    report = if_relu_limit(st_r, st_r.mu_i + st_r.sigma * np.linspace(-10, 10, 201))
    final = report.gaps[-1]
    assert report.m_sequence[-1] == 1000.0
    for kind in ("theta", "sigma", "predictor"):
        assert final[kind] < 1e-4, f"{kind} smoothing gap {final[kind]:.2e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    print(f"PASS: criterion 9 - influence redescends for beta>0, diverges at "
          f"beta=0, smoothed-kink gap {max(final.values()):.1e} ({elapsed:.1f}s)")


def test_criterion_10_gross_contamination_stress():
    t0 = time.perf_counter()
    train, _ = gen_dataset(DgpSpec(1, delta=0.0, seed=0))
    cfg = TrainConfig(seed=0, epochs=100, max_outer=12, sigma_solver="fixed_point")
    rows = breakdown_stress(
        default_network(1), GAUSSIAN, train.xs, train.ys,
        [0.4], [1e6], [0.0, 0.5], cfg, seed=0,
    )
    by_beta = {r.beta: r for r in rows}
    robust = by_beta[0.5]
    plain = by_beta[0.0]
    assert robust.max_abs_pred <= 10.0 * robust.clean_max_abs_pred, (
        f"robust fit chased outliers: {robust.max_abs_pred:.3g} vs clean "
        f"{robust.clean_max_abs_pred:.3g}"
    )
    assert plain.sigma_hat >= 100.0 * plain.clean_sigma_hat, (
        f"likelihood scale did not blow up: {plain.sigma_hat:.3g} vs clean "
        f"{plain.clean_sigma_hat:.3g}"
    )
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"took {elapsed:.2f}s"
    print(f"PASS: criterion 10 - 40% planted outliers at 1e6: robust predictions "
          f"bounded ({robust.max_abs_pred:.3g}), plain scale exploded "
          f"({plain.sigma_hat:.3g}) ({elapsed:.1f}s)")


def test_criterion_11_trimmed_cv_prefers_positive_beta():
    cfg = TrainConfig(seed=0, epochs=60, step_size=0.01, max_outer=3)
    net = mlp(2, [], IDENTITY)
    wins = 0
    for s in range(10):
        rng = np.random.default_rng(np.random.SeedSequence(s))
        xs = rng.uniform(0.0, 1.0, (100, 2))
        ys = 1.0 + 2.0 * xs[:, 0] - xs[:, 1] + 0.5 * rng.standard_normal(100)
        idx = rng.choice(100, 20, replace=False)
        ys[idx] += 4.0
        reports = kfold_cv(
            xs, ys, 10, [dpd_method(0.0), dpd_method(0.3)], 0.2, cfg, net, seed=s
        )
        if reports[1].cv_tmse < reports[0].cv_tmse:
            wins += 1
    assert wins >= 9, f"beta=0.3 won only {wins}/10 seeds"
    print(f"PASS: criterion 11 - trimmed 10-fold CV picks beta=0.3 over beta=0 "
          f"on {wins}/10 contaminated datasets")


def test_criterion_12_cli_reruns_are_byte_identical(tmp_path):
    args = ["benchmark", "--phi", "5", "--reps", "5", "--methods", "lse,dpd",
            "--betas", "0.3", "--jobs", "1", "--epochs", "10", "--max-outer", "1",
            "--no-figures"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main([*args, "--out", str(a)]) == 0
    assert cli_main([*args, "--out", str(b)]) == 0
    for name in ("results.csv", "replications.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    print("PASS: criterion 12 - identical CLI invocations reproduce results "
          "byte for byte")
