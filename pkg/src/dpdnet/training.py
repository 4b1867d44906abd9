"""Alternating minimization: ADAM over the weights, a 1-D solver over sigma.

One outer iteration freezes sigma and runs E epochs of mini-batch ADAM on
the weight gradient, then freezes the weights and minimizes the loss over
sigma on [sigma0, inf). The outer loop stops once the full-sample loss
improves by less than outer_tol, or after max_outer rounds. The loss is
evaluated on the full sample only at outer boundaries; those values form
loss_trace (entry 0 is the loss at initialization).

Reproducibility: a fit owns a single SeedSequence derived from
train_cfg.seed; one child seeds the weight init, the other drives every
batch shuffle in order. Same seed, config and data give bit-equal results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ErrorModel, GaussianModel
from .loss import (
    DpdConfig,
    EtaPoint,
    grad_sigma_at_residuals,
    loss_at_residuals,
)
from .network import (
    KINK_ZERO,
    NetworkSpec,
    _backprop_weighted,
    _forward_cached,
    _forward_parts,
    forward,
    glorot_init,
    unpack,
)

# an outer iteration counts as a descent violation if the full-sample
# loss rises by more than this
DESCENT_TOL = 1e-12


class NonFiniteLossError(RuntimeError):
    """Loss became non-finite during the sigma line search."""

    def __init__(self, message: str, last_sigma: float | None):
        super().__init__(message)
        self.last_sigma = last_sigma


class DegenerateDenominatorError(RuntimeError):
    """Fixed-point sigma denominator was not positive."""


@dataclass
class TrainConfig:
    epochs: int = 100            # ADAM epochs per outer iteration
    batch_size: int = 32
    step_size: float = 1e-3      # ADAM learning rate
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    sigma_solver: str = "qn"     # "qn" or "fixed_point" (Gaussian only)
    sigma_gtol: float = 1e-5
    sigma_max_iter: int = 15000
    fp_rel_tol: float = 1e-10
    fp_max_iter: int = 10000
    outer_tol: float = 1e-6
    max_outer: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.max_outer < 1:
            raise ValueError("epochs, batch_size and max_outer must be >= 1")
        for name in ("step_size", "sigma_gtol", "fp_rel_tol", "outer_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.sigma_solver not in ("qn", "fixed_point"):
            raise ValueError("sigma_solver must be 'qn' or 'fixed_point'")


@dataclass
class FitResult:
    theta: np.ndarray
    sigma: float | None
    loss_trace: list[float] = field(default_factory=list)
    sigma_trace: list[float | None] = field(default_factory=list)
    outer_iters: int = 0
    descent_violations: int = 0
    converged: bool = False


def init_sigma_mad(spec: NetworkSpec, theta0: np.ndarray, xs, ys, sigma0: float = 0.001) -> float:
    """Robust scale start: 1.4826 * median |r - median r|, floored at sigma0."""
    r = np.asarray(ys, float) - forward(spec, theta0, np.asarray(xs, float))
    mad = 1.4826 * float(np.median(np.abs(r - np.median(r))))
    return max(mad, sigma0)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _adam_pass(spec, theta, xs, ys, batch_coeffs, full_loss, train_cfg, rng, sel):
    """One round of E epochs of mini-batch ADAM; shared by every fit path.

    batch_coeffs(ys_batch, out_batch) must return the per-sample factors
    multiplying grad mu(x_i) in the objective gradient for that batch.
    Each epoch partitions a seeded shuffle into ceil(n/batch) contiguous
    chunks; the last chunk keeps its true size as the gradient denominator.
    First and second moments start at zero. When a single batch covers the
    sample the pass is deterministic, full_loss is checked at every epoch
    end and the best iterate visited is returned; in mini-batch mode the
    final iterate is returned as-is.
    """
    n = ys.shape[0]
    theta_work = np.array(theta, dtype=float, copy=True)
    parts = unpack(spec, theta_work)
    m = [np.zeros_like(p) for p in parts]
    v = [np.zeros_like(p) for p in parts]
    lr, b1, b2, eps = train_cfg.step_size, train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps

    bs = min(train_cfg.batch_size, n)
    full_batch = bs >= n
    if full_batch:
        best = theta_work.copy()
        best_loss = full_loss(parts)

    t = 0
    for _ in range(train_cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            xb = xs[idx]
            out, caches, h_last = _forward_cached(spec, parts, xb)
            coeffs = batch_coeffs(ys[idx], out)
            grads = _backprop_weighted(spec, parts, caches, h_last, coeffs, sel)
            t += 1
            c1 = 1.0 - b1**t
            c2 = 1.0 - b2**t
            for j, g in enumerate(grads):
                m[j] += (1.0 - b1) * (g - m[j])
                v[j] += (1.0 - b2) * (g * g - v[j])
                parts[j] -= lr * (m[j] / c1) / (np.sqrt(v[j] / c2) + eps)
        if full_batch:
            cur = full_loss(parts)
            if cur < best_loss:
                best_loss = cur
                best = theta_work.copy()
    return best if full_batch else theta_work


def adam_theta_update(
    cfg: DpdConfig,
    spec: NetworkSpec,
    model: ErrorModel,
    theta: np.ndarray,
    sigma_fixed: float,
    xs,
    ys,
    train_cfg: TrainConfig,
    seed,
    sel: str = KINK_ZERO,
) -> np.ndarray:
    """E epochs of mini-batch ADAM on the weight gradient with sigma frozen."""
    rng = _as_rng(seed)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    beta = cfg.beta
    sigma = float(sigma_fixed)
    scale = (1.0 + beta) / sigma ** (1.0 + beta)

    def batch_coeffs(yb, out):
        return model.psi1(beta, (yb - out) / sigma) * (scale / yb.shape[0])

    def full_loss(parts):
        return loss_at_residuals(cfg, model, ys - _forward_parts(spec, parts, xs), sigma)

    return _adam_pass(spec, theta, xs, ys, batch_coeffs, full_loss, train_cfg, rng, sel)


def _sigma_qn_core(
    cfg: DpdConfig, model: ErrorModel, r: np.ndarray, sigma_init: float, gtol: float, max_iter: int
) -> float:
    lo = cfg.sigma0
    sig = max(float(sigma_init), lo)
    f_cur = loss_at_residuals(cfg, model, r, sig)
    if not math.isfinite(f_cur):
        raise NonFiniteLossError(f"loss non-finite at entry sigma={sig}", None)
    g = grad_sigma_at_residuals(cfg, model, r, sig)
    best_s, best_f = sig, f_cur
    prev_s = prev_g = None
    for _ in range(max_iter):
        if abs(g) < gtol:
            break
        if sig <= lo and g >= 0.0:
            break  # floor is a constrained stationary point
        curv = None
        if prev_s is not None:
            ds, dg = sig - prev_s, g - prev_g
            if ds != 0.0 and dg * ds > 0.0:
                curv = dg / ds  # positive secant curvature only
        step = -g / curv if curv else -math.copysign(0.5 * max(sig, 10.0 * lo), g)
        cand = max(sig + step, lo)
        f_cand = None
        accepted = False
        for _ in range(60):
            if cand == sig:
                break
            f_cand = loss_at_residuals(cfg, model, r, cand)
            if not math.isfinite(f_cand):
                raise NonFiniteLossError(
                    f"loss non-finite at sigma={cand} during line search", sig
                )
            if f_cand <= f_cur + 1e-4 * g * (cand - sig):
                accepted = True
                break
            cand = max(sig + 0.5 * (cand - sig), lo)
        if not accepted:
            break
        prev_s, prev_g = sig, g
        sig, f_cur = cand, f_cand
        g = grad_sigma_at_residuals(cfg, model, r, sig)
        if f_cur < best_f:
            best_s, best_f = sig, f_cur
    return best_s


def sigma_update_qn(
    cfg: DpdConfig,
    spec: NetworkSpec,
    model: ErrorModel,
    theta_fixed: np.ndarray,
    xs,
    ys,
    sigma_init: float,
    train_cfg: TrainConfig,
) -> float:
    """Bounded scalar quasi-Newton minimization of the loss over sigma.

    Secant curvature estimates (used only when positive), Armijo
    backtracking, projection onto [sigma0, inf). Stops at |gradient| <
    sigma_gtol, at the floor with inward-pointing gradient, or after
    sigma_max_iter steps. The returned sigma never has larger loss than
    the entry point.
    """
    r = np.asarray(ys, float) - forward(spec, theta_fixed, np.asarray(xs, float))
    return _sigma_qn_core(cfg, model, r, sigma_init, train_cfg.sigma_gtol, train_cfg.sigma_max_iter)


def _sigma_fp_core(
    r: np.ndarray,
    sigma_init: float,
    beta: float,
    sigma0: float,
    rel_tol: float,
    max_iter: int,
) -> float:
    r2 = r * r
    n = r2.shape[0]
    shift = n * beta / (1.0 + beta) ** 1.5
    sig2 = max(float(sigma_init), sigma0) ** 2
    for _ in range(max_iter):
        w = np.exp(-0.5 * beta * r2 / sig2)
        den = float(w.sum()) - shift
        if den <= 0.0:
            raise DegenerateDenominatorError(
                f"weight sum {den + shift:.6g} does not exceed n*beta/(1+beta)^1.5 = {shift:.6g}"
            )
        new = float(w @ r2) / den
        if new <= sigma0 * sigma0:
            return sigma0
        if abs(new - sig2) <= rel_tol * new:
            return math.sqrt(new)
        sig2 = new
    return math.sqrt(sig2)


def sigma_update_fixed_point(
    spec: NetworkSpec,
    theta_fixed: np.ndarray,
    xs,
    ys,
    sigma_init: float,
    beta: float,
    sigma0: float = 0.001,
    rel_tol: float = 1e-10,
    max_iter: int = 10000,
) -> float:
    """Gaussian-model fixed point for sigma at frozen weights.

    Iterates sigma^2 <- sum(w_i r_i^2) / (sum(w_i) - n*beta/(1+beta)^(3/2))
    with w_i = exp(-beta r_i^2 / (2 sigma^2)) until the relative change
    drops below rel_tol. Its converged value is a zero of the sigma
    gradient of the Gaussian loss; at beta = 0 the weights are all one and
    it lands on sqrt(mean r^2) immediately. A non-positive denominator
    raises DegenerateDenominatorError (callers fall back to the
    quasi-Newton solver).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta={beta} outside the supported range [0, 1]")
    r = np.asarray(ys, float) - forward(spec, theta_fixed, np.asarray(xs, float))
    return _sigma_fp_core(r, sigma_init, beta, sigma0, rel_tol, max_iter)


def fit(
    cfg: DpdConfig,
    spec: NetworkSpec,
    model: ErrorModel,
    xs,
    ys,
    train_cfg: TrainConfig,
    sel: str = KINK_ZERO,
) -> FitResult:
    """Full alternating run from a Glorot start and a MAD scale start."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1 and spec.input_dim == 1:
        xs = xs.reshape(-1, 1)
    ys = np.asarray(ys, dtype=float)
    if xs.shape[0] != ys.shape[0]:
        raise ValueError(f"{xs.shape[0]} rows of covariates but {ys.shape[0]} responses")
    if train_cfg.sigma_solver == "fixed_point" and not isinstance(model, GaussianModel):
        raise ValueError("the fixed_point sigma solver applies to the gaussian model only")

    ss = np.random.SeedSequence(train_cfg.seed)
    init_ss, batch_ss = ss.spawn(2)
    theta = glorot_init(spec, init_ss)
    sigma = init_sigma_mad(spec, theta, xs, ys, cfg.sigma0)
    batch_rng = np.random.default_rng(batch_ss)

    def full_loss(th, sg):
        r = ys - forward(spec, th, xs)
        return loss_at_residuals(cfg, model, r, sg)

    loss_trace = [full_loss(theta, sigma)]
    sigma_trace = [sigma]
    violations = 0
    converged = False
    outer = 0
    for outer in range(1, train_cfg.max_outer + 1):
        theta = adam_theta_update(
            cfg, spec, model, theta, sigma, xs, ys, train_cfg, batch_rng, sel
        )
        r = ys - forward(spec, theta, xs)
        pre_sigma_loss = loss_at_residuals(cfg, model, r, sigma)
        if train_cfg.sigma_solver == "fixed_point":
            try:
                cand = _sigma_fp_core(
                    r, sigma, cfg.beta, cfg.sigma0, train_cfg.fp_rel_tol, train_cfg.fp_max_iter
                )
            except DegenerateDenominatorError:
                cand = None
            if cand is None or loss_at_residuals(cfg, model, r, cand) > pre_sigma_loss:
                cand = _sigma_qn_core(
                    cfg, model, r, sigma, train_cfg.sigma_gtol, train_cfg.sigma_max_iter
                )
            sigma = cand
        else:
            sigma = _sigma_qn_core(
                cfg, model, r, sigma, train_cfg.sigma_gtol, train_cfg.sigma_max_iter
            )
        cur = loss_at_residuals(cfg, model, r, sigma)
        if cur > loss_trace[-1] + DESCENT_TOL:
            violations += 1
        loss_trace.append(cur)
        sigma_trace.append(sigma)
        if loss_trace[-2] - loss_trace[-1] < train_cfg.outer_tol:
            converged = True
            break
    return FitResult(
        theta=theta,
        sigma=sigma,
        loss_trace=loss_trace,
        sigma_trace=sigma_trace,
        outer_iters=outer,
        descent_violations=violations,
        converged=converged,
    )


def predict(spec: NetworkSpec, theta: np.ndarray, xs) -> np.ndarray:
    """Network outputs over rows of xs; NaN inputs yield NaN outputs."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1 and spec.input_dim == 1:
        xs = xs.reshape(-1, 1)
    return forward(spec, theta, xs)


def write_trace_csv(result: FitResult, path) -> None:
    """Per-outer trace: outer,loss,sigma,descent_ok (outer 0 = initialization)."""
    lines = ["outer,loss,sigma,descent_ok"]
    for k, lv in enumerate(result.loss_trace):
        ok = 1 if k == 0 or lv <= result.loss_trace[k - 1] + DESCENT_TOL else 0
        sg = result.sigma_trace[k]
        sg_txt = "" if sg is None else repr(float(sg))
        lines.append(f"{k},{float(lv)!r},{sg_txt},{ok}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
