"""Non-DPD robust training losses fitted with the same ADAM machinery.

All of these act on raw residuals r = y - mu(x, theta) and carry no scale
parameter, so a fit alternates nothing: it is just repeated ADAM rounds
with the same stopping rule as the main trainer. Thresholded losses
(huber, tukey) use fixed literature constants; trimmed losses (lts, lta)
re-select the covered subset on every batch before the gradient step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import (
    KINK_ZERO,
    NetworkSpec,
    _forward_parts,
    forward,
    glorot_init,
    grad_weighted,
)
from .training import DESCENT_TOL, FitResult, TrainConfig, _adam_pass

_KINDS = ("mse", "mae", "lmls", "huber", "tukey", "lts", "lta")


@dataclass(frozen=True)
class CompetitorLoss:
    """Tagged competitor objective.

    kind      one of mse, mae, lmls, huber, tukey, lts, lta
    c         threshold for huber (default 1.345) and tukey (default 4.685)
    coverage  subset size h for lts/lta; None means ceil(0.75 * n) at use time
    """

    kind: str
    c: float | None = None
    coverage: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown competitor loss '{self.kind}'")
        if self.kind in ("huber", "tukey"):
            if self.c is None:
                object.__setattr__(self, "c", 1.345 if self.kind == "huber" else 4.685)
            elif not self.c > 0.0:
                raise ValueError("threshold c must be > 0")
        elif self.c is not None:
            raise ValueError(f"'{self.kind}' takes no threshold")
        if self.coverage is not None:
            if self.kind not in ("lts", "lta"):
                raise ValueError(f"'{self.kind}' takes no coverage h")
            if self.coverage < 1:
                raise ValueError("coverage h must be >= 1")


def mse() -> CompetitorLoss:
    return CompetitorLoss("mse")


def mae() -> CompetitorLoss:
    return CompetitorLoss("mae")


def lmls() -> CompetitorLoss:
    return CompetitorLoss("lmls")


def huber(c: float = 1.345) -> CompetitorLoss:
    return CompetitorLoss("huber", c=c)


def tukey(c: float = 4.685) -> CompetitorLoss:
    return CompetitorLoss("tukey", c=c)


def lts(coverage: int | None = None) -> CompetitorLoss:
    return CompetitorLoss("lts", coverage=coverage)


def lta(coverage: int | None = None) -> CompetitorLoss:
    return CompetitorLoss("lta", coverage=coverage)


def _coverage(loss: CompetitorLoss, n: int) -> int:
    h = loss.coverage if loss.coverage is not None else math.ceil(0.75 * n)
    if h > n:
        raise ValueError(f"coverage h={h} exceeds sample size n={n}")
    return h


def comp_loss(loss: CompetitorLoss, residuals) -> float:
    """Objective value on a residual vector."""
    r = np.asarray(residuals, dtype=float)
    k = loss.kind
    if k == "mse":
        return float(np.mean(r * r))
    if k == "mae":
        return float(np.mean(np.abs(r)))
    if k == "lmls":
        return float(np.mean(np.log1p(0.5 * r * r)))
    if k == "huber":
        c = loss.c
        a = np.abs(r)
        rho = np.where(a <= c, 0.5 * r * r, c * (a - 0.5 * c))
        return float(np.mean(rho))
    if k == "tukey":
        c = loss.c
        q = np.minimum((r / c) ** 2, 1.0)
        rho = (c * c / 6.0) * (1.0 - (1.0 - q) ** 3)
        return float(np.mean(rho))
    # trimmed losses: mean over the h smallest contributions
    h = _coverage(loss, r.shape[0])
    vals = r * r if k == "lts" else np.abs(r)
    return float(np.mean(np.partition(vals, h - 1)[:h]))


def _grad_coeffs(loss: CompetitorLoss, r: np.ndarray):
    """Per-residual d rho / d r divided by the loss denominator.

    Returns (coeffs, keep_index or None). The sign flip for d r / d theta
    = -grad mu is applied by the caller.
    """
    k = loss.kind
    n = r.shape[0]
    if k == "mse":
        return 2.0 * r / n, None
    if k == "mae":
        return np.sign(r) / n, None
    if k == "lmls":
        return (r / (1.0 + 0.5 * r * r)) / n, None
    if k == "huber":
        return np.clip(r, -loss.c, loss.c) / n, None
    if k == "tukey":
        psi = r * (1.0 - (r / loss.c) ** 2) ** 2
        psi[np.abs(r) > loss.c] = 0.0
        return psi / n, None
    h = _coverage(loss, n)
    vals = r * r if k == "lts" else np.abs(r)
    keep = np.argpartition(vals, h - 1)[:h]
    coeffs = np.zeros(n)
    if k == "lts":
        coeffs[keep] = 2.0 * r[keep] / h
    else:
        coeffs[keep] = np.sign(r[keep]) / h
    return coeffs, keep


def comp_grad(loss: CompetitorLoss, spec: NetworkSpec, theta, xs, ys, sel: str = KINK_ZERO) -> np.ndarray:
    """Gradient of the competitor objective in the network weights.

    For the trimmed losses the covered subset is frozen from the current
    residuals before differentiating, so the gradient is the exact
    gradient of the loss with that subset held fixed.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = ys - forward(spec, theta, xs)
    coeffs, _ = _grad_coeffs(loss, r)
    return grad_weighted(spec, theta, xs, -coeffs, sel)


def fit_competitor(
    loss: CompetitorLoss,
    spec: NetworkSpec,
    xs,
    ys,
    train_cfg: TrainConfig,
    sel: str = KINK_ZERO,
) -> FitResult:
    """Same outer structure as the main trainer, sigma machinery disabled.

    Seeds are consumed exactly like the DPD fit (one child stream for the
    Glorot start, one for all batch shuffles), so a competitor run and a
    DPD run with equal seeds see identical starts and batch partitions.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1 and spec.input_dim == 1:
        xs = xs.reshape(-1, 1)
    ys = np.asarray(ys, dtype=float)
    if xs.shape[0] != ys.shape[0]:
        raise ValueError(f"{xs.shape[0]} rows of covariates but {ys.shape[0]} responses")

    ss = np.random.SeedSequence(train_cfg.seed)
    init_ss, batch_ss = ss.spawn(2)
    theta = glorot_init(spec, init_ss)
    rng = np.random.default_rng(batch_ss)

    def batch_coeffs(yb, out):
        coeffs, _ = _grad_coeffs(loss, yb - out)
        return -coeffs

    def full_loss_parts(parts):
        return comp_loss(loss, ys - _forward_parts(spec, parts, xs))

    loss_trace = [comp_loss(loss, ys - forward(spec, theta, xs))]
    sigma_trace: list[float | None] = [None]
    violations = 0
    converged = False
    outer = 0
    for outer in range(1, train_cfg.max_outer + 1):
        theta = _adam_pass(
            spec, theta, xs, ys, batch_coeffs, full_loss_parts, train_cfg, rng, sel
        )
        cur = comp_loss(loss, ys - forward(spec, theta, xs))
        if cur > loss_trace[-1] + DESCENT_TOL:
            violations += 1
        loss_trace.append(cur)
        sigma_trace.append(None)
        if loss_trace[-2] - loss_trace[-1] < train_cfg.outer_tol:
            converged = True
            break
    return FitResult(
        theta=theta,
        sigma=None,
        loss_trace=loss_trace,
        sigma_trace=sigma_trace,
        outer_iters=outer,
        descent_violations=violations,
        converged=converged,
    )
