"""Density-power-divergence training loss over network weights and scale.

For a residual r = y - mu(x, theta), scale sigma and standardized error
density f, the per-observation loss at robustness level beta > 0 is

    v(y, x) = C[0,0](beta) / sigma**beta
              - (1 + 1/beta) * f(r/sigma)**beta / sigma**beta
              + 1/beta

and its beta -> 0 limit, the Gaussian-type negative log-likelihood

    v(y, x) = log(sigma) - log f(r/sigma),

is implemented as its own analytic branch (never as a tiny-beta
evaluation of the first form). The empirical loss is the plain average
of v over the sample; all reductions run in fixed data order, so equal
inputs give bit-equal results.

Gradients, with s_i = r_i/sigma and the kernels psi1/psi2 from the error
model:

    d/dtheta: (1+beta)/(n*sigma**(1+beta)) * sum_i psi1(s_i) * grad mu(x_i)
    d/dsigma: (1+beta)/(n*sigma**(1+beta)) * sum_i psi2(s_i)
              - beta*C[0,0]/sigma**(1+beta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ErrorModel, GaussianModel
from .network import KINK_ZERO, NetworkSpec, forward, grad_weighted

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DpdConfig:
    """Robustness level and scale floor."""

    beta: float
    sigma0: float = 0.001

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta={self.beta} outside the supported range [0, 1]")
        if not self.sigma0 > 0.0:
            raise ValueError("sigma0 must be > 0")


@dataclass(frozen=True)
class EtaPoint:
    """One point (theta, sigma) of the joint parameter space."""

    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "sigma", float(self.sigma))


def _check_sigma(cfg: DpdConfig, sigma: float) -> float:
    if not sigma >= cfg.sigma0:
        raise ValueError(f"sigma={sigma} violates the floor sigma0={cfg.sigma0}")
    return sigma


def loss_at_residuals(cfg: DpdConfig, model: ErrorModel, residuals, sigma: float) -> float:
    """Empirical loss as a function of fixed residuals and sigma."""
    sigma = _check_sigma(cfg, sigma)
    r = np.asarray(residuals, dtype=float)
    s = r / sigma
    beta = cfg.beta
    if beta == 0.0:
        return math.log(sigma) - float(np.mean(model.log_density(s)))
    if isinstance(model, GaussianModel):
        # closed Gaussian form, one exp over the sample
        a = (sigma * _SQRT_2PI) ** (-beta)
        mean_w = float(np.mean(np.exp(-0.5 * beta * s * s)))
        return a / math.sqrt(1.0 + beta) - ((1.0 + beta) / beta) * a * mean_w + 1.0 / beta
    c00 = model.c_constant(0, 0, beta)
    mean_fb = float(np.mean(np.exp(beta * model.log_density(s))))
    return (c00 - (1.0 + 1.0 / beta) * mean_fb) / sigma**beta + 1.0 / beta


def v_beta(cfg: DpdConfig, spec: NetworkSpec, model: ErrorModel, eta: EtaPoint, y: float, x) -> float:
    """Per-observation loss term at one (y, x)."""
    r = float(y) - forward(spec, eta.theta, np.asarray(x, dtype=float))
    return loss_at_residuals(cfg, model, np.array([r]), eta.sigma)


def loss(cfg: DpdConfig, spec: NetworkSpec, model: ErrorModel, eta: EtaPoint, xs, ys) -> float:
    """Average per-observation loss over the sample."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = ys - forward(spec, eta.theta, xs)
    return loss_at_residuals(cfg, model, r, eta.sigma)


def grad_theta_loss(
    cfg: DpdConfig,
    spec: NetworkSpec,
    model: ErrorModel,
    eta: EtaPoint,
    xs,
    ys,
    sel: str = KINK_ZERO,
) -> np.ndarray:
    """Exact loss gradient in the network weights over the given batch."""
    sigma = _check_sigma(cfg, eta.sigma)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = ys.shape[0]
    r = ys - forward(spec, eta.theta, xs)
    coeffs = model.psi1(cfg.beta, r / sigma) * (
        (1.0 + cfg.beta) / (n * sigma ** (1.0 + cfg.beta))
    )
    return grad_weighted(spec, eta.theta, xs, coeffs, sel)


def grad_sigma_at_residuals(cfg: DpdConfig, model: ErrorModel, residuals, sigma: float) -> float:
    sigma = _check_sigma(cfg, sigma)
    r = np.asarray(residuals, dtype=float)
    n = r.shape[0]
    beta = cfg.beta
    total = (1.0 + beta) / (n * sigma ** (1.0 + beta)) * float(
        np.sum(model.psi2(beta, r / sigma))
    )
    if beta > 0.0:
        total -= beta * model.c_constant(0, 0, beta) / sigma ** (1.0 + beta)
    return total


def grad_sigma_loss(cfg: DpdConfig, spec: NetworkSpec, model: ErrorModel, eta: EtaPoint, xs, ys) -> float:
    """Exact loss derivative in sigma at fixed weights."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = ys - forward(spec, eta.theta, xs)
    return grad_sigma_at_residuals(cfg, model, r, eta.sigma)
