"""Standardized error densities and the moment constants built from them.

Every model here is a location-0, variance-1 density f on the real line
together with its almost-everywhere log-density derivative (score)
u(s) = d/ds log f(s). Two weighting kernels derived from (f, u) drive all
robustness behavior downstream:

    psi1(s) = u(s) * f(s)**beta
    psi2(s) = (1 + s * u(s)) * f(s)**beta

For beta > 0 both are bounded and redescending, which is what caps the
pull a single observation can exert on gradients and influence functions.
At beta = 0 they reduce to the raw (unbounded) likelihood scores.

The moment constants

    C[i, j](beta) = integral s**i * u(s)**j * f(s)**(1 + beta) ds

appear as normalizers in gradients and influence functions. The Gaussian
family admits closed forms for the (i, j) pairs that are actually needed;
everything else is evaluated by composite 64-point Gauss-Legendre
quadrature on adaptive panels.
"""

from __future__ import annotations

import math

import numpy as np

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
# logistic scale with unit variance: var = pi^2 * scale^2 / 3
_LOGISTIC_SCALE = math.sqrt(3.0) / math.pi

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class IntegralConvergenceError(ValueError):
    """Raised when a requested moment integral cannot be trusted."""


def _validate_moment_request(i: int, j: int, beta: float) -> None:
    if i < 0 or j < 0 or int(i) != i or int(j) != j:
        raise ValueError(f"moment orders must be non-negative integers, got (i={i}, j={j})")
    if beta < 0.0:
        raise IntegralConvergenceError(
            f"beta={beta} < 0: f**(1+beta) moments are only defined for beta >= 0"
        )


class ErrorModel:
    """Base class; subclasses supply log_density and score."""

    name: str = ""
    symmetric: bool = True

    def log_density(self, s):
        raise NotImplementedError

    def score(self, s):
        raise NotImplementedError

    def density(self, s):
        return np.exp(self.log_density(s))

    def psi1(self, beta: float, s):
        """u(s) * f(s)**beta, the residual-weighting kernel of the location gradient."""
        if beta == 0.0:
            return self.score(s)
        return self.score(s) * np.exp(beta * self.log_density(s))

    def psi2(self, beta: float, s):
        """(1 + s*u(s)) * f(s)**beta, the kernel of the scale gradient."""
        s = np.asarray(s, dtype=float)
        base = 1.0 + s * self.score(s)
        if beta == 0.0:
            return base
        return base * np.exp(beta * self.log_density(s))

    # -- moment constants ------------------------------------------------

    def c_constant(self, i: int, j: int, beta: float) -> float:
        """C[i,j](beta) = integral s^i u(s)^j f(s)^(1+beta) ds.

        Values are memoized per model instance; training loops request the
        same handful of constants thousands of times.
        """
        key = (int(i), int(j), float(beta))
        memo = self.__dict__.setdefault("_c_memo", {})
        if key not in memo:
            memo[key] = self._c_compute(i, j, beta)
        return memo[key]

    def _c_compute(self, i: int, j: int, beta: float) -> float:
        return self.c_quadrature(i, j, beta)

    def c_quadrature(
        self, i: int, j: int, beta: float, halfwidth: float = 40.0
    ) -> float:
        """Quadrature route for C[i,j], independent of any closed form.

        Composite 64-point Gauss-Legendre on [-halfwidth, halfwidth],
        doubling the panel count until two successive refinements agree.
        The tail beyond halfwidth is estimated and must be negligible.
        """
        _validate_moment_request(i, j, beta)

        def integrand(s):
            out = np.exp((1.0 + beta) * self.log_density(s))
            if i:
                out = out * s**i
            if j:
                out = out * self.score(s) ** j
            return out

        value = _adaptive_panels(integrand, -halfwidth, halfwidth)
        tail = abs(_adaptive_panels(integrand, halfwidth, halfwidth + 10.0)) + abs(
            _adaptive_panels(integrand, -halfwidth - 10.0, -halfwidth)
        )
        if tail > 1e-12 * max(1.0, abs(value)):
            raise IntegralConvergenceError(
                f"C[{i},{j}] for model '{self.name}' at beta={beta}: tail mass "
                f"{tail:.3e} beyond |s|={halfwidth} is not negligible"
            )
        return value


def _adaptive_panels(fn, lo: float, hi: float, rtol: float = 1e-13) -> float:
    """Composite Gauss-Legendre with panel doubling until agreement."""
    prev = None
    panels = 8
    while panels <= 4096:
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        mids = 0.5 * (edges[:-1] + edges[1:])
        pts = mids[:, None] + half * _GL_NODES[None, :]
        vals = fn(pts.ravel()).reshape(pts.shape)
        total = half * float((vals * _GL_WEIGHTS).sum())
        if prev is not None and abs(total - prev) <= rtol * max(1.0, abs(total)):
            return total
        prev = total
        panels *= 2
    return prev


class GaussianModel(ErrorModel):
    name = "gaussian"

    def log_density(self, s):
        s = np.asarray(s, dtype=float)
        return -0.5 * s * s - _HALF_LOG_2PI

    def score(self, s):
        return -np.asarray(s, dtype=float)

    def psi1(self, beta: float, s):
        s = np.asarray(s, dtype=float)
        if beta == 0.0:
            return -s
        return -((2.0 * math.pi) ** (-0.5 * beta)) * s * np.exp(-0.5 * beta * s * s)

    def psi2(self, beta: float, s):
        s = np.asarray(s, dtype=float)
        if beta == 0.0:
            return 1.0 - s * s
        return ((2.0 * math.pi) ** (-0.5 * beta)) * (1.0 - s * s) * np.exp(
            -0.5 * beta * s * s
        )

    def _c_compute(self, i: int, j: int, beta: float) -> float:
        """Closed forms for the four pairs used downstream, quadrature otherwise.

        With u(s) = -s the density f**(1+beta) is a scaled normal with
        variance 1/(1+beta), so these moments are Gaussian moments:

            C[0,0] = (2*pi)**(-beta/2) / sqrt(1+beta)
            C[0,2] = C[0,0] / (1+beta)
            C[2,2] = 3 * C[0,0] / (1+beta)**2
            C[1,2] = 0
        """
        _validate_moment_request(i, j, beta)
        c00 = (2.0 * math.pi) ** (-0.5 * beta) / math.sqrt(1.0 + beta)
        if (i, j) == (0, 0):
            return c00
        if (i, j) == (0, 2):
            return c00 / (1.0 + beta)
        if (i, j) == (2, 2):
            return 3.0 * c00 / (1.0 + beta) ** 2
        if (i, j) == (1, 2):
            return 0.0
        return self.c_quadrature(i, j, beta)


class LaplaceModel(ErrorModel):
    """Double exponential with unit variance (scale 1/sqrt(2))."""

    name = "laplace"

    def log_density(self, s):
        s = np.asarray(s, dtype=float)
        return -_SQRT2 * np.abs(s) - 0.5 * math.log(2.0)

    def score(self, s):
        # sign convention at the kink: score(0) = 0
        return -_SQRT2 * np.sign(np.asarray(s, dtype=float))


class LogisticModel(ErrorModel):
    """Logistic density rescaled to unit variance."""

    name = "logistic"

    def log_density(self, s):
        t = np.abs(np.asarray(s, dtype=float)) / _LOGISTIC_SCALE
        # symmetric form, safe for large |s|
        return -t - math.log(_LOGISTIC_SCALE) - 2.0 * np.log1p(np.exp(-t))

    def score(self, s):
        s = np.asarray(s, dtype=float)
        return -np.tanh(s / (2.0 * _LOGISTIC_SCALE)) / _LOGISTIC_SCALE


GAUSSIAN = GaussianModel()
LAPLACE = LaplaceModel()
LOGISTIC = LogisticModel()

MODELS = {m.name: m for m in (GAUSSIAN, LAPLACE, LOGISTIC)}


def get_model(name: str) -> ErrorModel:
    try:
        return MODELS[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown error model '{name}', expected one of {sorted(MODELS)}"
        ) from None


def c22_centered(model: ErrorModel, beta: float) -> float:
    """C[2,2] - ((1-beta)/(1+beta)) * C[0,0], the scale-component normalizer.

    Positive for the models shipped here; callers treat <= 0 as degenerate.
    """
    return model.c_constant(2, 2, beta) - ((1.0 - beta) / (1.0 + beta)) * model.c_constant(
        0, 0, beta
    )
