"""Influence of one contaminated response on the fitted network and scale.

The analyzer works at a user-supplied parameter point (theta, sigma) and a
fixed design x_1..x_n; observation i carries the contamination, placed at
an arbitrary response value t. With J the n x d matrix of per-sample
parameter gradients (ReLU kinks always take the symmetric 1/2 convention
here), s = (t - mu(x_i))/sigma and the moment constants C[.,.] of the
error model at level beta:

    weights:   IF(t)  = -(sigma / C[0,2]) * psi1(s) * pinv(J'J) grad mu(x_i)
    scale:     IF(t)  = -(sigma / (n * Cs)) * (psi2(s) - beta*C[0,0]/(1+beta))
               with Cs = C[2,2] - ((1-beta)/(1+beta)) * C[0,0]
    predictor: IF(t; x) = grad mu(x)' IF_weights(t)

pinv is the eigenvalue-truncated pseudo-inverse (relative cutoff tau), so
rank-deficient designs get the minimum-norm influence direction. The
predictor influence is only well defined where grad mu(x) lies in the row
space of J; admissible_check measures the projection residual.

For beta > 0 the psi kernels are bounded and redescending, so every curve
here is bounded in t; at beta = 0 they grow without bound. ReLU networks
are handled through a sharpness sequence of softplus surrogates whose
influence curves converge to the direct Heaviside-1/2 evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ErrorModel, c22_centered
from .network import KINK_HALF, NetworkSpec, forward, grad_theta, jacobian, smooth_network


class InadmissiblePointError(ValueError):
    """grad mu(x) leaves the span of the training-point gradients."""


class IfSetup:
    """Frozen evaluation context; all heavy linear algebra happens once here.

    index is 0-based. tau is the relative eigenvalue cutoff of the
    pseudo-inverse (measured against the largest eigenvalue of J'J).
    """

    def __init__(
        self,
        spec: NetworkSpec,
        model: ErrorModel,
        theta,
        sigma: float,
        xs,
        beta: float,
        index: int,
        tau: float = 1e-10,
    ):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta={beta} outside the supported range [0, 1]")
        if not sigma > 0.0:
            raise ValueError("sigma must be > 0")
        if not 0.0 < tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1)
        n = xs.shape[0]
        if not 0 <= index < n:
            raise ValueError(f"index {index} outside 0..{n - 1}")
        self.spec = spec
        self.model = model
        self.theta = np.asarray(theta, dtype=float)
        self.sigma = float(sigma)
        self.xs = xs
        self.beta = float(beta)
        self.index = int(index)
        self.tau = float(tau)

        self._J = jacobian(spec, self.theta, xs, sel=KINK_HALF)
        lam, vecs = np.linalg.eigh(self._J.T @ self._J)
        keep = lam > self.tau * lam[-1] if lam[-1] > 0 else np.zeros_like(lam, bool)
        self._lam = lam[keep]
        self._V = vecs[:, keep]
        self.rank = int(keep.sum())
        g_i = self._J[self.index]
        self._pinv_gi = self._V @ ((self._V.T @ g_i) / self._lam) if self.rank else np.zeros_like(g_i)
        self.mu_i = forward(spec, self.theta, xs[self.index])
        self.c02 = model.c_constant(0, 2, self.beta)
        self.c00 = model.c_constant(0, 0, self.beta)
        self.cs = c22_centered(model, self.beta)

    @property
    def n(self) -> int:
        return self.xs.shape[0]


def jacobian_matrix(setup: IfSetup) -> np.ndarray:
    """The n x d per-sample gradient matrix used by the normalizers."""
    return setup._J.copy()


def _s(setup: IfSetup, t):
    return (np.asarray(t, dtype=float) - setup.mu_i) / setup.sigma


def if_theta(setup: IfSetup, t):
    """Weight-vector influence at contamination value t.

    Scalar t gives a d-vector; an array of T values gives a (T, d) array.
    The direction pinv(J'J) grad mu(x_i) is the minimum-norm solution, so
    the curve lies in the row space of J.
    """
    scal = -(setup.sigma / setup.c02) * setup.model.psi1(setup.beta, _s(setup, t))
    if np.ndim(scal) == 0:
        return float(scal) * setup._pinv_gi
    return np.asarray(scal)[:, None] * setup._pinv_gi[None, :]


def if_sigma(setup: IfSetup, t):
    """Scale influence at contamination value t (scalar in, scalar out)."""
    if not setup.cs > 0.0:
        raise ValueError(
            f"scale influence undefined: centered C[2,2] normalizer is {setup.cs:.6g}"
        )
    kern = setup.model.psi2(setup.beta, _s(setup, t)) - setup.beta * setup.c00 / (
        1.0 + setup.beta
    )
    out = -(setup.sigma / (setup.n * setup.cs)) * kern
    return float(out) if np.ndim(out) == 0 else out


def admissible_check(setup: IfSetup, x):
    """(admissible, residual): relative distance of grad mu(x) from row space(J)."""
    g = grad_theta(setup.spec, setup.theta, np.asarray(x, float), sel=KINK_HALF)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return True, 0.0
    proj = setup._V @ (setup._V.T @ g) if setup.rank else np.zeros_like(g)
    resid = float(np.linalg.norm(g - proj)) / norm
    return resid < 1e-8, resid


def if_predictor(setup: IfSetup, t, x):
    """Influence on the prediction at x; requires x in the admissible domain.

    Equals grad mu(x)' if_theta(t) wherever it is defined.
    """
    ok, resid = admissible_check(setup, x)
    if not ok:
        raise InadmissiblePointError(
            f"grad mu(x) leaves the training gradient span (relative residual {resid:.3e})"
        )
    g = grad_theta(setup.spec, setup.theta, np.asarray(x, float), sel=KINK_HALF)
    h = float(g @ setup._pinv_gi)
    out = -(setup.sigma / setup.c02) * setup.model.psi1(setup.beta, _s(setup, t)) * h
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class IfCurve:
    """One influence curve on a t grid; values is (T,) or (T, d)."""

    kind: str
    t: np.ndarray
    values: np.ndarray

    def gross_error_sensitivity(self) -> float:
        """sup over the grid of the (vector) magnitude."""
        if self.values.ndim == 1:
            return float(np.max(np.abs(self.values)))
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def curve_theta(setup: IfSetup, ts) -> IfCurve:
    ts = np.asarray(ts, dtype=float)
    return IfCurve("theta", ts, if_theta(setup, ts))


def curve_sigma(setup: IfSetup, ts) -> IfCurve:
    ts = np.asarray(ts, dtype=float)
    return IfCurve("sigma", ts, if_sigma(setup, ts))


def curve_predictor(setup: IfSetup, ts, x) -> IfCurve:
    ts = np.asarray(ts, dtype=float)
    return IfCurve("predictor", ts, if_predictor(setup, ts, x))


@dataclass
class IfLimitReport:
    """Smoothing-sequence convergence record for ReLU networks.

    gaps[k] holds the sup-norm distance between the curves of surrogate
    sharpness m_sequence[k] and the direct Heaviside-1/2 curves.
    """

    m_sequence: tuple[float, ...]
    direct: dict[str, IfCurve]
    smooth: list[dict[str, IfCurve]] = field(default_factory=list)
    gaps: list[dict[str, float]] = field(default_factory=list)

    def final_gap(self) -> float:
        return max(self.gaps[-1].values())


def if_relu_limit(setup: IfSetup, ts, m_sequence=(1.0, 10.0, 100.0, 1000.0), x=None) -> IfLimitReport:
    """Influence curves through the softplus sharpness sequence.

    Computes theta / sigma / predictor curves on the smoothed network for
    each sharpness m and directly on the ReLU network, and reports the
    sup-norm gap per m. The evaluation point of the predictor curve
    defaults to the contaminated design point.
    """
    if not any(a.kind == "relu" for a in setup.spec.activations):
        raise ValueError("the smoothing sequence applies to networks with ReLU layers")
    if x is None:
        x = setup.xs[setup.index]
    ts = np.asarray(ts, dtype=float)

    def curves_for(stp: IfSetup) -> dict[str, IfCurve]:
        return {
            "theta": curve_theta(stp, ts),
            "sigma": curve_sigma(stp, ts),
            "predictor": curve_predictor(stp, ts, x),
        }

    direct = curves_for(setup)
    report = IfLimitReport(tuple(float(m) for m in m_sequence), direct)
    for m in report.m_sequence:
        stp_m = IfSetup(
            smooth_network(setup.spec, m),
            setup.model,
            setup.theta,
            setup.sigma,
            setup.xs,
            setup.beta,
            setup.index,
            setup.tau,
        )
        cur = curves_for(stp_m)
        gap = {
            kind: float(np.max(np.abs(cur[kind].values - direct[kind].values)))
            for kind in direct
        }
        report.smooth.append(cur)
        report.gaps.append(gap)
    return report


# -- bundled example configuration ----------------------------------------

def one_node_example_setup(
    activation_kind: str, beta: float, index: int = 1, model: ErrorModel | None = None
) -> IfSetup:
    """Single-hidden-node network on 50 equispaced design points in [-10, 20].

    Weights: hidden weight 1, hidden bias 1, output bias 2, output weight
    1.5; scale 0.1. activation_kind is 'sigmoid' or 'relu'. index is
    0-based.
    """
    from .network import Activation, mlp

    if model is None:
        from .errors import GAUSSIAN

        model = GAUSSIAN
    spec = mlp(1, [1], Activation(activation_kind))
    theta = np.array([1.0, 1.0, 2.0, 1.5])
    xs = np.linspace(-10.0, 20.0, 50).reshape(-1, 1)
    return IfSetup(spec, model, theta, 0.1, xs, beta, index)


# -- CSV emission ----------------------------------------------------------

def write_curve_csv(curve: IfCurve, path) -> None:
    """Scalar curves: 't,value'. Weight curves: 't,component_index,value'
    with 1-based component indices."""
    lines = []
    if curve.values.ndim == 1:
        lines.append("t,value")
        for tv, val in zip(curve.t, curve.values):
            lines.append(f"{float(tv)!r},{float(val)!r}")
    else:
        lines.append("t,component_index,value")
        for tv, row in zip(curve.t, curve.values):
            for ci, val in enumerate(row, start=1):
                lines.append(f"{float(tv)!r},{ci},{float(val)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
