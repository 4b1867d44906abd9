"""Feed-forward regression networks on a flat parameter vector.

The network is a scalar-output multilayer perceptron

    z_1 = W_1 x + b_1,   h_l = act_l(z_l),   z_{l+1} = W_{l+1} h_l + b_{l+1}
    mu(x) = w_out[0] + w_out[1:] . h_L

and the whole parameter set lives in one flat float64 vector so that
optimizers and influence computations can treat it as a point in R^d.
Flat layout: column-stacked W_1, then b_1, then W_2, b_2, ..., and the
output weights last with the output bias as their first entry. With
p inputs and hidden widths K_1..K_L that gives

    d = (p+1)*K_1 + sum_{l=2..L} (K_{l-1}+1)*K_l + (K_L + 1)

and d = p+1 for the purely linear L=0 case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf, expit

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# ReLU subgradient convention at z == 0: plain training uses 0, the
# influence computations require the symmetric choice 1/2.
KINK_ZERO = "zero"
KINK_HALF = "half"


class ShapeError(ValueError):
    """Parameter or input dimensions incompatible with a NetworkSpec."""


@dataclass(frozen=True)
class Activation:
    """One hidden-layer nonlinearity; kind 'softplus' carries a sharpness m."""

    kind: str
    m: float | None = None

    _KINDS = ("identity", "sigmoid", "tanh", "relu", "gelu", "softplus")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown activation kind '{self.kind}'")
        if self.kind == "softplus":
            if self.m is None or not self.m > 0.0:
                raise ValueError("softplus activation needs sharpness m > 0")
        elif self.m is not None:
            raise ValueError(f"activation '{self.kind}' takes no sharpness parameter")

    def token(self) -> str:
        if self.kind == "softplus":
            return f"softplus:{self.m:.17g}"
        return self.kind

    @staticmethod
    def parse(token: str) -> "Activation":
        token = token.strip()
        if token.startswith("softplus:"):
            return Activation("softplus", float(token.split(":", 1)[1]))
        if token == "softplus":
            raise ValueError("softplus token must carry sharpness, e.g. 'softplus:100'")
        return Activation(token)


IDENTITY = Activation("identity")
SIGMOID = Activation("sigmoid")
TANH = Activation("tanh")
RELU = Activation("relu")
GELU = Activation("gelu")


def softplus(m: float) -> Activation:
    return Activation("softplus", float(m))


def act_value(act: Activation, z):
    z = np.asarray(z, dtype=float)
    k = act.kind
    if k == "identity":
        return z
    if k == "relu":
        return np.maximum(z, 0.0)
    if k == "sigmoid":
        return expit(z)
    if k == "tanh":
        return np.tanh(z)
    if k == "gelu":
        # exact Gaussian-CDF form z * Phi(z)
        return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))
    # softplus with sharpness m: (1/m) log(1 + exp(m z)). The max/log1p
    # split is the overflow-safe branch (equals z + log1p(exp(-m z))/m
    # for m z > 0) and is exact for all magnitudes.
    t = act.m * z
    return (np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))) / act.m


def act_deriv(act: Activation, z, sel: str = KINK_ZERO):
    z = np.asarray(z, dtype=float)
    k = act.kind
    if k == "identity":
        return np.ones_like(z)
    if k == "relu":
        d = (z > 0.0).astype(float)
        if sel == KINK_HALF:
            d = d + 0.5 * (z == 0.0)
        return d
    if k == "sigmoid":
        p = expit(z)
        return p * (1.0 - p)
    if k == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if k == "gelu":
        return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * _INV_SQRT_2PI * np.exp(
            -0.5 * z * z
        )
    return expit(act.m * z)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture only: input width, hidden widths, one activation per layer."""

    input_dim: int
    hidden: tuple[int, ...] = ()
    activations: tuple[Activation, ...] = ()

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(k) for k in self.hidden))
        object.__setattr__(self, "activations", tuple(self.activations))
        if any(k < 1 for k in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if len(self.activations) != len(self.hidden):
            raise ValueError(
                f"{len(self.hidden)} hidden layers but "
                f"{len(self.activations)} activations"
            )

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def param_count(self) -> int:
        d = 0
        fan_in = self.input_dim
        for k in self.hidden:
            d += (fan_in + 1) * k
            fan_in = k
        return d + fan_in + 1


def mlp(input_dim: int, hidden, activation: Activation = RELU) -> NetworkSpec:
    """Spec with one shared activation; hidden may be empty for a linear model."""
    hidden = tuple(hidden)
    return NetworkSpec(input_dim, hidden, (activation,) * len(hidden))


def _segment_table(spec: NetworkSpec):
    fan_in = spec.input_dim
    for l, k in enumerate(spec.hidden, start=1):
        yield f"layer {l} weights", fan_in * k
        yield f"layer {l} bias", k
        fan_in = k
    yield "output weights", fan_in + 1


def _check_theta(spec: NetworkSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != spec.param_count:
        got = theta.size
        pos = 0
        where = "beyond the end"
        for label, size in _segment_table(spec):
            if got < pos + size:
                where = f"inside {label}"
                break
            pos += size
        raise ShapeError(
            f"parameter vector has {got} entries, spec requires d={spec.param_count} "
            f"(vector ends {where})"
        )
    return theta


def unpack(spec: NetworkSpec, theta: np.ndarray):
    """Split the flat vector into [WT_1, b_1, ..., WT_L, b_L, w_out] views.

    WT_l is stored transposed, shape (fan_in, fan_out), so that the flat
    column-stacked segment reshapes into it without copying.
    """
    theta = _check_theta(spec, theta)
    parts = []
    pos = 0
    fan_in = spec.input_dim
    for k in spec.hidden:
        parts.append(theta[pos : pos + fan_in * k].reshape(fan_in, k))
        pos += fan_in * k
        parts.append(theta[pos : pos + k])
        pos += k
        fan_in = k
    parts.append(theta[pos:])
    return parts


def pack(spec: NetworkSpec, parts) -> np.ndarray:
    flat = [p.ravel() for p in parts]
    theta = np.concatenate(flat)
    return _check_theta(spec, theta)


def _as_batch(spec: NetworkSpec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        if spec.input_dim == 1 and x.shape == (1,):
            x = x.reshape(1, 1)
        elif x.shape == (spec.input_dim,):
            x = x.reshape(1, -1)
        else:
            raise ShapeError(
                f"input has {x.shape[0]} features, spec.input_dim={spec.input_dim}"
            )
    elif x.ndim == 2:
        if x.shape[1] != spec.input_dim:
            raise ShapeError(
                f"input has {x.shape[1]} features, spec.input_dim={spec.input_dim}"
            )
    else:
        raise ShapeError(f"input must be a vector or a 2-d array, got ndim={x.ndim}")
    return x, single


def _forward_parts(spec: NetworkSpec, parts, X: np.ndarray) -> np.ndarray:
    h = X
    for l, act in enumerate(spec.activations):
        h = act_value(act, h @ parts[2 * l] + parts[2 * l + 1])
    w_out = parts[-1]
    return w_out[0] + h @ w_out[1:]


def _forward_cached(spec: NetworkSpec, parts, X: np.ndarray):
    """Forward pass keeping (input, pre-activation) per layer for backprop."""
    caches = []
    h = X
    for l, act in enumerate(spec.activations):
        z = h @ parts[2 * l] + parts[2 * l + 1]
        caches.append((h, z))
        h = act_value(act, z)
    w_out = parts[-1]
    return w_out[0] + h @ w_out[1:], caches, h


def _backprop_weighted(spec: NetworkSpec, parts, caches, h_last, coeffs, sel):
    """Gradient of sum_i coeffs[i] * mu(x_i) w.r.t. every parameter block."""
    grads = [None] * len(parts)
    w_out = parts[-1]
    g_out = np.empty_like(w_out)
    g_out[0] = coeffs.sum()
    g_out[1:] = h_last.T @ coeffs
    grads[-1] = g_out
    if spec.depth == 0:
        return grads
    delta = coeffs[:, None] * w_out[1:]
    for l in range(spec.depth - 1, -1, -1):
        h_prev, z = caches[l]
        delta = delta * act_deriv(spec.activations[l], z, sel)
        grads[2 * l] = h_prev.T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ parts[2 * l].T
    return grads


def forward(spec: NetworkSpec, theta: np.ndarray, x):
    """Network output at x; accepts one point (p,) or a batch (n, p)."""
    parts = unpack(spec, theta)
    X, single = _as_batch(spec, x)
    out = _forward_parts(spec, parts, X)
    return float(out[0]) if single else out


def grad_theta(spec: NetworkSpec, theta: np.ndarray, x, sel: str = KINK_ZERO):
    """d-vector of output derivatives w.r.t. every parameter at one input."""
    return grad_weighted(spec, theta, np.asarray(x, float).reshape(1, -1), np.ones(1), sel)


def grad_weighted(spec, theta, X, coeffs, sel: str = KINK_ZERO) -> np.ndarray:
    """sum_i coeffs[i] * grad_theta(x_i) in one reverse pass over the batch."""
    parts = unpack(spec, theta)
    X, _ = _as_batch(spec, X)
    coeffs = np.asarray(coeffs, dtype=float)
    _, caches, h_last = _forward_cached(spec, parts, X)
    grads = _backprop_weighted(spec, parts, caches, h_last, coeffs, sel)
    return pack(spec, grads)


def jacobian(spec: NetworkSpec, theta: np.ndarray, X, sel: str = KINK_ZERO) -> np.ndarray:
    """(n, d) matrix of per-sample parameter gradients."""
    parts = unpack(spec, theta)
    X, _ = _as_batch(spec, X)
    n = X.shape[0]
    if spec.depth == 0:
        return np.hstack([np.ones((n, 1)), X])
    _, caches, h_last = _forward_cached(spec, parts, X)
    w_out = parts[-1]
    blocks = [None] * len(parts)
    blocks[-1] = np.hstack([np.ones((n, 1)), h_last])
    delta = np.broadcast_to(w_out[1:], (n, w_out.size - 1)).copy()
    for l in range(spec.depth - 1, -1, -1):
        h_prev, z = caches[l]
        delta = delta * act_deriv(spec.activations[l], z, sel)
        blocks[2 * l] = np.einsum("ni,nj->nij", h_prev, delta).reshape(n, -1)
        blocks[2 * l + 1] = delta
        if l > 0:
            delta = delta @ parts[2 * l].T
    return np.hstack(blocks)


def glorot_init(spec: NetworkSpec, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases, flat layout.

    Each layer draws from its own spawned RNG stream, so layer l's values
    do not depend on how many draws earlier layers consumed.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    children = ss.spawn(spec.depth + 1)
    parts = []
    fan_in = spec.input_dim
    for l, k in enumerate(spec.hidden):
        lim = math.sqrt(6.0 / (fan_in + k))
        rng = np.random.default_rng(children[l])
        parts.append(rng.uniform(-lim, lim, size=(fan_in, k)))
        parts.append(np.zeros(k))
        fan_in = k
    rng = np.random.default_rng(children[-1])
    lim = math.sqrt(6.0 / (fan_in + 1))
    w_out = np.empty(fan_in + 1)
    w_out[0] = 0.0
    w_out[1:] = rng.uniform(-lim, lim, size=fan_in)
    parts.append(w_out)
    return pack(spec, parts)


def smooth_network(spec: NetworkSpec, m: float) -> NetworkSpec:
    """Replace every ReLU layer by the sharpness-m softplus surrogate.

    The surrogate is C-infinity and sup_z |softplus_m(z) - relu(z)| = log(2)/m,
    attained at z = 0.
    """
    if not m > 0.0:
        raise ValueError("sharpness m must be > 0")
    acts = tuple(softplus(m) if a.kind == "relu" else a for a in spec.activations)
    return replace(spec, activations=acts)


# -- checkpoint text format ---------------------------------------------

class CheckpointFormatError(ValueError):
    pass


def save_checkpoint(spec: NetworkSpec, theta: np.ndarray, path) -> None:
    """Text format: spec line 'p;K_1,...,K_L;activation', then d, then one
    parameter per line with 17 significant digits."""
    theta = _check_theta(spec, theta)
    tokens = [a.token() for a in spec.activations]
    if not tokens:
        act_field = "identity"
    elif len(set(tokens)) == 1:
        act_field = tokens[0]
    else:
        act_field = "|".join(tokens)
    widths = ",".join(str(k) for k in spec.hidden)
    lines = [f"{spec.input_dim};{widths};{act_field}", str(spec.param_count)]
    lines.extend(format(v, ".17g") for v in theta)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise CheckpointFormatError(f"{path}: expected a spec line and a count line")
    fields = lines[0].split(";")
    if len(fields) != 3:
        raise CheckpointFormatError(
            f"{path}: line 1 must be 'p;K_1,...,K_L;activation', got '{lines[0]}'"
        )
    try:
        p = int(fields[0])
        hidden = tuple(int(k) for k in fields[1].split(",") if k)
        tokens = fields[2].split("|")
        if len(tokens) == 1:
            acts = (Activation.parse(tokens[0]),) * len(hidden)
        else:
            acts = tuple(Activation.parse(t) for t in tokens)
        spec = NetworkSpec(p, hidden, acts)
        d = int(lines[1])
    except ValueError as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from exc
    if d != spec.param_count:
        raise CheckpointFormatError(
            f"{path}: header count {d} does not match spec d={spec.param_count}"
        )
    if len(lines) - 2 != d:
        raise CheckpointFormatError(
            f"{path}: {len(lines) - 2} parameter lines, header promised {d}"
        )
    try:
        theta = np.array([float(v) for v in lines[2:]])
    except ValueError as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from exc
    return spec, theta
