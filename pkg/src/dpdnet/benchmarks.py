"""Contaminated regression benchmarks, replication harness, CV, CSV I/O.

Seven reference surfaces with fixed data-generating processes: design,
noise scale, and a contaminating law per surface. Contamination replaces
the error of floor(delta * n) randomly chosen rows (drawn without
replacement); every untouched row keeps its clean bytes. Surface 6 is the
exception: its row replaces both covariates and responses outright.

Reproducibility contract: a dataset is a pure function of (phi, n, sigma,
delta, seed). The seed splits into three independent child streams
(train, contamination, test), so the clean training rows do not change
when delta changes, and train/test never share draws. Replication r of a
benchmark shifts both the data seed and the training seed by r.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import competitors as comp
from .errors import GAUSSIAN, ErrorModel
from .loss import DpdConfig
from .network import GELU, RELU, SIGMOID, NetworkSpec, mlp
from .training import FitResult, TrainConfig, fit, predict


# -- reference surfaces ----------------------------------------------------

def _phi1(x):
    return np.cbrt(x * x)


def _phi2(x):
    return np.sinc(x / math.pi)


def _phi3(x):
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("surface 3 is defined on [0, 1]")
    return np.sqrt(x * (1.0 - x)) * np.sin(2.2 * math.pi / (x + 0.15))


def _phi4(x):
    return x[..., 0] * np.exp(-(x[..., 0] ** 2 + x[..., 1] ** 2))


def _phi5(x):
    # design points sit on the unit circle (sin z, cos z); recover the angle
    return np.arctan2(x[..., 0], x[..., 1])


_PHI6_CENTERS = np.array([[0.0, 0.75], [0.5, -0.5], [-0.75, 0.0]])
_PHI6_RATES = np.array([1.0, 2.0, 2.0])


def _phi6(x):
    sq = ((x[..., None, :] - _PHI6_CENTERS) ** 2).sum(axis=-1)
    return np.exp(-_PHI6_RATES * sq).sum(axis=-1)


def _phi7(x):
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("surface 7 is defined on [0, 1]^7")
    return (
        x[..., 0]
        + np.tan(x[..., 1])
        + x[..., 2] ** 3
        + np.log(x[..., 3] + 0.1)
        + 3.0 * x[..., 4]
        + x[..., 5]
        + np.sqrt(x[..., 6] + 0.1)
    )


_PHI = {1: _phi1, 2: _phi2, 3: _phi3, 4: _phi4, 5: _phi5, 6: _phi6, 7: _phi7}
_PHI_DIM = {1: 1, 2: 1, 3: 1, 4: 2, 5: 2, 6: 2, 7: 7}


def eval_phi(phi: int, x):
    """True regression surface phi in {1..7} at x.

    One-input surfaces take scalars or 1-d arrays; multi-input surfaces
    take a point (p,) or rows (n, p).
    """
    if phi not in _PHI:
        raise ValueError(f"unknown surface id {phi}, expected 1..7")
    p = _PHI_DIM[phi]
    x = np.asarray(x, dtype=float)
    if p == 1:
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        out = _PHI[phi](x)
        return float(out) if np.ndim(out) == 0 else out
    if x.shape[-1] != p:
        raise ValueError(f"surface {phi} takes {p} inputs, got shape {x.shape}")
    out = _PHI[phi](x)
    return float(out) if np.ndim(out) == 0 else out


# defaults per surface: sample size, noise scale, contaminating law
# ("normal", mean, variance) or ("replace", ...) for surface 6
_DGP_DEFAULTS = {
    1: (401, 0.1, ("normal", 2.0, 1.0)),
    2: (151, 0.1, ("normal", 2.0, 4.0)),
    3: (800, 0.1, ("normal", 2.0, 1.0)),
    4: (256, 0.1, ("normal", 2.0, 4.0)),
    5: (100, 0.01, ("normal", 0.0, 4.0)),
    6: (200, 0.05, ("replace", 10.0, 10.0)),
    7: (200, 1.0, ("normal", 5.0, 25.0)),
}

_NETWORK_DEFAULTS = {
    1: ([5], RELU),
    2: ([10], SIGMOID),
    3: ([50] * 5, RELU),
    4: ([15], SIGMOID),
    5: ([10], RELU),
    6: ([30], GELU),
    7: ([30] * 3, RELU),
}


def default_network(phi: int) -> NetworkSpec:
    """Reference architecture for each surface."""
    widths, act = _NETWORK_DEFAULTS[phi]
    return mlp(_PHI_DIM[phi], widths, act)


def default_reps(phi: int) -> int:
    """Desk-scale replication counts: 25 for the deep nets, 100 otherwise."""
    return 25 if phi in (3, 7) else 100


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating configuration; None fields pick the surface default."""

    phi: int
    delta: float = 0.0
    seed: int = 0
    n: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.phi not in _PHI:
            raise ValueError(f"unknown surface id {self.phi}, expected 1..7")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must be in [0, 1)")
        if self.n is not None and self.n < 2:
            raise ValueError("n must be >= 2")
        if self.sigma is not None and not self.sigma > 0.0:
            raise ValueError("sigma must be > 0")

    @property
    def resolved_n(self) -> int:
        return self.n if self.n is not None else _DGP_DEFAULTS[self.phi][0]

    @property
    def resolved_sigma(self) -> float:
        return self.sigma if self.sigma is not None else _DGP_DEFAULTS[self.phi][1]

    def describe(self) -> dict:
        law = _DGP_DEFAULTS[self.phi][2]
        return {
            "phi": self.phi,
            "n": self.resolved_n,
            "sigma": self.resolved_sigma,
            "delta": self.delta,
            "seed": self.seed,
            "contamination": {
                "kind": law[0],
                "mean": law[1],
                "variance": law[2],
            },
        }


@dataclass
class Dataset:
    xs: np.ndarray
    ys: np.ndarray
    contaminated: np.ndarray  # boolean mask over rows

    @property
    def n(self) -> int:
        return self.ys.shape[0]


def _design(dgp: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    """Covariate rows; grid designs ignore rng and are identical train/test."""
    n = dgp.resolved_n
    phi = dgp.phi
    if phi == 1:
        return np.linspace(-2.0, 2.0, n).reshape(-1, 1)
    if phi == 2:
        return np.linspace(-7.5, 7.5, n).reshape(-1, 1)
    if phi == 3:
        return rng.uniform(0.0, 1.0, (n, 1))
    if phi == 4:
        side = round(math.sqrt(n))
        if side * side != n:
            raise ValueError(f"surface 4 uses a square grid; n={n} is not a square")
        axis = np.linspace(-2.0, 2.0, side)
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])
    if phi == 5:
        z = np.linspace(0.0, math.pi, n)
        return np.column_stack([np.sin(z), np.cos(z)])
    if phi == 6:
        return rng.uniform(-1.0, 1.0, (n, 2))
    return rng.uniform(0.0, 1.0, (n, 7))


def gen_dataset(dgp: DgpSpec) -> tuple[Dataset, Dataset]:
    """(train, test): train carries contamination, test is clean (delta=0)."""
    n = dgp.resolved_n
    sigma = dgp.resolved_sigma
    ss = np.random.SeedSequence(dgp.seed)
    train_ss, contam_ss, test_ss = ss.spawn(3)

    rng_train = np.random.default_rng(train_ss)
    xs = _design(dgp, rng_train)
    ys = eval_phi(dgp.phi, xs) + sigma * rng_train.standard_normal(n)

    mask = np.zeros(n, dtype=bool)
    m = int(math.floor(dgp.delta * n + 1e-9))
    if m > 0:
        rng_c = np.random.default_rng(contam_ss)
        idx = rng_c.choice(n, size=m, replace=False)
        mask[idx] = True
        law = _DGP_DEFAULTS[dgp.phi][2]
        if law[0] == "replace":
            xs[idx] = rng_c.uniform(-10.0, 10.0, (m, 2))
            ys[idx] = law[1] + math.sqrt(law[2]) * rng_c.standard_normal(m)
        else:
            eps = law[1] + math.sqrt(law[2]) * rng_c.standard_normal(m)
            ys[idx] = eval_phi(dgp.phi, xs[idx]) + eps
    train = Dataset(xs, ys, mask)

    rng_test = np.random.default_rng(test_ss)
    xs_t = _design(dgp, rng_test)
    ys_t = eval_phi(dgp.phi, xs_t) + sigma * rng_test.standard_normal(n)
    test = Dataset(xs_t, ys_t, np.zeros(n, dtype=bool))
    return train, test


def tmse(ys, fitted, trim_fraction: float) -> float:
    """Mean of the smallest ceil((1 - trim) * n) squared errors."""
    if not 0.0 <= trim_fraction < 1.0:
        raise ValueError("trim_fraction must be in [0, 1)")
    ys = np.asarray(ys, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if ys.shape != fitted.shape:
        raise ValueError(f"shape mismatch: {ys.shape} responses vs {fitted.shape} fits")
    n = ys.shape[0]
    k = int(math.ceil((1.0 - trim_fraction) * n - 1e-9))
    sq = (ys - fitted) ** 2
    if k >= n:
        return float(np.mean(sq))
    return float(np.mean(np.partition(sq, k - 1)[:k]))


# -- method grid -----------------------------------------------------------

_COMP_FACTORY = {
    "lse": comp.mse,
    "mse": comp.mse,
    "mae": comp.mae,
    "lmls": comp.lmls,
    "huber": comp.huber,
    "tukey": comp.tukey,
    "lts": comp.lts,
    "lta": comp.lta,
}


@dataclass(frozen=True)
class Method:
    """One column of a benchmark: either a DPD fit or a competitor fit."""

    label: str
    beta: float | None = None
    comp_loss: comp.CompetitorLoss | None = None

    def __post_init__(self):
        if (self.beta is None) == (self.comp_loss is None):
            raise ValueError("a method carries exactly one of beta or comp_loss")

    @property
    def key(self) -> str:
        if self.beta is None:
            return self.label
        return f"{self.label}[beta={self.beta:g}]"


def dpd_method(beta: float) -> Method:
    return Method("dpd", beta=beta)


def competitor_method(name: str) -> Method:
    name = name.lower()
    if name not in _COMP_FACTORY:
        raise ValueError(
            f"unknown method '{name}', expected dpd or one of {sorted(_COMP_FACTORY)}"
        )
    return Method(name, comp_loss=_COMP_FACTORY[name]())


def parse_methods(names: str, betas) -> list[Method]:
    """Expand 'lse,dpd' plus a beta grid into concrete method columns."""
    out: list[Method] = []
    for name in names.split(","):
        name = name.strip().lower()
        if not name:
            continue
        if name == "dpd":
            if not betas:
                raise ValueError("method 'dpd' requested but no betas given")
            out.extend(dpd_method(b) for b in betas)
        else:
            out.append(competitor_method(name))
    if not out:
        raise ValueError("no methods requested")
    return out


def fit_method(
    method: Method,
    spec: NetworkSpec,
    xs,
    ys,
    train_cfg: TrainConfig,
    model: ErrorModel = GAUSSIAN,
    sigma0: float = 0.001,
) -> FitResult:
    if method.beta is not None:
        return fit(DpdConfig(method.beta, sigma0), spec, model, xs, ys, train_cfg)
    return comp.fit_competitor(method.comp_loss, spec, xs, ys, train_cfg)


# -- replication harness ---------------------------------------------------

@dataclass
class MetricReport:
    """Per-method replication record; NaN marks a failed replication."""

    method: str
    beta: float | None
    delta: float
    requested: int
    train_tmse: np.ndarray
    test_mse: np.ndarray
    failures: list[tuple[int, str]] = field(default_factory=list)

    def summary(self, metric: str) -> tuple[float, float, int]:
        """(mean, standard error, completed count) over finite replications."""
        vals = getattr(self, metric)
        vals = vals[np.isfinite(vals)]
        k = vals.shape[0]
        if k == 0:
            return math.nan, math.nan, 0
        se = float(np.std(vals, ddof=1) / math.sqrt(k)) if k > 1 else math.nan
        return float(np.mean(vals)), se, k


def _one_replication(dgp, methods, net, train_cfg, model, r):
    train, test = gen_dataset(replace(dgp, seed=dgp.seed + r))
    cfg_r = replace(train_cfg, seed=train_cfg.seed + r)
    truth_test = eval_phi(dgp.phi, test.xs)
    cells = []
    for method in methods:
        try:
            res = fit_method(method, net, train.xs, train.ys, cfg_r, model)
            fitted_train = predict(net, res.theta, train.xs)
            t_tmse = tmse(train.ys, fitted_train, dgp.delta)
            mse = float(np.mean((predict(net, res.theta, test.xs) - truth_test) ** 2))
            cells.append((t_tmse, mse, None))
        except Exception as exc:  # record, keep the grid running
            cells.append((math.nan, math.nan, f"{type(exc).__name__}: {exc}"))
    return cells


def run_replications(
    dgp: DgpSpec,
    methods: list[Method],
    reps: int,
    train_cfg: TrainConfig,
    net: NetworkSpec | None = None,
    model: ErrorModel = GAUSSIAN,
    jobs: int = 1,
) -> list[MetricReport]:
    """R independent contaminated fits per method.

    Replication r derives its data seed (dgp.seed + r) and training seed
    (train_cfg.seed + r); results are aggregated in replication order, so
    the output is identical for any jobs count.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if net is None:
        net = default_network(dgp.phi)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        args = [(dgp, methods, net, train_cfg, model, r) for r in range(reps)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_one_replication_star, args))
    else:
        per_rep = [_one_replication(dgp, methods, net, train_cfg, model, r) for r in range(reps)]

    reports = []
    for j, method in enumerate(methods):
        t_vals = np.array([per_rep[r][j][0] for r in range(reps)])
        m_vals = np.array([per_rep[r][j][1] for r in range(reps)])
        fails = [(r, per_rep[r][j][2]) for r in range(reps) if per_rep[r][j][2]]
        reports.append(
            MetricReport(method.label, method.beta, dgp.delta, reps, t_vals, m_vals, fails)
        )
    return reports


def _one_replication_star(args):
    return _one_replication(*args)


# -- gross-contamination stress test ----------------------------------------

@dataclass
class BreakdownRow:
    delta: float
    magnitude: float
    beta: float
    max_abs_pred: float
    sigma_hat: float
    clean_max_abs_pred: float
    clean_sigma_hat: float


def breakdown_stress(
    net: NetworkSpec,
    model: ErrorModel,
    xs,
    ys,
    deltas,
    magnitudes,
    betas,
    train_cfg: TrainConfig,
    seed: int = 0,
    sigma0: float = 0.001,
) -> list[BreakdownRow]:
    """Force floor(delta*n) responses to a fixed magnitude M and refit.

    For each beta a clean reference fit runs once; each (delta, M, beta)
    cell reports max |mu_hat(x_i)| over the design and the fitted scale,
    next to the clean values. The contaminated row set is seeded per delta
    and shared across magnitudes.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = ys.shape[0]
    clean = {}
    for beta in betas:
        res = fit(DpdConfig(beta, sigma0), net, model, xs, ys, train_cfg)
        pred = predict(net, res.theta, xs)
        clean[beta] = (float(np.max(np.abs(pred))), float(res.sigma))
    rows = []
    children = np.random.SeedSequence(seed).spawn(len(list(deltas)))
    for di, delta in enumerate(deltas):
        m = int(math.floor(delta * n + 1e-9))
        idx = np.random.default_rng(children[di]).choice(n, size=m, replace=False)
        for mag in magnitudes:
            ys_c = ys.copy()
            ys_c[idx] = mag
            for beta in betas:
                res = fit(DpdConfig(beta, sigma0), net, model, xs, ys_c, train_cfg)
                pred = predict(net, res.theta, xs)
                rows.append(
                    BreakdownRow(
                        delta=float(delta),
                        magnitude=float(mag),
                        beta=float(beta),
                        max_abs_pred=float(np.max(np.abs(pred))),
                        sigma_hat=float(res.sigma),
                        clean_max_abs_pred=clean[beta][0],
                        clean_sigma_hat=clean[beta][1],
                    )
                )
    return rows


# -- cross-validation --------------------------------------------------------

@dataclass
class CvReport:
    method: str
    beta: float | None
    k: int
    trim: float
    fold_tmse: np.ndarray

    @property
    def cv_tmse(self) -> float:
        return float(np.mean(self.fold_tmse))


def kfold_cv(
    xs,
    ys,
    k: int,
    methods: list[Method],
    trim: float,
    train_cfg: TrainConfig,
    net: NetworkSpec,
    seed: int = 0,
    model: ErrorModel = GAUSSIAN,
) -> list[CvReport]:
    """Seeded k-fold split; per fold, fit on the rest and score trimmed MSE
    on the held-out part. Fold f trains with seed train_cfg.seed + f."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = ys.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must be in 2..{n}")
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
    folds = np.array_split(perm, k)
    per_method = [np.empty(k) for _ in methods]
    for f, held in enumerate(folds):
        rest = np.setdiff1d(perm, held, assume_unique=True)
        cfg_f = replace(train_cfg, seed=train_cfg.seed + f)
        for j, method in enumerate(methods):
            res = fit_method(method, net, xs[rest], ys[rest], cfg_f, model)
            per_method[j][f] = tmse(ys[held], predict(net, res.theta, xs[held]), trim)
    return [
        CvReport(m.label, m.beta, k, trim, per_method[j]) for j, m in enumerate(methods)
    ]


# -- CSV ingestion -----------------------------------------------------------

class CsvFormatError(ValueError):
    """Malformed tabular input; message carries row and column context."""


@dataclass
class TabularData:
    """Numeric design matrix plus response, with covariate scaling record."""

    xs: np.ndarray
    ys: np.ndarray
    feature_names: list[str]
    response_name: str
    x_min: np.ndarray
    x_max: np.ndarray


def load_csv(path, response: str, scale: str = "minmax") -> TabularData:
    """Read a numeric CSV with a header row; response picked by column name.

    scale='minmax' maps every covariate onto [0, 1] and records the
    original ranges; constant columns map to 0 with a warning.
    scale='none' keeps raw values.
    """
    if scale not in ("minmax", "none"):
        raise ValueError("scale must be 'minmax' or 'none'")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise CsvFormatError(
                f"{path}: response column '{response}' not found; columns: {header}"
            )
        resp_idx = header.index(response)
        rows = []
        for rnum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {rnum} has {len(row)} fields, header has {len(header)}"
                )
            vals = []
            for cell, col in zip(row, header):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: row {rnum}, column '{col}': could not parse '{cell.strip()}'"
                    ) from None
            rows.append(vals)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    data = np.array(rows)
    ys = data[:, resp_idx]
    xs = np.delete(data, resp_idx, axis=1)
    names = [h for i, h in enumerate(header) if i != resp_idx]
    x_min = xs.min(axis=0)
    x_max = xs.max(axis=0)
    if scale == "minmax":
        span = x_max - x_min
        flat = span == 0.0
        if np.any(flat):
            bad = [names[i] for i in np.flatnonzero(flat)]
            warnings.warn(f"constant covariate column(s) {bad} scaled to 0")
        safe = np.where(flat, 1.0, span)
        xs = (xs - x_min) / safe
        xs[:, flat] = 0.0
    return TabularData(xs, ys, names, response, x_min, x_max)


# -- delimited output --------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_results_csv(reports: list[MetricReport], path) -> None:
    """Summary table: method,beta,delta,metric,mean,stderr,R."""
    lines = ["method,beta,delta,metric,mean,stderr,R"]
    for rep in reports:
        for metric in ("train_tmse", "test_mse"):
            mean, se, k = rep.summary(metric)
            beta_txt = "" if rep.beta is None else repr(float(rep.beta))
            lines.append(
                f"{rep.method},{beta_txt},{_fmt(rep.delta)},{metric},{_fmt(mean)},{_fmt(se)},{k}"
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_replications_csv(reports: list[MetricReport], path) -> None:
    """Long format: method,beta,delta,rep,metric,value (one row per cell)."""
    lines = ["method,beta,delta,rep,metric,value"]
    for rep in reports:
        beta_txt = "" if rep.beta is None else repr(float(rep.beta))
        for metric in ("train_tmse", "test_mse"):
            for r, v in enumerate(getattr(rep, metric)):
                lines.append(
                    f"{rep.method},{beta_txt},{_fmt(rep.delta)},{r},{metric},{_fmt(v)}"
                )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_breakdown_csv(rows: list[BreakdownRow], path) -> None:
    lines = ["delta,magnitude,beta,max_abs_pred,sigma_hat,clean_max_abs_pred,clean_sigma_hat"]
    for r in rows:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.delta,
                    r.magnitude,
                    r.beta,
                    r.max_abs_pred,
                    r.sigma_hat,
                    r.clean_max_abs_pred,
                    r.clean_sigma_hat,
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_cv_csv(reports: list[CvReport], path, folds_path=None) -> None:
    lines = ["method,beta,k,trim,cv_tmse"]
    for rep in reports:
        beta_txt = "" if rep.beta is None else repr(float(rep.beta))
        lines.append(f"{rep.method},{beta_txt},{rep.k},{_fmt(rep.trim)},{_fmt(rep.cv_tmse)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if folds_path is not None:
        lines = ["method,beta,fold,tmse"]
        for rep in reports:
            beta_txt = "" if rep.beta is None else repr(float(rep.beta))
            for f, v in enumerate(rep.fold_tmse):
                lines.append(f"{rep.method},{beta_txt},{f},{_fmt(v)}")
        with open(folds_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def write_metadata(path, mapping: dict) -> None:
    """Sidecar with everything needed to re-run a command bit-identically."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(mapping, fh, indent=2, sort_keys=True)
        fh.write("\n")
