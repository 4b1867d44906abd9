"""Command-line front end.

Subcommands: train, benchmark, influence, breakdown, cv. Every run writes
its delimited outputs plus a metadata.json sidecar into --out, and renders
PNG figures next to the CSVs unless --no-figures is given.

Options resolve in three layers: built-in defaults, then a --config file
of flat `key = value` lines (# comments allowed, keys named like the long
flags without the dashes), then explicit command-line flags. An unknown
config key is an error naming the key.

Exit codes: 0 on success, 1 on error, 2 when a benchmark grid completed
partially (failed cells listed in failures.txt).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, benchmarks as bm, influence as infl
from .errors import get_model
from .loss import DpdConfig
from .network import Activation, mlp, save_checkpoint
from .training import TrainConfig, fit, init_sigma_mad, predict, write_trace_csv


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; exit code 2 means "partial results"
    # here, so route usage errors through the normal error path instead.
    def error(self, message):
        raise CliError(message)


# -- option coercion ---------------------------------------------------------

def _c_int(s):
    return int(s)


def _c_float(s):
    return float(s)


def _c_str(s):
    return str(s)


def _c_bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{s}'")


def _c_float_list(s):
    parts = [p.strip() for p in str(s).split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return [float(p) for p in parts]


def _c_int_list(s):
    parts = [p.strip() for p in str(s).split(",") if p.strip()]
    return [int(p) for p in parts]


def _c_arch(s):
    s = str(s).strip().lower()
    if s in ("", "none", "linear"):
        return []
    return [int(p) for p in s.split(",") if p.strip()]


def _c_tgrid(s):
    parts = str(s).split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be lo:hi:count, got '{s}'")
    lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
    if num < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(lo, hi, num)


# per-subcommand schema: key -> (coercer, default, help)
_COMMON_TRAIN = {
    "epochs": (_c_int, 100, "inner epochs per outer iteration"),
    "batch-size": (_c_int, 32, "minibatch size (>= n trains full batch)"),
    "step-size": (_c_float, 1e-3, "ADAM step size"),
    "max-outer": (_c_int, 50, "maximum outer alternations"),
    "outer-tol": (_c_float, 1e-6, "stop when the loss improves by less"),
    "sigma-solver": (_c_str, "qn", "scale step: qn or fixed_point"),
    "seed": (_c_int, 0, "training seed"),
}

_SCHEMAS = {
    "train": {
        "data": (_c_str, None, "input CSV with a header row"),
        "response": (_c_str, "y", "response column name"),
        "beta": (_c_float, 0.5, "robustness exponent in [0, 1]"),
        "model": (_c_str, "gaussian", "error model: gaussian, laplace, logistic"),
        "arch": (_c_arch, [10], "hidden widths, e.g. 50,50; 'none' for linear"),
        "activation": (_c_str, "relu", "identity, sigmoid, tanh, relu, gelu, softplus:m"),
        "scale-covariates": (_c_bool, True, "min-max scale covariates to [0, 1]"),
        "out": (_c_str, "train_out", "output directory"),
        "no-figures": (_c_bool, False, "skip PNG rendering"),
        **_COMMON_TRAIN,
    },
    "benchmark": {
        "phi": (_c_int, None, "benchmark surface 1..7"),
        "delta": (_c_float, 0.1, "contamination fraction"),
        "reps": (_c_int, None, "replications (default depends on surface)"),
        "methods": (_c_str, "lse,dpd", "comma list: dpd, lse, mae, lmls, huber, tukey, lts, lta"),
        "betas": (_c_float_list, [0.0, 0.3], "beta grid expanded for 'dpd'"),
        "n": (_c_int, None, "sample size override"),
        "sigma": (_c_float, None, "noise scale override"),
        "data-seed": (_c_int, 0, "base seed for dataset generation"),
        "jobs": (_c_int, None, "worker processes (default: CPU count)"),
        "out": (_c_str, "benchmark_out", "output directory"),
        "no-figures": (_c_bool, False, "skip PNG rendering"),
        **_COMMON_TRAIN,
    },
    "influence": {
        "preset": (_c_str, "ex31", "bundled network: ex31 (sigmoid), ex32 (relu)"),
        "betas": (_c_float_list, [0.0, 0.5], "beta values, one curve set each"),
        "i": (_c_int, 2, "1-based index of the contaminated design point"),
        "tgrid": (_c_tgrid, _c_tgrid("-10:20:301"), "response grid lo:hi:count"),
        "out": (_c_str, "influence_out", "output directory"),
        "no-figures": (_c_bool, False, "skip PNG rendering"),
    },
    "breakdown": {
        "phi": (_c_int, 1, "benchmark surface 1..7"),
        "deltas": (_c_float_list, [0.05, 0.2], "contamination fractions"),
        "magnitudes": (_c_float_list, [10.0, 100.0, 1000.0], "forced response values"),
        "betas": (_c_float_list, [0.0, 0.5], "beta grid"),
        "n": (_c_int, None, "sample size override"),
        "data-seed": (_c_int, 0, "dataset seed"),
        "stress-seed": (_c_int, 0, "seed choosing which rows are forced"),
        "out": (_c_str, "breakdown_out", "output directory"),
        "no-figures": (_c_bool, False, "skip PNG rendering"),
        **_COMMON_TRAIN,
    },
    "cv": {
        "data": (_c_str, None, "input CSV with a header row"),
        "response": (_c_str, "y", "response column name"),
        "k": (_c_int, 5, "number of folds"),
        "trim": (_c_float, 0.0, "trim fraction for the fold score"),
        "methods": (_c_str, "dpd", "comma list as in benchmark"),
        "betas": (_c_float_list, [0.0, 0.3], "beta grid expanded for 'dpd'"),
        "arch": (_c_arch, [10], "hidden widths"),
        "activation": (_c_str, "relu", "hidden activation"),
        "scale-covariates": (_c_bool, True, "min-max scale covariates to [0, 1]"),
        "cv-seed": (_c_int, 0, "fold-split seed"),
        "out": (_c_str, "cv_out", "output directory"),
        "no-figures": (_c_bool, False, "skip PNG rendering"),
        **_COMMON_TRAIN,
    },
}


def _read_config(path) -> dict[str, str]:
    raw = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected 'key = value'")
                key, val = line.split("=", 1)
                raw[key.strip()] = val.strip()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc.strerror}") from None
    return raw


def _resolve(sub: str, cli_vals: dict, config_path) -> dict:
    """Defaults, then config file, then explicit flags. Unknown keys fail."""
    schema = _SCHEMAS[sub]
    out = {key: default for key, (_, default, _) in schema.items()}
    if config_path is not None:
        for key, raw in _read_config(config_path).items():
            if key not in schema:
                raise CliError(f"unknown config key '{key}' for '{sub}'")
            coerce = schema[key][0]
            try:
                out[key] = coerce(raw)
            except ValueError as exc:
                raise CliError(f"config key '{key}': {exc}") from None
    for key, val in cli_vals.items():
        if val is not None:
            out[key] = val
    return out


def _build_parser() -> _Parser:
    parser = _Parser(prog="dpdnet", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"dpdnet {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="command")
    for sub, schema in _SCHEMAS.items():
        sp = subs.add_parser(sub, help=None)
        sp.add_argument("--config", default=None, help="flat key = value option file")
        for key, (coerce, default, help_txt) in schema.items():
            flag = f"--{key}"
            if coerce is _c_bool:
                sp.add_argument(flag, nargs="?", const="true", default=None,
                                metavar="BOOL", help=help_txt)
            else:
                sp.add_argument(flag, default=None, metavar=key.upper().replace("-", "_"),
                                help=f"{help_txt} (default: {default})")
    return parser


def _coerce_cli(sub: str, ns: argparse.Namespace) -> dict:
    vals = {}
    for key, (coerce, _, _) in _SCHEMAS[sub].items():
        raw = getattr(ns, key.replace("-", "_"))
        if raw is None:
            vals[key] = None
            continue
        try:
            vals[key] = coerce(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise CliError(f"invalid value for --{key}: {exc}") from None
    return vals


def _train_config(o: dict) -> TrainConfig:
    return TrainConfig(
        epochs=o["epochs"],
        batch_size=o["batch-size"],
        step_size=o["step-size"],
        sigma_solver=o["sigma-solver"],
        outer_tol=o["outer-tol"],
        max_outer=o["max-outer"],
        seed=o["seed"],
    )


def _outdir(o: dict) -> Path:
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metadata(out: Path, command: str, o: dict, outputs: list[str]) -> None:
    echo = {}
    for key, val in o.items():
        if isinstance(val, np.ndarray):
            echo[key] = [float(v) for v in val]
        else:
            echo[key] = val
    bm.write_metadata(out / "metadata.json", {
        "command": command,
        "package": "dpdnet",
        "version": __version__,
        "rng": "numpy PCG64",
        "options": echo,
        "outputs": sorted(outputs),
    })


def _load_tabular(o: dict):
    if o["data"] is None:
        raise CliError("--data is required")
    path = Path(o["data"])
    if not path.exists():
        raise CliError(f"data file not found: {path}")
    scale = "minmax" if o["scale-covariates"] else "none"
    return bm.load_csv(path, o["response"], scale=scale)


# -- subcommands -------------------------------------------------------------

def _cmd_train(o: dict) -> int:
    data = _load_tabular(o)
    cfg = DpdConfig(o["beta"])  # range errors surface before any work
    model = get_model(o["model"])
    spec = mlp(data.xs.shape[1], o["arch"], Activation.parse(o["activation"]))
    tcfg = _train_config(o)
    result = fit(cfg, spec, model, data.xs, data.ys, tcfg)

    out = _outdir(o)
    outputs = ["checkpoint.txt", "trace.csv"]
    save_checkpoint(spec, result.theta, out / "checkpoint.txt")
    write_trace_csv(result, out / "trace.csv")
    if not o["no-figures"]:
        from .plots import save_trace_figure

        save_trace_figure(result, out / "trace.png")
        outputs.append("trace.png")
    _metadata(out, "train", o, outputs)
    fitted = predict(spec, result.theta, data.xs)
    resid_sd = float(np.std(data.ys - fitted))
    print(f"fit complete: sigma={result.sigma:.6g} loss={result.loss_trace[-1]:.6g} "
          f"outer={result.outer_iters} converged={result.converged} "
          f"residual_sd={resid_sd:.6g}")
    print(f"wrote {out}/checkpoint.txt")
    return 0


def _cmd_benchmark(o: dict) -> int:
    if o["phi"] is None:
        raise CliError("--phi is required")
    dgp = bm.DgpSpec(o["phi"], delta=o["delta"], seed=o["data-seed"],
                     n=o["n"], sigma=o["sigma"])
    methods = bm.parse_methods(o["methods"], o["betas"])
    reps = o["reps"] if o["reps"] is not None else bm.default_reps(o["phi"])
    jobs = o["jobs"] if o["jobs"] is not None else (os.cpu_count() or 1)
    reports = bm.run_replications(dgp, methods, reps, _train_config(o), jobs=jobs)

    out = _outdir(o)
    outputs = ["results.csv", "replications.csv"]
    bm.write_results_csv(reports, out / "results.csv")
    bm.write_replications_csv(reports, out / "replications.csv")
    if not o["no-figures"]:
        from .plots import save_benchmark_figure

        save_benchmark_figure(reports, out / "results.png",
                              title=f"surface {o['phi']}, delta={o['delta']:g}")
        outputs.append("results.png")

    failures = [(r.method, r.beta, rep, msg) for r in reports for rep, msg in r.failures]
    if failures:
        lines = ["method,beta,rep,error"]
        for method, beta, rep, msg in failures:
            beta_txt = "" if beta is None else repr(float(beta))
            lines.append(f"{method},{beta_txt},{rep},{msg.replace(',', ';')}")
        (out / "failures.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append("failures.txt")
    _metadata(out, "benchmark", o, outputs)
    for r in reports:
        mean, se, k = r.summary("test_mse")
        print(f"{r.method:>6}{'' if r.beta is None else f' beta={r.beta:g}':<10} "
              f"test_mse={mean:.6g} (se={se:.2g}, R={k})")
    if failures:
        print(f"{len(failures)} cell(s) failed; see {out}/failures.txt", file=sys.stderr)
        return 2
    return 0


def _cmd_influence(o: dict) -> int:
    preset = o["preset"].lower()
    if preset not in ("ex31", "ex32"):
        raise CliError("--preset must be ex31 or ex32")
    kind = "sigmoid" if preset == "ex31" else "relu"
    if o["i"] < 1:
        raise CliError(f"--i is 1-based; got {o['i']}")
    ts = np.asarray(o["tgrid"], dtype=float)

    out = _outdir(o)
    outputs = []
    per_kind = {"theta": [], "sigma": [], "predictor": []}
    ges_lines = ["kind,beta,gross_error_sensitivity"]
    for beta in o["betas"]:
        setup = infl.one_node_example_setup(kind, beta, index=o["i"] - 1)
        x_eval = setup.xs[setup.index]
        curves = {
            "theta": infl.curve_theta(setup, ts),
            "sigma": infl.curve_sigma(setup, ts),
            "predictor": infl.curve_predictor(setup, ts, x_eval),
        }
        for cname, curve in curves.items():
            fname = f"if_{cname}_beta{beta:g}.csv"
            infl.write_curve_csv(curve, out / fname)
            outputs.append(fname)
            per_kind[cname].append((f"beta={beta:g}", curve))
            ges_lines.append(f"{cname},{float(beta)!r},{curve.gross_error_sensitivity()!r}")
        if kind == "relu":
            report = infl.if_relu_limit(setup, ts)
            lines = ["m,kind,sup_gap"]
            for m, gap in zip(report.m_sequence, report.gaps):
                for cname in ("theta", "sigma", "predictor"):
                    lines.append(f"{float(m)!r},{cname},{gap[cname]!r}")
            fname = f"smoothing_gaps_beta{beta:g}.csv"
            (out / fname).write_text("\n".join(lines) + "\n", encoding="utf-8")
            outputs.append(fname)
    (out / "sensitivity.csv").write_text("\n".join(ges_lines) + "\n", encoding="utf-8")
    outputs.append("sensitivity.csv")
    if not o["no-figures"]:
        from .plots import save_if_figure

        for cname, labeled in per_kind.items():
            save_if_figure(labeled, out / f"if_{cname}.png",
                           title=f"{preset}: {cname} influence")
            outputs.append(f"if_{cname}.png")
    _metadata(out, "influence", o, outputs)
    print(f"wrote {len(outputs)} file(s) to {out}")
    return 0


def _cmd_breakdown(o: dict) -> int:
    dgp = bm.DgpSpec(o["phi"], delta=0.0, seed=o["data-seed"], n=o["n"])
    train, _ = bm.gen_dataset(dgp)
    net = bm.default_network(o["phi"])
    from .errors import GAUSSIAN

    rows = bm.breakdown_stress(
        net, GAUSSIAN, train.xs, train.ys,
        o["deltas"], o["magnitudes"], o["betas"],
        _train_config(o), seed=o["stress-seed"],
    )
    out = _outdir(o)
    outputs = ["breakdown.csv"]
    bm.write_breakdown_csv(rows, out / "breakdown.csv")
    if not o["no-figures"]:
        from .plots import save_breakdown_figure

        save_breakdown_figure(rows, out / "breakdown.png",
                              title=f"surface {o['phi']} stress test")
        outputs.append("breakdown.png")
    _metadata(out, "breakdown", o, outputs)
    print(f"wrote {out}/breakdown.csv ({len(rows)} rows)")
    return 0


def _cmd_cv(o: dict) -> int:
    data = _load_tabular(o)
    methods = bm.parse_methods(o["methods"], o["betas"])
    net = mlp(data.xs.shape[1], o["arch"], Activation.parse(o["activation"]))
    reports = bm.kfold_cv(data.xs, data.ys, o["k"], methods, o["trim"],
                          _train_config(o), net, seed=o["cv-seed"])
    out = _outdir(o)
    outputs = ["cv.csv", "cv_folds.csv"]
    bm.write_cv_csv(reports, out / "cv.csv", out / "cv_folds.csv")
    if not o["no-figures"]:
        from .plots import save_cv_figure

        save_cv_figure(reports, out / "cv.png", title=f"{o['k']}-fold CV")
        outputs.append("cv.png")
    _metadata(out, "cv", o, outputs)
    best = min(reports, key=lambda r: r.cv_tmse)
    tag = best.method if best.beta is None else f"{best.method} beta={best.beta:g}"
    print(f"best by CV: {tag} (tmse={best.cv_tmse:.6g})")
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "benchmark": _cmd_benchmark,
    "influence": _cmd_influence,
    "breakdown": _cmd_breakdown,
    "cv": _cmd_cv,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help()
            return 1
        o = _resolve(ns.command, _coerce_cli(ns.command, ns), ns.config)
        return _DISPATCH[ns.command](o)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
