"""Figure rendering for the CLI report paths.

matplotlib is imported lazily inside each function with the Agg backend
forced, so importing this module costs nothing and no display is needed.
Every function writes one PNG and returns the path.
"""

from __future__ import annotations

import numpy as np

_DPI = 150


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def save_trace_figure(result, path):
    """Outer-iteration loss curve next to the fitted scale trace."""
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    iters = np.arange(len(result.loss_trace))
    axes[0].plot(iters, result.loss_trace, marker="o", ms=3)
    axes[0].set_xlabel("outer iteration")
    axes[0].set_ylabel("objective")
    axes[0].set_title("loss trace")
    sig = [s for s in result.sigma_trace if s is not None]
    axes[1].plot(np.arange(1, len(sig) + 1), sig, marker="o", ms=3, color="tab:orange")
    axes[1].set_xlabel("outer iteration")
    axes[1].set_ylabel("sigma")
    axes[1].set_title("scale trace")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_if_figure(labeled_curves, path, title=None):
    """Influence curves vs the contaminating response t.

    labeled_curves: list of (label, IfCurve). Parameter-vector curves are
    reduced to their Euclidean norm per t so every curve plots as one line.
    """
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in labeled_curves:
        vals = np.asarray(curve.values)
        if vals.ndim == 2:
            ax.plot(curve.t, np.linalg.norm(vals, axis=1), label=label)
        else:
            ax.plot(curve.t, vals, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("influence")
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_benchmark_figure(reports, path, title=None):
    """Mean +/- stderr bars per method, one panel per metric."""
    plt = _plt()
    metrics = ("train_tmse", "test_mse")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    labels = [r.method if r.beta is None else f"{r.method} b={r.beta:g}" for r in reports]
    xs = np.arange(len(reports))
    for ax, metric in zip(axes, metrics):
        means, errs = [], []
        for r in reports:
            mean, se, _ = r.summary(metric)
            means.append(mean)
            errs.append(0.0 if not np.isfinite(se) else se)
        ax.bar(xs, means, yerr=errs, capsize=3, color="tab:blue", alpha=0.8)
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
        ax.set_title(metric)
        ax.set_yscale("log")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_breakdown_figure(rows, path, title=None):
    """Worst fitted value vs contaminating magnitude, one line per (beta, delta)."""
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    combos = sorted({(r.beta, r.delta) for r in rows})
    for beta, delta in combos:
        sel = [r for r in rows if r.beta == beta and r.delta == delta]
        sel.sort(key=lambda r: r.magnitude)
        mags = [r.magnitude for r in sel]
        axes[0].plot(mags, [r.max_abs_pred for r in sel], marker="o", ms=3,
                     label=f"beta={beta:g}, delta={delta:g}")
        axes[1].plot(mags, [r.sigma_hat for r in sel], marker="o", ms=3,
                     label=f"beta={beta:g}, delta={delta:g}")
    axes[0].set_xlabel("contaminating magnitude")
    axes[0].set_ylabel("max |fitted value|")
    axes[1].set_xlabel("contaminating magnitude")
    axes[1].set_ylabel("fitted sigma")
    for ax in axes:
        ax.set_xscale("symlog")
        ax.set_yscale("log")
        ax.legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_cv_figure(reports, path, title=None):
    """Cross-validated trimmed MSE per method; fold spread as points."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [r.method if r.beta is None else f"{r.method} b={r.beta:g}" for r in reports]
    xs = np.arange(len(reports))
    ax.bar(xs, [r.cv_tmse for r in reports], color="tab:green", alpha=0.7)
    for i, r in enumerate(reports):
        ax.plot(np.full(r.fold_tmse.shape, i), r.fold_tmse, "k.", ms=4, alpha=0.6)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("trimmed MSE (CV)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
