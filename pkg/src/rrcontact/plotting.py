"""Figures written next to the CSV/JSON outputs of a run."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.5),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # no Software/date chunk, so reruns write the same bytes
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def trajectories(times, counts, n, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for row in counts:
            ax.plot(times, np.asarray(row) / n, lw=0.6, alpha=0.5, color="C0")
        ax.set_xlabel("t")
        ax.set_ylabel("infected fraction")
        ax.set_ylim(0, 1.02)
        return _save(fig, Path(path))


def tau_ecdf(taus, path, label="") -> Path:
    """Empirical law of tau / mean(tau) against the unit exponential."""
    x = np.sort(np.asarray(taus, float))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if len(x):
            y = x / x.mean()
            ax.step(y, np.arange(1, len(y) + 1) / len(y), where="post", label=label or "data")
            grid = np.linspace(0, max(y.max(), 4), 200)
            ax.plot(grid, 1 - np.exp(-grid), "k--", lw=1, label="Exp(1)")
        ax.set_xlabel(r"$\tau / \bar\tau$")
        ax.set_ylabel("CDF")
        ax.legend(frameon=False)
        return _save(fig, Path(path))


def mean_tau_vs_n(ns, means, ses, path, fit=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(ns, means, yerr=3 * np.asarray(ses), fmt="o", capsize=3)
        if fit is not None:
            grid = np.linspace(min(ns), max(ns), 50)
            ax.plot(grid, np.exp(fit.intercept + fit.beta_hat * grid), "k--", lw=1,
                    label=rf"$\hat\beta$ = {fit.beta_hat:.3g}")
            ax.legend(frameon=False)
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel(r"mean $\tau$")
        return _save(fig, Path(path))


def growth_curve(est, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(est.times, est.mean_size, yerr=3 * est.se_size, fmt=".", ms=3)
        t0, t1 = est.window
        grid = np.linspace(t0, t1, 20)
        ax.plot(grid, np.exp(est.intercept + est.c_hat * grid), "k--", lw=1,
                label=rf"$\hat c$ = {est.c_hat:.3g}")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(r"mean size")
        ax.legend(frameon=False)
        return _save(fig, Path(path))


def deficiency_curve(a_values, maxima, max_se, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(a_values, maxima, yerr=3 * np.asarray(max_se), fmt="o-", capsize=3)
        ax.set_xlabel("a")
        ax.set_ylabel("max deficiency")
        return _save(fig, Path(path))


def black_fraction_hist(fractions, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(np.asarray(fractions, float), bins=20, range=(0, 1))
        ax.axvline(0.25, color="k", ls="--", lw=1)
        ax.set_xlabel("black fraction b/(b+w)")
        ax.set_ylabel("trials")
        return _save(fig, Path(path))
