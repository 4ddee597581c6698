"""Figure rendering for the report subcommands.

Each report CSV gets a PNG next to it.  Headless by construction (Agg);
nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_potential(path, r, values, n: int, s: float) -> None:
    fig, ax = _new_axes(f"periodized interaction, n={n}, s={s}", "r", "g_n(r)")
    ax.plot(r, values, lw=1.2)
    ax.axhline(0.0, color="k", lw=0.6)
    _save(fig, path)


def plot_count_histogram(path, ks, freqs, errs, window_volume: float) -> None:
    fig, ax = _new_axes(
        f"window count frequencies, vol={window_volume:g}", "k", "frequency"
    )
    ax.bar(ks, freqs, yerr=errs, capsize=3, color="tab:blue", alpha=0.8)
    _save(fig, path)


def plot_fluctuation(path, ks, variances, var_errs, slope: float) -> None:
    fig, ax = _new_axes(
        f"number fluctuations, fitted slope {slope:.3f}", "window volume k", "Var(N_k)"
    )
    ax.errorbar(ks, variances, yerr=var_errs, fmt="o-", capsize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    _save(fig, path)


def plot_free_energy(path, ns, values, errs, lowers, uppers) -> None:
    fig, ax = _new_axes("free energy bracket", "n", "log Z / n")
    ns = np.asarray(ns, dtype=float)
    ax.errorbar(ns, values, yerr=errs, fmt="o", label="estimate", capsize=3)
    ax.plot(ns, lowers, "v--", label="lower bound", color="tab:red")
    ax.plot(ns, uppers, "^--", label="upper bound", color="tab:green")
    ax.legend()
    _save(fig, path)


def plot_compensator(path, ps, means, mean_errs, variances) -> None:
    fig, ax = _new_axes("compensated field partial sums", "p", "S_p statistics")
    ax.errorbar(ps, means, yerr=mean_errs, fmt="o-", label="mean", capsize=3)
    ax.plot(ps, variances, "s--", label="variance")
    ax.set_xscale("log")
    ax.legend()
    _save(fig, path)


def plot_energy_trace(path, trace, thin: int) -> None:
    fig, ax = _new_axes("energy trace", "step", "H_n")
    ax.plot(np.arange(len(trace)) * thin, trace, lw=0.6)
    _save(fig, path)
