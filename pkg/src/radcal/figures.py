"""Static SVG figures for the experiment report.

Rendering uses matplotlib's Agg backend with a fixed SVG hash salt, no
creation date and text kept as text, so a rerun writes identical bytes.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "radcal",
    "svg.fonttype": "none",
    "font.family": "sans-serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (4.8, 3.2),
}

ERROR_BINS = 10.0 ** np.linspace(-16, 0, 65)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def line_figure(path, x, series, xlabel, ylabel, logy=False, logx=False, markers=True, title=None):
    """One axis, one line per ``label -> values`` entry of ``series``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, ys in series.items():
            xs = x[label] if isinstance(x, dict) else x
            ax.plot(xs, ys, marker="o" if markers else None, label=label)
        if logy:
            ax.set_yscale("log")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        return _save(fig, path)


def error_histogram_figure(path, samples, xlabel="l-infinity error", reference=None, title=None, bins=None):
    """Overlaid step histograms on log-spaced bins; ``reference`` draws a dashed vertical line."""
    bins = ERROR_BINS if bins is None else bins
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, vals in samples.items():
            v = np.clip(np.asarray(vals, dtype=float), bins[0], bins[-1])
            ax.hist(v, bins=bins, histtype="step", label=label)
        ax.set_xscale("log")
        if reference is not None:
            ax.axvline(reference, color="black", linestyle="--", linewidth=1)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def difference_histogram_figure(path, diffs, xlabel, title=None, nbins=40):
    """Linear-bin histogram of signed differences with a line at zero."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, vals in diffs.items():
            ax.hist(np.asarray(vals, dtype=float), bins=nbins, histtype="step", label=label)
        ax.axvline(0.0, color="black", linewidth=0.8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def landscape_figure(path, sigma, f, f1, f2, sigma_true):
    """Objective and its first two derivatives on three stacked axes."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(4.8, 5.4))
        for ax, vals, label in zip(axes, (f, f1, f2), ("f", "f'", "f''")):
            ax.plot(sigma, vals)
            ax.axhline(0.0, color="grey", linewidth=0.6)
            ax.axvline(sigma_true, color="black", linestyle="--", linewidth=0.8)
            ax.set_ylabel(label)
        axes[-1].set_xlabel("sigma")
        return _save(fig, path)


def curves_figure(path, sigma1, g, h, sigma_true, h_true):
    """Level curve ``g`` of ``lambda_1`` and ``h = lambda_2`` along it, the true point marked."""
    with plt.rc_context(STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(4.8, 4.4))
        top.plot(sigma1, g)
        top.plot([sigma_true[0]], [sigma_true[1]], "k*")
        top.set_ylabel("g(sigma_1)")
        bottom.plot(sigma1, h)
        bottom.axhline(h_true, color="black", linestyle="--", linewidth=0.8)
        bottom.set_ylabel("h(sigma_1)")
        bottom.set_xlabel("sigma_1")
        return _save(fig, path)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
