"""Figure rendering and gnuplot-script emission for run artifacts.

Every run directory gets both: PNG figures rendered with matplotlib next to
the delimited output, and self-contained gnuplot scripts referencing only
files inside the run directory, so the plots can be regenerated without
Python.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_csv(path: Path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def render_spectrum(run_dir: Path) -> list:
    """Estimated spectrum with the theoretical line overlay."""
    run_dir = Path(run_dir)
    header, data = _read_csv(run_dir / "spectrum.csv")
    mid = 0.5 * (data[:, 0] + data[:, 1])
    d_hat, d_theory = data[:, 2], data[:, 3]
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = np.isfinite(d_hat)
    ax.plot(mid[ok], d_hat[ok], "o-", ms=4, label="estimated")
    okt = np.isfinite(d_theory)
    ax.plot(mid[okt], d_theory[okt], "k--", label="theory")
    ax.set_xlabel(r"$\eta$")
    ax.set_ylabel(r"$D(\eta)$")
    ax.set_ylim(-0.05, 1.1)
    ax.legend(frameon=False)
    fig.tight_layout()
    out = run_dir / "spectrum.png"
    fig.savefig(out, dpi=150)
    plt.close(fig)

    script = run_dir / "spectrum.gp"
    script.write_text(
        "set terminal pngcairo size 900,600\n"
        "set output 'spectrum_gp.png'\n"
        "set datafile separator ','\n"
        "set xlabel 'eta'\nset ylabel 'D(eta)'\nset yrange [-0.05:1.1]\n"
        "plot 'spectrum.csv' using (($1+$2)/2):3 every ::1 with linespoints"
        " title 'estimated', \\\n"
        "     'spectrum.csv' using (($1+$2)/2):4 every ::1 with lines"
        " dashtype 2 lc 'black' title 'theory'\n")
    return [out, script]


def render_holder_field(run_dir: Path) -> list:
    """Estimated pointwise exponents along the interval."""
    run_dir = Path(run_dir)
    header, data = _read_csv(run_dir / "holder_field.csv")
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(data[:, 0], data[:, 1], lw=0.4)
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\hat\eta(x)$")
    fig.tight_layout()
    out = run_dir / "holder_field.png"
    fig.savefig(out, dpi=150)
    plt.close(fig)

    script = run_dir / "holder_field.gp"
    script.write_text(
        "set terminal pngcairo size 1100,420\n"
        "set output 'holder_field_gp.png'\n"
        "set datafile separator ','\n"
        "set xlabel 'x'\nset ylabel 'eta_hat'\n"
        "plot 'holder_field.csv' using 1:2 every ::1 with lines notitle\n")
    return [out, script]


def render_jump_scatter(run_dir: Path, beta: float, t: float) -> list:
    """Jumps in (t - s, r) log-log coordinates with a slope -(2+beta) guide.

    The guide slope matches the compensator size density r^(-2-beta); the
    scatter's lower envelope traces the running truncation level.
    """
    run_dir = Path(run_dir)
    _, data = _read_csv(run_dir / "jumps.csv")
    s, r = data[:, 0], data[:, 2]
    lag = np.maximum(t - s, 1e-15)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(lag, r, ".", ms=1, alpha=0.4)
    x0, r0 = float(np.median(lag)), float(np.percentile(r, 99))
    xg = np.array([lag.min(), lag.max()])
    ax.loglog(xg, r0 * (xg / x0) ** (-(2.0 + beta)), "r-",
              label=f"slope {-(2.0 + beta):.1f}")
    ax.set_xlabel("t - s")
    ax.set_ylabel("r")
    ax.legend(frameon=False, loc="upper right")
    fig.tight_layout()
    out = run_dir / "jumps.png"
    fig.savefig(out, dpi=150)
    plt.close(fig)

    script = run_dir / "jumps.gp"
    script.write_text(
        "set terminal pngcairo size 900,700\n"
        "set output 'jumps_gp.png'\n"
        "set datafile separator ','\n"
        "set logscale xy\nset xlabel 't - s'\nset ylabel 'r'\n"
        f"t = {t:.12g}\n"
        f"guide(x) = {r0:.6g} * (x/{x0:.6g})**({-(2.0 + beta):.4f})\n"
        "plot 'jumps.csv' using (t-$1):3 every ::1 with dots notitle, \\\n"
        f"     guide(x) title 'slope {-(2.0 + beta):.1f}'\n")
    return [out, script]


def render_density(run_dir: Path) -> list:
    """Terminal density and its three parts."""
    run_dir = Path(run_dir)
    header, data = _read_csv(run_dir / "density.csv")
    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    axes[0].plot(data[:, 0], data[:, 4], lw=0.5)
    axes[0].set_ylabel("density")
    for i, name in ((1, "z1"), (2, "z2"), (3, "z3")):
        axes[1].plot(data[:, 0], data[:, i], lw=0.5, label=name)
    axes[1].legend(frameon=False)
    axes[1].set_xlabel("x")
    fig.tight_layout()
    out = run_dir / "density.png"
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return [out]


def emit_plots(run_dir: Path) -> list:
    """Render every figure the run directory has data for.

    Model constants come from the run's manifest, so the directory is
    self-sufficient.
    """
    import json
    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.json"
    beta = t = None
    if manifest.exists():
        cfg = json.loads(manifest.read_text()).get("config", {})
        pr = cfg.get("params", {})
        beta, t = pr.get("beta"), pr.get("t")
    written = []
    if (run_dir / "spectrum.csv").exists():
        written += render_spectrum(run_dir)
    if (run_dir / "holder_field.csv").exists():
        written += render_holder_field(run_dir)
    if (run_dir / "jumps.csv").exists() and beta is not None and t is not None:
        written += render_jump_scatter(run_dir, beta, t)
    if (run_dir / "density.csv").exists():
        written += render_density(run_dir)
    return written
