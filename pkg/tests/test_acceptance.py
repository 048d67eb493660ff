"""Acceptance criteria, one test per criterion, tolerances pinned.

Heavy ensembles are session fixtures shared across criteria; every seed is
pinned, so the whole module is reproducible bit for bit.  Each test prints
one ACCEPTANCE line on success.
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from superfractal.census import CensusParams
from superfractal.kernels import (build_kernel, check_gradient_bounds,
                                  check_kernel_difference_bound,
                                  check_tail_envelope, get_kernel)
from superfractal.levy import empirical_laplace_check, tail_bound_grid_check
from superfractal.loglaplace import duality_check
from superfractal.mfa import (HolderConfig, box_dimension, gauge_covering_sum,
                              holder_field, pointwise_holder)
from superfractal.model import (ExperimentConfig, Grid1D, LebesgueMeasure,
                                ModelParams, RunConfig, SimOptions,
                                default_gamma, derive_exponents,
                                theoretical_spectrum)
from superfractal.runner import run_ensemble, stage_census, stage_spectrum

JOBS = 2
MU = LebesgueMeasure(0.0, 1.0, 1.0)
HEADLINE = ModelParams(alpha=1.6, beta=0.4, a=0.0, b=1.0, t=1.0, mu=MU)
ST = derive_exponents(HEADLINE)


def ok(criterion: int, message: str) -> None:
    print(f"ACCEPTANCE {criterion}: PASS - {message}")


# ---------------------------------------------------------------------------
# shared ensembles
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def spectrum_pool(tmp_path_factory):
    """60 replicas at grid 2^14; pooled spectrum and exponent floor."""
    params = HEADLINE
    st = derive_exponents(params)
    edges = [round(0.175 + 0.05 * k, 3) for k in range(15)]  # centers 0.2 .. 0.85
    cfg = ExperimentConfig(
        params=params,
        grid=Grid1D(0.0, 1.0, 2 ** 14),
        run=RunConfig(seed=51423, n_replicas=60, time_steps=64, r_min=2e-3,
                      gamma=default_gamma(st)),
        sim=SimOptions(r_scale=2.0 ** -9, steps_per_octave=8),
        analysis={"holder": {"j_lo": 5, "j_hi": 12},
                  "spectrum": {"bin_edges": edges,
                               "box_j_lo": 3, "box_j_hi": 10}},
    )
    out = tmp_path_factory.mktemp("spectrum_run")
    summary = stage_spectrum(cfg, out, jobs=JOBS)
    return summary


@pytest.fixture(scope="session")
def census_pool(tmp_path_factory):
    """100 replicas at grid 2^12; pooled jump-box and event tallies."""
    params = HEADLINE
    st = derive_exponents(params)
    cfg = ExperimentConfig(
        params=params,
        grid=Grid1D(0.0, 1.0, 2 ** 12),
        run=RunConfig(seed=77117, n_replicas=100, time_steps=48, r_min=2e-3,
                      gamma=default_gamma(st)),
        sim=SimOptions(r_scale=2.0 ** -9, steps_per_octave=8),
        analysis={"census": {"eta": 0.5, "n_lo": 4, "n_hi": 10}},
    )
    out = tmp_path_factory.mktemp("census_run")
    return stage_census(cfg, out, jobs=JOBS)


@pytest.fixture(scope="session")
def duality_fields():
    """2000 terminal densities for the headline duality configuration."""
    params = ModelParams(alpha=1.6, beta=0.4, a=0.0, b=1.0, t=0.3, mu=MU)
    st = derive_exponents(params)
    cfg = ExperimentConfig(
        params=params,
        grid=Grid1D(0.0, 1.0, 2 ** 10),
        run=RunConfig(seed=31415, n_replicas=2000, time_steps=48, r_min=1e-3,
                      gamma=default_gamma(st)),
        sim=SimOptions(r_scale=2.0 ** -9, steps_per_octave=6,
                       store_horizon=0.0, track_decomposition=False),
    )
    results = run_ensemble(cfg, "terminal", jobs=JOBS)
    fields = np.stack([r["terminal_field"] for r in results])
    return cfg, fields


@pytest.fixture(scope="session")
def moments_pool():
    """2000 replicas with the density decomposition, supercritical drift."""
    params = ModelParams(alpha=1.6, beta=0.4, a=0.4, b=1.0, t=0.3, mu=MU)
    st = derive_exponents(params)
    cfg = ExperimentConfig(
        params=params,
        grid=Grid1D(0.0, 1.0, 2 ** 9),
        run=RunConfig(seed=8891, n_replicas=2000, time_steps=32, r_min=2e-3,
                      gamma=default_gamma(st)),
        sim=SimOptions(r_scale=2.0 ** -8, steps_per_octave=4),
        analysis={"count_r0": 8e-3},
    )
    results = run_ensemble(cfg, "moments", jobs=JOBS)
    masses = np.array([r["terminal_mass"] for r in results])
    z2 = np.stack([r["z2"] for r in results])
    counts = np.array([r["count_above_r0"] for r in results], dtype=float)
    return cfg, masses, z2, counts


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_kernel_closed_forms():
    import time
    t0 = time.perf_counter()
    grid = Grid1D(-8.0, 8.0, 8192)
    xs = grid.points()

    tab2 = build_kernel(2.0, 1.0, grid)
    gauss = np.exp(-xs ** 2 / 4.0) / math.sqrt(4.0 * math.pi)
    err_g = float(np.abs(tab2.values - gauss).max())
    assert err_g <= 1e-6

    tab1 = build_kernel(1.0, 1.0, grid)
    cauchy = 1.0 / (math.pi * (1.0 + xs ** 2))
    err_c = float(np.abs(tab1.values - cauchy).max())
    assert err_c <= 1e-6

    for tab in (tab1, tab2):
        assert abs(tab.total_mass() - 1.0) <= 1e-6

    ker = get_kernel(1.6)
    z = np.linspace(-4.0, 4.0, 81)
    scale_err = 0.0
    for t in (0.03, 0.4, 2.5):
        lhs = ker.density(z * t ** (1 / 1.6), t)
        rhs = t ** (-1 / 1.6) * ker.density(z)
        scale_err = max(scale_err, float(np.abs(lhs / rhs - 1.0).max()))
    assert scale_err <= 1e-10

    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    ok(1, f"gauss {err_g:.1e}, cauchy {err_c:.1e}, scaling {scale_err:.1e}, "
          f"{elapsed:.1f}s")


def test_criterion_02_kernel_inequality_suite():
    import time
    t0 = time.perf_counter()
    n = 100_000
    reports = {
        "difference": check_kernel_difference_bound(1.6, 0.8, n, rng_seed=11),
        **check_gradient_bounds(1.6, 0.8, n, rng_seed=12),
        **check_gradient_bounds(1.6, 1.5, n, rng_seed=13),
        "tail": check_tail_envelope(1.6, n, rng_seed=14),
    }
    for name, rep in reports.items():
        assert math.isfinite(rep.fitted_constant), name
        assert rep.max_violation_ratio <= 1.1, \
            f"{name}: drift {rep.max_violation_ratio}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    cs = ", ".join(f"{k}={v.fitted_constant:.3f}" for k, v in reports.items())
    ok(2, f"fitted constants stable under doubling: {cs} ({elapsed:.0f}s)")


def test_criterion_03_levy_identities():
    import time
    t0 = time.perf_counter()
    msgs = []
    for kappa, seed in ((1.2, 211), (1.5, 212), (1.8, 213)):
        rep = empirical_laplace_check(kappa, [0.5, 1.0, 2.0], 1.0, 100_000,
                                      0.01, seed=seed)
        for e in rep.entries:
            assert e.passed, f"kappa={kappa} lam={e.lam}: {e.empirical} vs {e.target}"
            assert e.tight_passed, f"kappa={kappa} lam={e.lam} tight"
        cells = [(x, y, t) for x in (1.0, 2.0) for y in (0.25, 0.5)
                 for t in (0.5, 1.0)]
        n_paths = 20_000 if kappa == 1.8 else 40_000
        fitted, reports = tail_bound_grid_check(kappa, cells, n_paths,
                                                seed=seed * 7)
        nonvac = [r for r in reports if not r.vacuous]
        assert len(nonvac) >= 4
        assert all(r.consistent for r in reports)
        msgs.append(f"kappa={kappa}: laplace ok, tail C={fitted:.2f} "
                    f"({len(nonvac)} live cells)")
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    ok(3, "; ".join(msgs) + f" ({elapsed:.0f}s)")


def test_criterion_04_duality_oracle(duality_fields):
    cfg, fields = duality_fields
    xs = cfg.grid.points()
    bumps = {
        "gaussian": 2.0 * np.exp(-0.5 * ((xs - 0.35) / 0.08) ** 2),
        "sine4": 1.2 * np.sin(np.pi * xs) ** 4,
    }
    msgs = []
    for name, phi in bumps.items():
        rep = duality_check(cfg.params, phi, fields, cfg.grid, n_steps=400)
        assert rep.passed, (name, rep.mc_mean, rep.solver_value, rep.mc_std_error)
        msgs.append(f"{name}: mc {rep.mc_mean:.4f} vs solver {rep.solver_value:.4f} "
                    f"(se {rep.mc_std_error:.4f})")
    ok(4, "; ".join(msgs))


def test_criterion_05_moment_identities(moments_pool):
    cfg, masses, z2, counts = moments_pool
    n = masses.size
    target = math.exp(cfg.params.a * cfg.params.t)
    se = masses.std(ddof=1) / math.sqrt(n)
    assert abs(masses.mean() - target) <= 3.0 * se

    zmean = z2.mean(axis=0)
    zse = z2.std(axis=0, ddof=1) / math.sqrt(n)
    frac = float(np.mean(np.abs(zmean) <= 3.0 * zse))
    assert frac >= 0.99, f"z2 zero-mean fraction {frac}"

    r0 = float(cfg.analysis["count_r0"])
    a, t = cfg.params.a, cfg.params.t
    expected = ST.rho_coeff * (math.exp(a * t) - 1.0) / a \
        * r0 ** (-1.0 - cfg.params.beta) / (1.0 + cfg.params.beta)
    cse = counts.std(ddof=1) / math.sqrt(n)
    assert abs(counts.mean() - expected) <= 3.0 * cse
    ok(5, f"mass {masses.mean():.4f} vs {target:.4f} (se {se:.4f}); "
          f"z2 zero-mean at {100 * frac:.1f}% of points; "
          f"counts {counts.mean():.1f} vs {expected:.1f} (se {cse:.2f})")


def test_criterion_06_holder_floor(spectrum_pool):
    pct = spectrum_pool["eta_support_percentiles"]
    floor = spectrum_pool["holder_floor_target"]
    assert spectrum_pool["n_replicas"] >= 50
    assert pct["1"] >= floor
    ok(6, f"1st percentile of eta_hat on the support: {pct['1']:.3f} "
          f">= {floor:.3f} over {spectrum_pool['n_replicas']} replicas")


def test_criterion_07_spectrum_recovery(spectrum_pool):
    bins = spectrum_pool["bins"]
    d_hat = np.asarray(spectrum_pool["d_hat"], dtype=float)
    centers = np.array([0.5 * (lo + hi) for lo, hi in bins])

    # exact arithmetic at the middle point
    assert theoretical_spectrum(ST, 0.5) == pytest.approx(0.5, abs=1e-12)

    msgs = []
    for eta, target in ((0.3, 0.22), (0.5, 0.50), (0.7, 0.78)):
        i = int(np.argmin(np.abs(centers - eta)))
        assert abs(centers[i] - eta) < 1e-9
        assert theoretical_spectrum(ST, eta) == pytest.approx(target, abs=1e-9)
        assert abs(d_hat[i] - target) <= 0.15, (eta, d_hat[i], target)
        msgs.append(f"D({eta})={d_hat[i]:.3f} (theory {target})")

    inside = (centers >= ST.eta_c + 0.05) & (centers <= ST.eta_bar_c) \
        & np.isfinite(d_hat)
    seq = d_hat[inside]
    assert np.all(np.diff(seq) >= -1e-9), f"not monotone: {np.round(seq, 3)}"
    ok(7, "; ".join(msgs) + f"; monotone over {seq.size} bins")


def test_criterion_08_census_bounds(census_pool):
    rows = [r for r in census_pool["jump_boxes"] if r["sampled_runs"] >= 30]
    assert len(rows) >= 20
    bad = [r for r in rows if not r["within_bound"]]
    assert not bad, f"boxes violating the Poisson bound: {bad[:3]}"

    freq = np.asarray(census_pool["o_frequency"], dtype=float)
    ns = np.asarray(census_pool["event_levels"])
    assert freq.sum() > 0, "no O events observed at all"
    half = len(ns) // 2
    lo_mean, hi_mean = freq[:half].mean(), freq[half:].mean()
    n_rep = census_pool["n_replicas"]
    se = math.sqrt((lo_mean * (1 - lo_mean) + hi_mean * (1 - hi_mean))
                   / (half * n_rep) + 1e-12)
    assert hi_mean <= lo_mean + 3.0 * se, (lo_mean, hi_mean)
    ok(8, f"{len(rows)} boxes within the Poisson bound; O frequency "
          f"{np.round(freq, 3).tolist()} decreasing in n")


def test_criterion_09_estimator_calibration():
    grid = Grid1D(0.0, 1.0, 2 ** 14)
    x = grid.points()
    errs = {}
    for h in (0.2, 0.4, 0.6, 0.8, 1.2, 1.4, 1.6):
        trend = 2.0 if h > 1 else 0.0
        f = trend * (x - 0.5) + np.abs(x - 0.5) ** h
        eta, _, _ = pointwise_holder(f, grid, int(0.5 / grid.dx),
                                     (2.0 ** -12, 2.0 ** -5), 0,
                                     boundary="nearest")
        errs[h] = abs(eta - h)
        assert errs[h] <= 0.05, (h, eta)

    segs = [(0.0, 1.0)]
    for _ in range(7):
        segs = [s for a, b in segs
                for s in ((a, a + (b - a) / 3.0), (b - (b - a) / 3.0, b))]
    n = grid.n_points
    pts = np.unique(np.concatenate(
        [np.arange(int(a * n), max(int(a * n) + 1, int(b * n))) for a, b in segs]))
    ladder = [2.0 ** -k for k in range(2, 11)]
    d_cantor = box_dimension(pts, grid, ladder)
    target = math.log(2.0) / math.log(3.0)
    assert abs(d_cantor - target) <= 0.05

    eta_gauge = ST.eta_c + target / ST.slope
    rep = gauge_covering_sum(pts, grid, eta_gauge, ST, ladder)
    flat = rep.gauge_sums / np.log(1.0 / rep.cover_scale_ladder) ** 2
    corridor = float(flat.max() / flat.min())
    assert corridor < 4.0
    ok(9, f"cusp battery max err {max(errs.values()):.3f}; "
          f"cantor dim {d_cantor:.3f} (target {target:.3f}); "
          f"gauge corridor ratio {corridor:.2f}")


def test_criterion_10_determinism(tmp_path):
    import hashlib
    from superfractal.cli import main

    config = {
        "params": {"alpha": 1.6, "beta": 0.4, "a": 0.0, "b": 1.0, "t": 0.25,
                   "mu": {"kind": "lebesgue", "x_lo": 0.0, "x_hi": 1.0,
                          "density": 1.0}},
        "grid": {"x_min": 0.0, "x_max": 1.0, "n_points": 512},
        "run": {"seed": 4242, "n_replicas": 3, "time_steps": 24,
                "r_min": 0.002, "gamma": None},
        "sim": {"r_scale": 0.00390625, "steps_per_octave": 5},
        "analysis": {"census": {"eta": 0.5, "n_lo": 4, "n_hi": 7},
                     "holder": {"j_lo": 3, "j_hi": 7},
                     "spectrum": {"box_j_lo": 2, "box_j_hi": 6}},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))

    def run_and_hash(out):
        for stage in ("simulate", "spectrum", "census"):
            assert main([stage, "--config", str(cfg_path), "--out", str(out)]) == 0
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(Path(out).iterdir())
                if p.is_file() and p.name != "manifest.json"}

    h1 = run_and_hash(tmp_path / "a")
    h2 = run_and_hash(tmp_path / "b")
    assert h1 == h2
    ok(10, f"{len(h1)} artifacts byte-identical across repeated runs")
