"""Jump-SPDE Euler simulation of the superprocess and its density parts.

One time step does: exact fractional heat flow (Fourier multiplier), exact
linear drift factor, then a compensated big-jump stage.  Jumps above the
running truncation level are drawn cell by cell from a Poisson random measure
with intensity rho dt X(dx) r^(-2-beta) dr and recorded; the subtracted
compensator mean makes the stage exactly mean-zero at every step, so moment
identities hold for any step size.  Jumps below the truncation level are
dropped; their compensated integral has mean zero and the variance loss is
controlled by the truncation scale (see README).

The truncation level tightens toward the horizon, r_eff(s) =
min(r_min, r_scale (t-s)^(1/(1+beta))), because the late small scales are
where the multifractal structure lives; the time grid is geometric in (t-s)
for the same reason.

Three spectral accumulators ride along and are propagated by the same
multipliers as the state, which makes the terminal decomposition
x_t = z1 + z2 + z3 exact up to the drift-quadrature error (identically zero
for a = 0).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import apply_semigroup
from .model import (DomainError, Grid1D, InvalidParamsError, ModelParams,
                    NumericsError, RunConfig, SimOptions, SpectrumTheory,
                    derive_exponents)

_R_EFF_FLOOR = 2.0 ** -60
_MAX_STEP_COMP = 0.9  # dt * kappa above this makes the linear compensator invalid


def effective_truncation(lag: float, r_min: float, r_scale: float, beta: float) -> float:
    """Jump-size truncation in force when the remaining time is lag."""
    return max(min(r_min, r_scale * lag ** (1.0 / (1.0 + beta))), _R_EFF_FLOOR)


@dataclass(frozen=True)
class JumpRecord:
    """Recorded atoms (s, y, r) of the jump measure, plus bookkeeping."""

    s: np.ndarray
    y: np.ndarray
    r: np.ndarray
    step_index: np.ndarray
    cell: np.ndarray
    t: float
    r_min: float
    r_scale: float
    beta: float

    def __len__(self) -> int:
        return self.s.size

    def truncation_at(self, s) -> np.ndarray:
        lag = np.maximum(self.t - np.asarray(s, dtype=float), _R_EFF_FLOOR)
        return np.maximum(
            np.minimum(self.r_min, self.r_scale * lag ** (1.0 / (1.0 + self.beta))),
            _R_EFF_FLOOR)


@dataclass
class MeasurePath:
    """Stored trajectory: snapshots near the horizon, coarse samples before.

    Snapshots hold post-jump states; weights are the time each snapshot
    represents in quadratures over [0, t].  The spectral accumulators needed
    to reassemble the density decomposition are carried as terminal fields.
    """

    grid: Grid1D
    t: float
    min_lag: float
    time_grid: np.ndarray
    fields: np.ndarray
    weights: np.ndarray
    step_times: np.ndarray
    total_mass_series: np.ndarray
    initial_field: np.ndarray
    terminal_field: np.ndarray
    z3_field: np.ndarray
    compensator_mean_field: np.ndarray

    def snapshot_count(self) -> int:
        return len(self.time_grid)


def build_schedule(params: ModelParams, rc: RunConfig, sim: SimOptions,
                   grid: Grid1D, st: SpectrumTheory) -> np.ndarray:
    """Step end-times: uniform over [0, t/2], then geometric in t - s.

    Steps are additionally capped so that dt * kappa(s) stays below 0.9,
    where kappa is the compensator mass rate at the local truncation level.
    """
    t = params.t
    min_lag = sim.resolved_min_lag(grid, params.alpha, t)
    ratio = 2.0 ** (1.0 / sim.steps_per_octave) - 1.0
    d_uniform = (t / 2.0) / rc.time_steps
    rho = st.rho_coeff

    def kappa_at(lag):
        r_eff = effective_truncation(lag, rc.r_min, sim.r_scale, params.beta)
        return rho * r_eff ** (-params.beta) / params.beta

    times = [0.0]
    s = 0.0
    guard = 0
    while t - s > min_lag * (1.0 + 1e-9):
        lag = t - s
        dt = min(d_uniform, ratio * lag)
        if rho > 0.0:
            dt = min(dt, _MAX_STEP_COMP / kappa_at(lag * 0.5))
        if lag - dt < min_lag:
            dt = lag - min_lag
        s += dt
        times.append(s)
        guard += 1
        if guard > 2_000_000:
            raise NumericsError("time schedule failed to terminate")
    return np.asarray(times)


def simulate_measure_path(params: ModelParams, grid: Grid1D, rc: RunConfig,
                          sim: SimOptions = SimOptions(),
                          seed: int | np.random.Generator | None = None,
                          ) -> tuple[MeasurePath, JumpRecord]:
    """Run one replica; returns the stored path and every recorded jump."""
    if sim.backend != "jump_spde":
        raise NotImplementedError(f"backend {sim.backend!r} is not shipped")
    st = derive_exponents(params)  # raises on invalid params
    rng = seed if isinstance(seed, np.random.Generator) else \
        np.random.default_rng(rc.seed if seed is None else seed)

    t = params.t
    beta = params.beta
    kappa_idx = 1.0 + beta
    rho = st.rho_coeff
    n = grid.n_points
    dx = grid.dx
    xia = grid.xi() ** params.alpha
    min_lag = sim.resolved_min_lag(grid, params.alpha, t)
    store_horizon = sim.store_horizon if sim.store_horizon is not None else 0.3 * t
    snap_dtype = np.dtype(sim.snapshot_dtype)

    schedule = build_schedule(params, rc, sim, grid, st)
    x0 = params.mu.render(grid)
    mass0 = x0.sum() * dx
    mass_limit = sim.mass_limit_factor * max(mass0, 1e-12) * math.exp(max(params.a, 0.0) * t)

    X = x0.copy()
    track = sim.track_decomposition
    g_drift = np.zeros(n // 2 + 1, dtype=complex) if track else None
    g_comp = np.zeros(n // 2 + 1, dtype=complex) if track else None

    snap_times, snap_fields, snap_weights = [0.0], [X.astype(snap_dtype)], [0.0]
    covered = 0.0
    masses = []
    js, jy, jr, jstep, jcell = [], [], [], [], []

    mult_cache: dict[float, np.ndarray] = {}
    for k in range(len(schedule) - 1):
        s1 = schedule[k + 1]
        dt = s1 - schedule[k]
        lag1 = t - s1
        key = round(math.log(dt), 12)
        mult = mult_cache.get(key)
        if mult is None:
            mult = np.exp(-dt * xia)
            if len(mult_cache) < 64:  # uniform-phase steps hit, geometric ones mostly miss
                mult_cache[key] = mult

        xhat = np.fft.rfft(X) * mult
        drift_factor = math.exp(params.a * dt)
        if track:
            c_drift = (drift_factor - 1.0) / params.a if params.a != 0.0 else 0.0
            g_drift *= mult
            g_drift += c_drift * xhat
        X = np.fft.irfft(xhat, n)
        np.maximum(X, 0.0, out=X)
        X *= drift_factor

        if params.b > 0.0:
            r_eff = effective_truncation(lag1, rc.r_min, sim.r_scale, beta)
            comp_rate = rho * r_eff ** (-beta) / beta
            if dt * comp_rate > _MAX_STEP_COMP * 1.12:
                raise NumericsError(f"compensator step too large at s={s1:.6g}")
            lam = (rho * dt * r_eff ** (-kappa_idx) / kappa_idx) * dx * X
            counts = rng.poisson(np.maximum(lam, 0.0))
            if track:
                g_comp *= mult
                g_comp += (dt * comp_rate * drift_factor) * xhat
            deposit = None
            total = int(counts.sum())
            if total:
                cells = np.repeat(np.arange(n), counts)
                sizes = r_eff * rng.uniform(size=total) ** (-1.0 / kappa_idx)
                ys = grid.x_min + (cells + rng.uniform(size=total)) * dx
                deposit = np.zeros(n)
                np.add.at(deposit, cells, sizes / dx)
                js.append(np.full(total, s1))
                jy.append(ys)
                jr.append(sizes)
                jstep.append(np.full(total, k, dtype=np.int64))
                jcell.append(cells.astype(np.int64))
            X *= (1.0 - dt * comp_rate)
            if deposit is not None:
                X += deposit

        mass = X.sum() * dx
        masses.append(mass)
        if not math.isfinite(mass) or mass > mass_limit:
            raise NumericsError(f"total mass blew up at s={s1:.6g} (mass={mass:.3g})")

        covered += dt
        if lag1 <= store_horizon or (k % sim.early_stride) == 0 or k == len(schedule) - 2:
            snap_times.append(s1)
            snap_fields.append(X.astype(snap_dtype))
            snap_weights.append(covered)
            covered = 0.0

    # final hop across the unresolved sliver: heat flow and drift only
    final_mult = np.exp(-min_lag * xia)
    X = np.fft.irfft(np.fft.rfft(X) * final_mult, n) * math.exp(params.a * min_lag)
    np.maximum(X, 0.0, out=X)
    if track:
        g_drift *= final_mult
        g_comp *= final_mult
    snap_times.append(t)
    snap_fields.append(X.astype(snap_dtype))
    snap_weights.append(min_lag)
    masses.append(X.sum() * dx)

    path = MeasurePath(
        grid=grid, t=t, min_lag=min_lag,
        time_grid=np.asarray(snap_times),
        fields=np.stack(snap_fields),
        weights=np.asarray(snap_weights),
        step_times=schedule[1:],
        total_mass_series=np.asarray(masses),
        initial_field=x0,
        terminal_field=X,
        z3_field=(params.a * np.fft.irfft(g_drift, n)) if track else np.zeros(n),
        compensator_mean_field=np.fft.irfft(g_comp, n) if track else np.zeros(n),
    )
    cat = (lambda parts, dt_: np.concatenate(parts) if parts else np.empty(0, dtype=dt_))
    jumps = JumpRecord(
        s=cat(js, float), y=cat(jy, float), r=cat(jr, float),
        step_index=cat(jstep, np.int64), cell=cat(jcell, np.int64),
        t=t, r_min=rc.r_min, r_scale=sim.r_scale, beta=beta,
    )
    return path, jumps


# ---------------------------------------------------------------------------
# density decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityDecomposition:
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    x_t: np.ndarray
    negative_mass_fraction: float
    z2_prime: np.ndarray | None = None


def _replay_jump_spectrum(params: ModelParams, grid: Grid1D, path: MeasurePath,
                          jumps: JumpRecord) -> np.ndarray:
    """Fourier sum of r * p_(t-s)(y - x) over recorded jumps, lag-exact."""
    n = grid.n_points
    xia = grid.xi() ** params.alpha
    acc = np.zeros(n // 2 + 1, dtype=complex)
    if len(jumps) == 0:
        return acc
    order = np.argsort(jumps.step_index, kind="stable")
    steps = jumps.step_index[order]
    cells = jumps.cell[order]
    sizes = jumps.r[order]
    boundaries = np.flatnonzero(np.diff(steps)) + 1
    for lo, hi in zip(np.concatenate(([0], boundaries)),
                      np.concatenate((boundaries, [len(steps)]))):
        k = steps[lo]
        lag = params.t - path.step_times[k]
        if lag < 0.5 * path.min_lag:
            raise NumericsError("jump lag below resolution")
        deposit = np.zeros(n)
        np.add.at(deposit, cells[lo:hi], sizes[lo:hi] / grid.dx)
        acc += np.fft.rfft(deposit) * np.exp(-lag * xia)
    return acc


def density_from_representation(params: ModelParams, grid: Grid1D,
                                path: MeasurePath, jumps: JumpRecord,
                                with_derivative: bool = False) -> DensityDecomposition:
    """Reassemble x_t = z1 + z2 + z3 from the initial flow, the replayed jump
    sum minus the accumulated compensator mean, and the drift integral."""
    n = grid.n_points
    z1 = apply_semigroup(path.initial_field, params.alpha, params.t, grid)
    jump_hat = _replay_jump_spectrum(params, grid, path, jumps)
    z2 = np.fft.irfft(jump_hat, n) - path.compensator_mean_field
    z3 = path.z3_field
    x_t = z1 + z2 + z3
    total = x_t.sum() * grid.dx
    neg = -x_t[x_t < 0].sum() * grid.dx
    frac = float(neg / total) if total > 0 else 0.0
    z2p = None
    if with_derivative:
        z2p = compute_z2_derivative(params, grid, path, jumps)
    return DensityDecomposition(z1, z2, z3, x_t, frac, z2p)


def compute_z2_derivative(params: ModelParams, grid: Grid1D,
                          path: MeasurePath, jumps: JumpRecord) -> np.ndarray:
    """Spatial derivative of the jump-martingale part by spectral differentiation.

    Only defined in the regime beta < (alpha - 1) / 2.
    """
    if not (params.beta < (params.alpha - 1.0) / 2.0):
        raise DomainError("z2 derivative requires beta < (alpha - 1)/2")
    n = grid.n_points
    xi = grid.xi()
    jump_hat = _replay_jump_spectrum(params, grid, path, jumps)
    mean_hat = np.fft.rfft(path.compensator_mean_field)
    return np.fft.irfft(1j * xi * (jump_hat - mean_hat), n)


# ---------------------------------------------------------------------------
# diagnostics of the good event
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsReport:
    V_hat: float
    max_jump_ratio: float
    holder_ratio: float
    a_eps_pass: tuple

    def as_dict(self) -> dict:
        return {"V_hat": self.V_hat, "max_jump_ratio": self.max_jump_ratio,
                "holder_ratio": self.holder_ratio,
                "a_eps_pass": list(self.a_eps_pass)}


def diagnostics_good_event(path: MeasurePath, jumps: JumpRecord,
                           params: ModelParams, gamma: float, epsilon: float,
                           thresholds: tuple = (math.inf, math.inf, math.inf),
                           ) -> DiagnosticsReport:
    """Empirical versions of the three good-event statistics.

    max jump ratio   : max r / (t-s)^(1/(1+beta) - gamma) over recorded jumps
    V_hat            : sup over stored steps and x of the density smoothed at
                       lag 2^alpha (t-s)
    holder ratio     : sup over dyadic lags of |X_t(x1)-X_t(x2)| / |x1-x2|^(eta_c-eps)
    """
    st = derive_exponents(params)
    expo = 1.0 / (1.0 + params.beta) - gamma
    if len(jumps):
        ratios = jumps.r / np.maximum(params.t - jumps.s, path.min_lag) ** expo
        max_jump_ratio = float(ratios.max())
    else:
        max_jump_ratio = 0.0

    v_hat = 0.0
    for s, f in zip(path.time_grid, path.fields):
        lag = 2.0 ** params.alpha * max(params.t - s, 0.0)
        sm = apply_semigroup(np.asarray(f, dtype=float), params.alpha, lag, path.grid)
        v_hat = max(v_hat, float(sm.max()))

    f = path.terminal_field
    hexp = st.eta_c - epsilon
    ratio = 0.0
    lag_cells = 1
    while lag_cells <= path.grid.n_points // 2:
        diff = np.abs(np.roll(f, -lag_cells) - f).max()
        ratio = max(ratio, diff / (lag_cells * path.grid.dx) ** hexp)
        lag_cells *= 2
    flags = (max_jump_ratio <= thresholds[0], v_hat <= thresholds[1],
             ratio <= thresholds[2])
    return DiagnosticsReport(v_hat, max_jump_ratio, float(ratio), flags)


# ---------------------------------------------------------------------------
# increment time changes
# ---------------------------------------------------------------------------

def kernel_pair_difference(ker, u: np.ndarray, v: np.ndarray, lag: float,
                           eta: float) -> np.ndarray:
    """Difference kernel driving increments: p(u) - p(v), with the gradient
    correction - (u - v) p'(v) subtracted when eta exceeds 1."""
    out = ker.density(u, lag) - ker.density(v, lag)
    if eta > 1.0:
        out -= (u - v) * ker.gradient(v, lag)
    return out


def increment_time_change(params: ModelParams, path: MeasurePath,
                          x1: float, x2: float, eta: float) -> tuple:
    """Quadrature of T_+ and T_- at the horizon from the stored path.

    T_pm = int_0^t du int X_u(dy) ((ptilde_(t-u)(x1-y, x2-y))^pm)^(1+beta)
    """
    from .kernels import get_kernel
    st = derive_exponents(params)
    if not (st.eta_c < eta < st.eta_bar_c):
        raise DomainError(f"eta={eta} outside ({st.eta_c}, {st.eta_bar_c})")
    if x1 == x2:
        return 0.0, 0.0
    ker = get_kernel(params.alpha)
    ys = path.grid.points() + 0.5 * path.grid.dx
    power = 1.0 + params.beta
    t_plus = t_minus = 0.0
    for s, f, w in zip(path.time_grid, path.fields, path.weights):
        if w == 0.0:
            continue
        lag = max(params.t - s, path.min_lag)
        diff = kernel_pair_difference(ker, x1 - ys, x2 - ys, lag, eta)
        masses = np.asarray(f, dtype=float) * path.grid.dx
        pos = np.where(diff > 0.0, diff, 0.0) ** power
        neg = np.where(diff < 0.0, -diff, 0.0) ** power
        t_plus += w * float(np.dot(masses, pos))
        t_minus += w * float(np.dot(masses, neg))
    return t_plus, t_minus
