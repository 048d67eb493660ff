"""Dyadic jump census and late-time event tallies.

The jump census bins every recorded jump into boxes
D(j, n) = [t - 2^-j, t - 2^-j-1) x [2^-n-1, 2^-n), compares observed counts
with the intensity bound lambda(n, j) implied by the compensator and the
run's peak mass, and assigns each qualifying jump its covering ball.  Boxes
whose size range dips below the sampling truncation are flagged rather than
silently reported as empty.

The event census tallies, per dyadic level n, the families of late-time
events used by the lower-bound machinery: cells whose mass spikes (O),
occupied cells whose mass collapses (B), late big jumps displaced by the
q-offset (A), and cells seeing two big jumps in the same late window (G,
with the squared observed-intensity envelope).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DomainError, InvalidParamsError, ModelParams, SpectrumTheory
from .simulate import JumpRecord, MeasurePath


# ---------------------------------------------------------------------------
# jump census
# ---------------------------------------------------------------------------

def lambda_bound(n: int, j: int, n_bound: float, st: SpectrumTheory) -> float:
    """Intensity bound for jumps in D(j, n) when the total mass stays <= n_bound."""
    kappa = 1.0 + st.beta
    return n_bound * st.rho_coeff * (2.0 ** kappa - 1.0) / (2.0 * kappa) \
        * 2.0 ** (n * kappa - j)


def ball_radius(j: int, n: int, gamma: float, eta: float, st: SpectrumTheory) -> float:
    """Radius of the ball covering the singularity a D(j, n) jump can force."""
    if not (eta > st.eta_c):
        raise DomainError("eta must exceed eta_c")
    expo = 1.0 / (1.0 + st.beta) - gamma
    return (2.0 ** (-n) / 2.0 ** (-(j + 1) * expo)) ** (1.0 / (eta - st.eta_c))


def n_window(j: int, gamma: float, beta: float) -> tuple:
    """Size-octave range [n0, n1] that late jumps of time-octave j occupy."""
    base = 1.0 / (1.0 + beta)
    return (int(math.floor(j * (base - gamma / 4.0))),
            int(math.ceil(j * (base + gamma / 4.0))))


@dataclass(frozen=True)
class JumpCensus:
    gamma: float
    eta: float
    n_bound: float
    j_values: np.ndarray
    n_values: np.ndarray            # parallel to j_values: one row per (j, n) box
    counts: np.ndarray
    lambdas: np.ndarray
    over_threshold: np.ndarray      # count > 2 lambda
    fully_sampled: np.ndarray       # box size range above the truncation level
    big_lambda: dict                # j -> sum of lambda over [n0, n1]
    covering_balls: tuple           # (center, radius) per jump in the n >= n0 band

    def box(self, j: int, n: int) -> tuple:
        sel = (self.j_values == j) & (self.n_values == n)
        idx = np.nonzero(sel)[0]
        if idx.size == 0:
            return 0, None
        i = idx[0]
        return int(self.counts[i]), float(self.lambdas[i])


def jump_census(jumps: JumpRecord, st: SpectrumTheory, gamma: float, eta: float,
                t: float, n_bound: float, j_max: int | None = None) -> JumpCensus:
    """Bin jumps into D(j, n) boxes and compare with the compensator bound."""
    if len(jumps) == 0:
        empty = np.empty(0, dtype=int)
        return JumpCensus(gamma, eta, n_bound, empty, empty,
                          empty, np.empty(0), np.empty(0, bool), np.empty(0, bool),
                          {}, ())
    lag = np.maximum(t - jumps.s, 1e-300)
    jj = np.floor(-np.log2(lag)).astype(int)
    nn = np.floor(-np.log2(np.maximum(jumps.r, 1e-300))).astype(int)
    if j_max is None:
        j_max = int(jj.max())
    keep = (jj >= 0) & (jj <= j_max) & (nn >= 0)
    jj, nn = jj[keep], nn[keep]
    ys = jumps.y[keep]

    pairs, counts = np.unique(np.stack([jj, nn]), axis=1, return_counts=True)
    j_arr, n_arr = pairs[0], pairs[1]
    lams = np.array([lambda_bound(n, j, n_bound, st) for j, n in zip(j_arr, n_arr)])
    over = counts > 2.0 * lams
    # a box is fully sampled when even its smallest sizes exceed the
    # truncation in force at the window's earliest (largest-lag) time
    trunc = jumps.truncation_at(t - 2.0 ** (-j_arr.astype(float)))
    full = 2.0 ** (-n_arr - 1.0) >= trunc

    big = {}
    for j in range(int(j_arr.min()), int(j_arr.max()) + 1):
        n0, n1 = n_window(j, gamma, st.beta)
        big[j] = float(sum(lambda_bound(n, j, n_bound, st) for n in range(n0, n1 + 1)))

    balls = []
    for j, n, y in zip(jj, nn, ys):
        n0, _ = n_window(int(j), gamma, st.beta)
        if n >= n0:
            balls.append((float(y), ball_radius(int(j), int(n), gamma, eta, st)))
    return JumpCensus(gamma, eta, n_bound, j_arr, n_arr, counts, lams, over, full,
                      big, tuple(balls))


def covering_sum_series(st: SpectrumTheory, gamma: float, eta: float, theta: float,
                        j_max: int, n_tail: int = 400) -> np.ndarray:
    """Partial sums of the census covering series, pure arithmetic.

    S(J) = sum_{j<=J} (2 Lambda_j r_j^theta
                       + sum_{n=n1(j)}^{n1(j)+n_tail} 2 lambda(j,n) R(j,n)^theta)
    The series stays bounded for theta above slope*(eta - eta_c) and grows
    without bound below it; callers check the trend of S(J).
    """
    sums = np.empty(j_max)
    total = 0.0
    for j in range(1, j_max + 1):
        n0, n1 = n_window(j, gamma, st.beta)
        lam_band = sum(lambda_bound(n, j, 1.0, st) for n in range(n0, n1 + 1))
        r_j = ball_radius(j, n0, gamma, eta, st)
        inner = 0.0
        for n in range(n1, n1 + n_tail + 1):
            inner += 2.0 * lambda_bound(n, j, 1.0, st) \
                * ball_radius(j, n, gamma, eta, st) ** theta
        total += 2.0 * lam_band * r_j ** theta + inner
        sums[j - 1] = total
    return sums


# ---------------------------------------------------------------------------
# event census
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CensusParams:
    """Free parameters of the late-time event families.

    q defaults to (alpha + 3) m / ((beta + 1)(eta - eta_c)), which makes the
    A-family offset astronomically larger than the cell count at any
    reachable n; it is overridable for exploratory tallies at desk scale.
    """

    eta: float
    gamma: float
    m: float = 2.0
    theta: float | None = None     # occupied-cell threshold; None -> 0.1 * mean density
    q: float | None = None
    rho: float | None = None
    nu: float | None = None
    c: float | None = None
    Q: int = 2
    R: int = 3
    n_lo: int = 4
    n_hi: int = 12

    def resolved(self, st: SpectrumTheory) -> "CensusParams":
        out = self
        if out.q is None:
            out = replace(out, q=(st.alpha + 3.0) * out.m
                          / (st.slope * (out.eta - st.eta_c)))
        if out.rho is None:
            out = replace(out, rho=0.5e-2 * out.gamma)
        if out.nu is None:
            lo = (st.alpha * out.gamma + 5.0 * out.rho) / st.eta_c
            out = replace(out, nu=min(0.099, max(2.0 * lo, 0.05)))
        if out.c is None:
            out = replace(out, c=1.2 * 10.0 / (2.0 - out.eta))
        out.validate(st)
        return out

    def validate(self, st: SpectrumTheory) -> None:
        if self.m <= 3.0 / st.alpha:
            raise InvalidParamsError(f"m={self.m} must exceed 3/alpha={3.0 / st.alpha}")
        if not (0.0 < self.rho < 1e-2 * self.gamma):
            raise InvalidParamsError(f"rho={self.rho} outside (0, {1e-2 * self.gamma:g})")
        lo = (st.alpha * self.gamma + 5.0 * self.rho) / st.eta_c
        if not (lo < self.nu < 0.1):
            raise InvalidParamsError(f"nu={self.nu} outside ({lo:g}, 0.1)")
        c_lo, c_hi = 10.0 / (2.0 - self.eta), 1.0 / (10.0 * self.rho)
        if not (c_lo < self.c < c_hi):
            raise InvalidParamsError(f"c={self.c} outside ({c_lo:g}, {c_hi:g})")
        if not (st.eta_c < self.eta < st.eta_bar_c):
            raise InvalidParamsError("eta outside the spectrum range")


@dataclass(frozen=True)
class EventCensus:
    params: CensusParams
    n_values: np.ndarray
    o_indicator: np.ndarray        # O event fired at level n
    o_window_covered: np.ndarray   # snapshots fully cover the O window
    b_indicator: np.ndarray
    a_cell_count: np.ndarray       # cells k with the A event
    g_cell_count: np.ndarray       # cells k with >= 2 qualifying jumps
    g_single_count: np.ndarray     # cells k with >= 1 qualifying jump
    g_prob_bound: np.ndarray       # mean over cells of the squared-intensity bound
    theta_used: float


def _cell_masses(path: MeasurePath, sel: np.ndarray, level: int) -> np.ndarray:
    """Masses X_s(I_k) at dyadic level n for the selected snapshots."""
    n_cells = 2 ** level
    group = path.grid.n_points // n_cells
    if group == 0:
        raise DomainError(f"grid too coarse for level {level}")
    f = path.fields[sel].astype(float)
    return f.reshape(f.shape[0], n_cells, group).sum(axis=2) * path.grid.dx


def event_census(path: MeasurePath, jumps: JumpRecord, field: np.ndarray,
                 params: ModelParams, census: CensusParams) -> EventCensus:
    """Tally the O, B, A and G event families for n in [n_lo, n_hi].

    Requires the unit domain (0, 1); levels beyond the grid or the snapshot
    resolution are truncated with a warning.
    """
    from .model import derive_exponents

    grid = path.grid
    if abs(grid.x_min) > 1e-12 or abs(grid.x_max - 1.0) > 1e-12:
        raise DomainError("event census is defined on the unit domain (0, 1)")
    st = derive_exponents(params)
    cp = census.resolved(st)
    t = params.t
    alpha = params.alpha
    m = cp.m

    g_max = int(math.log2(grid.n_points))
    n_hi = min(cp.n_hi, g_max)
    if n_hi < cp.n_hi:
        import warnings
        warnings.warn(f"event census truncated to n <= {n_hi} by grid resolution")
    ns = np.arange(cp.n_lo, n_hi + 1)

    theta = cp.theta if cp.theta is not None else 0.1 * float(np.mean(field))

    o_ind = np.zeros(ns.size, dtype=bool)
    o_cov = np.zeros(ns.size, dtype=bool)
    b_ind = np.zeros(ns.size, dtype=bool)
    a_cnt = np.zeros(ns.size, dtype=int)
    g_cnt = np.zeros(ns.size, dtype=int)
    g_single = np.zeros(ns.size, dtype=int)
    g_bound = np.zeros(ns.size)

    snap_t = path.time_grid
    for i, n in enumerate(ns):
        n = int(n)
        cells = 2 ** n

        # O: some cell's mass spikes above 2^-n n^(2 m alpha / 3)
        w_lo = t - 2.0 ** (-alpha * n) * n ** (alpha * alpha * m / 3.0)
        sel = snap_t > w_lo
        # covered when snapshots bracket the window start
        o_cov[i] = w_lo <= 0.0 or bool((snap_t <= w_lo).any() and sel.any())
        if sel.any():
            masses = _cell_masses(path, sel, n)
            o_ind[i] = bool((masses.max(axis=0) >= 2.0 ** (-n) * n ** (2.0 * m * alpha / 3.0)).any())

        # B: an occupied cell's mass collapses below 2^-n n^(-2m)
        w_lo_b = t - 2.0 ** (-alpha * n) * n ** (-alpha * m)
        sel_b = snap_t > w_lo_b
        if sel_b.any():
            masses = _cell_masses(path, sel_b, n)
            group = grid.n_points // cells
            occupied = (field.reshape(cells, group) >= theta).any(axis=1)
            low = masses.min(axis=0) <= 2.0 ** (-n) * n ** (-2.0 * m)
            b_ind[i] = bool((occupied & low).any())

        # A: displaced big late jumps
        s_lo = t - 2.0 ** (-alpha * n) * n ** (-alpha * m)
        s_hi = t - 2.0 ** (-alpha * (n + 1)) * (n + 1) ** (-alpha * m)
        r_thr = 2.0 ** (-(cp.eta + 1.0) * n)
        selj = (jumps.s >= s_lo) & (jumps.s < s_hi) & (jumps.r >= r_thr)
        if selj.any():
            offset = int(math.ceil(2.0 * n ** cp.q)) + 2
            base = np.floor(jumps.y[selj] * cells).astype(int)
            ks = base + offset
            a_cnt[i] = int(np.unique(ks[(ks >= 0) & (ks < cells)]).size)

        # G: two big jumps near one cell in the same late window
        r_thr_g = 2.0 ** (-(cp.eta + 1.0 + 2.0 * cp.rho + 2.0 * cp.c * cp.rho) * n)
        s_lo_g = t - 2.0 ** (-alpha * (1.0 - cp.c * cp.rho) * n)
        s_hi_g = t - 2.0 ** (-alpha * (1.0 + cp.c * cp.rho) * n)
        selg = (jumps.s >= s_lo_g) & (jumps.s < s_hi_g) & (jumps.r >= r_thr_g)
        widen = 2.0 ** (-n * (1.0 - cp.c * cp.rho) * (1.0 - cp.nu))
        ys = np.sort(jumps.y[selg])
        edges_lo = np.arange(cells) / cells - widen
        edges_hi = (np.arange(cells) + 1.0) / cells + widen
        per_cell = np.searchsorted(ys, edges_hi, side="right") \
            - np.searchsorted(ys, edges_lo, side="left")
        g_cnt[i] = int((per_cell >= 2).sum())
        g_single[i] = int((per_cell >= 1).sum())

        # squared-intensity envelope from the stored path
        sel_w = (snap_t > s_lo_g) & (snap_t <= s_hi_g + path.min_lag)
        if sel_w.any():
            masses = _cell_masses(path, sel_w, n)
            weights = path.weights[sel_w]
            strip_cells = int(math.ceil(widen * cells))
            kernel = np.ones(2 * strip_cells + 1)
            strip_mass = np.apply_along_axis(
                lambda row: np.convolve(
                    np.concatenate([row[-strip_cells:], row, row[:strip_cells]]),
                    kernel, mode="valid"),
                1, masses)
            inten = (weights[:, None] * strip_mass).sum(axis=0) \
                * st.rho_coeff * r_thr_g ** (-1.0 - params.beta) / (1.0 + params.beta)
            g_bound[i] = float(np.minimum(inten ** 2 / 2.0, 1.0).mean())

    return EventCensus(cp, ns, o_ind, o_cov, b_ind, a_cnt, g_cnt, g_single,
                       g_bound, theta)
