"""Spectrally positive stable processes with explicit jump lists.

The target law has Laplace transform E exp(-lambda L_t) = exp(t lambda^kappa)
for kappa in (1, 2).  Jumps above a truncation level r_min are drawn from a
Poisson point process with Levy density c_kappa r^(-1-kappa) dr and the
process is centered by the compensator drift of those jumps; jumps below
r_min are replaced by their (zero) compensated mean.  The normalization
c_kappa = kappa (kappa - 1) / Gamma(2 - kappa) is derived in
docs/levy_normalization.md and validated by empirical_laplace_check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import DomainError


def levy_normalization(kappa: float) -> float:
    """c_kappa making the fully compensated jump integral have exponent lambda^kappa."""
    if not (1.0 < kappa < 2.0):
        raise DomainError(f"kappa={kappa} outside (1, 2)")
    return kappa * (kappa - 1.0) / math.gamma(2.0 - kappa)


def jump_rate(kappa: float, r_min: float) -> float:
    """Expected number of retained jumps per unit time."""
    return levy_normalization(kappa) * r_min ** (-kappa) / kappa


def drift_rate(kappa: float, r_min: float) -> float:
    """Compensator drift per unit time for jumps above r_min (negative)."""
    return -levy_normalization(kappa) * r_min ** (1.0 - kappa) / (kappa - 1.0)


def truncated_laplace_exponent(kappa: float, lam: float, r_min: float) -> float:
    """Exact Laplace exponent of the truncated process: psi(lam) <= lam^kappa.

    psi(lam) = c int_{r_min}^inf (e^(-lam r) - 1 + lam r) r^(-1-kappa) dr,
    evaluated through the convergent small-w series of the missing piece.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if lam == 0.0:
        return 0.0
    c = levy_normalization(kappa)
    w = lam * r_min
    # int_0^w (e^(-u) - 1 + u) u^(-1-kappa) du as an alternating series in w
    missing = 0.0
    fact = 1.0
    for j in range(2, 80):
        fact *= j
        term = (-1.0) ** j * w ** (j - kappa) / (fact * (j - kappa))
        missing += term
        if abs(term) < 1e-18 * max(abs(missing), 1e-300):
            break
    return lam ** kappa - c * lam ** kappa * missing


def truncation_bias_bound(kappa: float, lam: float, t: float, r_min: float) -> float:
    """Upper bound for |E e^(-lam L^trunc) - e^(t lam^kappa)|.

    The dropped compensated small jumps lower the exponent by at most
    c lam^2 r_min^(2-kappa) / (2 (2-kappa)) per unit time.
    """
    c = levy_normalization(kappa)
    eps = t * c * lam * lam * r_min ** (2.0 - kappa) / (2.0 * (2.0 - kappa))
    return math.exp(t * lam ** kappa) * (1.0 - math.exp(-eps))


@dataclass(frozen=True)
class StablePathSample:
    """One truncated path: ordered jump list plus the compensator drift."""

    kappa: float
    horizon: float
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    drift_correction: float
    r_min: float

    @property
    def jumps(self) -> list:
        return list(zip(self.jump_times.tolist(), self.jump_sizes.tolist()))

    def evaluate(self, u) -> np.ndarray:
        """L_u for scalar or array u in [0, horizon]."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u > self.horizon):
            raise DomainError("u outside [0, horizon]")
        cum = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        idx = np.searchsorted(self.jump_times, u, side="right")
        return cum[idx] + self.drift_correction * u

    def terminal(self) -> float:
        return float(self.jump_sizes.sum() + self.drift_correction * self.horizon)


def sample_path(kappa: float, horizon: float, r_min: float,
                seed: int | np.random.Generator = 0) -> StablePathSample:
    """Draw one truncated spectrally positive stable path."""
    if not (1.0 < kappa < 2.0):
        raise DomainError(f"kappa={kappa} outside (1, 2)")
    if r_min <= 0 or horizon <= 0:
        raise DomainError("r_min and horizon must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean_count = jump_rate(kappa, r_min) * horizon
    if mean_count < 0.5:
        warnings.warn("fewer than one jump expected at this truncation level")
    n = rng.poisson(mean_count)
    times = np.sort(rng.uniform(0.0, horizon, n))
    sizes = r_min * rng.uniform(size=n) ** (-1.0 / kappa)
    return StablePathSample(kappa, horizon, times, sizes,
                            drift_rate(kappa, r_min), r_min)


# ---------------------------------------------------------------------------
# batched ensembles (flat jump arrays, one pass per batch)
# ---------------------------------------------------------------------------

def _batch_jumps(kappa, horizon, r_min, n_paths, rng):
    """All jumps of n_paths paths: (path offsets, times-sorted-within-path, sizes)."""
    counts = rng.poisson(jump_rate(kappa, r_min) * horizon, n_paths)
    total = int(counts.sum())
    offsets = np.concatenate(([0], np.cumsum(counts)))
    times = rng.uniform(0.0, horizon, total)
    # sort times within each path: add path index * horizon and sort once
    path_ids = np.repeat(np.arange(n_paths), counts)
    order = np.argsort(times + path_ids * (2.0 * horizon), kind="stable")
    times = times[order]
    sizes = r_min * rng.uniform(size=total) ** (-1.0 / kappa)
    return offsets, path_ids, times, sizes


def terminal_values(kappa, horizon, r_min, n_paths, rng, batch=20000):
    """L_t for n_paths independent truncated paths."""
    drift = drift_rate(kappa, r_min) * horizon
    out = np.empty(n_paths)
    done = 0
    while done < n_paths:
        m = min(batch, n_paths - done)
        counts = rng.poisson(jump_rate(kappa, r_min) * horizon, m)
        total = int(counts.sum())
        sizes = r_min * rng.uniform(size=total) ** (-1.0 / kappa)
        ends = np.cumsum(counts)
        sums = np.concatenate(([0.0], np.cumsum(sizes)))[ends] \
            - np.concatenate(([0.0], np.cumsum(sizes)))[ends - counts]
        out[done:done + m] = sums + drift
        done += m
    return out


@dataclass(frozen=True)
class LaplaceCheckEntry:
    lam: float
    empirical: float
    std_error: float
    target: float
    truncated_target: float
    truncation_tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.empirical - self.target) <= 3.0 * self.std_error \
            + self.truncation_tolerance

    @property
    def tight_passed(self) -> bool:
        """Sharper check against the exact truncated-process expectation."""
        return abs(self.empirical - self.truncated_target) <= 3.0 * self.std_error


@dataclass(frozen=True)
class LaplaceCheckReport:
    kappa: float
    t: float
    r_min: float
    n_paths: int
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)


def empirical_laplace_check(kappa, lambdas, t, n_paths, r_min,
                            seed: int = 0) -> LaplaceCheckReport:
    """Compare empirical E e^(-lam L_t) with e^(t lam^kappa) per lambda.

    Each entry passes iff the deviation is within 3 standard errors plus the
    documented truncation tolerance; lambda = 0 is exact with zero variance.
    """
    rng = np.random.default_rng(seed)
    term = terminal_values(kappa, t, r_min, n_paths, rng)
    entries = []
    for lam in lambdas:
        if lam < 0:
            raise DomainError("lambda must be nonnegative")
        vals = np.exp(-lam * term)
        emp = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if lam > 0 else 0.0
        psi = truncated_laplace_exponent(kappa, lam, r_min)
        entries.append(LaplaceCheckEntry(
            lam=float(lam), empirical=emp, std_error=se,
            target=math.exp(t * lam ** kappa),
            truncated_target=math.exp(t * psi),
            truncation_tolerance=truncation_bias_bound(kappa, lam, t, r_min),
        ))
    return LaplaceCheckReport(kappa, t, r_min, n_paths, tuple(entries))


# ---------------------------------------------------------------------------
# truncated supremum tail bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailBoundReport:
    x: float
    y: float
    t: float
    empirical_prob: float
    bound_value: float
    n_paths: int
    fitted_C: float
    vacuous: bool = False

    @property
    def consistent(self) -> bool:
        # roundoff slack: the binding cell has empirical == bound by construction
        return self.vacuous or self.empirical_prob <= self.bound_value * (1.0 + 1e-9) + 1e-15


def sup_abs_from_jumps(offsets, times, sizes, drift, t, y) -> np.ndarray:
    """Per path: sup |L_u| over u up to the first jump exceeding y.

    Between jumps the path drifts down linearly, so the running maximum of L
    is attained right after a jump and the running minimum right before one
    (or at the horizon).  Jumps from the first size > y onward do not count,
    but the left limit at that jump time does.
    """
    m = len(offsets) - 1
    path_ids = np.repeat(np.arange(m), np.diff(offsets))
    post = np.zeros_like(times)
    pre = post
    if times.size:
        cum = np.cumsum(sizes)
        base = np.concatenate(([0.0], cum))[offsets[path_ids]]
        cum = cum - base
        post = cum + drift * times          # value right after each jump
        pre = post - sizes                  # value right before each jump
    res = np.zeros(m)
    for i in range(m):
        lo, hi = offsets[i], offsets[i + 1]
        if lo == hi:
            res[i] = abs(drift * t)
            continue
        s = sizes[lo:hi]
        big = np.nonzero(s > y)[0]
        cut = int(big[0]) if big.size else hi - lo
        hi_val = post[lo:lo + cut].max(initial=0.0)
        # minima: right before jumps 1..cut (and at the big jump's left
        # limit), plus the horizon when nothing truncates
        lo_val = pre[lo:lo + cut + (1 if big.size else 0)].min(initial=0.0)
        if not big.size:
            end_val = post[hi - 1] + drift * (t - times[hi - 1])
            lo_val = min(lo_val, end_val)
        res[i] = max(hi_val, -lo_val)
    return res


def truncated_sup_extrema(kappa, t, r_min, y, n_paths, rng, batch=20000):
    """sup |L| with jumps truncated at y, for n_paths independent paths."""
    sup_abs = np.empty(n_paths)
    drift = drift_rate(kappa, r_min)
    done = 0
    while done < n_paths:
        m = min(batch, n_paths - done)
        offsets, _, times, sizes = _batch_jumps(kappa, t, r_min, m, rng)
        sup_abs[done:done + m] = sup_abs_from_jumps(offsets, times, sizes,
                                                    drift, t, y)
        done += m
    return sup_abs


def truncated_sup_tail_check(kappa, t, x, y, n_paths, seed=0,
                             r_min: float | None = None,
                             fitted_C: float | None = None) -> TailBoundReport:
    """Monte-Carlo check of P(sup |L| 1{jumps <= y} >= x) <= (C t / (x y^(kappa-1)))^(x/y).

    With fitted_C omitted, the report carries the smallest constant making the
    bound hold for this cell; a grid harness takes the max over cells and
    re-evaluates.  Cells whose empirical probability has relative standard
    error above 30 percent are flagged vacuous.
    """
    if x <= 0 or y <= 0:
        raise DomainError("x and y must be positive")
    if r_min is None:
        r_min = min(0.01, y / 8.0)
    rng = np.random.default_rng(seed)
    sup_abs = truncated_sup_extrema(kappa, t, r_min, y, n_paths, rng)
    hits = sup_abs >= x
    p = float(hits.mean())
    k = int(hits.sum())
    rel_se = math.sqrt(max(k, 1)) / max(k, 1e-300) if k else math.inf
    vacuous = k == 0 or rel_se > 0.30
    exponent = x / y
    if fitted_C is None:
        fitted_C = (p ** (1.0 / exponent)) * x * y ** (kappa - 1.0) / t if p > 0 else 0.0
    bound = (fitted_C * t / (x * y ** (kappa - 1.0))) ** exponent
    return TailBoundReport(x, y, t, p, bound, n_paths, fitted_C, vacuous)


def tail_bound_grid_check(kappa, cells, n_paths, seed=0):
    """Fit one constant per kappa over the (x, y, t) grid and re-check all cells.

    cells: iterable of (x, y, t).  Returns (fitted_C, list of TailBoundReport).
    """
    first = []
    for i, (x, y, t) in enumerate(cells):
        first.append(truncated_sup_tail_check(kappa, t, x, y, n_paths, seed=seed + i))
    cs = [r.fitted_C for r in first if not r.vacuous]
    fitted = max(cs) if cs else 1.0
    final = [
        TailBoundReport(r.x, r.y, r.t, r.empirical_prob,
                        (fitted * r.t / (r.x * r.y ** (kappa - 1.0))) ** (r.x / r.y),
                        r.n_paths, fitted, r.vacuous)
        for r in first
    ]
    return fitted, final
