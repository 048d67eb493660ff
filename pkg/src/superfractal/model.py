"""Model parameters, derived critical exponents, grids and run configuration.

Everything here is immutable after construction and safe to share across
worker processes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np


class DomainError(ValueError):
    """An argument is outside the domain an operation is defined on."""


class InvalidParamsError(ValueError):
    """Model parameters violate the continuous-density regime."""


class NumericsError(RuntimeError):
    """A numerical stage failed (overflow, blow-up, resolution miss)."""


# ---------------------------------------------------------------------------
# initial measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LebesgueMeasure:
    """Lebesgue measure on [x_lo, x_hi] with constant mass density."""

    x_lo: float
    x_hi: float
    density: float = 1.0

    @property
    def total_mass(self) -> float:
        return (self.x_hi - self.x_lo) * self.density

    def render(self, grid: "Grid1D") -> np.ndarray:
        """Density field on the grid; boundary cells get their covered fraction."""
        x = grid.points()
        lo = np.clip((np.minimum(x + grid.dx, self.x_hi) - np.maximum(x, self.x_lo)), 0.0, grid.dx)
        return self.density * lo / grid.dx


@dataclass(frozen=True)
class AtomMeasure:
    """Finite list of point atoms (location, mass)."""

    locations: tuple
    masses: tuple

    def __post_init__(self):
        if len(self.locations) != len(self.masses):
            raise InvalidParamsError("atom locations and masses must have equal length")
        if any(m < 0 for m in self.masses):
            raise InvalidParamsError("atom masses must be nonnegative")

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    def render(self, grid: "Grid1D") -> np.ndarray:
        out = np.zeros(grid.n_points)
        for loc, m in zip(self.locations, self.masses):
            i = int(np.floor((loc - grid.x_min) / grid.dx)) % grid.n_points
            out[i] += m / grid.dx
        return out


InitialMeasure = LebesgueMeasure | AtomMeasure


def measure_from_dict(d: dict) -> InitialMeasure:
    kind = d.get("kind")
    if kind == "lebesgue":
        return LebesgueMeasure(float(d["x_lo"]), float(d["x_hi"]), float(d.get("density", 1.0)))
    if kind == "atoms":
        return AtomMeasure(tuple(float(x) for x in d["locations"]),
                           tuple(float(m) for m in d["masses"]))
    raise InvalidParamsError(f"unknown initial measure kind: {kind!r}")


def measure_to_dict(mu: InitialMeasure) -> dict:
    if isinstance(mu, LebesgueMeasure):
        return {"kind": "lebesgue", "x_lo": mu.x_lo, "x_hi": mu.x_hi, "density": mu.density}
    return {"kind": "atoms", "locations": list(mu.locations), "masses": list(mu.masses)}


# ---------------------------------------------------------------------------
# model parameters and derived exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """The tuple (alpha, beta, a, b, t, mu) driving a run.

    alpha : stable-motion index, must exceed 1 + beta for a continuous density
    beta  : branching-stability offset in (0, 1); branching index is 1 + beta
    a     : linear drift coefficient (critical branching when a == 0)
    b     : branching coefficient, > 0
    t     : observation time, > 0
    mu    : finite initial measure
    """

    alpha: float
    beta: float
    a: float
    b: float
    t: float
    mu: InitialMeasure

    @property
    def kappa(self) -> float:
        return 1.0 + self.beta


@dataclass(frozen=True)
class SpectrumTheory:
    """Critical exponents and the jump-compensator coefficient.

    eta_c      : optimal uniform Holder index of the density
    eta_bar_c  : optimal Holder index at fixed points
    rho_coeff  : coefficient of the jump compensator density r^(-2-beta)
    """

    eta_c: float
    eta_bar_c: float
    rho_coeff: float
    alpha: float
    beta: float

    @property
    def slope(self) -> float:
        """Slope of the theoretical spectrum, equals 1 + beta."""
        return 1.0 + self.beta


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple
    z2_differentiable: bool

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_params(p: ModelParams) -> ValidationReport:
    """Check the continuous-density regime and report every violated constraint.

    Also flags whether beta < (alpha - 1)/2, the regime in which the
    jump-martingale part of the density has a well-defined spatial derivative.
    """
    v = []
    if not (0.0 < p.beta < 1.0):
        v.append(f"beta={p.beta} outside (0, 1)")
    if not (p.alpha <= 2.0):
        v.append(f"alpha={p.alpha} exceeds 2")
    if not (p.alpha > 1.0 + p.beta):
        v.append(f"alpha={p.alpha} <= 1 + beta = {1.0 + p.beta}")
    if p.b < 0.0:  # b == 0 is allowed as the deterministic no-branching limit
        v.append(f"b={p.b} must be nonnegative")
    if not (p.t > 0.0):
        v.append(f"t={p.t} must be positive")
    if not math.isfinite(p.mu.total_mass):
        v.append("initial measure has infinite total mass")
    return ValidationReport(tuple(v), z2_differentiable=p.beta < (p.alpha - 1.0) / 2.0)


def derive_exponents(p: ModelParams) -> SpectrumTheory:
    """Exact eta_c, eta_bar_c and the compensator coefficient for valid params."""
    report = validate_params(p)
    if not report.valid:
        raise InvalidParamsError("; ".join(report.violations))
    kappa = 1.0 + p.beta
    return SpectrumTheory(
        eta_c=p.alpha / kappa - 1.0,
        eta_bar_c=(1.0 + p.alpha) / kappa - 1.0,
        rho_coeff=p.b * kappa * p.beta / math.gamma(1.0 - p.beta),
        alpha=p.alpha,
        beta=p.beta,
    )


def theoretical_spectrum(st: SpectrumTheory, eta: float) -> float:
    """Dimension of the level set of Holder exponent eta: (1+beta)(eta - eta_c)."""
    if not (st.eta_c <= eta < st.eta_bar_c):
        raise DomainError(f"eta={eta} outside [{st.eta_c}, {st.eta_bar_c})")
    return st.slope * (eta - st.eta_c)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid1D:
    """Periodic spatial grid with a power-of-two number of cells."""

    x_min: float
    x_max: float
    n_points: int
    dx: float = field(init=False)

    def __post_init__(self):
        n = self.n_points
        if n < 2 or (n & (n - 1)) != 0:
            raise DomainError(f"n_points={n} must be a power of two >= 2")
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")
        object.__setattr__(self, "dx", (self.x_max - self.x_min) / n)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    def points(self) -> np.ndarray:
        """Left edges of the cells (also the collocation points)."""
        return self.x_min + self.dx * np.arange(self.n_points)

    def xi(self) -> np.ndarray:
        """Nonnegative angular frequencies of the real FFT on this grid."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.n_points, d=self.dx)

    def cell_of(self, x) -> np.ndarray:
        return (np.floor((np.asarray(x) - self.x_min) / self.dx).astype(int)) % self.n_points


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Reproducibility and resolution knobs for one experiment."""

    seed: int
    n_replicas: int
    time_steps: int
    r_min: float
    gamma: float
    output_dir: Path = Path("./out")

    def __post_init__(self):
        if self.r_min <= 0:
            raise InvalidParamsError("r_min must be positive")
        if self.gamma <= 0:
            raise InvalidParamsError("gamma must be positive")
        if self.time_steps < 1 or self.n_replicas < 1:
            raise InvalidParamsError("time_steps and n_replicas must be >= 1")


def default_gamma(st: SpectrumTheory) -> float:
    """Half of min(1e-2 eta_c / alpha, 1e-3): safely inside the allowed range."""
    return 0.5 * min(1e-2 * st.eta_c / st.alpha, 1e-3)


def validate_run_config(rc: RunConfig, st: SpectrumTheory) -> None:
    hi = 1e-2 * st.eta_c / st.alpha
    if not (0.0 < rc.gamma < hi):
        raise InvalidParamsError(f"gamma={rc.gamma} outside (0, {hi:.3e})")


@dataclass(frozen=True)
class SimOptions:
    """Optional solver knobs; all have working defaults.

    r_scale        : late-time truncation coefficient; jumps below
                     min(r_min, r_scale * (t-s)^(1/(1+beta))) are replaced by
                     their compensator mean
    steps_per_octave : geometric refinement rate of the time grid near t
    min_lag        : closest approach of the time grid to the horizon; defaults
                     to dx^alpha / 4 so that the last resolved kernel width
                     stays below one cell
    store_horizon  : snapshots are kept for every step with t - s below this
                     value, every early_stride-th step before
    snapshot_dtype : float32 snapshots halve the memory of stored paths
    """

    r_scale: float = 2.0 ** -8
    steps_per_octave: int = 8
    min_lag: float | None = None
    store_horizon: float | None = None
    early_stride: int = 8
    snapshot_dtype: str = "float32"
    track_decomposition: bool = True
    backend: str = "jump_spde"
    mass_limit_factor: float = 1e6

    def resolved_min_lag(self, grid: Grid1D, alpha: float, t: float) -> float:
        if self.min_lag is not None:
            return min(self.min_lag, t / 2)
        return min(grid.dx ** alpha / 4.0, t / 2)


def sim_options_from_dict(d: dict) -> SimOptions:
    known = {f for f in SimOptions.__dataclass_fields__}
    extra = set(d) - known
    if extra:
        raise InvalidParamsError(f"unknown sim options: {sorted(extra)}")
    return SimOptions(**d)


# ---------------------------------------------------------------------------
# JSON config files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    grid: Grid1D
    run: RunConfig
    sim: SimOptions
    analysis: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        run = asdict(self.run)
        run["output_dir"] = str(self.run.output_dir)
        return {
            "params": {
                "alpha": self.params.alpha, "beta": self.params.beta,
                "a": self.params.a, "b": self.params.b, "t": self.params.t,
                "mu": measure_to_dict(self.params.mu),
            },
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max,
                     "n_points": self.grid.n_points},
            "run": run,
            "sim": asdict(self.sim),
            "analysis": self.analysis,
        }

    def with_overrides(self, seed=None, n_replicas=None, output_dir=None) -> "ExperimentConfig":
        run = self.run
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if n_replicas is not None:
            changes["n_replicas"] = int(n_replicas)
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        if changes:
            from dataclasses import replace
            run = replace(run, **changes)
        return ExperimentConfig(self.params, self.grid, run, self.sim, self.analysis)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    Raises InvalidParamsError with a field-precise message on bad input.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InvalidParamsError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    return config_from_dict(raw, origin=str(path))


def config_from_dict(raw: dict, origin: str = "<config>") -> ExperimentConfig:
    for section in ("params", "grid", "run"):
        if section not in raw:
            raise InvalidParamsError(f"{origin}: missing section {section!r}")
    pr = raw["params"]
    try:
        params = ModelParams(
            alpha=float(pr["alpha"]), beta=float(pr["beta"]), a=float(pr["a"]),
            b=float(pr["b"]), t=float(pr["t"]), mu=measure_from_dict(pr["mu"]),
        )
        grid = Grid1D(float(raw["grid"]["x_min"]), float(raw["grid"]["x_max"]),
                      int(raw["grid"]["n_points"]))
        rr = raw["run"]
        st = derive_exponents(params)
        gamma = float(rr["gamma"]) if "gamma" in rr and rr["gamma"] is not None \
            else default_gamma(st)
        run = RunConfig(
            seed=int(rr["seed"]), n_replicas=int(rr["n_replicas"]),
            time_steps=int(rr["time_steps"]), r_min=float(rr["r_min"]),
            gamma=gamma, output_dir=Path(rr.get("output_dir", "./out")),
        )
        validate_run_config(run, st)
        sim = sim_options_from_dict(raw.get("sim", {}))
    except KeyError as e:
        raise InvalidParamsError(f"{origin}: missing required field {e.args[0]!r}") from e
    report = validate_params(params)
    if not report.valid:
        raise InvalidParamsError(f"{origin}: " + "; ".join(report.violations))
    return ExperimentConfig(params, grid, run, sim, dict(raw.get("analysis", {})))
