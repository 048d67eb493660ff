import math

import numpy as np
import pytest

from superfractal.kernels import apply_semigroup
from superfractal.loglaplace import (duality_check, laplace_functional,
                                     mean_measure_field, pair_measure,
                                     reaction_step, solve_log_laplace)
from superfractal.model import (AtomMeasure, DomainError, Grid1D,
                                LebesgueMeasure, ModelParams)

GRID = Grid1D(0.0, 1.0, 1024)
MU = LebesgueMeasure(0.0, 1.0, 1.0)


def params(a=0.0, b=1.0, beta=0.5, t=1.0, alpha=1.6):
    return ModelParams(alpha, beta, a, b, t, MU)


class TestSolver:
    def test_zero_initial_datum(self):
        st = solve_log_laplace(np.zeros(GRID.n_points), params(), GRID, 50)
        assert np.all(st.u == 0.0)

    def test_constant_closed_form(self):
        # u' = -u^(3/2) from 1: u(1) = (1 + 1/2)^(-2) = 4/9
        st = solve_log_laplace(np.ones(GRID.n_points), params(), GRID, 128)
        assert np.abs(st.u - 4.0 / 9.0).max() < 1e-12

    def test_linear_limit_matches_semigroup(self):
        p = params(b=0.0, t=0.5)
        phi = np.exp(-80 * (GRID.points() - 0.5) ** 2)
        st = solve_log_laplace(phi, p, GRID, 64)
        ref = apply_semigroup(phi, p.alpha, p.t, GRID)
        assert np.abs(st.u - ref).max() < 1e-8

    def test_negative_phi_rejected(self):
        with pytest.raises(DomainError):
            solve_log_laplace(np.full(GRID.n_points, -0.1), params(), GRID, 10)

    def test_comparison_principle(self):
        rng = np.random.default_rng(3)
        base = rng.uniform(0.0, 1.5, GRID.n_points)
        bump = base + rng.uniform(0.0, 0.7, GRID.n_points)
        p = params(a=0.2, b=1.3, beta=0.4, t=0.6)
        u1 = solve_log_laplace(base, p, GRID, 80).u
        u2 = solve_log_laplace(bump, p, GRID, 80).u
        assert np.all(u2 >= u1 - 1e-12)

    def test_strang_second_order(self):
        p = params(a=0.3, b=1.0, beta=0.4, t=0.5)
        phi = 2.0 * np.exp(-60 * (GRID.points() - 0.4) ** 2)
        sols = [solve_log_laplace(phi, p, GRID, n).u for n in (20, 40, 80, 160)]
        errs = [np.abs(s - sols[-1]).max() for s in sols[:-1]]
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        assert all(3.0 < r < 5.5 for r in ratios)

    def test_solver_semigroup_property(self):
        phi = 1.5 * np.exp(-50 * (GRID.points() - 0.6) ** 2)
        p_half = params(a=0.2, b=1.0, beta=0.4, t=0.25)
        p_full = params(a=0.2, b=1.0, beta=0.4, t=0.5)
        via_half = solve_log_laplace(
            solve_log_laplace(phi, p_half, GRID, 100).u, p_half, GRID, 100).u
        direct = solve_log_laplace(phi, p_full, GRID, 200).u
        assert np.abs(via_half - direct).max() < 1e-7

    def test_reaction_step_exact_a_nonzero(self):
        # check against a tiny-step Euler integration
        u0 = np.array([0.8])
        a, b, beta, dt = 0.5, 1.2, 0.4, 0.3
        exact = reaction_step(u0, a, b, beta, dt)[0]
        u = u0[0]
        n = 200000
        for _ in range(n):
            u += (a * u - b * u ** (1 + beta)) * (dt / n)
        assert exact == pytest.approx(u, rel=1e-4)


class TestLaplaceFunctional:
    def test_zero_solution_gives_one(self):
        st = solve_log_laplace(np.zeros(GRID.n_points), params(), GRID, 10)
        assert laplace_functional(MU, st) == 1.0

    def test_atom_pairing(self):
        st = solve_log_laplace(np.ones(GRID.n_points), params(), GRID, 128)
        atom = AtomMeasure((0.37,), (1.0,))
        assert laplace_functional(atom, st) == pytest.approx(
            math.exp(-4.0 / 9.0), rel=1e-10)

    def test_lebesgue_pairing_constant(self):
        st = solve_log_laplace(np.ones(GRID.n_points), params(), GRID, 128)
        assert laplace_functional(MU, st) == pytest.approx(
            math.exp(-4.0 / 9.0), rel=1e-10)
        assert laplace_functional(MU, st) == pytest.approx(0.6412, abs=1e-4)

    def test_pair_measure_partial_interval(self):
        vals = GRID.points()
        mu = LebesgueMeasure(0.25, 0.75, 2.0)
        got = pair_measure(mu, vals, GRID)
        assert got == pytest.approx(2.0 * (0.75 ** 2 - 0.25 ** 2) / 2.0, abs=1e-3)


class TestDuality:
    def test_phi_zero_both_sides_one(self):
        p = params(t=0.2)
        fields = [np.ones(GRID.n_points) for _ in range(4)]
        rep = duality_check(p, np.zeros(GRID.n_points), fields, GRID, n_steps=20)
        assert rep.mc_mean == 1.0 and rep.solver_value == 1.0

    def test_first_moment_formula(self):
        # E <X_t, phi> = <mu, S_t phi> e^(at): deterministic field identity
        p = params(a=0.3, b=0.0, t=0.4)
        f = mean_measure_field(p, GRID)
        assert f.sum() * GRID.dx == pytest.approx(
            math.exp(0.3 * 0.4), rel=1e-10)

    def test_linear_limit_duality_is_exact(self):
        # b = 0: X_t is deterministic heat flow, both sides coincide
        p = params(a=0.0, b=0.0, t=0.3)
        field = apply_semigroup(MU.render(GRID), p.alpha, p.t, GRID)
        phi = 0.8 * np.exp(-40 * (GRID.points() - 0.5) ** 2)
        rep = duality_check(p, phi, [field, field], GRID, n_steps=200)
        assert rep.mc_mean == pytest.approx(rep.solver_value, rel=1e-6)

    def test_grid_mismatch_rejected(self):
        p = params()
        with pytest.raises(DomainError):
            duality_check(p, np.zeros(GRID.n_points),
                          [np.zeros(17)], GRID)
