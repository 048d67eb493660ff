import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from superfractal.model import (DomainError, Grid1D, InvalidParamsError,
                                LebesgueMeasure, AtomMeasure, ModelParams,
                                RunConfig, config_from_dict, default_gamma,
                                derive_exponents, load_config,
                                theoretical_spectrum, validate_params)


def params(alpha, beta, a=0.0, b=1.0, t=1.0):
    return ModelParams(alpha, beta, a, b, t, LebesgueMeasure(0.0, 1.0, 1.0))


class TestValidation:
    def test_valid_without_derivative_flag(self):
        rep = validate_params(params(1.6, 0.4))
        assert rep.valid
        assert rep.z2_differentiable is False  # 0.4 > (1.6-1)/2

    def test_valid_with_derivative_flag(self):
        rep = validate_params(params(1.8, 0.2))
        assert rep.valid
        assert rep.z2_differentiable is True  # 0.2 < 0.4

    def test_alpha_below_continuity_regime(self):
        rep = validate_params(params(1.2, 0.5))
        assert not rep.valid
        assert any("1 + beta" in v for v in rep.violations)

    def test_bad_beta_and_t(self):
        rep = validate_params(params(1.6, 1.2, t=-1.0))
        assert len(rep.violations) >= 2


class TestExponents:
    def test_headline_exponents(self):
        st = derive_exponents(params(1.6, 0.4))
        assert st.eta_c == pytest.approx(1.0 / 7.0, abs=1e-12)
        assert st.eta_bar_c == pytest.approx(6.0 / 7.0, abs=1e-12)

    def test_second_pair(self):
        st = derive_exponents(params(1.8, 0.5))
        assert st.eta_c == pytest.approx(0.2, abs=1e-12)
        assert st.eta_bar_c == pytest.approx(13.0 / 15.0, abs=1e-12)

    def test_rho_coefficient(self):
        # b (1+beta) beta / Gamma(1-beta) at b=1, beta=0.5; Gamma(1/2) = sqrt(pi)
        st = derive_exponents(params(1.8, 0.5))
        assert st.rho_coeff == pytest.approx(0.75 / math.sqrt(math.pi), rel=1e-12)
        assert st.rho_coeff == pytest.approx(0.423142, abs=1e-6)

    def test_invalid_params_raise(self):
        with pytest.raises(InvalidParamsError):
            derive_exponents(params(1.2, 0.5))

    @given(alpha=hst.floats(1.05, 2.0), beta=hst.floats(0.01, 0.95))
    @settings(max_examples=80, deadline=None)
    def test_exponent_identities(self, alpha, beta):
        if alpha <= 1.0 + beta + 1e-9:
            return
        st = derive_exponents(params(alpha, beta))
        assert 0.0 < st.eta_c < st.eta_bar_c < 2.0
        assert st.eta_bar_c - st.eta_c == pytest.approx(1.0 / (1.0 + beta), rel=1e-12)

    def test_rho_increasing_in_b(self):
        rhos = [derive_exponents(params(1.6, 0.4, b=b)).rho_coeff
                for b in (0.5, 1.0, 2.0, 5.0)]
        assert all(x < y for x, y in zip(rhos, rhos[1:]))


class TestTheoreticalSpectrum:
    def test_midpoint_value(self):
        st = derive_exponents(params(1.6, 0.4))
        assert theoretical_spectrum(st, 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_zero_at_eta_c(self):
        st = derive_exponents(params(1.6, 0.4))
        assert theoretical_spectrum(st, st.eta_c) == 0.0

    def test_limit_is_one_at_upper_end(self):
        st = derive_exponents(params(1.6, 0.4))
        eps = 1e-9
        assert theoretical_spectrum(st, st.eta_bar_c - eps) == pytest.approx(1.0, abs=1e-6)

    def test_out_of_range(self):
        st = derive_exponents(params(1.6, 0.4))
        with pytest.raises(DomainError):
            theoretical_spectrum(st, st.eta_bar_c)
        with pytest.raises(DomainError):
            theoretical_spectrum(st, st.eta_c - 0.01)

    @given(beta=hst.floats(0.05, 0.9), u=hst.floats(0.0, 0.999))
    @settings(max_examples=60, deadline=None)
    def test_affine_with_slope_one_plus_beta(self, beta, u):
        alpha = min(2.0, 1.0 + beta + 0.5)
        if alpha <= 1.0 + beta:
            return
        st = derive_exponents(params(alpha, beta))
        eta = st.eta_c + u * (st.eta_bar_c - st.eta_c) * 0.999
        val = theoretical_spectrum(st, eta)
        assert val == pytest.approx((1.0 + beta) * (eta - st.eta_c), rel=1e-12)
        assert 0.0 <= val < 1.0


class TestGrid:
    def test_power_of_two_enforced(self):
        with pytest.raises(DomainError):
            Grid1D(0.0, 1.0, 1000)

    def test_dx(self):
        g = Grid1D(0.0, 1.0, 256)
        assert g.dx == pytest.approx(1.0 / 256)
        assert g.points().size == 256

    def test_lebesgue_render_total_mass(self):
        g = Grid1D(0.0, 1.0, 64)
        mu = LebesgueMeasure(0.1, 0.43, 2.0)
        f = mu.render(g)
        assert f.sum() * g.dx == pytest.approx(mu.total_mass, rel=1e-12)

    def test_atom_render(self):
        g = Grid1D(0.0, 1.0, 64)
        mu = AtomMeasure((0.25, 0.5), (1.0, 2.0))
        f = mu.render(g)
        assert f.sum() * g.dx == pytest.approx(3.0, rel=1e-12)


class TestConfig:
    def test_run_config_validation(self):
        with pytest.raises(InvalidParamsError):
            RunConfig(seed=1, n_replicas=1, time_steps=10, r_min=-1.0, gamma=1e-4)

    def test_gamma_defaults_inside_allowed_range(self):
        st = derive_exponents(params(1.6, 0.4))
        g = default_gamma(st)
        assert 0.0 < g < 1e-2 * st.eta_c / 1.6

    def test_load_config_roundtrip(self, tmp_path):
        raw = {
            "params": {"alpha": 1.6, "beta": 0.4, "a": 0.0, "b": 1.0, "t": 0.3,
                       "mu": {"kind": "lebesgue", "x_lo": 0, "x_hi": 1, "density": 1}},
            "grid": {"x_min": 0.0, "x_max": 1.0, "n_points": 256},
            "run": {"seed": 7, "n_replicas": 2, "time_steps": 16, "r_min": 0.01,
                    "gamma": None},
        }
        p = tmp_path / "c.json"
        p.write_text(json.dumps(raw))
        cfg = load_config(p)
        assert cfg.run.seed == 7
        assert cfg.run.output_dir.name == "out"
        back = cfg.to_dict()
        assert back["params"]["alpha"] == 1.6

    def test_missing_field_message(self):
        with pytest.raises(InvalidParamsError, match="missing"):
            config_from_dict({"params": {}, "grid": {}})

    def test_syntax_error_is_line_precise(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "params": oops\n}')
        with pytest.raises(InvalidParamsError, match=r":2:"):
            load_config(p)
