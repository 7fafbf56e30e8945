import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtflux.dirac import (
    DiracFiberModel,
    DiracSpec,
    InsideGap,
    cross_section,
    model_current,
    s_matrix,
    transition_entries,
    weyl_function,
)
from qtflux.fiber import DensitySpec, lb_current
from qtflux.quadrature import QuadratureSpec, integrate

INF = math.inf


def unitarity_defect(s):
    return float(np.linalg.norm(s.conj().T @ s - np.eye(s.shape[0]), 2))


class TestWeylFunction:
    def test_inside_gap_rejected(self):
        spec = DiracSpec(1.0)
        for lam in (-1.0, -0.5, 0.0, 0.99, 1.0):
            with pytest.raises(InsideGap):
                weyl_function(spec, lam)

    def test_large_energy_limit(self):
        m = weyl_function(DiracSpec(1.0), 1e8)
        assert np.allclose(m, 1j * np.eye(2), atol=1e-7)

    def test_hand_value(self):
        # a=1, lam=5/3: ratios (8/3)/(2/3)=4 and 1/4, Im M = diag(2, 1/2)
        m = weyl_function(DiracSpec(1.0), 5.0 / 3.0)
        assert np.allclose(m.imag, np.diag([2.0, 0.5]), atol=1e-14)
        assert np.allclose(m.real, 0.0)

    def test_imaginary_part_psd_on_both_rays(self):
        spec = DiracSpec(0.7)
        for lam in (-25.0, -0.71, 0.71, 3.0):
            m = weyl_function(spec, lam)
            assert np.min(np.linalg.eigvalsh(m.imag)) > 0.0

    def test_gap_must_be_positive(self):
        with pytest.raises(ValueError):
            DiracSpec(0.0)


class TestSMatrix:
    def test_decoupled_is_diagonal(self):
        s = s_matrix(DiracSpec(1.0, 0.0, 0.0, 0.0), 2.0)
        assert abs(s[0, 1]) == 0.0 and abs(s[1, 0]) == 0.0
        assert unitarity_defect(s) <= 1e-15

    def test_unitarity_sampled(self):
        rng = np.random.default_rng(7)
        lams = np.concatenate(
            [np.linspace(-40.0, -1.001, 500), np.linspace(1.001, 40.0, 500)]
        )
        for _ in range(5):
            spec = DiracSpec(
                1.0, rng.normal(), rng.normal(), rng.normal() + 1j * rng.normal()
            )
            worst = max(unitarity_defect(s_matrix(spec, float(l))) for l in lams)
            assert worst <= 1e-12

    def test_hand_expanded_determinant(self):
        # b+- = 0, a = 1, lam = 5/3, r = 1:
        # det(B - M) = (-2i)(-i/2) - 1 = -2, s-root factors sqrt(2), 1/sqrt(2)
        spec = DiracSpec(1.0, 0.0, 0.0, 1.0)
        lam = 5.0 / 3.0
        s = s_matrix(spec, lam)
        det = -2.0
        inv = np.array([[-0.5j, -1.0], [-1.0, -2.0j]]) / det
        root = np.diag([math.sqrt(2.0), 1.0 / math.sqrt(2.0)])
        expect = np.eye(2) + 2j * root @ inv @ root
        assert np.allclose(s, expect, atol=1e-14)

    def test_transition_entries_match(self):
        spec = DiracSpec(1.3, 0.4, -0.7, 0.5 - 0.2j)
        for lam in (-9.0, -1.31, 2.0, 40.0):
            t = transition_entries(spec, lam)
            s = s_matrix(spec, lam)
            # the closed forms absorb the sqrt(Im M) factors via s1*s2 = 1
            tmat = np.array([[t["t_mm"], t["t_mp"]], [t["t_pm"], t["t_pp"]]])
            assert np.allclose(s - np.eye(2), tmat, atol=1e-12)


class TestCrossSection:
    def test_r_zero_is_zero(self):
        spec = DiracSpec(1.0, 0.3, -0.4, 0.0)
        assert cross_section(spec, 2.0) == 0.0

    def test_bounded_by_two(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            spec = DiracSpec(
                1.0, rng.normal(), rng.normal(), rng.normal() + 1j * rng.normal()
            )
            for lam in (-15.0, -1.01, 1.2, 6.0):
                sigma = cross_section(spec, lam)
                assert 0.0 <= sigma <= 2.0

    def test_equals_transmission_entry_modulus(self):
        spec = DiracSpec(1.0, 0.2, 0.5, 0.7 + 0.3j)
        for lam in (-4.0, 3.3):
            s = s_matrix(spec, lam)
            sigma = cross_section(spec, lam)
            assert sigma == pytest.approx(abs(s[0, 1]) ** 2, rel=1e-13)
            assert abs(s[0, 1]) ** 2 == pytest.approx(abs(s[1, 0]) ** 2, rel=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(min_value=0.01, max_value=50.0),
        st.floats(min_value=-math.pi, max_value=math.pi),
    )
    def test_phase_of_r_drops_out(self, mod, phase):
        base = DiracSpec(1.0, 0.3, -0.2, mod)
        rotated = DiracSpec(1.0, 0.3, -0.2, mod * complex(math.cos(phase), math.sin(phase)))
        lam = 2.5
        assert cross_section(base, lam) == pytest.approx(
            cross_section(rotated, lam), rel=1e-12
        )


def closed_form_current(r_mod, leads, a=1.0):
    """b+- = 0: J = (2|r|^2 / ((1+|r|^2)^2 pi)) * int (rho_- - rho_+)."""
    diff, _ = integrate(
        leads.lead_difference, [(-INF, -a), (a, INF)], QuadratureSpec()
    )
    return 2.0 * r_mod**2 / ((1.0 + r_mod**2) ** 2 * math.pi) * diff


class TestModelCurrent:
    LEADS = DensitySpec(beta=1.0, mu=(0.5, -0.5))

    def test_r_zero_current_zero(self):
        res = model_current(DiracSpec(1.0, 0.4, -0.1, 0.0), self.LEADS)
        assert res.value == pytest.approx(0.0, abs=1e-13)

    @pytest.mark.parametrize("r_mod", [0.1, 0.5, 1.0, 2.0, 10.0])
    def test_closed_form_special_case(self, r_mod):
        res = model_current(DiracSpec(1.0, 0.0, 0.0, r_mod), self.LEADS)
        expect = closed_form_current(r_mod, self.LEADS)
        assert res.value == pytest.approx(expect, rel=1e-6)

    def test_maximum_at_r_one(self):
        mods = np.geomspace(0.05, 20.0, 50)
        vals = [
            abs(model_current(DiracSpec(1.0, 0.0, 0.0, float(m)), self.LEADS).value)
            for m in mods
        ]
        best = mods[int(np.argmax(vals))]
        assert abs(math.log(best)) == pytest.approx(
            min(abs(math.log(m)) for m in mods), abs=1e-12
        )

    def test_large_r_limit(self):
        j1 = model_current(DiracSpec(1.0, 0.0, 0.0, 1.0), self.LEADS).value
        j1000 = model_current(DiracSpec(1.0, 0.0, 0.0, 1000.0), self.LEADS).value
        assert abs(j1000) <= 1e-4 * abs(j1)

    def test_equilibrium_zero(self):
        leads = DensitySpec(kind="equilibrium", beta=1.0, mu=(0.3, 0.3))
        res = model_current(DiracSpec(1.0, 0.2, -0.3, 0.9), leads)
        assert abs(res.value) <= 1e-10

    def test_charge_antisymmetry(self):
        spec = DiracSpec(1.0, 0.5, -0.2, 0.8 + 0.1j)
        jm = model_current(spec, self.LEADS, charge_lead=0)
        jp = model_current(spec, self.LEADS, charge_lead=1)
        assert jm.value == pytest.approx(-jp.value, rel=1e-8)

    def test_two_path_agreement(self):
        spec = DiracSpec(1.0, 0.5, -0.2, 0.8 + 0.1j)
        res = model_current(spec, self.LEADS)
        assert res.diagnostics["two_path_deviation"] <= 1e-8

    def test_current_bound(self):
        spec = DiracSpec(1.0, 0.5, -0.2, 0.8 + 0.1j)
        res = model_current(spec, self.LEADS)
        trace_int, _ = integrate(
            lambda lam: self.LEADS.lead_density(0, lam)
            + self.LEADS.lead_density(1, lam),
            [(-20.0, -1.0), (1.0, 20.0)],
            QuadratureSpec(),
        )
        assert abs(res.value) < trace_int / math.pi

    def test_sign_convention(self):
        # mu_- > mu_+ drives positive current out of the minus lead
        res = model_current(DiracSpec(1.0, 0.0, 0.0, 1.0), self.LEADS, charge_lead=0)
        assert res.value > 0.0


class TestFiberModel:
    def test_support_and_dim(self):
        model = DiracFiberModel(DiracSpec(2.0), TestModelCurrent.LEADS)
        assert model.fiber_dim(3.0) == 2
        assert model.fiber_dim(0.5) == 0
        assert model.spectral_support == [(-INF, -2.0), (2.0, INF)]

    def test_lb_route_matches_model_current(self):
        spec = DiracSpec(1.0, 0.1, 0.6, 1.2 - 0.5j)
        res = model_current(spec, TestModelCurrent.LEADS)
        direct = lb_current(DiracFiberModel(spec, TestModelCurrent.LEADS))
        assert res.value == pytest.approx(direct.value, rel=1e-10)
