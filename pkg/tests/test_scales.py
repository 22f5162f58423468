import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionjunction import scales

S = scales.default_scales()
pos = st.floats(1e-3, 1e3)


def test_default_units():
    assert S.R_star == pytest.approx(0.306e-6, rel=0.02)
    assert S.frequency_from_dimensionless(1.0) == pytest.approx(935.0, rel=0.02)
    assert S.mass_ratio == pytest.approx(170.936323 / (86.909180527 + 170.936323), rel=1e-12)


def test_frequency_examples():
    f_star = S.frequency_from_dimensionless(1.0)
    assert S.frequency_to_dimensionless(f_star) == pytest.approx(1.0, rel=1e-14)
    assert S.frequency_to_dimensionless(11.2) == pytest.approx(11.2 / f_star, rel=1e-14)
    assert S.frequency_to_dimensionless(2 * math.pi * 11.2, angular=True) == pytest.approx(11.2 / f_star)
    assert S.frequency_to_dimensionless(0.0) == 0.0


def test_trap_frequencies_give_the_two_scenarios():
    assert S.alpha_from_omega(2 * math.pi * 200) == pytest.approx(0.026, rel=0.01)
    assert S.alpha_from_omega(2 * math.pi * 3.9e3) == pytest.approx(10.0, rel=0.02)


@given(x=pos)
def test_round_trips(x):
    for to, back in ((S.length_to_si, S.length_from_si), (S.energy_to_si, S.energy_from_si),
                     (S.time_to_si, S.time_from_si), (S.time_to_ms, S.time_from_ms),
                     (S.frequency_from_dimensionless, S.frequency_to_dimensionless)):
        assert back(to(x)) == pytest.approx(x, rel=1e-12)
    assert S.alpha_from_omega(S.omega_from_alpha(x)) == pytest.approx(x, rel=1e-12)


@given(lam=st.floats(0.1, 10.0), c4=st.floats(10.0, 1000.0))
def test_c4_scaling(lam, c4):
    a = scales.default_scales(c4)
    b = scales.default_scales(lam * c4)
    assert b.R_star == pytest.approx(a.R_star * math.sqrt(lam), rel=1e-12)
    assert b.E_star == pytest.approx(a.E_star / lam, rel=1e-12)


@given(lam=st.floats(0.1, 10.0))
def test_mass_scaling(lam):
    C4 = scales.c4_au_to_si(scales.DEFAULT_C4_AU)
    a = scales.derive_scales(87 * scales.AMU, 171 * scales.AMU, C4)
    b = scales.derive_scales(lam * 87 * scales.AMU, lam * 171 * scales.AMU, C4)
    assert b.mu == pytest.approx(lam * a.mu, rel=1e-12)
    assert b.R_star == pytest.approx(a.R_star * math.sqrt(lam), rel=1e-12)
    assert b.E_star == pytest.approx(a.E_star / lam**2, rel=1e-12)
    assert b.mass_ratio == pytest.approx(a.mass_ratio, rel=1e-12)


@given(phi=st.floats(-math.pi / 2, math.pi / 2, exclude_min=True).filter(lambda p: abs(p) > 1e-9))
def test_phase_scattering_length_bijection(phi):
    a = scales.scattering_length_from_phase(phi)
    assert scales.phase_from_scattering_length(a) == pytest.approx(phi, abs=1e-12)


def test_phase_special_values():
    assert scales.phase_from_scattering_length(0.0) == pytest.approx(math.pi / 2)
    assert scales.scattering_length_from_phase(0.0) == math.inf
    assert scales.scattering_length_from_phase(-math.pi / 4) == pytest.approx(1.0)
    assert scales.scattering_length_from_phase(math.pi / 3) == pytest.approx(-1 / math.sqrt(3))
    with pytest.raises(scales.ScalesError):
        scales.phase_from_scattering_length(math.inf)


@given(phi=st.floats(-10, 10), k=st.integers(-3, 3))
def test_wrap_phase(phi, k):
    w = scales.wrap_phase(phi)
    assert -math.pi / 2 < w <= math.pi / 2
    assert scales.wrap_phase(phi + k * math.pi) == pytest.approx(w, abs=1e-9) or abs(abs(w) - math.pi / 2) < 1e-9


def test_barrier_height():
    assert scales.barrier_height(10.0, 2.0, 0.5) == pytest.approx(5.0)
    geo = S.trap(2 * math.pi * 200).with_q(6.39)
    assert geo.barrier(S.mass_ratio) == pytest.approx(geo.alpha * S.mass_ratio * 6.39**2 / 4)
    with pytest.raises(scales.ScalesError):
        S.trap(1.0).barrier(S.mass_ratio)


def test_invalid_inputs():
    with pytest.raises(scales.ScalesError):
        scales.derive_scales(-1.0, 1.0, 1.0)
    with pytest.raises(scales.ScalesError):
        S.alpha_from_omega(0.0)
