import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import c

from spdc_forge.dispersion import (
    FieldLabel,
    Polarization,
    Role,
    available_models,
    beta,
    constant_index_model,
    group_velocity_mismatch,
    inverse_group_velocity,
    load_model,
    polynomial_index_model,
    refractive_index,
    wavelength_to_omega,
)
from spdc_forge.errors import CoefficientSetError, OutOfValidityRange

BUNDLED = ["ln_congruent_e_edwards1984", "ln_congruent_e_jundt1997", "ln_congruent_o_edwards1984"]


def jundt_by_hand(lam_um, temp_c):
    # coefficients typed in from the publication, independent of the data file
    f = (temp_c - 24.5) * (temp_c + 570.82)
    n2 = (
        5.35583
        + 4.629e-7 * f
        + (0.100473 + 3.862e-8 * f) / (lam_um**2 - (0.20692 - 0.89e-8 * f) ** 2)
        + (100.0 + 2.657e-5 * f) / (lam_um**2 - 11.34927**2)
        - 1.5334e-2 * lam_um**2
    )
    return math.sqrt(n2)


def edwards_o_by_hand(lam_um, temp_c):
    f = (temp_c - 24.5) * (temp_c + 24.5 + 546.32)
    n2 = 4.9048 + (0.11775 + 2.2314e-8 * f) / (lam_um**2 - (0.21802 - 2.9671e-8 * f) ** 2) + 2.1429e-8 * f - 0.027153 * lam_um**2
    return math.sqrt(n2)


def test_bundled_sets_listed():
    assert set(BUNDLED) <= set(available_models())


def test_extraordinary_index_at_1064nm(ln_e):
    n = refractive_index(ln_e, wavelength_to_omega(1064e-9), 25.0)
    assert n == pytest.approx(2.15, abs=0.01)
    assert n == pytest.approx(jundt_by_hand(1.064, 25.0), rel=1e-12)


@pytest.mark.parametrize("lam_um,temp", [(0.5174, 185.0), (0.82, 205.0), (1.39, 150.0), (2.5, 30.0)])
def test_formulas_match_hand_evaluation(ln_o, ln_e, lam_um, temp):
    w = wavelength_to_omega(lam_um * 1e-6)
    assert refractive_index(ln_e, w, temp) == pytest.approx(jundt_by_hand(lam_um, temp), rel=1e-12)
    assert refractive_index(ln_o, w, temp) == pytest.approx(edwards_o_by_hand(lam_um, temp), rel=1e-12)


def test_deterministic(ln_e):
    w = wavelength_to_omega(800e-9)
    assert refractive_index(ln_e, w, 100.0) == refractive_index(ln_e, w, 100.0)
    assert ln_e.with_waveguide_shift() == ln_e


@pytest.mark.parametrize("lam_nm,temp", [(300.0, 25.0), (5500.0, 25.0), (1064.0, 10.0), (1064.0, 300.0)])
def test_out_of_validity_raises(ln_e, lam_nm, temp):
    with pytest.raises(OutOfValidityRange):
        refractive_index(ln_e, wavelength_to_omega(lam_nm * 1e-9), temp)


def test_zero_frequency_rejected(ln_e):
    with pytest.raises(OutOfValidityRange):
        beta(ln_e, 0.0, 25.0)


def test_constant_model_beta_closed_form():
    m = constant_index_model(2.2)
    assert beta(m, wavelength_to_omega(1e-6), 25.0) == pytest.approx(2.2 * 2 * math.pi / 1e-6, rel=1e-14)
    assert beta(m, wavelength_to_omega(1e-6), 25.0) == pytest.approx(1.3823e7, rel=1e-4)


def test_constant_model_group_index():
    m = constant_index_model(2.2)
    w = wavelength_to_omega(1e-6)
    assert inverse_group_velocity(m, w, 25.0) == pytest.approx(2.2 / c, rel=1e-9)


def test_linear_index_derivative():
    a, b = 2.1, 0.03  # b per rad/fs
    m = polynomial_index_model([a, b])
    w = wavelength_to_omega(800e-9)
    exact = (a + 2 * b * w / 1e15) / c
    assert inverse_group_velocity(m, w, 25.0) == pytest.approx(exact, rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(1.2, 3.0),
    b=st.floats(-0.05, 0.05),
    q=st.floats(-0.01, 0.01),
    lam_um=st.floats(0.45, 4.0),
)
def test_quadratic_index_derivative(a, b, q, lam_um):
    m = polynomial_index_model([a, b, q])
    w = float(wavelength_to_omega(lam_um * 1e-6))
    x = w / 1e15
    exact = (a + 2 * b * x + 3 * q * x * x) / c
    assert inverse_group_velocity(m, w, 25.0) == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize("name", BUNDLED)
def test_physical_sanity_on_random_points(name):
    m = load_model(name)
    rng = np.random.default_rng(1)
    lo, hi = m.omega_range
    w = rng.uniform(lo * 1.001, hi * 0.999, 1000)
    t = rng.uniform(*m.temperature_range_c, 1000)
    n = refractive_index(m, w, t)
    assert np.all(n > 1)
    assert np.all(beta(m, w, t) > 0)
    assert np.all(inverse_group_velocity(m, w, t) > 0)


@pytest.mark.parametrize("name", BUNDLED)
def test_beta_superlinear_ratio(name):
    m = load_model(name)
    lo, hi = m.omega_range
    w = np.linspace(lo * 1.001, hi / 2 * 0.999, 200)
    for temp in (25.0, 200.0):
        ratio = beta(m, 2 * w, temp) / beta(m, w, temp)
        assert np.all(ratio > 1.8)
        assert np.all(np.diff(beta(m, w, temp)) > 0)


def test_gvm_identity_and_antisymmetry(ln_o, ln_e):
    ws = wavelength_to_omega(820e-9)
    wi = wavelength_to_omega(1400e-9)
    assert group_velocity_mismatch(ln_e, ln_e, ws, ws, 185.0) == 0.0
    fwd = group_velocity_mismatch(ln_e, ln_o, ws, wi, 185.0)
    rev = group_velocity_mismatch(ln_o, ln_e, wi, ws, 185.0)
    assert fwd == -rev


def test_gvm_vanishes_at_solved_triple(ln_o, ln_e, type2_triple):
    sol = type2_triple
    assert abs(group_velocity_mismatch(ln_e, ln_o, sol.omega_s, sol.omega_i, sol.temperature)) < 1e-16


def test_waveguide_shift_adds_polynomial(ln_e):
    shifted = ln_e.with_waveguide_shift(0.01, 0.002)
    w = wavelength_to_omega(900e-9)
    delta = refractive_index(shifted, w, 100.0) - refractive_index(ln_e, w, 100.0)
    assert delta == pytest.approx(0.01 + 0.002 * w / 1e15, rel=1e-9)


def test_process_type_labels():
    o, e = Polarization.ORDINARY, Polarization.EXTRAORDINARY
    s = FieldLabel(Role.SIGNAL, e)
    i = FieldLabel(Role.IDLER, o)
    assert FieldLabel.process_type(s, i, FieldLabel(Role.PUMP, o)) == "type-II"
    assert FieldLabel.process_type(s, FieldLabel(Role.IDLER, e), FieldLabel(Role.PUMP, e)) == "type-0"
    assert FieldLabel.process_type(s, FieldLabel(Role.IDLER, e), FieldLabel(Role.PUMP, o)) == "type-I"


def test_coefficient_dir_env(tmp_path, monkeypatch):
    (tmp_path / "ln_custom.yaml").write_text(
        "name: ln_custom\npolarization: ordinary\nformula: constant\n"
        "coefficients: {n: 2.0}\nvalidity: {wavelength_um: [0.4, 3.0], temperature_C: [0, 100]}\n",
        encoding="utf-8",
    )
    monkeypatch.setenv("SPDC_FORGE_COEFF_DIR", str(tmp_path))
    m = load_model("ln_custom")
    assert refractive_index(m, wavelength_to_omega(1e-6), 50.0) == 2.0
    assert "ln_custom" in available_models()


@pytest.mark.parametrize(
    "body",
    [
        "name: wrong\npolarization: ordinary\nformula: constant\ncoefficients: {n: 2}\nvalidity: {wavelength_um: [0.4, 3], temperature_C: [0, 1]}\n",
        "name: bad\npolarization: ordinary\nformula: jundt\ncoefficients: {n: 2}\nvalidity: {wavelength_um: [0.4, 3], temperature_C: [0, 1]}\n",
        "name: bad\npolarization: ordinary\nformula: constant\ncoefficients: {n: 2}\nextra: 1\nvalidity: {wavelength_um: [0.4, 3], temperature_C: [0, 1]}\n",
        "name: bad\npolarization: ordinary\nformula: constant\ncoefficients: {n: 2}\n",
    ],
)
def test_malformed_coefficient_sets(tmp_path, body):
    (tmp_path / "bad.yaml").write_text(body, encoding="utf-8")
    with pytest.raises(CoefficientSetError):
        load_model("bad", search_path=[tmp_path])


def test_missing_set():
    with pytest.raises(CoefficientSetError):
        load_model("no_such_set")
