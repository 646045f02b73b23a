import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdc_forge.dispersion import constant_index_model, wavelength_to_omega
from spdc_forge.errors import GridTooCoarse, NoPeak, SpanTooNarrow
from spdc_forge.jsa import (
    GridSpec,
    JsaGrid,
    PumpModel,
    SpectrumTrace,
    biphoton_tbp,
    correlation_time,
    evaluate_jsa,
    fwhm_bandwidth,
    make_grid,
    marginal_energy,
    marginal_idler_spectrum,
    marginal_signal_spectrum,
    ridge_angle_deg,
    temperature_sweep,
    write_spectrum_csv,
    write_sweep_csv,
)
from spdc_forge.phasematch import ProcessSpec, pm_function

GAUSS_TBP = 2 * math.log(2) / math.pi
TWO_PI = 2 * math.pi


def gaussian_trace(sigma=1.0, n=4001, span=12.0, center=350.0):
    x = center + np.linspace(-span, span, n) * sigma
    return SpectrumTrace(x, np.exp(-0.5 * ((x - center) / sigma) ** 2))


@pytest.fixture(scope="module")
def flat_pm_spec():
    m = constant_index_model(2.0)
    w = float(wavelength_to_omega(1550e-9))
    return ProcessSpec(m, m, m, w, w, 0.01, 25.0)


# --- pump and grid ---------------------------------------------------------


def test_pump_cell_average_conserves_energy(omega_pump):
    pump = PumpModel(omega_pump, linewidth_fwhm=TWO_PI * 1e6)
    width = TWO_PI * 5e9
    w = omega_pump + width * np.arange(-8, 9)
    total = pump.cell_intensity(w, width).sum() * width
    assert total == pytest.approx(pump.sigma * math.sqrt(2 * math.pi), rel=1e-12)
    wide = PumpModel(omega_pump, linewidth_fwhm=TWO_PI * 1e13)
    # absolute frequencies near 3.6e15 rad/s limit cells to about 1 GHz for 1e-9 accuracy
    width = TWO_PI * 1e9
    expected = 1 - width**2 / (24 * wide.sigma**2)
    assert wide.cell_intensity(omega_pump, width) == pytest.approx(expected, rel=1e-9)


def test_pump_linewidth_floor(omega_pump):
    assert PumpModel(omega_pump).effective_fwhm == pytest.approx(TWO_PI * 100e6)
    assert PumpModel(omega_pump, linewidth_fwhm=TWO_PI * 1e9).effective_fwhm == pytest.approx(TWO_PI * 1e9)
    assert PumpModel(omega_pump).intensity(omega_pump) == 1.0


def test_grid_antidiagonal_on_pump(type2_spec, cw_pump):
    axes = make_grid(type2_spec, cw_pump, GridSpec(points=256))
    n = len(axes.omega_s)
    sums = axes.omega_s + axes.omega_i[::-1]
    assert np.allclose(sums, cw_pump.center_omega, rtol=1e-14, atol=0)
    assert axes.step_s == pytest.approx(axes.step_i, rel=1e-12)
    assert n == 256


# --- evaluate_jsa ----------------------------------------------------------


def test_flat_pm_gives_pump_ridge(flat_pm_spec):
    spec = flat_pm_spec
    half = TWO_PI * 2e12
    pump = PumpModel(spec.omega_p, linewidth_fwhm=TWO_PI * 0.3e12)
    jsa = evaluate_jsa(spec, pump, GridSpec(points=256, half_span=half))
    expected = np.sqrt(pump.cell_intensity(jsa.omega_s[:, None] + jsa.omega_i[None, :], jsa.omega_i[1] - jsa.omega_i[0]))
    assert np.allclose(np.abs(jsa.amplitude), expected / expected.max(), atol=1e-12)
    assert ridge_angle_deg(jsa) == pytest.approx(-45.0, abs=0.5)
    marginal = marginal_signal_spectrum(jsa).intensity
    interior = marginal[64:-64]
    assert np.ptp(interior) < 1e-9


def test_flat_pm_cw_marginal_flat_everywhere(flat_pm_spec):
    spec = flat_pm_spec
    jsa = evaluate_jsa(spec, PumpModel(spec.omega_p), GridSpec(points=128, half_span=TWO_PI * 1e12))
    assert np.ptp(marginal_signal_spectrum(jsa).intensity) < 1e-12


def test_flat_pump_gives_pm_function(type2_spec):
    pump = PumpModel(type2_spec.omega_p, linewidth_fwhm=math.inf)
    jsa = evaluate_jsa(type2_spec, pump, GridSpec(points=128), check=False)
    phi = pm_function(type2_spec, jsa.omega_s[:, None], jsa.omega_i[None, :])
    assert np.allclose(jsa.amplitude, phi / np.abs(phi).max(), atol=1e-12)


def test_jsa_bounded_and_normalised(type2_spec, cw_pump):
    jsa = evaluate_jsa(type2_spec, cw_pump, GridSpec(points=512, span_factor=0.7))
    mag = np.abs(jsa.amplitude)
    assert mag.max() == pytest.approx(1.0, rel=1e-15)
    assert np.all(mag <= 1.0)
    assert np.all(np.diff(jsa.omega_s) > 0) and np.all(np.diff(jsa.omega_i) > 0)


def test_ridge_orientation_at_merge(type2_spec, cw_pump):
    jsa = evaluate_jsa(type2_spec.at_temperature(204.7), cw_pump)
    assert ridge_angle_deg(jsa) == pytest.approx(-45.0, abs=5.0)


def test_coarse_grid_detected(type2_spec, cw_pump):
    with pytest.raises(GridTooCoarse):
        evaluate_jsa(type2_spec, cw_pump, GridSpec(points=64, span_factor=3.0))


# --- marginals ---------------------------------------------------------------


def _synthetic_jsa(amplitude, spec, pump):
    n, m = amplitude.shape
    ws = spec.omega_s + TWO_PI * 1e10 * np.arange(n)
    wi = spec.omega_i + TWO_PI * 1e10 * np.arange(m)
    return JsaGrid(ws, wi, amplitude, spec, pump)


def test_separable_marginal(type2_spec, cw_pump):
    x = np.linspace(-3, 3, 64)
    g = np.exp(-x**2) + 0.1
    h = 1 / (1 + x**2)
    jsa = _synthetic_jsa(np.sqrt(np.outer(g, h)), type2_spec, cw_pump)
    assert np.allclose(marginal_signal_spectrum(jsa).intensity, g / g.max(), rtol=1e-12)
    assert np.allclose(marginal_idler_spectrum(jsa).intensity, h / h.max(), rtol=1e-12)


def test_marginal_energy_bookkeeping(type2_spec, cw_pump):
    jsa = evaluate_jsa(type2_spec.at_temperature(203.0), cw_pump, GridSpec(points=1024))
    ds = jsa.omega_s[1] - jsa.omega_s[0]
    di = jsa.omega_i[1] - jsa.omega_i[0]
    total = (np.abs(jsa.amplitude) ** 2).sum() * ds * di
    assert marginal_energy(jsa, "signal").sum() * ds == pytest.approx(total, rel=1e-12)
    assert marginal_energy(jsa, "idler").sum() * di == pytest.approx(total, rel=1e-12)


def test_marginal_metadata(type2_spec, cw_pump):
    trace = marginal_signal_spectrum(evaluate_jsa(type2_spec, cw_pump, GridSpec(points=256, span_factor=0.35)))
    assert trace.metadata["temperature_C"] == 205.0
    assert trace.metadata["pump_wavelength_nm"] == pytest.approx(517.4, rel=1e-12)
    assert trace.metadata["effective_length_mm"] == pytest.approx(25.0)
    assert trace.intensity.max() == 1.0 and trace.intensity.min() >= 0


def test_two_peaks_below_merge(type2_spec, cw_pump):
    trace = marginal_signal_spectrum(evaluate_jsa(type2_spec.at_temperature(202.0), cw_pump))
    res = fwhm_bandwidth(trace)
    assert not res.merged
    assert len(res.peak_positions_thz) == 2


# --- fwhm_bandwidth ----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(0.05, 5.0), n=st.integers(200, 3000))
def test_gaussian_fwhm(sigma, n):
    trace = gaussian_trace(sigma=sigma, n=n, span=8.0)
    expected = 2 * math.sqrt(2 * math.log(2)) * sigma
    assert fwhm_bandwidth(trace).bandwidth_thz == pytest.approx(expected, rel=0.005)


def _two_gaussians(sep, ratio=0.8, sigma=1.0, n=4001):
    x = np.linspace(-30, 30, n) + 360.0
    y = np.exp(-0.5 * ((x - 360.0 + sep / 2) / sigma) ** 2) + ratio * np.exp(-0.5 * ((x - 360.0 - sep / 2) / sigma) ** 2)
    return SpectrumTrace(x, y)


def test_separated_gaussians_not_merged():
    trace = _two_gaussians(sep=10.0)
    res = fwhm_bandwidth(trace)
    assert not res.merged
    # dominant peak alone: direct computation on the isolated lobe
    x = trace.frequency_thz
    single = SpectrumTrace(x, np.exp(-0.5 * ((x - 355.0) / 1.0) ** 2))
    assert res.bandwidth_thz == pytest.approx(fwhm_bandwidth(single).bandwidth_thz, rel=1e-6)
    assert res.peak_positions_thz == pytest.approx((355.0, 365.0), abs=0.02)


def test_close_gaussians_merged():
    res = fwhm_bandwidth(_two_gaussians(sep=2.2, ratio=1.0))
    assert res.merged
    assert res.valley >= 0.5
    assert res.bandwidth_thz > 2 * math.sqrt(2 * math.log(2))


def test_ripple_does_not_split_peak():
    trace = gaussian_trace(sigma=2.0, n=4001)
    x = trace.frequency_thz
    rippled = trace.intensity * (1 + 0.02 * np.sin(TWO_PI * x / 0.3))
    res = fwhm_bandwidth(SpectrumTrace(x, rippled / rippled.max()))
    assert res.merged and len(res.peak_positions_thz) == 1
    assert res.bandwidth_thz == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 2.0, rel=0.02)


def test_weak_side_lobe_ignored():
    x = np.linspace(-20, 20, 2001) + 360
    y = np.sinc((x - 360) / 3.0) ** 2
    res = fwhm_bandwidth(SpectrumTrace(x, y))
    assert res.merged and len(res.peak_positions_thz) == 1


def test_fwhm_errors():
    x = np.linspace(300, 301, 32)
    with pytest.raises(NoPeak):
        fwhm_bandwidth(SpectrumTrace(x, np.zeros(32)))
    with pytest.raises(NoPeak):
        fwhm_bandwidth(SpectrumTrace(x, np.ones(32)))
    with pytest.raises(ValueError):
        fwhm_bandwidth(SpectrumTrace(x[:8], np.arange(8.0)))
    with pytest.raises(SpanTooNarrow):
        fwhm_bandwidth(SpectrumTrace(x, np.linspace(0.6, 1.0, 32)))


def test_trace_validation():
    with pytest.raises(ValueError):
        SpectrumTrace(np.array([2.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SpectrumTrace(np.array([1.0, 2.0]), np.array([1.0, -1.0]))


def test_grid_refinement_stable(type2_spec, cw_pump):
    half = 3.0 * __import__("spdc_forge.jsa", fromlist=["x"]).estimate_pm_bandwidth(type2_spec)
    widths = []
    for points in (1024, 2048):
        jsa = evaluate_jsa(type2_spec.at_temperature(203.5), cw_pump, GridSpec(points=points, half_span=half))
        widths.append(fwhm_bandwidth(marginal_signal_spectrum(jsa)).bandwidth_thz)
    assert widths[0] == pytest.approx(widths[1], rel=0.01)


# --- correlation time -------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(0.2, 5.0))
def test_gaussian_transform_limit(sigma):
    ct = correlation_time(gaussian_trace(sigma=sigma, n=2001, span=10.0))
    assert ct.classical_tbp == pytest.approx(GAUSS_TBP, rel=0.01)
    assert ct.classical_tbp_angular == pytest.approx(TWO_PI * GAUSS_TBP, rel=0.01)
    # Gaussian amplitude FWHM is sqrt(2) wider than the intensity FWHM
    assert ct.delta_tau_amplitude_fwhm / ct.delta_tau_fwhm == pytest.approx(math.sqrt(2), rel=0.01)


def test_rectangular_transform_limit():
    x = np.linspace(340, 380, 4001)
    y = (np.abs(x - 360) <= 4.0).astype(float)
    ct = correlation_time(SpectrumTrace(x, y))
    # |FT|^2 of a top hat is sinc^2 with half maximum at 0.4429 / W
    assert ct.classical_tbp == pytest.approx(0.885894, rel=0.01)


def test_padding_changes_little():
    trace = gaussian_trace(sigma=1.3, n=1001, span=9.0)
    a = correlation_time(trace, pad_factor=4).delta_tau_fwhm
    b = correlation_time(trace, pad_factor=16).delta_tau_fwhm
    assert a == pytest.approx(b, rel=0.01)


def test_correlation_time_span_check():
    with pytest.raises(SpanTooNarrow):
        correlation_time(gaussian_trace(sigma=1.0, n=401, span=3.0))


def test_correlation_time_needs_uniform_axis():
    x = np.cumsum(np.linspace(1, 2, 400)) * 0.01 + 300
    with pytest.raises(ValueError):
        correlation_time(SpectrumTrace(x, np.exp(-((x - x.mean()) ** 2))))


# --- biphoton TBP -------------------------------------------------------------


def test_biphoton_value():
    res = biphoton_tbp(120e-15, 1e6, 0.93)
    assert res.value == 1.20e-7
    assert res.entangled


def test_biphoton_boundary_and_bilinear():
    assert not biphoton_tbp(1e-12, 0.5e12, 0.5).entangled
    base = biphoton_tbp(3e-13, 2e6, 1.0).value
    assert biphoton_tbp(6e-13, 4e6, 1.0).value == pytest.approx(4 * base, rel=1e-15)
    with pytest.raises(ValueError):
        biphoton_tbp(0.0, 1e6, 1.0)


# --- temperature sweep ------------------------------------------------------


def test_sweep_empty(type2_spec, cw_pump):
    assert temperature_sweep(type2_spec, cw_pump, []) == []


def test_sweep_order_and_threads(type2_spec, cw_pump):
    temps = [204.7, 203.0, 204.0]
    grid = GridSpec(points=1024, span_factor=1.5)
    a = temperature_sweep(type2_spec, cw_pump, temps, grid=grid, workers=1)
    b = temperature_sweep(type2_spec, cw_pump, temps, grid=grid, workers=3)
    assert [p.temperature for p in b] == temps
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.trace.intensity, pb.trace.intensity)


def test_sweep_effective_length(type2_spec, cw_pump):
    pts = temperature_sweep(type2_spec.with_length(0.04), cw_pump, [205.0], effective_length=0.025,
                            grid=GridSpec(points=512, span_factor=0.7))
    assert pts[0].trace.metadata["effective_length_mm"] == pytest.approx(25.0)


def test_peaks_approach_below_merge(type2_spec, cw_pump):
    pts = temperature_sweep(type2_spec, cw_pump, [198.0, 200.0, 202.0, 203.5, 204.3])
    gaps = []
    for p in pts:
        assert not p.fwhm.merged
        lo, hi = p.fwhm.peak_positions_thz
        gaps.append(hi - lo)
    assert np.all(np.diff(gaps) < 0)


def test_single_merge_transition(type2_spec, cw_pump):
    temps = [200.0, 203.0, 204.3, 204.7, 205.0, 205.3]
    flags = [p.fwhm.merged for p in temperature_sweep(type2_spec, cw_pump, temps)]
    rises = sum(1 for a, b in zip(flags, flags[1:]) if not a and b)
    assert rises == 1 and not flags[0]


# --- CSV ---------------------------------------------------------------------


def test_spectrum_csv_format(tmp_path):
    trace = gaussian_trace(sigma=1.0, n=101, span=5.0)
    path = tmp_path / "s.csv"
    write_spectrum_csv(trace, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "wavelength_nm,frequency_THz,intensity_norm"
    assert len(lines) == 102
    lam, nu, inten = lines[51].split(",")
    assert float(nu) == pytest.approx(350.0, rel=1e-9)
    assert len(lam.replace(".", "").lstrip("0")) <= 9


def test_sweep_csv_format(tmp_path, type2_spec, cw_pump):
    pts = temperature_sweep(type2_spec, cw_pump, [202.0, 205.0], grid=GridSpec(points=1024))
    path = tmp_path / "sum.csv"
    write_sweep_csv(pts, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "temperature_C,fwhm_THz,merged,peak1_nm,peak2_nm"
    row_split = lines[1].split(",")
    row_merged = lines[2].split(",")
    assert row_split[2] == "false" and float(row_split[3]) < float(row_split[4])
    assert row_merged[2] == "true" and row_merged[4] == ""
