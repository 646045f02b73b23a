"""
Joint spectral amplitude on rectangular (omega_s, omega_i) grids.

The JSA is f = alpha(omega_s + omega_i) * phi(omega_s, omega_i), rescaled to
max |f| = 1. A CW pump is far narrower than any tractable grid step, so the
pump intensity is averaged over each cell's sum-frequency bin instead of
point-sampled. Summing such a row over the idler axis returns the full pump
energy, whether or not the grid resolves the pump.

Fourier convention for correlation times: non-unitary transform over the
ordinary frequency nu, F(t) = sum_nu A(nu) exp(-2 pi i nu t). Time-bandwidth
products are quoted as dtau * dnu; the angular equivalent is 2 pi times
larger. A transform-limited Gaussian gives dtau * dnu = 2 ln2 / pi ~ 0.441.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.constants import c
from scipy.signal import find_peaks
from scipy.special import erf, erfc

from .dispersion import group_velocity_dispersion, group_velocity_mismatch
from .errors import GridTooCoarse, NoPeak, SpanTooNarrow
from .phasematch import ProcessSpec, delta_beta, sinc_phase

__all__ = [
    "PumpModel",
    "GridSpec",
    "FrequencyGrid",
    "JsaGrid",
    "SpectrumTrace",
    "FwhmResult",
    "CorrelationTime",
    "BiphotonTbp",
    "SweepPoint",
    "make_grid",
    "estimate_pm_bandwidth",
    "evaluate_jsa",
    "marginal_signal_spectrum",
    "marginal_idler_spectrum",
    "marginal_energy",
    "fwhm_bandwidth",
    "correlation_time",
    "biphoton_tbp",
    "temperature_sweep",
    "is_merged",
    "ridge_angle_deg",
    "write_spectrum_csv",
    "write_sweep_csv",
    "write_jsa_csv",
]

_FWHM_PER_SIGMA = 2 * math.sqrt(2 * math.log(2))
# |L dbeta / 2| at which sinc^2 drops to one half
_SINC2_HALF = 1.3915573782515103
# at least 8 samples per sinc lobe (lobes are pi wide in L dbeta / 2)
_MAX_PHASE_STEP = math.pi / 8
_CSV_FMT = "{:.9g}"


@dataclass(frozen=True)
class PumpModel:
    """Gaussian pump spectrum.

    Attributes:
        center_omega: Pump centre [rad/s].
        linewidth_fwhm: Intensity FWHM [rad/s]. 0 means an ideal CW laser;
            ``inf`` means a flat pump (alpha = 1).
        linewidth_floor: Smallest width actually modelled [rad/s], 100 MHz by
            default. Narrower pumps are indistinguishable on any practical grid.
    """

    center_omega: float
    linewidth_fwhm: float = 0.0
    linewidth_floor: float = 2 * math.pi * 100e6
    shape: str = "gaussian"

    def __post_init__(self):
        if self.shape != "gaussian":
            raise ValueError(f"unsupported pump shape {self.shape!r}")
        if not self.linewidth_fwhm >= 0:
            raise ValueError("linewidth_fwhm must be >= 0")

    @property
    def effective_fwhm(self) -> float:
        return max(self.linewidth_fwhm, self.linewidth_floor)

    @property
    def sigma(self) -> float:
        return self.effective_fwhm / _FWHM_PER_SIGMA

    def intensity(self, omega):
        """|alpha|^2 at ``omega``, peak value 1."""
        omega = np.asarray(omega, dtype=float)
        if math.isinf(self.effective_fwhm):
            return np.ones_like(omega)
        return np.exp(-0.5 * ((omega - self.center_omega) / self.sigma) ** 2)

    def cell_intensity(self, omega, width: float):
        """|alpha|^2 averaged over [omega - width/2, omega + width/2].

        Equals ``intensity`` when the pump is much wider than ``width``.
        """
        omega = np.asarray(omega, dtype=float)
        if math.isinf(self.effective_fwhm):
            return np.ones_like(omega)
        s = self.sigma * math.sqrt(2)
        a = (omega - 0.5 * width - self.center_omega) / s
        b = (omega + 0.5 * width - self.center_omega) / s
        # erf is accurate near the centre, erfc in the tails
        with np.errstate(invalid="ignore"):
            mass = np.where(
                a >= 1,
                erfc(a) - erfc(b),
                np.where(b <= -1, erfc(-b) - erfc(-a), erf(b) - erf(a)),
            )
        return mass * (0.5 * s * math.sqrt(math.pi) / width)


@dataclass(frozen=True)
class GridSpec:
    """How to build a frequency grid around the process centres.

    Attributes:
        points: Samples per axis.
        half_span: Half-width of each axis [rad/s]; ``None`` picks
            ``span_factor`` times the estimated phase-matching FWHM.
        span_factor: Multiplier used when ``half_span`` is ``None``.
    """

    points: int = 2048
    half_span: float | None = None
    span_factor: float = 3.0


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    omega_s: np.ndarray
    omega_i: np.ndarray

    @property
    def step_s(self) -> float:
        return float(self.omega_s[1] - self.omega_s[0])

    @property
    def step_i(self) -> float:
        return float(self.omega_i[1] - self.omega_i[0])


@dataclass(frozen=True, eq=False)
class JsaGrid:
    """Complex JSA with ``amplitude[j, k]`` at (omega_s[j], omega_i[k])."""

    omega_s: np.ndarray
    omega_i: np.ndarray
    amplitude: np.ndarray
    spec: ProcessSpec
    pump: PumpModel


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    """Sampled 1-D intensity spectrum on an ascending frequency axis."""

    frequency_thz: np.ndarray
    intensity: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        freq = np.asarray(self.frequency_thz, dtype=float)
        inten = np.asarray(self.intensity, dtype=float)
        if freq.shape != inten.shape or freq.ndim != 1:
            raise ValueError("frequency and intensity must be 1-D arrays of equal length")
        if np.any(np.diff(freq) <= 0):
            raise ValueError("frequency axis must be strictly increasing")
        if np.any(inten < 0):
            raise ValueError("intensity must be nonnegative")
        object.__setattr__(self, "frequency_thz", freq)
        object.__setattr__(self, "intensity", inten)

    @property
    def wavelength_nm(self) -> np.ndarray:
        return c / (self.frequency_thz * 1e12) * 1e9


@dataclass(frozen=True)
class FwhmResult:
    bandwidth_thz: float
    merged: bool
    peak_positions_thz: tuple[float, ...]
    valley: float | None = None


@dataclass(frozen=True)
class CorrelationTime:
    """Transform-limited correlation time of a spectrum with flat phase.

    Attributes:
        delta_tau_fwhm: FWHM of |FT{sqrt(I)}|^2 [s].
        bandwidth_hz: FWHM of the spectrum in ordinary frequency [Hz].
        classical_tbp: delta_tau_fwhm * bandwidth_hz.
        classical_tbp_angular: Same product with angular bandwidth.
        delta_tau_amplitude_fwhm: FWHM of |FT{sqrt(I)}| [s], the alternative
            reading of "correlation time".
    """

    delta_tau_fwhm: float
    bandwidth_hz: float
    classical_tbp: float
    classical_tbp_angular: float
    delta_tau_amplitude_fwhm: float


@dataclass(frozen=True)
class BiphotonTbp:
    value: float
    entangled: bool


@dataclass(frozen=True, eq=False)
class SweepPoint:
    temperature: float
    trace: SpectrumTrace
    fwhm: FwhmResult


def estimate_pm_bandwidth(spec: ProcessSpec) -> float:
    """Rough FWHM [rad/s] of the marginal along the energy-conservation line.

    Uses the group-velocity mismatch (linear term) and the summed group
    velocity dispersion (quadratic term) at the centres; the narrower bound
    wins.
    """
    k1 = abs(group_velocity_mismatch(spec.signal, spec.idler, spec.omega_s, spec.omega_i, spec.temperature))
    k2 = 0.5 * abs(
        group_velocity_dispersion(spec.signal, spec.omega_s, spec.temperature)
        + group_velocity_dispersion(spec.idler, spec.omega_i, spec.temperature)
    )
    target = 2 * _SINC2_HALF / spec.length
    bounds = []
    if k1 > 0:
        bounds.append(target / k1)
    if k2 > 0:
        bounds.append(math.sqrt(target / k2))
    if not bounds:
        raise GridTooCoarse("cannot estimate a bandwidth for a dispersionless process; give half_span")
    return 2 * min(bounds)


def make_grid(spec: ProcessSpec, pump: PumpModel, grid: GridSpec | FrequencyGrid | None = None) -> FrequencyGrid:
    """Square grid with equal steps, centred so the anti-diagonal hits the pump centre.

    With an even number of points the cells with j + k = N - 1 sit exactly on
    omega_s + omega_i = pump centre.
    """
    if isinstance(grid, FrequencyGrid):
        return grid
    grid = grid or GridSpec()
    if grid.points < 16:
        raise ValueError("grid needs at least 16 points per axis")
    half = grid.half_span if grid.half_span is not None else grid.span_factor * estimate_pm_bandwidth(spec)
    offsets = np.linspace(-half, half, grid.points)
    ws0 = spec.omega_s
    wi0 = pump.center_omega - spec.omega_s
    return FrequencyGrid(omega_s=ws0 + offsets, omega_i=wi0 + offsets)


def _check_fringes(theta: np.ndarray, weight: np.ndarray, pump_resolved: bool) -> None:
    mask = weight > 1e-3
    # neighbours along the anti-diagonal share the same pump frequency
    ridge = np.abs(theta[1:, :-1] - theta[:-1, 1:])
    both = mask[1:, :-1] & mask[:-1, 1:]
    worst = float(ridge[both].max()) if both.any() else 0.0
    if pump_resolved:
        for axis in (0, 1):
            step = np.abs(np.diff(theta, axis=axis))
            m = mask[1:, :] & mask[:-1, :] if axis == 0 else mask[:, 1:] & mask[:, :-1]
            if m.any():
                worst = max(worst, float(step[m].max()))
    if worst > _MAX_PHASE_STEP:
        raise GridTooCoarse(
            f"phase-matching phase changes by {worst:.3f} rad between neighbouring cells "
            f"(limit {_MAX_PHASE_STEP:.3f}); refine the grid or narrow its span"
        )


def evaluate_jsa(
    spec: ProcessSpec,
    pump: PumpModel,
    grid: GridSpec | FrequencyGrid | None = None,
    check: bool = True,
) -> JsaGrid:
    """Evaluate f = alpha * phi on a grid and rescale to max |f| = 1.

    Raises:
        GridTooCoarse: fewer than 8 samples per sinc lobe where the pump is
            present (along the pump ridge always, across it only when the
            grid resolves the pump linewidth).
    """
    axes = make_grid(spec, pump, grid)
    ws, wi = axes.omega_s, axes.omega_i
    dbeta = delta_beta(spec, ws[:, None], wi[None, :])
    theta = 0.5 * spec.length * dbeta
    sums = ws[:, None] + wi[None, :]
    pump_int = pump.cell_intensity(sums, abs(axes.step_i))
    peak = pump_int.max()
    if not peak > 0:
        raise GridTooCoarse("pump frequency lies outside the grid")
    if check:
        resolved = pump.effective_fwhm >= 2 * max(abs(axes.step_s), abs(axes.step_i))
        _check_fringes(theta, pump_int / peak, resolved)
    amp = np.sqrt(pump_int) * sinc_phase(theta)
    norm = np.abs(amp).max()
    if not norm > 0:
        raise NoPeak("JSA vanishes everywhere on the grid")
    return JsaGrid(omega_s=ws, omega_i=wi, amplitude=amp / norm, spec=spec, pump=pump)


def marginal_energy(jsa: JsaGrid, axis: str = "signal") -> np.ndarray:
    """Unnormalised marginal: sum of |f|^2 times the step of the summed-out axis."""
    prob = np.abs(jsa.amplitude) ** 2
    if axis == "signal":
        return prob.sum(axis=1) * abs(jsa.omega_i[1] - jsa.omega_i[0])
    if axis == "idler":
        return prob.sum(axis=0) * abs(jsa.omega_s[1] - jsa.omega_s[0])
    raise ValueError(f"axis must be 'signal' or 'idler', got {axis!r}")


def _trace(omega: np.ndarray, raw: np.ndarray, jsa: JsaGrid) -> SpectrumTrace:
    peak = raw.max()
    if not peak > 0:
        raise NoPeak("marginal spectrum is zero")
    spec = jsa.spec
    meta = {
        "temperature_C": spec.temperature,
        "pump_wavelength_nm": 2 * math.pi * c / jsa.pump.center_omega * 1e9,
        "effective_length_mm": spec.length * 1e3,
    }
    return SpectrumTrace(frequency_thz=omega / (2 * math.pi) / 1e12, intensity=raw / peak, metadata=meta)


def marginal_signal_spectrum(jsa: JsaGrid) -> SpectrumTrace:
    return _trace(jsa.omega_s, marginal_energy(jsa, "signal"), jsa)


def marginal_idler_spectrum(jsa: JsaGrid) -> SpectrumTrace:
    return _trace(jsa.omega_i, marginal_energy(jsa, "idler"), jsa)


def _half_max_width(x: np.ndarray, y: np.ndarray, index: int) -> float:
    """Width of the contiguous region y >= y[index] / 2 around ``index``."""
    half = 0.5 * y[index]
    left = index
    while left > 0 and y[left - 1] >= half:
        left -= 1
    right = index
    while right < len(y) - 1 and y[right + 1] >= half:
        right += 1
    if left == 0 or right == len(y) - 1:
        raise SpanTooNarrow("half-maximum crossing lies outside the sampled range")
    x_left = x[left - 1] + (half - y[left - 1]) / (y[left] - y[left - 1]) * (x[left] - x[left - 1])
    x_right = x[right] + (y[right] - half) / (y[right] - y[right + 1]) * (x[right + 1] - x[right])
    return float(x_right - x_left)


def fwhm_bandwidth(trace: SpectrumTrace, prominence: float = 0.05) -> FwhmResult:
    """FWHM with the two-peak merge rule.

    Peaks are local maxima whose prominence is at least ``prominence`` times
    the global maximum. A second peak only competes with the global maximum
    if it reaches half of it; lower side lobes cannot satisfy the merge rule
    and never widen the FWHM, so such traces count as single-peaked. With a
    competing peak, the pair is merged if the minimum between the two is at
    least half the maximum. The width is measured between the outermost
    half-maximum crossings around the global maximum, which spans both peaks
    exactly when they are merged.
    """
    y = trace.intensity
    x = trace.frequency_thz
    if len(y) < 16:
        raise ValueError("trace needs at least 16 samples")
    top = float(y.max())
    if not top > 0 or top == float(y.min()):
        raise NoPeak("trace is zero or flat")
    g = int(np.argmax(y))
    peaks, props = find_peaks(y, prominence=prominence * top, plateau_size=1)
    others = [
        (p, prom)
        for p, prom, left, right in zip(peaks, props["prominences"], props["left_edges"], props["right_edges"])
        if not left <= g <= right and y[p] >= 0.5 * top
    ]
    width = _half_max_width(x, y, g)
    if not others:
        return FwhmResult(bandwidth_thz=width, merged=True, peak_positions_thz=(float(x[g]),))
    second = max(others, key=lambda item: (item[1], -item[0]))[0]
    lo, hi = sorted((g, second))
    valley = float(y[lo : hi + 1].min())
    return FwhmResult(
        bandwidth_thz=width,
        merged=valley >= 0.5 * top,
        peak_positions_thz=(float(x[lo]), float(x[hi])),
        valley=valley / top,
    )


def correlation_time(trace: SpectrumTrace, pad_factor: int = 16) -> CorrelationTime:
    """Correlation time from the Fourier transform of sqrt(I) with zero phase.

    The trace is zero-padded to at least ``pad_factor`` times its length
    (next power of two) to sample the transform finely.
    """
    nu = trace.frequency_thz * 1e12
    steps = np.diff(nu)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise ValueError("trace must be sampled uniformly in frequency")
    bandwidth = fwhm_bandwidth(trace).bandwidth_thz * 1e12
    if nu[-1] - nu[0] < 4 * bandwidth:
        raise SpanTooNarrow(f"span {(nu[-1] - nu[0]) / 1e12:.3g} THz < 4 x FWHM {bandwidth / 1e12:.3g} THz")
    amp = np.sqrt(trace.intensity)
    n = 1 << int(math.ceil(math.log2(pad_factor * len(amp))))
    field_t = np.fft.fftshift(np.fft.fft(amp, n))
    t = np.fft.fftshift(np.fft.fftfreq(n, d=steps[0]))
    mag = np.abs(field_t)
    power = mag**2
    dtau = _half_max_width(t, power, int(np.argmax(power)))
    dtau_amp = _half_max_width(t, mag, int(np.argmax(mag)))
    tbp = dtau * bandwidth
    return CorrelationTime(
        delta_tau_fwhm=dtau,
        bandwidth_hz=bandwidth,
        classical_tbp=tbp,
        classical_tbp_angular=2 * math.pi * tbp,
        delta_tau_amplitude_fwhm=dtau_amp,
    )


def biphoton_tbp(delta_tau: float, pump_linewidth: float, classical_tbp: float) -> BiphotonTbp:
    """Biphoton time-bandwidth product delta_tau * pump_linewidth.

    ``pump_linewidth`` is the pump FWHM in Hz (ordinary frequency), the same
    convention as ``CorrelationTime.classical_tbp``. The state counts as
    time-frequency entangled when the product is strictly below the classical
    limit.
    """
    if not (delta_tau > 0 and pump_linewidth > 0):
        raise ValueError("delta_tau and pump_linewidth must be positive")
    value = delta_tau * pump_linewidth
    return BiphotonTbp(value=value, entangled=value < classical_tbp)


def is_merged(spec: ProcessSpec, pump: PumpModel, grid=None) -> bool:
    jsa = evaluate_jsa(spec, pump, grid)
    return fwhm_bandwidth(marginal_signal_spectrum(jsa)).merged


def temperature_sweep(
    spec: ProcessSpec,
    pump: PumpModel,
    temperatures: Sequence[float],
    grid: GridSpec | FrequencyGrid | None = None,
    effective_length: float | None = None,
    workers: int | None = None,
) -> list[SweepPoint]:
    """Signal marginals and bandwidths at each temperature.

    The grid is fixed once from ``spec`` at its own temperature. With
    ``effective_length`` the phase matching uses that length instead of
    ``spec.length``. Results follow the order of ``temperatures``.
    """
    temperatures = [float(t) for t in temperatures]
    if not temperatures:
        return []
    if effective_length is not None:
        spec = spec.with_length(effective_length)
    axes = make_grid(spec, pump, grid)

    def run(temp):
        jsa = evaluate_jsa(spec.at_temperature(temp), pump, axes)
        trace = marginal_signal_spectrum(jsa)
        return SweepPoint(temperature=temp, trace=trace, fwhm=fwhm_bandwidth(trace))

    workers = workers or os.cpu_count() or 1
    if workers == 1:
        return [run(t) for t in temperatures]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, temperatures))


def ridge_angle_deg(jsa: JsaGrid) -> float:
    """Orientation of the principal axis of |f|^2, in (-90, 90] degrees.

    0 is along the signal axis; an anti-diagonal ridge gives -45.
    """
    w = np.abs(jsa.amplitude) ** 2
    total = w.sum()
    xs = (jsa.omega_s - jsa.omega_s.mean())[:, None]
    ys = (jsa.omega_i - jsa.omega_i.mean())[None, :]
    mx = (w * xs).sum() / total
    my = (w * ys).sum() / total
    cxx = (w * (xs - mx) ** 2).sum() / total
    cyy = (w * (ys - my) ** 2).sum() / total
    cxy = (w * (xs - mx) * (ys - my)).sum() / total
    vals, vecs = np.linalg.eigh(np.array([[cxx, cxy], [cxy, cyy]]))
    vx, vy = vecs[:, np.argmax(vals)]
    angle = math.degrees(math.atan2(vy, vx))
    if angle <= -90:
        angle += 180
    elif angle > 90:
        angle -= 180
    return angle


def _fmt(value: float) -> str:
    return _CSV_FMT.format(value)


def write_spectrum_csv(trace: SpectrumTrace, path) -> None:
    """Columns wavelength_nm, frequency_THz, intensity_norm; 9 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["wavelength_nm", "frequency_THz", "intensity_norm"])
        for lam, nu, inten in zip(trace.wavelength_nm, trace.frequency_thz, trace.intensity):
            writer.writerow([_fmt(lam), _fmt(nu), _fmt(inten)])


def write_sweep_csv(points: Sequence[SweepPoint], path) -> None:
    """Columns temperature_C, fwhm_THz, merged, peak1_nm, peak2_nm.

    Peaks are the dominant pair in ascending wavelength; peak2_nm is empty for
    a single peak.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["temperature_C", "fwhm_THz", "merged", "peak1_nm", "peak2_nm"])
        for p in points:
            peaks_nm = sorted(c / (f * 1e12) * 1e9 for f in p.fwhm.peak_positions_thz)
            cells = [_fmt(x) for x in peaks_nm] + [""] * (2 - len(peaks_nm))
            writer.writerow(
                [_fmt(p.temperature), _fmt(p.fwhm.bandwidth_thz), "true" if p.fwhm.merged else "false", *cells]
            )


def write_jsa_csv(jsa: JsaGrid, path, points: int = 256) -> None:
    """|f|^2 binned to about ``points`` x ``points`` cells, long format.

    Bins are sums over square blocks so a ridge narrower than a block is kept.
    Columns signal_THz, idler_THz, intensity_norm.
    """
    n = len(jsa.omega_s)
    block = max(1, n // points)
    m = (n // block) * block
    prob = np.abs(jsa.amplitude[:m, :m]) ** 2
    binned = prob.reshape(m // block, block, m // block, block).sum(axis=(1, 3))
    binned /= binned.max()
    fs = jsa.omega_s[:m].reshape(-1, block).mean(axis=1) / (2 * math.pi) / 1e12
    fi = jsa.omega_i[:m].reshape(-1, block).mean(axis=1) / (2 * math.pi) / 1e12
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["signal_THz", "idler_THz", "intensity_norm"])
        for j, s in enumerate(fs):
            for k, i in enumerate(fi):
                writer.writerow([_fmt(s), _fmt(i), _fmt(binned[j, k])])
