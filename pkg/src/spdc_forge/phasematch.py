"""
Phase mismatch, the sinc phase-matching function and design solvers.

Sign convention: delta_beta = beta_p - beta_s - beta_i - m * 2 pi / Lambda,
with pump minus daughters and a grating order m = +1 or -1 so that the
poling period Lambda is always positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .dispersion import (
    DispersionModel,
    FieldLabel,
    Role,
    beta,
    group_velocity_mismatch,
    omega_to_wavelength,
)
from .errors import DegenerateMismatch, NoMergeInBracket, NoRootInBracket

__all__ = [
    "ProcessSpec",
    "GvmSolution",
    "PolingPeriod",
    "delta_beta",
    "zeroth_order_mismatch",
    "pm_function",
    "sinc_phase",
    "solve_poling_period",
    "solve_gvm_triple",
    "find_merge_temperature",
    "DEFAULT_GVM_TOL",
]

DEFAULT_GVM_TOL = 1e-16  # s/m, about 0.1 fs/mm


@dataclass(frozen=True)
class ProcessSpec:
    """A collinear three-wave down-conversion process.

    The pump centre is always ``omega_s + omega_i`` so energy conservation at
    the centres holds by construction.

    Attributes:
        pump, signal, idler: Dispersion models of the three fields.
        omega_s, omega_i: Central angular frequencies of signal and idler [rad/s].
        length: Interaction length [m].
        temperature: Crystal temperature [degC].
        poling_period: Quasi-phase-matching period [m]; ``inf`` means unpoled.
        grating_order: +1 or -1, direction of the grating vector.
    """

    pump: DispersionModel
    signal: DispersionModel
    idler: DispersionModel
    omega_s: float
    omega_i: float
    length: float
    temperature: float
    poling_period: float = math.inf
    grating_order: int = 1

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("length must be positive")
        if not self.poling_period > 0:
            raise ValueError("poling_period must be positive (use inf for no poling)")
        if self.grating_order not in (1, -1):
            raise ValueError("grating_order must be +1 or -1")

    @property
    def omega_p(self) -> float:
        return self.omega_s + self.omega_i

    @property
    def grating_vector(self) -> float:
        if math.isinf(self.poling_period):
            return 0.0
        return self.grating_order * 2 * math.pi / self.poling_period

    @property
    def labels(self) -> dict[Role, FieldLabel]:
        return {
            Role.PUMP: FieldLabel(Role.PUMP, self.pump.polarization),
            Role.SIGNAL: FieldLabel(Role.SIGNAL, self.signal.polarization),
            Role.IDLER: FieldLabel(Role.IDLER, self.idler.polarization),
        }

    @property
    def process_type(self) -> str:
        labels = self.labels
        return FieldLabel.process_type(labels[Role.SIGNAL], labels[Role.IDLER], labels[Role.PUMP])

    def at_temperature(self, temperature: float) -> ProcessSpec:
        return replace(self, temperature=float(temperature))

    def with_length(self, length: float) -> ProcessSpec:
        return replace(self, length=float(length))


@dataclass(frozen=True)
class GvmSolution:
    omega_p: float
    omega_s: float
    omega_i: float
    residual_gvm: float
    poling_period: float
    grating_order: int
    temperature: float

    @property
    def wavelengths_nm(self) -> tuple[float, float, float]:
        """(pump, signal, idler) vacuum wavelengths in nm."""
        return tuple(float(omega_to_wavelength(w)) * 1e9 for w in (self.omega_p, self.omega_s, self.omega_i))


class PolingPeriod(NamedTuple):
    period: float
    order: int


def zeroth_order_mismatch(pump, signal, idler, omega_s, omega_i, temperature):
    """beta_p(omega_s + omega_i) - beta_s(omega_s) - beta_i(omega_i), no grating term."""
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    return (
        beta(pump, omega_s + omega_i, temperature)
        - beta(signal, omega_s, temperature)
        - beta(idler, omega_i, temperature)
    )


def delta_beta(spec: ProcessSpec, omega_s, omega_i):
    """Phase mismatch in rad/m at (omega_s, omega_i), grating vector included."""
    mismatch = zeroth_order_mismatch(spec.pump, spec.signal, spec.idler, omega_s, omega_i, spec.temperature)
    return mismatch - spec.grating_vector


def sinc_phase(x):
    """sinc(x) exp(i x) with sinc(x) = sin(x)/x and sinc(0) = 1."""
    x = np.asarray(x, dtype=float)
    return np.sinc(x / np.pi) * np.exp(1j * x)


def pm_function(spec: ProcessSpec, omega_s, omega_i):
    return sinc_phase(0.5 * spec.length * delta_beta(spec, omega_s, omega_i))


def solve_poling_period(
    pump: DispersionModel,
    signal: DispersionModel,
    idler: DispersionModel,
    omega_s: float,
    omega_i: float,
    temperature: float,
    rtol: float = 1e-12,
) -> PolingPeriod:
    """First-order poling period that cancels the mismatch at the centres.

    Raises:
        DegenerateMismatch: if |mismatch| <= rtol * beta_p, i.e. the process
            is already phase matched without poling.
    """
    mismatch = float(zeroth_order_mismatch(pump, signal, idler, omega_s, omega_i, temperature))
    scale = float(beta(pump, omega_s + omega_i, temperature))
    if abs(mismatch) <= rtol * scale:
        raise DegenerateMismatch(f"zeroth-order mismatch {mismatch:.3e} rad/m needs no poling")
    return PolingPeriod(2 * math.pi / abs(mismatch), 1 if mismatch > 0 else -1)


def _scan_interval(lo: float, hi: float, margin: float = 1e-5) -> tuple[float, float]:
    # keep the finite-difference stencil inside the validity range
    return lo * (1 + margin), hi * (1 - margin)


def solve_gvm_triple(
    pump: DispersionModel,
    signal: DispersionModel,
    idler: DispersionModel,
    temperature: float,
    *,
    omega_p: float | None = None,
    omega_s: float | None = None,
    omega_i: float | None = None,
    tol: float = DEFAULT_GVM_TOL,
    scan_points: int = 512,
    bracket: tuple[float, float] | None = None,
) -> GvmSolution:
    """Find {omega_p, omega_s, omega_i} with equal signal and idler group velocities.

    Exactly one of ``omega_p``, ``omega_s``, ``omega_i`` is held fixed. The free
    split is scanned on ``scan_points`` samples across the intersection of the
    validity ranges; the first sign change of the group-velocity mismatch, in
    ascending order of the free frequency, is refined with Brent's method.
    Group indices are not monotone across the transparency window, so more
    than one split can match; ``bracket`` (rad/s, on the free frequency:
    signal when the pump or idler is fixed, idler when the signal is fixed)
    narrows the scan to the wanted one.
    """
    fixed = [(k, v) for k, v in (("pump", omega_p), ("signal", omega_s), ("idler", omega_i)) if v is not None]
    if len(fixed) != 1:
        raise ValueError("exactly one of omega_p, omega_s, omega_i must be given")
    which, w_fixed = fixed[0]
    w_fixed = float(w_fixed)

    s_lo, s_hi = signal.omega_range
    i_lo, i_hi = idler.omega_range
    p_lo, p_hi = pump.omega_range

    if which == "pump":
        pump.check_domain(w_fixed, temperature)
        if signal == idler:
            return _finish(pump, signal, idler, w_fixed / 2, w_fixed / 2, temperature)
        lo, hi = max(s_lo, w_fixed - i_hi), min(s_hi, w_fixed - i_lo)

        def split(x):
            return x, w_fixed - x
    elif which == "signal":
        signal.check_domain(w_fixed, temperature)
        if signal == idler:
            return _finish(pump, signal, idler, w_fixed, w_fixed, temperature)
        lo, hi = max(i_lo, p_lo - w_fixed), min(i_hi, p_hi - w_fixed)

        def split(x):
            return w_fixed, x
    else:
        idler.check_domain(w_fixed, temperature)
        if signal == idler:
            return _finish(pump, signal, idler, w_fixed, w_fixed, temperature)
        lo, hi = max(s_lo, p_lo - w_fixed), min(s_hi, p_hi - w_fixed)

        def split(x):
            return x, w_fixed

    if bracket is not None:
        lo, hi = max(lo, min(bracket)), min(hi, max(bracket))
    if not lo < hi:
        raise NoRootInBracket("no frequency split keeps all fields inside their validity ranges")
    lo, hi = _scan_interval(lo, hi)

    def mismatch(x):
        ws, wi = split(x)
        return group_velocity_mismatch(signal, idler, ws, wi, temperature)

    xs = np.linspace(lo, hi, scan_points)
    ws, wi = split(xs)
    values = group_velocity_mismatch(signal, idler, ws, wi, temperature)
    root = None
    for k in range(scan_points - 1):
        if values[k] == 0.0:
            root = xs[k]
            break
        if np.sign(values[k]) != np.sign(values[k + 1]):
            root = brentq(mismatch, xs[k], xs[k + 1], xtol=1e-9 * xs[k], rtol=4 * np.finfo(float).eps)
            break
    if root is None:
        raise NoRootInBracket(
            f"group-velocity mismatch keeps its sign for {signal.name}/{idler.name} at {temperature} C"
        )
    ws, wi = split(root)
    solution = _finish(pump, signal, idler, ws, wi, temperature)
    if not abs(solution.residual_gvm) < tol:
        raise NoRootInBracket(f"GVM residual {solution.residual_gvm:.3e} s/m above tolerance {tol:.1e}")
    return solution


def _finish(pump, signal, idler, ws, wi, temperature) -> GvmSolution:
    ws, wi = float(ws), float(wi)
    pump.check_domain(ws + wi, temperature)
    residual = float(group_velocity_mismatch(signal, idler, ws, wi, temperature))
    try:
        period, order = solve_poling_period(pump, signal, idler, ws, wi, temperature)
    except DegenerateMismatch:
        period, order = math.inf, 1
    return GvmSolution(
        omega_p=ws + wi,
        omega_s=ws,
        omega_i=wi,
        residual_gvm=residual,
        poling_period=period,
        grating_order=order,
        temperature=float(temperature),
    )


def find_merge_temperature(
    spec: ProcessSpec,
    bracket: tuple[float, float],
    pump=None,
    grid=None,
    resolution: float = 0.05,
) -> float:
    """Lowest temperature at which the two marginal peaks count as merged.

    Bisects on the merged flag of the signal marginal. The low end of the
    bracket must give two separate peaks and the high end a merged (or
    single) peak.

    Returns:
        Upper end of the final bisection interval, which is at most
        ``resolution`` wide.
    """
    from .jsa import PumpModel, is_merged, make_grid

    if pump is None:
        pump = PumpModel(center_omega=spec.omega_p)
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise ValueError("bracket must be increasing")
    axes = make_grid(spec, pump, grid)

    def merged(temp):
        return is_merged(spec.at_temperature(temp), pump, axes)

    if merged(lo):
        raise NoMergeInBracket(f"peaks already merged at {lo} C")
    if not merged(hi):
        raise NoMergeInBracket(f"peaks still separate at {hi} C")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if merged(mid):
            hi = mid
        else:
            lo = mid
    return hi
