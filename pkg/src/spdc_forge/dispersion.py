"""
Temperature-dependent dispersion of guided fields.

Every function takes the angular frequency in rad/s and the temperature in
degrees Celsius and accepts scalars or numpy arrays. Material coefficients
live in YAML data files (one file per named, versioned set) that are looked
up on the ``SPDC_FORGE_COEFF_DIR`` search path first and then among the
sets bundled with the package.

Coefficient file schema::

    name: <identifier>            # must match the file stem
    version: <int>
    polarization: ordinary | extraordinary
    formula: edwards_lawrence | jundt | constant | omega_polynomial
    coefficients: {<key>: <float>, ...}
    validity:
      wavelength_um: [min, max]
      temperature_C: [min, max]
    waveguide_shift: [d0, d1, ...]   # optional, see DispersionModel

Group delays are central finite differences with a relative step of 1e-6.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import yaml
from scipy.constants import c

from .errors import CoefficientSetError, OutOfValidityRange

__all__ = [
    "Polarization",
    "Role",
    "FieldLabel",
    "DispersionModel",
    "refractive_index",
    "beta",
    "inverse_group_velocity",
    "group_velocity_dispersion",
    "group_velocity_mismatch",
    "constant_index_model",
    "polynomial_index_model",
    "load_model",
    "available_models",
    "wavelength_to_omega",
    "omega_to_wavelength",
    "FD_RELATIVE_STEP",
]

ENV_COEFF_DIR = "SPDC_FORGE_COEFF_DIR"

FD_RELATIVE_STEP = 1e-6

# Polynomial terms in omega use rad/fs so coefficients stay O(1).
_OMEGA_UNIT = 1e15


class Polarization(str, enum.Enum):
    ORDINARY = "ordinary"
    EXTRAORDINARY = "extraordinary"


class Role(str, enum.Enum):
    PUMP = "pump"
    SIGNAL = "signal"
    IDLER = "idler"


@dataclass(frozen=True)
class FieldLabel:
    role: Role
    polarization: Polarization

    @staticmethod
    def process_type(signal: FieldLabel, idler: FieldLabel, pump: FieldLabel) -> str:
        """Classify a three-wave process from its polarizations.

        Returns ``"type-0"`` when all fields share a polarization,
        ``"type-II"`` when signal and idler are orthogonal and ``"type-I"``
        otherwise.
        """
        if signal.polarization != idler.polarization:
            return "type-II"
        if signal.polarization == pump.polarization:
            return "type-0"
        return "type-I"


def wavelength_to_omega(wavelength_m):
    return 2 * np.pi * c / np.asarray(wavelength_m, dtype=float)


def omega_to_wavelength(omega):
    return 2 * np.pi * c / np.asarray(omega, dtype=float)


def _edwards_lawrence(lam_um, temp_c, k):
    f = (temp_c - k["T0"]) * (temp_c + k["T0"] + 546.32)
    l2 = lam_um**2
    n2 = (
        k["A1"]
        + (k["A2"] + k["B1"] * f) / (l2 - (k["A3"] + k["B2"] * f) ** 2)
        + k["B3"] * f
        - k["A4"] * l2
    )
    return np.sqrt(n2)


def _jundt(lam_um, temp_c, k):
    f = (temp_c - 24.5) * (temp_c + 570.82)
    l2 = lam_um**2
    n2 = (
        k["a1"]
        + k["b1"] * f
        + (k["a2"] + k["b2"] * f) / (l2 - (k["a3"] + k["b3"] * f) ** 2)
        + (k["a4"] + k["b4"] * f) / (l2 - k["a5"] ** 2)
        - k["a6"] * l2
    )
    return np.sqrt(n2)


def _constant(lam_um, temp_c, k):
    return np.full(np.broadcast(lam_um, temp_c).shape, float(k["n"]))


def _omega_polynomial(lam_um, temp_c, k):
    # n = c0 + c1 w + c2 w^2 + ... with w in rad/fs
    w = 2 * np.pi * c / (lam_um * 1e-6) / _OMEGA_UNIT
    coeffs = [k[f"c{i}"] for i in range(len(k))]
    return np.polynomial.polynomial.polyval(w, coeffs) + 0 * temp_c


_FORMULAS: dict[str, tuple[Callable, frozenset]] = {
    "edwards_lawrence": (_edwards_lawrence, frozenset({"A1", "A2", "A3", "A4", "B1", "B2", "B3", "T0"})),
    "jundt": (_jundt, frozenset({"a1", "a2", "a3", "a4", "a5", "a6", "b1", "b2", "b3", "b4"})),
    "constant": (_constant, frozenset({"n"})),
    "omega_polynomial": (_omega_polynomial, None),
}


@dataclass(frozen=True, eq=True)
class DispersionModel:
    """Refractive index n(omega, T) of one polarization in one material.

    Attributes:
        name: Identifier of the coefficient set.
        polarization: Ordinary or extraordinary.
        formula: Key into the formula registry.
        coefficients: Named coefficients for ``formula``.
        wavelength_range_um: Closed validity interval in micrometres.
        temperature_range_c: Closed validity interval in degrees Celsius.
        waveguide_shift: Polynomial coefficients (d0, d1, ...) of an additive
            effective-index correction dn = d0 + d1 w + d2 w^2 + ..., with w
            the angular frequency in rad/fs. Empty means bulk material.
        version: Coefficient set version.
    """

    name: str
    polarization: Polarization
    formula: str
    coefficients: Mapping[str, float]
    wavelength_range_um: tuple[float, float]
    temperature_range_c: tuple[float, float]
    waveguide_shift: tuple[float, ...] = ()
    version: int = 1
    reference: str = field(default="", compare=False)

    def __post_init__(self):
        if self.formula not in _FORMULAS:
            raise CoefficientSetError(f"{self.name}: unknown formula {self.formula!r}")
        required = _FORMULAS[self.formula][1]
        if required is not None and set(self.coefficients) != required:
            raise CoefficientSetError(
                f"{self.name}: formula {self.formula!r} needs coefficients {sorted(required)}, "
                f"got {sorted(self.coefficients)}"
            )
        lo, hi = self.wavelength_range_um
        if not 0 < lo < hi:
            raise CoefficientSetError(f"{self.name}: bad wavelength range {self.wavelength_range_um}")
        tlo, thi = self.temperature_range_c
        if not tlo <= thi:
            raise CoefficientSetError(f"{self.name}: bad temperature range {self.temperature_range_c}")
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        object.__setattr__(self, "coefficients", dict(self.coefficients))
        object.__setattr__(self, "waveguide_shift", tuple(float(d) for d in self.waveguide_shift))

    @property
    def omega_range(self) -> tuple[float, float]:
        lo, hi = self.wavelength_range_um
        return float(wavelength_to_omega(hi * 1e-6)), float(wavelength_to_omega(lo * 1e-6))

    def with_waveguide_shift(self, *coeffs: float) -> DispersionModel:
        return replace(self, waveguide_shift=tuple(coeffs))

    def check_domain(self, omega, temperature) -> None:
        omega = np.asarray(omega, dtype=float)
        temperature = np.asarray(temperature, dtype=float)
        if not (np.all(np.isfinite(omega)) and np.all(omega > 0)):
            raise OutOfValidityRange(f"{self.name}: angular frequency must be finite and positive")
        lam_um = 2 * np.pi * c / omega * 1e6
        lo, hi = self.wavelength_range_um
        if lam_um.min() < lo or lam_um.max() > hi:
            raise OutOfValidityRange(
                f"{self.name}: wavelength {lam_um.min():.6g}-{lam_um.max():.6g} um "
                f"outside [{lo}, {hi}] um"
            )
        tlo, thi = self.temperature_range_c
        if not np.all(np.isfinite(temperature)) or temperature.min() < tlo or temperature.max() > thi:
            raise OutOfValidityRange(
                f"{self.name}: temperature {temperature.min():.6g}-{temperature.max():.6g} C "
                f"outside [{tlo}, {thi}] C"
            )


def refractive_index(model: DispersionModel, omega, temperature):
    """Effective refractive index, including any waveguide correction."""
    model.check_domain(omega, temperature)
    omega = np.asarray(omega, dtype=float)
    temperature = np.asarray(temperature, dtype=float)
    lam_um = 2 * np.pi * c / omega * 1e6
    n = _FORMULAS[model.formula][0](lam_um, temperature, model.coefficients)
    if model.waveguide_shift:
        n = n + np.polynomial.polynomial.polyval(omega / _OMEGA_UNIT, model.waveguide_shift)
    if np.ndim(n) == 0:
        return float(n)
    return n


def beta(model: DispersionModel, omega, temperature):
    """Propagation constant n(omega, T) * omega / c in rad/m."""
    return refractive_index(model, omega, temperature) * np.asarray(omega, dtype=float) / c


def inverse_group_velocity(model: DispersionModel, omega, temperature):
    """d(beta)/d(omega) in s/m by a central difference with step 1e-6 * omega."""
    omega = np.asarray(omega, dtype=float)
    h = FD_RELATIVE_STEP * omega
    k1 = (beta(model, omega + h, temperature) - beta(model, omega - h, temperature)) / (2 * h)
    if np.ndim(k1) == 0:
        return float(k1)
    return k1


def group_velocity_dispersion(model: DispersionModel, omega, temperature, rel_step: float = 1e-4):
    """Second derivative of beta in s^2/m (three-point stencil)."""
    omega = np.asarray(omega, dtype=float)
    h = rel_step * omega
    b_plus = beta(model, omega + h, temperature)
    b_minus = beta(model, omega - h, temperature)
    b_0 = beta(model, omega, temperature)
    return (b_plus - 2 * b_0 + b_minus) / h**2


def group_velocity_mismatch(model_s: DispersionModel, model_i: DispersionModel, omega_s, omega_i, temperature):
    """1/v_g,s - 1/v_g,i in s/m."""
    return inverse_group_velocity(model_s, omega_s, temperature) - inverse_group_velocity(
        model_i, omega_i, temperature
    )


def constant_index_model(
    n: float,
    polarization: Polarization | str = Polarization.EXTRAORDINARY,
    name: str | None = None,
    wavelength_range_um: tuple[float, float] = (0.2, 20.0),
    temperature_range_c: tuple[float, float] = (-273.15, 1000.0),
) -> DispersionModel:
    """Dispersionless medium, mostly useful as a test fixture."""
    return DispersionModel(
        name=name or f"constant_n{n:g}",
        polarization=polarization,
        formula="constant",
        coefficients={"n": float(n)},
        wavelength_range_um=wavelength_range_um,
        temperature_range_c=temperature_range_c,
    )


def polynomial_index_model(
    coeffs,
    polarization: Polarization | str = Polarization.EXTRAORDINARY,
    name: str = "omega_polynomial",
    wavelength_range_um: tuple[float, float] = (0.2, 20.0),
    temperature_range_c: tuple[float, float] = (-273.15, 1000.0),
) -> DispersionModel:
    """n(omega) = c0 + c1 w + c2 w^2 + ... with w in rad/fs."""
    return DispersionModel(
        name=name,
        polarization=polarization,
        formula="omega_polynomial",
        coefficients={f"c{i}": float(v) for i, v in enumerate(coeffs)},
        wavelength_range_um=wavelength_range_um,
        temperature_range_c=temperature_range_c,
    )


def _search_dirs(extra=None) -> list[Path]:
    dirs = []
    if extra:
        dirs.extend(Path(p) for p in extra)
    env = os.environ.get(ENV_COEFF_DIR)
    if env:
        dirs.extend(Path(p) for p in env.split(os.pathsep) if p)
    return dirs


def _bundled(name: str):
    ref = resources.files("spdc_forge") / "data" / f"{name}.yaml"
    return ref if ref.is_file() else None


def _parse_model(text: str, source: str, expected_name: str | None = None) -> DispersionModel:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CoefficientSetError(f"{source}: {exc}") from exc
    if not isinstance(raw, dict):
        raise CoefficientSetError(f"{source}: expected a mapping at top level")
    allowed = {"name", "version", "material", "polarization", "formula", "coefficients",
               "validity", "waveguide_shift", "reference"}
    unknown = set(raw) - allowed
    if unknown:
        raise CoefficientSetError(f"{source}: unknown keys {sorted(unknown)}")
    try:
        validity = raw["validity"]
        model = DispersionModel(
            name=raw["name"],
            polarization=Polarization(raw["polarization"]),
            formula=raw["formula"],
            coefficients={k: float(v) for k, v in raw["coefficients"].items()},
            wavelength_range_um=tuple(float(v) for v in validity["wavelength_um"]),
            temperature_range_c=tuple(float(v) for v in validity["temperature_C"]),
            waveguide_shift=tuple(raw.get("waveguide_shift", ())),
            version=int(raw.get("version", 1)),
            reference=str(raw.get("reference", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CoefficientSetError):
            raise
        raise CoefficientSetError(f"{source}: malformed coefficient set ({exc!r})") from exc
    if expected_name is not None and model.name != expected_name:
        raise CoefficientSetError(f"{source}: declares name {model.name!r}, expected {expected_name!r}")
    return model


def load_model(name: str, search_path=None) -> DispersionModel:
    """Load a named coefficient set.

    Directories in ``search_path`` are tried first, then ``SPDC_FORGE_COEFF_DIR``
    (``os.pathsep``-separated), then the bundled sets.
    """
    for d in _search_dirs(search_path):
        path = d / f"{name}.yaml"
        if path.is_file():
            return _parse_model(path.read_text(encoding="utf-8"), str(path), name)
    ref = _bundled(name)
    if ref is None:
        raise CoefficientSetError(f"coefficient set {name!r} not found")
    return _parse_model(ref.read_text(encoding="utf-8"), f"bundled:{name}", name)


def available_models(search_path=None) -> list[str]:
    names = set()
    for d in _search_dirs(search_path):
        if d.is_dir():
            names.update(p.stem for p in d.glob("*.yaml"))
    for entry in (resources.files("spdc_forge") / "data").iterdir():
        if entry.name.endswith(".yaml"):
            names.add(entry.name[: -len(".yaml")])
    return sorted(names)
