"""Physical model of the two-transmon device.

Holds the device parameter set, the flux-to-frequency maps of both qubits,
and the resonator-mediated coupling. All frequencies are angular (rad/s),
all times are seconds, and flux is expressed in units of the flux quantum.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, FluxDomainError, FrequencyRangeError, SingularityError

TWO_PI = 2.0 * math.pi

#: Index order of the two-qutrit computational-plus-leakage levels used
#: throughout the package for per-qubit readout: 0, 1, 2.
QUTRIT_LEVELS = (0, 1, 2)


def confusion_from_error(eps_ro: float) -> np.ndarray:
    """Default three-state readout confusion matrix for a scalar error.

    The diagonal is 1 - eps_ro and the error is split evenly between the
    two wrong outcomes, which is the least-informative completion of a
    single published readout-error number.
    """
    if not 0.0 <= eps_ro < 1.0:
        raise ConfigError(f"readout error must be in [0, 1), got {eps_ro}")
    m = np.full((3, 3), eps_ro / 2.0)
    np.fill_diagonal(m, 1.0 - eps_ro)
    return m


def _check_confusion(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ConfigError(f"{name} must be 3x3, got shape {m.shape}")
    if np.any(m < 0.0):
        raise ConfigError(f"{name} has negative entries")
    if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
        raise ConfigError(f"{name} rows must sum to 1 within 1e-12")
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class FluxFrequencyMap:
    """Qubit 0-1 transition frequency as a function of reduced flux.

    Uses the symmetric-SQUID transmon approximation
    ``w10(phi) = (w_max + |alpha|) * sqrt(cos(pi*phi)) - |alpha|``
    on the monotonic branch |phi| < 0.5. The map is even in flux and
    strictly decreasing in |phi|.
    """

    omega_max: float
    alpha: float

    def __post_init__(self):
        if self.omega_max <= 0.0:
            raise ConfigError("omega_max must be positive")
        if self.alpha >= 0.0:
            raise ConfigError("anharmonicity must be negative")

    def freq(self, flux):
        """Transition frequency w10 at the given flux (scalar or array)."""
        flux = np.asarray(flux, dtype=float)
        if np.any(np.abs(flux) >= 0.5):
            raise FluxDomainError("flux outside the branch |phi| < 0.5")
        a = abs(self.alpha)
        out = (self.omega_max + a) * np.sqrt(np.cos(np.pi * flux)) - a
        return out if out.ndim else float(out)

    def flux(self, omega):
        """Inverse of :meth:`freq` on the positive monotonic branch."""
        omega = np.asarray(omega, dtype=float)
        a = abs(self.alpha)
        if np.any(omega > self.omega_max * (1.0 + 1e-12)):
            raise FrequencyRangeError("frequency above the sweet-spot maximum")
        if np.any(omega <= -a):
            raise FrequencyRangeError("frequency below the branch minimum")
        ratio = np.clip((omega + a) / (self.omega_max + a), 0.0, 1.0)
        out = np.arccos(ratio**2) / np.pi
        return out if out.ndim else float(out)

    def dfreq_dflux(self, flux):
        """Derivative dw10/dphi, used to convert flux steps to detuning steps."""
        flux = np.asarray(flux, dtype=float)
        a = abs(self.alpha)
        c = np.cos(np.pi * flux)
        out = -(self.omega_max + a) * 0.5 * np.pi * np.sin(np.pi * flux) / np.sqrt(c)
        return out if out.ndim else float(out)


def flux_to_freq(fmap: FluxFrequencyMap, flux):
    """Transition frequency w10(phi); see :meth:`FluxFrequencyMap.freq`."""
    return fmap.freq(flux)


def freq_to_flux(fmap: FluxFrequencyMap, omega):
    """Flux on the positive branch giving w10 = omega; inverse of flux_to_freq."""
    return fmap.flux(omega)


@dataclass(frozen=True)
class ResonatorCoupling:
    """Transmon-resonator couplings and detunings of the coupling resonator.

    Detunings are resonator minus qubit frequency and must be deep in the
    dispersive regime, |g/Delta| < 0.1.
    """

    g_high: float
    g_low: float
    delta_high: float
    delta_low: float

    def __post_init__(self):
        if self.delta_high == 0.0 or self.delta_low == 0.0:
            raise SingularityError("resonator detuning must be nonzero")
        if max(abs(self.g_high / self.delta_high), abs(self.g_low / self.delta_low)) >= 0.1:
            raise ConfigError("couplings violate the dispersive condition |g/Delta| < 0.1")


def coupling_from_resonator(rc: ResonatorCoupling) -> tuple[float, float]:
    """Effective qubit-qubit couplings mediated by the resonator.

    Returns ``(g1, g2)`` where ``g1 = g_high*g_low*(1/Delta_high + 1/Delta_low)``
    is the splitting in the one-excitation subspace and ``g2 = sqrt(2)*g1``
    the splitting of the 11-20 resonance.
    """
    g1 = rc.g_high * rc.g_low * (1.0 / rc.delta_high + 1.0 / rc.delta_low)
    return g1, math.sqrt(2.0) * g1


@dataclass(frozen=True, eq=False)
class DeviceParams:
    """Full parameter set of the simulated two-transmon device.

    The high/low suffix refers to the qubit idling at the higher/lower
    frequency. ``j2`` is the coupling matrix element between the 11 and 20
    states (half the splitting g2). ``sigma_high``/``sigma_low`` are the
    Gaussian widths of the effective flux-line response of each qubit.
    """

    omega_idle_high: float
    omega_idle_low: float
    alpha_high: float
    alpha_low: float
    j2: float
    t1_high: float
    t1_low: float
    t1_2_high: float
    t1_2_low: float
    t_phi: float
    sigma_high: float
    sigma_low: float
    sample_period: float
    readout_confusion_high: np.ndarray = field(default_factory=lambda: np.eye(3))
    readout_confusion_low: np.ndarray = field(default_factory=lambda: np.eye(3))
    resonator: Optional[ResonatorCoupling] = None
    reference_values: Optional[dict] = None

    def __post_init__(self):
        for name in ("omega_idle_high", "omega_idle_low", "j2", "t1_high", "t1_low",
                     "t1_2_high", "t1_2_low", "t_phi", "sample_period"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("sigma_high", "sigma_low"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if self.alpha_high >= 0.0 or self.alpha_low >= 0.0:
            raise ConfigError("anharmonicities must be strictly negative")
        object.__setattr__(self, "readout_confusion_high",
                           _check_confusion(self.readout_confusion_high, "readout_confusion_high"))
        object.__setattr__(self, "readout_confusion_low",
                           _check_confusion(self.readout_confusion_low, "readout_confusion_low"))
        if self.resonator is not None:
            _, g2_res = coupling_from_resonator(self.resonator)
            if abs(g2_res - self.g2) > 1e-3 * abs(self.g2):
                raise ConfigError(
                    "resonator-derived coupling g2 = {:.6g} inconsistent with 2*j2 = {:.6g}".format(
                        g2_res, self.g2))

    # -- derived quantities -------------------------------------------------

    @property
    def g2(self) -> float:
        """Splitting of the 11-20 resonance, g2 = 2*J2."""
        return 2.0 * self.j2

    @property
    def j1(self) -> float:
        """One-excitation coupling matrix element, J1 = J2/sqrt(2)."""
        return self.j2 / math.sqrt(2.0)

    @property
    def map_high(self) -> FluxFrequencyMap:
        return FluxFrequencyMap(self.omega_idle_high, self.alpha_high)

    @property
    def map_low(self) -> FluxFrequencyMap:
        return FluxFrequencyMap(self.omega_idle_low, self.alpha_low)

    @property
    def delta_max(self) -> float:
        """Idle detuning between the 20 and 11 states (rad/s, positive)."""
        return self.omega_idle_high + self.alpha_high - self.omega_idle_low

    # -- serialization --------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceParams":
        """Build from a JSON document with unit-suffixed field names."""
        try:
            conf_h = (np.asarray(doc["readout_confusion_high"]) if "readout_confusion_high" in doc
                      else confusion_from_error(doc.get("readout_error_high", 0.0)))
            conf_l = (np.asarray(doc["readout_confusion_low"]) if "readout_confusion_low" in doc
                      else confusion_from_error(doc.get("readout_error_low", 0.0)))
            resonator = None
            if "resonator" in doc and doc["resonator"] is not None:
                r = doc["resonator"]
                resonator = ResonatorCoupling(
                    g_high=TWO_PI * 1e6 * r["g_high_mhz"],
                    g_low=TWO_PI * 1e6 * r["g_low_mhz"],
                    delta_high=TWO_PI * 1e9 * r["delta_high_ghz"],
                    delta_low=TWO_PI * 1e9 * r["delta_low_ghz"],
                )
            return cls(
                omega_idle_high=TWO_PI * 1e9 * doc["omega_idle_high_ghz"],
                omega_idle_low=TWO_PI * 1e9 * doc["omega_idle_low_ghz"],
                alpha_high=TWO_PI * 1e9 * doc["alpha_high_ghz"],
                alpha_low=TWO_PI * 1e9 * doc["alpha_low_ghz"],
                j2=TWO_PI * 1e6 * doc["j2_mhz"],
                t1_high=1e-6 * doc["t1_high_us"],
                t1_low=1e-6 * doc["t1_low_us"],
                t1_2_high=1e-6 * doc["t1_2_high_us"],
                t1_2_low=1e-6 * doc["t1_2_low_us"],
                t_phi=1e-6 * doc["t_phi_us"],
                sigma_high=1e-9 * doc["sigma_high_ns"],
                sigma_low=1e-9 * doc["sigma_low_ns"],
                sample_period=1e-9 * doc["sample_period_ns"],
                readout_confusion_high=conf_h,
                readout_confusion_low=conf_l,
                resonator=resonator,
                reference_values=doc.get("reference_values"),
            )
        except KeyError as exc:
            raise ConfigError(f"device document is missing field {exc}") from exc

    def to_dict(self) -> dict:
        doc = {
            "omega_idle_high_ghz": self.omega_idle_high / TWO_PI / 1e9,
            "omega_idle_low_ghz": self.omega_idle_low / TWO_PI / 1e9,
            "alpha_high_ghz": self.alpha_high / TWO_PI / 1e9,
            "alpha_low_ghz": self.alpha_low / TWO_PI / 1e9,
            "j2_mhz": self.j2 / TWO_PI / 1e6,
            "t1_high_us": self.t1_high * 1e6,
            "t1_low_us": self.t1_low * 1e6,
            "t1_2_high_us": self.t1_2_high * 1e6,
            "t1_2_low_us": self.t1_2_low * 1e6,
            "t_phi_us": self.t_phi * 1e6,
            "sigma_high_ns": self.sigma_high * 1e9,
            "sigma_low_ns": self.sigma_low * 1e9,
            "sample_period_ns": self.sample_period * 1e9,
            "readout_confusion_high": self.readout_confusion_high.tolist(),
            "readout_confusion_low": self.readout_confusion_low.tolist(),
        }
        if self.resonator is not None:
            doc["resonator"] = {
                "g_high_mhz": self.resonator.g_high / TWO_PI / 1e6,
                "g_low_mhz": self.resonator.g_low / TWO_PI / 1e6,
                "delta_high_ghz": self.resonator.delta_high / TWO_PI / 1e9,
                "delta_low_ghz": self.resonator.delta_low / TWO_PI / 1e9,
            }
        if self.reference_values is not None:
            doc["reference_values"] = self.reference_values
        return doc

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def default_device() -> DeviceParams:
    """The bundled default device configuration."""
    with resources.files("czidle.data").joinpath("default_device.json").open() as fh:
        return DeviceParams.from_dict(json.load(fh))
