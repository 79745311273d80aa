"""Polarization encoding chain and voltage-to-SNU calibration.

Jones vectors are complex arrays ``(h, v)`` with amplitudes in units of
sqrt(photon number).  The encoder sends a strong vertically polarized local
oscillator through an EOM whose axes sit at 45 degrees, then a quarter-wave
plate; the PBS + balanced detector measures ``|h|^2 - |v|^2``.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .formats import FormatError, dumps_kv, loads_kv

LINEARIZATION_LIMIT = 0.17  # rad; |sin t - t| / t < 0.5% below this


class CalibrationError(ValueError):
    pass


class LinearizationWarning(UserWarning):
    pass


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def retarder(phase):
    """Linear retarder in its own axes: phase delay on the second component."""
    return np.array([[1.0, 0.0], [0.0, np.exp(1j * phase)]], dtype=complex)


def quarter_wave_plate(angle=math.pi / 4):
    """QWP with fast axis at ``angle``: ``R(angle) diag(1, i) R(-angle)``."""
    return rotation(angle) @ retarder(math.pi / 2) @ rotation(-angle)


def eom(voltage, v_pi):
    """Electro-optic phase modulator: retardance ``pi U / V_pi``."""
    return retarder(math.pi * voltage / v_pi)


def propagate(element, light):
    return np.asarray(element, dtype=complex) @ np.asarray(light, dtype=complex)


def photon_number(light):
    light = np.asarray(light)
    return float(np.sum(np.abs(light) ** 2))


def is_unitary(element, tol=1e-12):
    m = np.asarray(element, dtype=complex)
    return bool(np.allclose(m.conj().T @ m, np.eye(2), atol=tol, rtol=0.0))


def same_up_to_global_phase(a, b, tol=1e-12):
    """Compare Jones vectors ignoring an overall phase factor."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    overlap = np.vdot(a, b)
    if abs(overlap) == 0.0:
        return bool(np.allclose(a, b, atol=tol))
    phase = overlap / abs(overlap)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    return bool(np.allclose(a * phase, b, atol=tol * scale, rtol=0.0))


def stokes_operators():
    """Single-photon Stokes operators ``(S0, S1, S2, S3)`` in the (H, V) basis.

    They obey ``[S_j, S_k] = 2i eps_jkl S_l`` for ``j, k, l`` in 1..3.
    """
    return np.array([
        [[1, 0], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
    ], dtype=complex)


def stokes_parameters(light):
    """Classical Stokes vector ``(S0, S1, S2, S3)`` of a Jones vector.

    Equals the expectation of :func:`stokes_operators` in ``light``.
    """
    h, v = np.asarray(light, dtype=complex)
    s0 = abs(h) ** 2 + abs(v) ** 2
    s1 = abs(h) ** 2 - abs(v) ** 2
    s2 = 2.0 * (np.conj(h) * v).real
    s3 = 2.0 * (np.conj(h) * v).imag
    return np.array([s0, s1, s2, s3])


def lo_in_eom_axes(a_lo):
    """Vertical LO of amplitude ``a_lo`` written in the 45-degree EOM eigenbasis."""
    return a_lo / math.sqrt(2.0) * np.array([1.0, 1.0], dtype=complex)


def encoder_output(voltage, v_pi, a_lo):
    """State leaving the QWP for EOM voltage ``voltage``."""
    light = propagate(eom(voltage, v_pi), lo_in_eom_axes(a_lo))
    return propagate(quarter_wave_plate(), light)


def detected_photon_difference(light):
    """Balanced-detector output ``|h|^2 - |v|^2`` after the PBS."""
    h, v = np.asarray(light)
    return float(abs(h) ** 2 - abs(v) ** 2)


def normalize_quadrature(photon_diff, lo_photons):
    """Stokes difference to SNU quadrature: ``2 n / sqrt(n_LO)``."""
    lo = np.asarray(lo_photons, dtype=np.float64)
    if np.any(lo <= 0.0):
        raise CalibrationError("LO photon number must be positive")
    out = 2.0 * np.asarray(photon_diff, dtype=np.float64) / np.sqrt(lo)
    return float(out) if np.ndim(out) == 0 else out


def linearization_error(theta):
    """Relative error ``|sin t - t| / |t|`` of the small-angle model."""
    theta = abs(float(theta))
    if theta == 0.0:
        return 0.0
    return abs(math.sin(theta) - theta) / theta


def check_linearization(sigma, v_pi):
    """Warn if a 3-sigma drive leaves the small-angle regime."""
    theta = 3.0 * sigma * math.pi / v_pi
    if theta > LINEARIZATION_LIMIT:
        warnings.warn(
            f"3-sigma EOM phase {theta:.3f} rad exceeds {LINEARIZATION_LIMIT} rad; "
            "the modulation is no longer linear in voltage", LinearizationWarning, stacklevel=2)
        return False
    return True


@dataclass(frozen=True)
class CalibrationRecord:
    """Raw-unit constants that tie DAQ voltages to shot-noise units.

    ``kappa = pi^2 V_LO^2 / (V_pi^2 N0)`` is stored explicitly: given any two
    of (``V_LO``, ``kappa``) with ``N0`` and ``V_pi`` the other is derived.
    """

    N0: float  # shot-noise variance, V^2
    Ve_snu: float
    V_pi: float
    sigma: float
    eta_det: float = 1.0
    V_LO: float | None = None
    kappa: float | None = None
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.N0 > 0.0:
            raise CalibrationError("N0 must be positive")
        if not self.V_pi > 0.0:
            raise CalibrationError("V_pi must be positive")
        if not 0.0 < self.eta_det <= 1.0:
            raise CalibrationError("eta_det must lie in (0, 1]")
        if self.Ve_snu < 0.0:
            raise CalibrationError("Ve_snu must be nonnegative")
        if self.sigma < 0.0:
            raise CalibrationError("sigma must be nonnegative")
        if self.V_LO is None and self.kappa is None:
            raise CalibrationError("need V_LO or kappa")
        if self.kappa is None:
            kappa = math.pi ** 2 * self.V_LO ** 2 / (self.V_pi ** 2 * self.N0)
            object.__setattr__(self, "kappa", kappa)
        elif self.V_LO is None:
            v_lo = self.V_pi * math.sqrt(self.kappa * self.N0) / math.pi
            object.__setattr__(self, "V_LO", v_lo)

    @classmethod
    def reference(cls):
        """Experimental constants: N0 = 15.4 mV^2, V_e = 0.0219, V_pi = 284 V,
        and V_M = 165 at sigma = 1 V (which fixes kappa = 165 V^-2)."""
        return cls(N0=15.4e-6, Ve_snu=0.0219, V_pi=284.0, sigma=1.0, eta_det=0.872,
                   kappa=165.0, source="reference")

    @property
    def lo_photons(self):
        """LO intensity in shot-noise-consistent photon units, ``V_LO^2 / (4 N0)``."""
        return self.kappa * self.V_pi ** 2 / (4.0 * math.pi ** 2)

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        if "V_LO" in changes and "kappa" not in changes:
            data["kappa"] = None
        if "kappa" in changes and "V_LO" not in changes:
            data["V_LO"] = None
        return type(self)(**data)

    def to_text(self):
        data = {k: v for k, v in asdict(self).items() if k != "source"}
        return dumps_kv({k: float(v) for k, v in data.items()})

    @classmethod
    def from_text(cls, text):
        kv = loads_kv(text)
        return cls.from_mapping(kv)

    @classmethod
    def from_mapping(cls, kv):
        names = ("N0", "Ve_snu", "V_pi", "sigma", "eta_det", "V_LO", "kappa")
        unknown = set(kv) - set(names)
        if unknown:
            raise FormatError(f"unknown calibration keys: {sorted(unknown)}")
        try:
            values = {k: float(kv[k]) for k in names if k in kv}
        except ValueError as exc:
            raise FormatError(f"non-numeric calibration value: {exc}") from exc
        missing = {"N0", "Ve_snu", "V_pi", "sigma"} - set(values)
        if missing:
            raise FormatError(f"missing calibration keys: {sorted(missing)}")
        return cls(**values)


def modulation_variance_from_calibration(cal):
    """``V_M = pi^2 Sigma^2 V_LO^2 / (V_pi^2 N0) = kappa Sigma^2`` in SNU."""
    if cal.N0 == 0.0:
        raise ZeroDivisionError("N0 = 0")
    return cal.kappa * cal.sigma ** 2


def alice_quadrature(voltage, cal, linearized=False):
    """SNU displacement prepared by EOM voltage(s) ``voltage``.

    Vectorised shortcut of ``normalize_quadrature(detected_photon_difference(
    encoder_output(U)), lo_photons)`` = ``2 sqrt(n_LO) sin(pi U / V_pi)``.
    """
    theta = np.pi * np.asarray(voltage, dtype=np.float64) / cal.V_pi
    s = theta if linearized else np.sin(theta)
    return 2.0 * math.sqrt(cal.lo_photons) * s
