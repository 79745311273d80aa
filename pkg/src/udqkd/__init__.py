"""Unidimensional polarization-encoded CV-QKD: simulation and key-rate analysis."""

from .cvmath import (condition_on_homodyne, g_entropy, holevo_from_spectra, is_physical,
                     symplectic_eigenvalues)
from .polarization import CalibrationRecord, modulation_variance_from_calibration
from .security import (KeyRateReport, ProtocolParams, gg02_key_rate, sweep_transmittance,
                       ud_key_rate)
from .simulation import SimConfig, simulate_session
from .estimation import EstimationResult, estimate_channel, estimate_vp1

__version__ = "0.1.0"

__all__ = [
    "CalibrationRecord", "EstimationResult", "KeyRateReport", "ProtocolParams", "SimConfig",
    "condition_on_homodyne", "estimate_channel", "estimate_vp1", "g_entropy", "gg02_key_rate",
    "holevo_from_spectra", "is_physical", "modulation_variance_from_calibration",
    "simulate_session", "sweep_transmittance", "symplectic_eigenvalues", "ud_key_rate",
]
