"""Pulse-level Monte Carlo of the free-space UD experiment.

Random numbers come from counter-based Philox streams keyed on
``(seed, block index)``, so a session is bit-identical whatever the number of
worker threads.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _kernels
from .formats import read_pulse_csv, write_pulse_csv
from .polarization import (CalibrationError, CalibrationRecord, alice_quadrature,
                           check_linearization, modulation_variance_from_calibration)

BLOCK_SIZE = 1 << 16

KEY, ESTIMATION, P_MONITOR, MARKER = 0, 1, 2, 3
ROLE_NAMES = ("key", "estimation", "p_monitor", "marker")
BASIS_NAMES = ("X", "P")

# residual P-basis leakage from a 0.1 V error on a 284 V half-wave voltage
DEFAULT_CROSSTALK = math.sin(math.pi * 0.1 / 284.0) ** 2


class ConfigError(ValueError):
    pass


class SyncError(ValueError):
    """No frame marker found in a sample stream."""


class PartialFrameError(ValueError):
    """Sample stream ends inside a frame; ``values`` holds the salvaged prefix."""

    def __init__(self, message, values):
        super().__init__(message)
        self.values = values


@dataclass(frozen=True)
class ChannelConfig:
    T: float = 0.575
    eps: float = 0.0375
    V_P1: float = 1.0
    fluctuation: float = 0.0  # std of log T for lognormal fading; 0 disables


@dataclass(frozen=True)
class DetectorConfig:
    eta_e: float = 0.872
    V_e: float = 0.0219


@dataclass(frozen=True)
class SimConfig:
    n_pulses: int = 500_000
    sigma_volts: float = 1.0
    seed: int = 0
    rep_rate_hz: float = 10_000.0
    sample_rate_hz: float = 1_000_000.0
    duty_cycle: float = 0.1
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    calibration: CalibrationRecord = field(default_factory=CalibrationRecord.reference)
    estimation_fraction: float = 0.2
    p_monitor_fraction: float = 0.2
    crosstalk: float = DEFAULT_CROSSTALK
    linearized: bool = False

    def __post_init__(self):
        if self.n_pulses < 0:
            raise ConfigError("n_pulses must be >= 0")
        if self.estimation_fraction < 0 or self.p_monitor_fraction < 0:
            raise ConfigError("role fractions must be nonnegative")
        if self.estimation_fraction + self.p_monitor_fraction >= 1.0:
            raise ConfigError("estimation and P-monitor fractions must sum to < 1")
        period = self.sample_rate_hz / self.rep_rate_hz
        window = self.duty_cycle * period
        if abs(period - round(period)) > 1e-9 or round(period) < 1:
            raise ConfigError(f"sample_rate / rep_rate = {period:g} is not an integer")
        if abs(window - round(window)) > 1e-9 or round(window) < 1:
            raise ConfigError(f"duty_cycle * samples per period = {window:g} "
                              "is not a positive integer")
        if not 0.0 < self.channel.T <= 1.0:
            raise ConfigError("channel T must lie in (0, 1]")
        if not 0.0 < self.detector.eta_e <= 1.0:
            raise ConfigError("eta_e must lie in (0, 1]")
        if self.detector.V_e < 0 or self.channel.eps < 0 or self.channel.fluctuation < 0:
            raise ConfigError("noise parameters must be nonnegative")

    @property
    def samples_per_period(self):
        return int(round(self.sample_rate_hz / self.rep_rate_hz))

    @property
    def samples_per_window(self):
        return int(round(self.duty_cycle * self.samples_per_period))

    @property
    def V_M(self):
        return modulation_variance_from_calibration(self.calibration.replace(
            sigma=self.sigma_volts))

    @property
    def volts_per_snu(self):
        return math.sqrt(self.calibration.N0)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class PulseRecord:
    index: int
    alice_x: float
    bob_value: float
    basis: str
    role: str
    raw_samples: tuple | None = None


@dataclass
class PulseBatch:
    """Columnar pulse data.  ``bob_volts`` is what Bob's DAQ records; the SNU
    value is derived from it so that a DAQ round-trip reproduces it exactly."""

    index: np.ndarray
    role: np.ndarray  # uint8 role codes
    alice_x: np.ndarray
    bob_volts: np.ndarray
    volts_per_snu: float

    @property
    def basis(self):
        return (self.role == P_MONITOR).astype(np.uint8)

    @property
    def bob_value(self):
        return self.bob_volts / self.volts_per_snu

    def __len__(self):
        return self.index.size

    def mask(self, role):
        return self.role == role

    def records(self):
        bob = self.bob_value
        basis = self.basis
        for i in range(len(self)):
            yield PulseRecord(int(self.index[i]), float(self.alice_x[i]), float(bob[i]),
                              BASIS_NAMES[basis[i]], ROLE_NAMES[self.role[i]])

    def take(self, sl):
        return PulseBatch(self.index[sl], self.role[sl], self.alice_x[sl],
                          self.bob_volts[sl], self.volts_per_snu)

    def with_bob_volts(self, volts):
        n = len(volts)
        return PulseBatch(self.index[:n], self.role[:n], self.alice_x[:n],
                          np.asarray(volts, dtype=np.float64), self.volts_per_snu)

    def to_csv(self, path_or_buf):
        write_pulse_csv(path_or_buf, self.index, [ROLE_NAMES[r] for r in self.role],
                        [BASIS_NAMES[b] for b in self.basis], self.alice_x, self.bob_value)

    @classmethod
    def from_csv(cls, path_or_buf, volts_per_snu=1.0):
        cols = read_pulse_csv(path_or_buf)
        codes = {name: k for k, name in enumerate(ROLE_NAMES)}
        try:
            role = np.array([codes[r] for r in cols["role"]], dtype=np.uint8)
        except KeyError as exc:
            raise ValueError(f"unknown pulse role {exc}") from exc
        return cls(cols["index"], role, cols["alice_x"],
                   cols["bob_value"] * volts_per_snu, volts_per_snu)


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _simulate_block(cfg, block, start, stop):
    rng = _block_rng(cfg.seed, block)
    n = stop - start
    # full-size draws keep every pulse's variates tied to its index alone,
    # so a short session is an exact prefix of a longer one
    u_role = rng.random(BLOCK_SIZE)[:n]
    volts = rng.normal(0.0, cfg.sigma_volts, BLOCK_SIZE)[:n]
    z_noise = rng.standard_normal(BLOCK_SIZE)[:n]
    z_fade = rng.standard_normal(BLOCK_SIZE)[:n]

    ch, det = cfg.channel, cfg.detector
    cal = cfg.calibration
    alice = alice_quadrature(volts, cal, linearized=cfg.linearized)

    if ch.fluctuation > 0.0:
        t = np.minimum(ch.T * np.exp(ch.fluctuation * z_fade), 1.0)
    else:
        t = np.full(n, ch.T)
    gain = np.sqrt(det.eta_e * t)

    role = np.full(n, KEY, dtype=np.uint8)
    role[u_role < cfg.estimation_fraction + cfg.p_monitor_fraction] = P_MONITOR
    role[u_role < cfg.estimation_fraction] = ESTIMATION
    is_p = role == P_MONITOR

    x_noise = np.sqrt(1.0 + det.eta_e * t * ch.eps + det.V_e)
    p_noise = math.sqrt(det.eta_e * ch.V_P1 + 1.0 - det.eta_e + det.V_e)
    bob = np.where(is_p,
                   math.sqrt(cfg.crosstalk) * gain * alice + p_noise * z_noise,
                   gain * alice + x_noise * z_noise)
    index = np.arange(start, stop, dtype=np.int64)
    return index, role, alice, bob * cfg.volts_per_snu


def simulate_session(cfg, workers=1):
    """Generate ``cfg.n_pulses`` payload pulses.

    X basis: ``bob = sqrt(eta_e T) alice + N(0, 1 + eta_e T eps + V_e)``;
    P-monitor pulses: ``N(0, eta_e V_P1 + 1 - eta_e + V_e)`` plus a tiny
    crosstalk leak of the modulation.
    """
    check_linearization(cfg.sigma_volts, cfg.calibration.V_pi)
    bounds = [(b, s, min(s + BLOCK_SIZE, cfg.n_pulses))
              for b, s in enumerate(range(0, cfg.n_pulses, BLOCK_SIZE))]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _simulate_block(cfg, *a), bounds))
    else:
        parts = [_simulate_block(cfg, *a) for a in bounds]
    if not parts:
        empty = np.empty(0)
        return PulseBatch(np.empty(0, np.int64), np.empty(0, np.uint8), empty, empty,
                          cfg.volts_per_snu)
    index, role, alice, volts = (np.concatenate(c) for c in zip(*parts))
    return PulseBatch(index, role, alice, volts, cfg.volts_per_snu)


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameLayout:
    marker_pulses: int = 5
    marker_level_volts: float = 10.0
    threshold_volts: float = 5.0
    payload_length: int | None = None


def frame_encode(bob_volts, cfg, layout=FrameLayout(), lead_in=0):
    """DAQ trace of one frame: marker pulses, then one duty window per pulse.

    Idle samples outside the duty window are 0 V.  ``lead_in`` idle samples
    precede the marker.
    """
    if isinstance(bob_volts, PulseBatch):
        bob_volts = bob_volts.bob_volts
    values = np.asarray(bob_volts, dtype=np.float64)
    period, width = cfg.samples_per_period, cfg.samples_per_window
    levels = np.concatenate((np.full(layout.marker_pulses, layout.marker_level_volts),
                             values))
    frame = np.zeros((levels.size, period))
    frame[:, :width] = levels[:, None]
    return np.concatenate((np.zeros(lead_in), frame.ravel()))


def frame_decode(samples, cfg, layout=FrameLayout(), side_info=None):
    """Locate the marker and average each payload duty window.

    Returns Bob's per-pulse voltages, or a :class:`PulseBatch` when
    ``side_info`` (Alice's values, roles) is supplied.
    """
    samples = np.asarray(samples, dtype=np.float64)
    period, width = cfg.samples_per_period, cfg.samples_per_window
    start = _kernels.find_marker(samples, layout.threshold_volts, period, width,
                                 layout.marker_pulses)
    if start < 0:
        raise SyncError(f"no run of {layout.marker_pulses} marker pulses above "
                        f"{layout.threshold_volts:g} V")
    payload = start + layout.marker_pulses * period
    remaining = samples.size - payload
    n_full = max(remaining, 0) // period
    ragged = remaining - n_full * period
    # a trailing window that fits but whose idle tail is cut is still usable
    n_windows = n_full + (1 if ragged >= width else 0)
    if layout.payload_length is not None:
        n_windows = min(n_windows, layout.payload_length)
    starts = payload + period * np.arange(n_windows, dtype=np.int64)
    volts = _kernels.window_means(samples, starts, width)
    out = volts if side_info is None else side_info.with_bob_volts(volts)
    expected = layout.payload_length
    if (expected is not None and n_windows < expected) or (expected is None and 0 < ragged < width):
        raise PartialFrameError(
            f"frame truncated after {n_windows} complete pulses", out)
    return out


# ---------------------------------------------------------------------------
# Shot-noise calibration
# ---------------------------------------------------------------------------

class CalibrationRun(NamedTuple):
    N0: float
    Ve_snu: float
    var_off: float
    var_on: float
    n_samples: int


def calibrate_from_samples(laser_off, laser_on):
    """Shot noise ``N0 = Var(on) - Var(off)`` and ``V_e = Var(off) / N0``."""
    off = np.asarray(laser_off, dtype=np.float64)
    on = np.asarray(laser_on, dtype=np.float64)
    if off.size < 2 or on.size < 2:
        raise CalibrationError("need at least two samples per acquisition")
    var_off = float(np.var(off, ddof=1))
    var_on = float(np.var(on, ddof=1))
    n0 = var_on - var_off
    if not n0 > 0.0:
        raise CalibrationError(
            f"laser-on variance {var_on:.4g} does not exceed laser-off {var_off:.4g}")
    return CalibrationRun(n0, var_off / n0, var_off, var_on, min(off.size, on.size))


def calibration_acquisitions(N0, Ve_snu, n_samples, seed):
    """Synthetic laser-off and laser-on DAQ traces in volts."""
    off = _block_rng(seed, 2**32 + 0).normal(0.0, math.sqrt(Ve_snu * N0), n_samples)
    on = _block_rng(seed, 2**32 + 1).normal(0.0, math.sqrt(N0 * (1.0 + Ve_snu)), n_samples)
    return off, on


def shot_noise_calibration_run(cfg, n_samples=1_000_000):
    """Simulate both calibration acquisitions and recover ``(N0, V_e)``."""
    cal = cfg.calibration
    off, on = calibration_acquisitions(cal.N0, cal.Ve_snu, n_samples, cfg.seed)
    return calibrate_from_samples(off, on)
