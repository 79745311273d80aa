"""Channel-parameter estimators on Alice/Bob pulse data (all SNU)."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .formats import csv_text, dumps_kv
from .security import ProtocolParams

EPS_CLAMP = 0.01


class EstimationWarning(UserWarning):
    pass


@dataclass
class EstimationResult:
    T_hat: float
    eps_hat: float
    V_P1_hat: float = float("nan")
    T_raw: float = float("nan")  # (Cov/V_M)^2 before removing the detector
    n_used: dict = field(default_factory=dict)
    inputs_echo: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def degenerate(self):
        return "degenerate" in self.flags

    CSV_COLUMNS = ("T_hat", "T_raw", "eps_hat", "V_P1_hat", "n_estimation", "n_p_monitor",
                   "V_M", "V_e", "eta_e", "detector_in_T", "flags")

    def csv_row(self):
        e = self.inputs_echo
        return (self.T_hat, self.T_raw, self.eps_hat, self.V_P1_hat,
                self.n_used.get("channel", 0), self.n_used.get("p_monitor", 0),
                e.get("V_M"), e.get("V_e"), e.get("eta_e"), e.get("detector_in_T"),
                ";".join(self.flags))

    def to_csv(self):
        return csv_text(self.CSV_COLUMNS, [self.csv_row()])

    def to_text(self):
        return dumps_kv(dict(zip(self.CSV_COLUMNS, self.csv_row())))

    def to_params(self, base):
        """Protocol parameters with ``T``, ``eps``, ``V_P1`` replaced by estimates.

        Estimates are projected into the admissible range (``T`` in (0, 1],
        ``eps >= 0``).
        """
        if self.degenerate or not math.isfinite(self.eps_hat):
            raise ValueError("degenerate channel estimate; no key rate can be formed")
        changes = {"T": min(max(self.T_hat, 1e-12), 1.0), "eps": max(self.eps_hat, 0.0)}
        if math.isfinite(self.V_P1_hat):
            changes["V_P1"] = self.V_P1_hat
        if "V_M" in self.inputs_echo:
            changes["V_M"] = self.inputs_echo["V_M"]
        return base.replace(**changes)


def estimate_channel(x, y, V_M=None, V_e=0.0, eta=1.0, detector_in_T=False):
    """Transmittance and excess noise from correlated X-basis data.

    ``T_raw = (Cov(x, y) / V_M)^2`` and
    ``eps = (Var(y) - V_e - 1) / (eta T) - V_M``.  With ``detector_in_T``
    false (default) the reported ``T_hat = T_raw / eta`` is the channel
    transmittance alone and the excess noise divides by ``eta * T_hat``;
    with it true ``T_hat = T_raw`` already contains the detector and the
    excess noise divides by ``T_hat``.

    ``V_M=None`` uses Alice's sample variance of ``x``; a nominal value makes
    the estimate of ``eps`` scatter by roughly ``V_M sqrt(2/n)``.
    Sample moments use the unbiased ``n - 1`` normalisation.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d series of equal length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    cov = np.cov(x, y, ddof=1)
    var_x, c_xy, var_y = cov[0, 0], cov[0, 1], cov[1, 1]
    v_m = float(var_x) if V_M is None else float(V_M)
    if not v_m > 0.0:
        raise ValueError("V_M must be positive")

    flags = []
    echo = {"V_M": v_m, "V_e": V_e, "eta_e": eta, "detector_in_T": detector_in_T}
    t_raw = (c_xy / v_m) ** 2
    t_hat = t_raw if detector_in_T else t_raw / eta
    gain = t_hat if detector_in_T else eta * t_hat

    # correlation not resolvable above its own sampling error
    if t_raw == 0.0 or abs(c_xy) < 3.0 * math.sqrt(var_x * var_y / n):
        flags.append("degenerate")
        return EstimationResult(t_hat, float("nan"), T_raw=t_raw,
                                n_used={"channel": n}, inputs_echo=echo, flags=flags)

    eps = (var_y - V_e - 1.0) / gain - v_m
    if eps < 0.0:
        if eps >= -EPS_CLAMP:
            flags.append("eps_clamped")
            eps = 0.0
        else:
            flags.append("eps_suspicious")
            warnings.warn(f"excess-noise estimate {eps:.4g} is well below zero",
                          EstimationWarning, stacklevel=2)
    return EstimationResult(float(t_hat), float(eps), T_raw=float(t_raw),
                            n_used={"channel": n}, inputs_echo=echo, flags=flags)


def estimate_vp1(p_values, eta_e, V_e):
    """Invert the detector map on P-monitor data:
    ``(Var(p) - (1 - eta_e) - V_e) / eta_e``."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size < 2:
        raise ValueError("need at least two samples")
    v = (np.var(p, ddof=1) - (1.0 - eta_e) - V_e) / eta_e
    if v < 0.0:
        warnings.warn(f"V_P1 estimate {v:.4g} < 0: detector model inconsistent with data",
                      EstimationWarning, stacklevel=2)
    return float(v)


def estimate_session(batch, eta_e, V_e, V_M=None, detector_in_T=False):
    """Run both estimators on the estimation and P-monitor pulses of a batch."""
    from .simulation import ESTIMATION, P_MONITOR

    est = batch.mask(ESTIMATION)
    pm = batch.mask(P_MONITOR)
    bob = batch.bob_value
    res = estimate_channel(batch.alice_x[est], bob[est], V_M=V_M, V_e=V_e, eta=eta_e,
                           detector_in_T=detector_in_T)
    if pm.sum() >= 2:
        res.V_P1_hat = estimate_vp1(bob[pm], eta_e, V_e)
    res.n_used["p_monitor"] = int(pm.sum())
    return res


def params_from_estimate(result, base=None):
    return result.to_params(base if base is not None else ProtocolParams.reference())
