"""Collective-attack asymptotic key rates for unidimensional and GG02 CV-QKD.

Reverse reconciliation, homodyne detection of the modulated (x) quadrature.
Bob's detector inefficiency and electronic noise are trusted.

Two conditioning modes are offered for Eve's conditional entropy:

``schur-detector`` (default)
    The detector is dilated into a beamsplitter of transmittance ``eta_e``
    that mixes Bob's mode with one half of an EPR pair (modes F, G) of
    variance ``1 + V_e / (1 - eta_e)``.  The joint spectrum is that of the full
    dilated state (equal to the spectrum of the channel output plus two unit
    eigenvalues) and the conditional spectrum is the Schur complement of the
    dilated matrix on Bob's x quadrature, i.e. ``S(A F G | x_B)``.
``paper-eq``
    Joint spectrum of the 4x4 detector-dressed matrix, conditional spectrum
    from the closed-form ``gamma_{A|x_B}`` that ignores the detector.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import cvmath
from .formats import csv_text

MODES = ("schur-detector", "paper-eq")
DEFAULT_MODE = "schur-detector"

CP_TOL = 1e-6  # SNU, bisection width for the physical C_p interval
FEASIBILITY_TOL = 1e-10
# eta_e = 1 with V_e > 0 is evaluated as this limit of the dilation
_ETA_LIMIT = 1.0 - 1e-5
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleError(ValueError):
    """No value of the unknown correlation makes the state physical."""


@dataclass(frozen=True)
class ProtocolParams:
    """Scalars entering the key rate.  Variances are in SNU; ``eps`` is
    referred to the channel input."""

    V_M: float
    T: float
    eps: float
    eta_e: float = 1.0
    V_e: float = 0.0
    V_P1: float = 1.0
    beta: float = 1.0
    rep_rate_hz: float = 10_000.0
    key_fraction: float = 1.0

    def __post_init__(self):
        if not self.V_M >= 0.0:
            raise ValueError("V_M must be >= 0")
        if not 0.0 < self.T <= 1.0:
            raise ValueError("T must lie in (0, 1]")
        if not self.eps >= 0.0:
            raise ValueError("eps must be >= 0")
        if not 0.0 < self.eta_e <= 1.0:
            raise ValueError("eta_e must lie in (0, 1]")
        if not self.V_e >= 0.0:
            raise ValueError("V_e must be >= 0")
        if not self.V_P1 > 0.0:
            raise ValueError("V_P1 must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not self.rep_rate_hz > 0.0:
            raise ValueError("rep_rate_hz must be positive")
        if not 0.0 < self.key_fraction <= 1.0:
            raise ValueError("key_fraction must lie in (0, 1]")

    @classmethod
    def reference(cls):
        """Parameters of the 460 m urban link: 10 kHz pulses, 1/5 of the data
        for estimation and 1/5 for P monitoring, so 3/5 carry key."""
        return cls(V_M=165.0, T=0.575, eps=0.0375, eta_e=0.872, V_e=0.0219,
                   V_P1=1.0, beta=0.95, rep_rate_hz=10_000.0, key_fraction=0.6)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Covariance matrices
# ---------------------------------------------------------------------------

def build_ud_covariance(V_M):
    """Entanglement-based UD state: TMSV of variance ``sqrt(V_M + 1)`` with
    Bob's mode squeezed by ``diag((V_M+1)^(1/4), (V_M+1)^(-1/4))``.

    Bob's mode ends up with x variance ``V_M + 1`` and p variance 1.
    """
    if not V_M > 0.0:
        raise ValueError("V_M must be positive")
    v = math.sqrt(V_M + 1.0)
    s = np.diag([1.0, 1.0, v ** 0.5, v ** -0.5])
    gamma = s @ cvmath.tmsv_covariance(v) @ s.T
    return 0.5 * (gamma + gamma.T)


def build_gg02_covariance(V_M, T, eps):
    """Symmetric-modulation state after a lossy, noisy channel."""
    v = V_M + 1.0
    c = math.sqrt(T * (v * v - 1.0))
    z = np.diag([1.0, -1.0])
    bob = T * (v - 1.0 + eps) + 1.0
    return np.block([[v * np.eye(2), c * z], [c * z, bob * np.eye(2)]])


def honest_cp(V_M, T):
    """p-correlation a pure-loss channel would leave on the UD state."""
    return -math.sqrt(T * V_M) / (V_M + 1.0) ** 0.25


def honest_vp1(T, eps):
    """Bob's p variance for a phase-insensitive channel with excess noise ``eps``."""
    return 1.0 + T * eps


def apply_channel(gamma, T, eps, Cp, V_P1):
    """Channel output for the UD state.

    Alice's block is untouched, the x-correlation is scaled by ``sqrt(T)``,
    Bob's x variance becomes ``1 + T (V_M + eps)`` and the unmeasured
    p-quadrature entries are replaced by ``Cp`` and ``V_P1``.  The result may
    be unphysical for some ``(Cp, V_P1)``; callers check with
    :func:`cvmath.is_physical`.
    """
    gamma = cvmath.validate_covariance(gamma)
    if gamma.shape != (4, 4):
        raise cvmath.CovarianceError("apply_channel expects a two-mode matrix")
    if not 0.0 < T <= 1.0:
        raise ValueError("T must lie in (0, 1]")
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    out = gamma.copy()
    sqt = math.sqrt(T)
    out[0, 2] = out[2, 0] = sqt * gamma[0, 2]
    out[1, 2] = out[2, 1] = sqt * gamma[1, 2]
    out[2, 2] = T * (gamma[2, 2] + eps) + 1.0 - T
    out[1, 3] = out[3, 1] = Cp
    out[0, 3] = out[3, 0] = 0.0
    out[2, 3] = out[3, 2] = 0.0
    out[3, 3] = V_P1
    return out


def apply_trusted_detector(gamma, eta_e, V_e, mode=None):
    """Bob's detector as loss ``eta_e`` plus electronic noise ``V_e``.

    Diagonal entries of Bob's mode map as ``v -> eta_e v + (1 - eta_e) + V_e``
    and correlations with other modes scale by ``sqrt(eta_e)``.  Bob is the
    last mode unless ``mode`` is given.
    """
    gamma = cvmath.validate_covariance(gamma)
    if not 0.0 < eta_e <= 1.0:
        raise ValueError("eta_e must lie in (0, 1]")
    if V_e < 0.0:
        raise ValueError("V_e must be >= 0")
    n = cvmath.n_modes(gamma)
    mode = n - 1 if mode is None else mode
    d = np.ones(2 * n)
    d[2 * mode:2 * mode + 2] = math.sqrt(eta_e)
    out = d[:, None] * gamma * d[None, :]
    for q in (2 * mode, 2 * mode + 1):
        out[q, q] += 1.0 - eta_e + V_e
    return out


def dilate_trusted_detector(gamma, eta_e, V_e):
    """Purified detector model: returns the covariance of (modes..., B, F, G).

    Bob (last mode of ``gamma``) is mixed on a beamsplitter of transmittance
    ``eta_e`` with mode F of an EPR pair (F, G) of variance
    ``1 + V_e / (1 - eta_e)``.  Returns ``gamma`` unchanged for an ideal
    detector.
    """
    gamma = cvmath.validate_covariance(gamma)
    if eta_e >= 1.0:
        if V_e == 0.0:
            return gamma.copy()
        eta_e = _ETA_LIMIT
    n = cvmath.n_modes(gamma)
    v = 1.0 + V_e / (1.0 - eta_e)
    full = cvmath.direct_sum(gamma, cvmath.tmsv_covariance(v))
    s = cvmath.beamsplitter(eta_e, n - 1, n, n + 2)
    out = s @ full @ s.T
    return 0.5 * (out + out.T)


def closed_form_conditional_covariance(V_M, T, eps):
    """Closed-form ``gamma_{A|x_B}`` for an ideal detector."""
    v = math.sqrt(V_M + 1.0)
    return np.diag([v * (1.0 + T * eps) / (1.0 + T * (V_M + eps)), v])


# ---------------------------------------------------------------------------
# Physical region of the unknown correlation
# ---------------------------------------------------------------------------

def _ud_channel_matrix(params, Cp):
    return apply_channel(build_ud_covariance(params.V_M), params.T, params.eps, Cp,
                         params.V_P1)


def _golden_max(f, a, b, tol):
    """Maximise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def physical_cp_interval(params, grid=64, tol=CP_TOL):
    """Interval ``(lo, hi)`` of ``Cp`` for which the UD channel output obeys
    ``gamma + i Omega >= 0``.

    The feasible set is convex because the uncertainty margin is concave in
    ``Cp``.  A coarse grid plus golden-section search finds the most feasible
    point, then bisection walks out to each edge to ``tol``.
    """
    if grid < 3:
        raise ValueError("grid must be >= 3")
    bound = math.sqrt(math.sqrt(params.V_M + 1.0) * params.V_P1)

    def margin(cp):
        return cvmath.uncertainty_margin(_ud_channel_matrix(params, cp))

    xs = np.linspace(-bound, bound, grid + 2)[1:-1]
    ms = [margin(x) for x in xs]
    k = int(np.argmax(ms))
    step = xs[1] - xs[0]
    a, b = max(xs[k] - step, -bound), min(xs[k] + step, bound)
    center, best = _golden_max(margin, a, b, 1e-12 * bound)
    if best < -FEASIBILITY_TOL:
        raise InfeasibleError(
            "no Cp satisfies gamma + i*Omega >= 0: V_P1 = "
            f"{params.V_P1:g} is below the physical floor for T = {params.T:g}, "
            f"eps = {params.eps:g} (best uncertainty margin {best:.3e})")

    def edge(inside, outside):
        while abs(outside - inside) > tol:
            mid = 0.5 * (inside + outside)
            if margin(mid) >= -FEASIBILITY_TOL:
                inside = mid
            else:
                outside = mid
        return inside

    return edge(center, -bound), edge(center, bound)


def physical_cp_grid(params, n=10_000):
    """Dense-grid estimate of the physical interval (slow; used as an oracle)."""
    bound = math.sqrt(math.sqrt(params.V_M + 1.0) * params.V_P1)
    xs = np.linspace(-bound, bound, n)
    ok = [x for x in xs if cvmath.is_physical(_ud_channel_matrix(params, x))]
    if not ok:
        return None
    return ok[0], ok[-1]


# ---------------------------------------------------------------------------
# Entropies and key rates
# ---------------------------------------------------------------------------

def mutual_information(params):
    """``I_AB = 1/2 log2(V_Bx / V_Bx|A)`` with detector noise in both terms."""
    p = params
    v_b = 1.0 + p.eta_e * p.T * (p.V_M + p.eps) + p.V_e
    v_cond = 1.0 + p.eta_e * p.T * p.eps + p.V_e
    return 0.5 * math.log2(v_b / v_cond)


def _holevo_terms(gamma_ch, params, mode, closed=None):
    """Return ``(chi, joint_spectrum, conditional_spectrum)``."""
    if mode == "schur-detector":
        full = dilate_trusted_detector(gamma_ch, params.eta_e, params.V_e)
        joint = cvmath.symplectic_eigenvalues(full)
        # Bob is mode 1 both with and without the (F, G) dilation
        cond = cvmath.condition_on_homodyne(full, 1, "x")
        conditional = cvmath.symplectic_eigenvalues(cond)
    elif mode == "paper-eq":
        dressed = apply_trusted_detector(gamma_ch, params.eta_e, params.V_e)
        joint = cvmath.symplectic_eigenvalues(dressed)
        if closed is None:
            cond = cvmath.condition_on_homodyne(dressed, 1, "x")
        else:
            cond = closed
        conditional = cvmath.symplectic_eigenvalues(cond, method="hermitian")
    else:
        raise ValueError(f"unknown conditioning mode {mode!r}; choose from {MODES}")
    return cvmath.holevo_from_spectra(joint, conditional), joint, conditional


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown conditioning mode {mode!r}; choose from {MODES}")
    return mode


@dataclass
class KeyRateReport:
    """Outcome of one key-rate evaluation (bits per pulse unless noted)."""

    protocol: str
    I_AB: float
    chi_BE: float
    K: float
    K_raw: float
    K_unit_beta: float  # I_AB - chi_BE, for readers who apply beta elsewhere
    K_bps: float
    worst_Cp: float
    cp_interval: tuple
    joint_spectrum: np.ndarray
    conditional_spectrum: np.ndarray
    params: ProtocolParams
    conditioning_mode: str
    notes: list = field(default_factory=list)

    CSV_COLUMNS = ("protocol", "conditioning_mode", "V_M", "T", "eps", "eta_e", "V_e",
                   "V_P1", "beta", "rep_rate_hz", "key_fraction", "I_AB", "chi_BE",
                   "K", "K_raw", "K_unit_beta", "K_bps", "worst_Cp", "cp_lo", "cp_hi",
                   "joint_spectrum", "conditional_spectrum")

    def csv_row(self):
        p = self.params
        lo, hi = self.cp_interval
        return (self.protocol, self.conditioning_mode, p.V_M, p.T, p.eps, p.eta_e, p.V_e,
                p.V_P1, p.beta, p.rep_rate_hz, p.key_fraction, self.I_AB, self.chi_BE,
                self.K, self.K_raw, self.K_unit_beta, self.K_bps, self.worst_Cp, lo, hi,
                ";".join(repr(float(x)) for x in self.joint_spectrum),
                ";".join(repr(float(x)) for x in self.conditional_spectrum))

    def to_csv(self):
        return csv_text(self.CSV_COLUMNS, [self.csv_row()])

    def to_text(self):
        p = self.params
        lines = [
            f"protocol          : {self.protocol}",
            f"conditioning mode : {self.conditioning_mode}",
            f"V_M={p.V_M:g}  T={p.T:g}  eps={p.eps:g}  eta_e={p.eta_e:g}  V_e={p.V_e:g}  "
            f"V_P1={p.V_P1:g}  beta={p.beta:g}",
            f"I_AB              : {self.I_AB:.6f} bit/pulse",
            f"chi_BE            : {self.chi_BE:.6f} bit/pulse",
            f"K = beta*I - chi  : {self.K:.6f} bit/pulse (raw {self.K_raw:.6f})",
            f"K with beta = 1   : {self.K_unit_beta:.6f} bit/pulse",
            f"K_bps             : {self.K_bps:.3f} bit/s "
            f"({p.rep_rate_hz:g} Hz x key fraction {p.key_fraction:g})",
        ]
        if self.protocol == "ud":
            lines.append(f"worst-case Cp     : {self.worst_Cp:.6f} "
                         f"(physical interval [{self.cp_interval[0]:.6f}, "
                         f"{self.cp_interval[1]:.6f}])")
        lines.append("joint spectrum    : " + ", ".join(f"{x:.6f}" for x in self.joint_spectrum))
        lines.append("conditional spect.: "
                     + ", ".join(f"{x:.6f}" for x in self.conditional_spectrum))
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _report(protocol, params, mode, I_ab, chi, worst_cp, interval, joint, cond, notes):
    k_raw = params.beta * I_ab - chi
    k = max(k_raw, 0.0)
    if k_raw < 0.0:
        notes.append("no secret key: beta*I_AB <= chi_BE, reported K clamped to 0")
    return KeyRateReport(
        protocol=protocol, I_AB=I_ab, chi_BE=chi, K=k, K_raw=k_raw,
        K_unit_beta=I_ab - chi, K_bps=k * params.rep_rate_hz * params.key_fraction,
        worst_Cp=worst_cp, cp_interval=interval, joint_spectrum=np.asarray(joint),
        conditional_spectrum=np.asarray(cond), params=params, conditioning_mode=mode,
        notes=notes)


def ud_holevo(params, Cp, conditioning_mode=DEFAULT_MODE):
    """Eve's Holevo information for a given value of the unknown correlation."""
    gamma_ch = _ud_channel_matrix(params, Cp)
    closed = None
    if conditioning_mode == "paper-eq":
        closed = closed_form_conditional_covariance(params.V_M, params.T, params.eps)
    return _holevo_terms(gamma_ch, params, _check_mode(conditioning_mode), closed)


def ud_key_rate(params, conditioning_mode=DEFAULT_MODE, cp=None, grid=64):
    """Pessimistic UD key rate ``K = beta I_AB - max_Cp chi_BE``.

    The maximum runs over the physical interval of ``Cp``; pass ``cp`` to
    evaluate at a fixed correlation instead.
    """
    mode = _check_mode(conditioning_mode)
    notes = []
    if params.V_M == 0.0:
        notes.append("V_M = 0: no modulation, no key")
        return _report("ud", params, mode, 0.0, 0.0, float("nan"), (float("nan"),) * 2,
                       [], [], notes)
    I_ab = mutual_information(params)

    if cp is not None:
        if not cvmath.is_physical(_ud_channel_matrix(params, cp), 1e-8):
            raise InfeasibleError(f"Cp = {cp:g} gives an unphysical state")
        chi, joint, cond = ud_holevo(params, cp, mode)
        return _report("ud", params, mode, I_ab, chi, float(cp), (float(cp), float(cp)),
                       joint, cond, notes)

    lo, hi = physical_cp_interval(params, grid=grid)

    def chi_at(c):
        return ud_holevo(params, c, mode)[0]

    # centre of the feasible set splits the scan into two unimodal halves
    center = _golden_max(lambda c: cvmath.uncertainty_margin(_ud_channel_matrix(params, c)),
                         lo, hi, 1e-9 * max(1.0, hi - lo))[0] if hi > lo else lo
    candidates = [(chi_at(lo), lo), (chi_at(hi), hi), (chi_at(center), center)]
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    for a, b in ((lo, center), (center, hi)):
        if b - a > tol:
            x, fx = _golden_max(chi_at, a, b, tol)
            candidates.append((fx, x))
    _, worst = max(candidates)
    chi, joint, cond = ud_holevo(params, worst, mode)
    return _report("ud", params, mode, I_ab, chi, float(worst), (lo, hi), joint, cond, notes)


def gg02_key_rate(params, conditioning_mode=DEFAULT_MODE):
    """GG02 key rate with the same detector model and entropy machinery.

    Both quadratures are characterised, so there is no correlation scan.  In
    ``paper-eq`` mode the conditional matrix is the Schur complement of the
    4x4 dressed state (there is no separate closed form for GG02).
    """
    mode = _check_mode(conditioning_mode)
    if params.V_M == 0.0:
        return _report("gg02", params, mode, 0.0, 0.0, float("nan"), (float("nan"),) * 2,
                       [], [], ["V_M = 0: no modulation, no key"])
    I_ab = mutual_information(params)
    gamma_ch = build_gg02_covariance(params.V_M, params.T, params.eps)
    chi, joint, cond = _holevo_terms(gamma_ch, params, mode)
    return _report("gg02", params, mode, I_ab, chi, float("nan"), (float("nan"),) * 2,
                   joint, cond, [])


class SweepRow(NamedTuple):
    T: float
    K_ud: float | None
    K_gg02: float | None
    worst_cp: float | None


SWEEP_COLUMNS = ("T", "K_ud", "K_gg02", "worst_cp")


def sweep_transmittance(params, T_grid, conditioning_mode=DEFAULT_MODE):
    """Rows ``(T, K_ud, K_gg02, worst_cp)``; infeasible cells are ``None``."""
    rows = []
    for t in T_grid:
        t = float(t)
        if not 0.0 < t <= 1.0:
            raise ValueError(f"transmittance {t} outside (0, 1]")
        p = params.replace(T=t)
        try:
            ud = ud_key_rate(p, conditioning_mode)
            k_ud, cp = ud.K, ud.worst_Cp
        except InfeasibleError:
            k_ud = cp = None
        try:
            k_gg = gg02_key_rate(p, conditioning_mode).K
        except InfeasibleError:
            k_gg = None
        rows.append(SweepRow(t, k_ud, k_gg, cp))
    return rows


def sweep_csv(rows):
    return csv_text(SWEEP_COLUMNS, [tuple(r) for r in rows])
