"""Gaussian-state linear algebra in shot-noise units.

Covariance matrices are plain ``numpy`` arrays of shape ``(2n, 2n)`` with
quadrature ordering ``(x1, p1, x2, p2, ...)`` and vacuum variance 1.
"""

import warnings

import numpy as np

from . import _kernels

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-9
DISCRIMINANT_TOL = 1e-9
G_DOMAIN_TOL = 1e-12
HOLEVO_CLAMP_TOL = 1e-9
HOLEVO_ERROR_TOL = 1e-6
ENTROPY_SPECTRUM_TOL = 1e-8


class CovarianceError(ValueError):
    """Malformed covariance matrix (shape or symmetry)."""


class NumericalInstabilityError(ArithmeticError):
    """A closed-form expression left its admissible domain beyond tolerance."""


class DegenerateMeasurementError(ValueError):
    """Homodyne conditioning on a quadrature with nonpositive variance."""


class HolevoInconsistencyError(ArithmeticError):
    """Holevo quantity came out clearly negative; an upstream matrix is wrong."""


class HolevoClampWarning(RuntimeWarning):
    """Holevo quantity was marginally negative and has been clamped to zero."""


def symplectic_form(n_modes):
    """Block-diagonal symplectic form with blocks ``[[0, 1], [-1, 0]]``."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def validate_covariance(gamma, tol=SYMMETRY_TOL):
    """Return ``gamma`` as a float array after shape and symmetry checks."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or gamma.shape[0] % 2:
        raise CovarianceError(f"expected a (2n, 2n) matrix, got shape {gamma.shape}")
    if gamma.shape[0] == 0:
        raise CovarianceError("empty covariance matrix")
    scale = max(np.max(np.abs(gamma)), 1.0)
    if np.max(np.abs(gamma - gamma.T)) > tol * scale:
        raise CovarianceError("covariance matrix is not symmetric")
    return gamma


def n_modes(gamma):
    return np.shape(gamma)[0] // 2


def symplectic_eigenvalues_generic(gamma):
    """Moduli of the eigenvalues of ``i Omega gamma``, one per mode, descending."""
    gamma = validate_covariance(gamma)
    omega = symplectic_form(n_modes(gamma))
    ev = np.sort(np.abs(np.linalg.eigvals(1j * omega @ gamma)))[::-1]
    # eigenvalues come in +/- pairs; after sorting the moduli, keep every other
    return ev[::2].copy()


def symplectic_eigenvalues_hermitian(gamma):
    """Symplectic spectrum from the Hermitian matrix ``i g^(1/2) Omega g^(1/2)``.

    Backward stable, unlike the non-normal ``i Omega gamma``; preferred when
    entries span many orders of magnitude (e.g. strongly thermal ancillas).
    Requires ``gamma`` positive definite.
    """
    gamma = validate_covariance(gamma)
    w, u = np.linalg.eigh(gamma)
    if w[0] <= 0.0:
        raise CovarianceError("covariance matrix is not positive definite")
    root = (u * np.sqrt(w)) @ u.T
    m = root @ symplectic_form(n_modes(gamma)) @ root
    ev = np.linalg.eigvalsh(1j * 0.5 * (m - m.T))
    return np.sort(ev[ev.size // 2:])[::-1]


def symplectic_eigenvalues_closed(gamma):
    """Two-mode closed form ``nu_pm^2 = (D +/- sqrt(D^2 - 4 det gamma)) / 2``.

    ``D = det A + det B + 2 det C`` for the block decomposition
    ``gamma = [[A, C], [C^T, B]]``.
    """
    gamma = validate_covariance(gamma)
    if gamma.shape != (4, 4):
        raise CovarianceError("closed form applies to two-mode (4x4) matrices only")
    nu, disc = _kernels.two_mode_spectra(gamma)
    _check_discriminant(disc, gamma)
    return nu[0]


def symplectic_eigenvalues_batch(gammas):
    """Closed-form two-mode spectra for a stack of shape ``(N, 4, 4)``."""
    gammas = np.asarray(gammas, dtype=np.float64)
    nu, disc = _kernels.two_mode_spectra(gammas)
    _check_discriminant(disc, gammas)
    return nu


def _check_discriminant(disc, gammas):
    # discriminant is quartic in the entries
    flat = np.abs(np.reshape(gammas, (len(disc), -1)))
    scale = np.maximum(flat.max(axis=1), 1.0) ** 4
    if np.any(disc < -DISCRIMINANT_TOL * scale):
        raise NumericalInstabilityError(
            f"negative discriminant {disc.min():.3e} in two-mode symplectic spectrum")


def symplectic_eigenvalues(gamma, method="auto"):
    """Symplectic spectrum, descending.

    ``method="auto"`` uses the closed form for two modes and the Hermitian
    eigen-decomposition otherwise.  ``"generic"`` is the plain
    ``|eig(i Omega gamma)|`` route kept as an independent oracle.
    """
    if method == "generic":
        return symplectic_eigenvalues_generic(gamma)
    if method == "hermitian":
        return symplectic_eigenvalues_hermitian(gamma)
    if method == "closed":
        return symplectic_eigenvalues_closed(gamma)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    gamma = validate_covariance(gamma)
    if gamma.shape == (4, 4):
        return symplectic_eigenvalues_closed(gamma)
    return symplectic_eigenvalues_hermitian(gamma)


def is_physical(gamma, tol=PHYSICALITY_TOL):
    """True iff ``gamma + i Omega >= 0``.

    Checked as positive definiteness plus every symplectic eigenvalue >= 1 - tol.
    The spectrum alone is not enough: an indefinite matrix can still have
    large symplectic "eigenvalues".
    """
    gamma = validate_covariance(gamma)
    if np.linalg.eigvalsh(gamma)[0] <= 0.0:
        return False
    nu = symplectic_eigenvalues_generic(gamma)
    return bool(nu[-1] >= 1.0 - tol)


def uncertainty_margin(gamma):
    """Smallest eigenvalue of the Hermitian matrix ``gamma + i Omega``.

    Nonnegative exactly for physical states; concave in any entry of ``gamma``,
    which makes it a convenient objective for locating the physical region.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    return float(np.linalg.eigvalsh(gamma + 1j * symplectic_form(n_modes(gamma)))[0])


def g_entropy(x):
    """``G(x) = (x+1) log2(x+1) - x log2(x)``, the entropy of a thermal mode
    with mean photon number ``x``.

    Accepts scalars or arrays.  Values in ``[-1e-12, 0)`` are clamped to zero.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < -G_DOMAIN_TOL):
        raise ValueError(f"g_entropy domain error: x = {arr.min()!r} < 0")
    out = _kernels.g_entropy_array(np.clip(arr, 0.0, None))
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def von_neumann_entropy(spectrum):
    """Entropy in bits of a Gaussian state from its symplectic spectrum.

    Eigenvalues within 1e-8 below unity are round-off and are clamped to 1.
    """
    nu = np.atleast_1d(np.asarray(spectrum, dtype=np.float64))
    if np.any(nu < 1.0 - ENTROPY_SPECTRUM_TOL):
        raise ValueError(f"unphysical symplectic eigenvalue {nu.min()!r} < 1")
    nu = np.maximum(nu, 1.0)
    return float(np.sum(g_entropy((nu - 1.0) / 2.0)))


def holevo_from_spectra(joint, conditional):
    """``sum G((nu-1)/2)`` over ``joint`` minus the same over ``conditional``.

    Marginally negative results (above -1e-9) are clamped to zero with a
    :class:`HolevoClampWarning`; anything below -1e-6 raises.
    """
    raw = von_neumann_entropy(joint) - von_neumann_entropy(conditional)
    if raw < -HOLEVO_ERROR_TOL:
        raise HolevoInconsistencyError(f"Holevo quantity {raw:.3e} is negative")
    if raw < 0.0:
        if raw < -HOLEVO_CLAMP_TOL:
            warnings.warn(f"Holevo quantity {raw:.3e} clamped to 0", HolevoClampWarning,
                          stacklevel=2)
        return 0.0
    return raw


def condition_on_homodyne(gamma, measured_mode, quadrature="x"):
    """Covariance of the remaining modes after homodyning one quadrature.

    Schur complement ``gamma_A - sigma (Pi gamma_B Pi)^MP sigma^T``; for a
    single-quadrature projector the pseudo-inverse is just the reciprocal of
    the measured variance.
    """
    gamma = validate_covariance(gamma)
    n = n_modes(gamma)
    if n < 2:
        raise CovarianceError("need at least two modes to condition on one")
    if not 0 <= measured_mode < n:
        raise IndexError(f"mode {measured_mode} out of range for {n} modes")
    q = {"x": 0, "p": 1}[quadrature]
    idx = 2 * measured_mode + q
    var = gamma[idx, idx]
    if var <= 0.0:
        raise DegenerateMeasurementError(
            f"measured quadrature variance {var!r} is not positive")
    keep = np.r_[0:2 * measured_mode, 2 * measured_mode + 2:2 * n]
    sub = gamma[np.ix_(keep, keep)]
    corr = gamma[keep, idx]
    out = sub - np.outer(corr, corr) / var
    return 0.5 * (out + out.T)


def direct_sum(*gammas):
    """Block-diagonal covariance of independent subsystems."""
    size = sum(np.shape(g)[0] for g in gammas)
    out = np.zeros((size, size))
    i = 0
    for g in gammas:
        k = np.shape(g)[0]
        out[i:i + k, i:i + k] = g
        i += k
    return out


def beamsplitter(transmittance, mode_a, mode_b, n):
    """Symplectic matrix of a real beamsplitter mixing ``mode_a`` and ``mode_b``."""
    t = np.sqrt(transmittance)
    r = np.sqrt(1.0 - transmittance)
    s = np.eye(2 * n)
    a, b = 2 * mode_a, 2 * mode_b
    for q in range(2):
        s[a + q, a + q] = t
        s[a + q, b + q] = r
        s[b + q, a + q] = -r
        s[b + q, b + q] = t
    return s


def tmsv_covariance(v):
    """Two-mode squeezed vacuum with local variance ``v`` (>= 1)."""
    if v < 1.0:
        raise ValueError("TMSV variance must be >= 1")
    c = np.sqrt(v * v - 1.0)
    z = np.diag([1.0, -1.0])
    return np.block([[v * np.eye(2), c * z], [c * z, v * np.eye(2)]])
