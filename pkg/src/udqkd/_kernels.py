"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Each kernel exists twice: a scalar-loop version compiled with ``numba.njit``
and a vectorised numpy version.  The loop versions are what runs by default
when numba imports cleanly; set ``UDQKD_DISABLE_NUMBA=1`` to force the numpy
path (useful for debugging and for the benchmark comparison).

Both paths must agree to floating-point round-off; ``tests/test_kernels.py``
cross-checks them.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_FLAG = os.environ.get("UDQKD_DISABLE_NUMBA", "").strip().lower()
NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def _njit(func):
    if numba is None:
        return None
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# Two-mode symplectic spectrum (closed form)
# ---------------------------------------------------------------------------

def _det4_py(g):
    # LU with partial pivoting on a copy; the cofactor expansion cancels
    # badly for strongly squeezed matrices
    m = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            m[i, j] = g[i, j]
    det = 1.0
    for c in range(4):
        p = c
        for r in range(c + 1, 4):
            if abs(m[r, c]) > abs(m[p, c]):
                p = r
        if m[p, c] == 0.0:
            return 0.0
        if p != c:
            det = -det
            for j in range(4):
                m[c, j], m[p, j] = m[p, j], m[c, j]
        det *= m[c, c]
        for r in range(c + 1, 4):
            f = m[r, c] / m[c, c]
            for j in range(c + 1, 4):
                m[r, j] -= f * m[c, j]
    return det


_det4 = _njit(_det4_py) if numba is not None else _det4_py


def _two_mode_spectra_loop(gammas, out, disc):
    n = gammas.shape[0]
    for k in range(n):
        g = gammas[k]
        det_a = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        det_b = g[2, 2] * g[3, 3] - g[2, 3] * g[3, 2]
        det_c = g[0, 2] * g[1, 3] - g[0, 3] * g[1, 2]
        delta = det_a + det_b + 2.0 * det_c
        det_g = _det4(g)
        d = delta * delta - 4.0 * det_g
        disc[k] = d
        root = np.sqrt(d) if d > 0.0 else 0.0
        hi = 0.5 * (delta + root)
        lo = 0.5 * (delta - root)
        out[k, 0] = np.sqrt(hi) if hi > 0.0 else 0.0
        out[k, 1] = np.sqrt(lo) if lo > 0.0 else 0.0


def _two_mode_spectra_numpy(gammas, out, disc):
    g = gammas
    det_a = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    det_b = g[:, 2, 2] * g[:, 3, 3] - g[:, 2, 3] * g[:, 3, 2]
    det_c = g[:, 0, 2] * g[:, 1, 3] - g[:, 0, 3] * g[:, 1, 2]
    delta = det_a + det_b + 2.0 * det_c
    d = delta * delta - 4.0 * np.linalg.det(g)
    disc[:] = d
    root = np.sqrt(np.clip(d, 0.0, None))
    out[:, 0] = np.sqrt(np.clip(0.5 * (delta + root), 0.0, None))
    out[:, 1] = np.sqrt(np.clip(0.5 * (delta - root), 0.0, None))


_two_mode_spectra_nb = _njit(_two_mode_spectra_loop)


def two_mode_spectra(gammas, use_numba=None):
    """Closed-form symplectic eigenvalues for a stack of 4x4 matrices.

    Returns ``(nu, disc)`` where ``nu`` has shape ``(N, 2)`` in descending
    order and ``disc`` is the raw discriminant ``delta**2 - 4 det(gamma)``
    (negative values were clamped to zero when forming ``nu``).
    """
    gammas = np.ascontiguousarray(gammas, dtype=np.float64)
    if gammas.ndim == 2:
        gammas = gammas[None]
    n = gammas.shape[0]
    out = np.empty((n, 2))
    disc = np.empty(n)
    if _select(use_numba):
        _two_mode_spectra_nb(gammas, out, disc)
    else:
        _two_mode_spectra_numpy(gammas, out, disc)
    return out, disc


# ---------------------------------------------------------------------------
# Binary entropy-like function G(x) = (x+1)log2(x+1) - x log2 x
# ---------------------------------------------------------------------------

def _g_entropy_loop(x, out):
    for i in range(x.shape[0]):
        v = x[i]
        if v <= 0.0:
            out[i] = 0.0
        else:
            out[i] = (v + 1.0) * np.log2(v + 1.0) - v * np.log2(v)


def _g_entropy_numpy(x, out):
    pos = x > 0.0
    xp = x[pos]
    out[:] = 0.0
    out[pos] = (xp + 1.0) * np.log2(xp + 1.0) - xp * np.log2(xp)


_g_entropy_nb = _njit(_g_entropy_loop)


def g_entropy_array(x, use_numba=None):
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty_like(x)
    if _select(use_numba):
        _g_entropy_nb(x, out)
    else:
        _g_entropy_numpy(x, out)
    return out


# ---------------------------------------------------------------------------
# Frame decoding: marker search and duty-window averaging
# ---------------------------------------------------------------------------

def _find_marker_loop(samples, threshold, period, width, count):
    n = samples.shape[0]
    span = (count - 1) * period + width
    for s in range(n - span + 1):
        if samples[s] <= threshold:
            continue
        if s > 0 and samples[s - 1] > threshold:
            continue
        ok = True
        for k in range(count):
            base = s + k * period
            for j in range(width):
                if samples[base + j] <= threshold:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return s
    return -1


def _find_marker_numpy(samples, threshold, period, width, count):
    n = samples.shape[0]
    span = (count - 1) * period + width
    if n < span:
        return -1
    above = samples > threshold
    csum = np.concatenate(([0], np.cumsum(above, dtype=np.int64)))
    full = (csum[width:] - csum[:-width]) == width
    m = n - span + 1
    ok = full[:m].copy()
    for k in range(1, count):
        ok &= full[k * period:k * period + m]
    rising = above[:m].copy()
    rising[1:] &= ~above[:m - 1]
    hits = np.flatnonzero(ok & rising)
    return int(hits[0]) if hits.size else -1


_find_marker_nb = _njit(_find_marker_loop)


def find_marker(samples, threshold, period, width, count, use_numba=None):
    """Index of the first sample of ``count`` consecutive marker windows, or -1."""
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    args = (samples, float(threshold), int(period), int(width), int(count))
    if _select(use_numba):
        return int(_find_marker_nb(*args))
    return _find_marker_numpy(*args)


def _window_means_loop(samples, starts, width, out):
    # shifted mean: exact when all samples in a window are equal
    for i in range(starts.shape[0]):
        s = starts[i]
        ref = samples[s]
        acc = 0.0
        for j in range(width):
            acc += samples[s + j] - ref
        out[i] = ref + acc / width


def _window_means_numpy(samples, starts, width, out):
    idx = starts[:, None] + np.arange(width)[None, :]
    win = samples[idx]
    ref = win[:, 0]
    out[:] = ref + (win - ref[:, None]).sum(axis=1) / width


_window_means_nb = _njit(_window_means_loop)


def window_means(samples, starts, width, use_numba=None):
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    out = np.empty(starts.shape[0])
    if starts.size == 0:
        return out
    if _select(use_numba):
        _window_means_nb(samples, starts, int(width), out)
    else:
        _window_means_numpy(samples, starts, int(width), out)
    return out


def _select(use_numba):
    if use_numba is None:
        return USE_NUMBA
    if use_numba and not NUMBA_AVAILABLE:
        raise RuntimeError("numba path requested but numba is not importable")
    return bool(use_numba)
