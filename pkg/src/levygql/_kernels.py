"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``LEVYGQL_DISABLE_NUMBA`` is unset (or set to ``0``).  Both paths
consume identical pre-drawn random inputs, so switching backends never
changes which random numbers a path sees.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLED = os.environ.get("LEVYGQL_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:  # pragma: no cover - exercised implicitly
    if _DISABLED:
        raise ImportError("numba disabled by LEVYGQL_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# inverse-Gaussian draws (Michael-Schucany-Haas)
# --------------------------------------------------------------------------

def ig_transform_numpy(mu, lam, y, u):
    """Map chi-square(1) draws ``y`` and uniforms ``u`` to IG(mu, lam) draws.

    The smaller root is written as 4*mu*lam*w / (w + sqrt(w^2 + 4*lam*w))^2
    with w = mu*y, which is free of cancellation when mu*y >> lam (the
    regime of tiny Euler steps).
    """
    mu = np.asarray(mu, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    w = mu * y
    root = np.sqrt(w * w + 4.0 * lam * w)
    den = (w + root) * (w + root)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(den > 0.0, 4.0 * mu * lam * w / den, mu)
    return np.where(u * (mu + x) <= mu, x, mu * mu / x)


@njit(cache=True)
def _ig_transform_nb(mu, lam, y, u, out):
    for k in range(y.shape[0]):
        m = mu[k]
        w = m * y[k]
        root = math.sqrt(w * w + 4.0 * lam[k] * w)
        den = (w + root) * (w + root)
        if den > 0.0:
            x = 4.0 * m * lam[k] * w / den
        else:
            x = m
        if u[k] * (m + x) <= m:
            out[k] = x
        else:
            out[k] = m * m / x


def ig_transform(mu, lam, y, u):
    y = np.asarray(y, dtype=np.float64)
    if not HAVE_NUMBA:
        return ig_transform_numpy(mu, lam, y, u)
    shape = y.shape
    mu = np.ascontiguousarray(np.broadcast_to(mu, shape), dtype=np.float64).ravel()
    lam = np.ascontiguousarray(np.broadcast_to(lam, shape), dtype=np.float64).ravel()
    out = np.empty(y.size)
    _ig_transform_nb(mu, lam, y.ravel(), np.asarray(u, dtype=np.float64).ravel(), out)
    return out.reshape(shape)


# --------------------------------------------------------------------------
# compensated summation
# --------------------------------------------------------------------------

def colsum_numpy(terms: np.ndarray) -> np.ndarray:
    """Exactly rounded column sums via ``math.fsum``."""
    terms = np.asarray(terms, dtype=np.float64)
    if terms.ndim == 1:
        return np.float64(math.fsum(terms))
    flat = terms.reshape(terms.shape[0], -1)
    out = np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])])
    return out.reshape(terms.shape[1:])


@njit(cache=True)
def _neumaier_cols(flat, out):
    n, m = flat.shape
    for k in range(m):
        s = 0.0
        comp = 0.0
        for i in range(n):
            v = flat[i, k]
            t = s + v
            if abs(s) >= abs(v):
                comp += (s - t) + v
            else:
                comp += (v - t) + s
            s = t
        out[k] = s + comp


def colsum(terms: np.ndarray) -> np.ndarray:
    """Neumaier-compensated sum over the first axis."""
    terms = np.asarray(terms, dtype=np.float64)
    if not HAVE_NUMBA:
        return colsum_numpy(terms)
    if terms.ndim == 1:
        out = np.empty(1)
        _neumaier_cols(np.ascontiguousarray(terms.reshape(-1, 1)), out)
        return out[0]
    flat = np.ascontiguousarray(terms.reshape(terms.shape[0], -1))
    out = np.empty(flat.shape[1])
    _neumaier_cols(flat, out)
    return out.reshape(terms.shape[1:])


# --------------------------------------------------------------------------
# Euler recursion
# --------------------------------------------------------------------------

@njit
def _euler_nb(coef, x, alpha, beta, dts, dW, dJ, rec, out, a, b, c):
    # coef(x, alpha, beta, a, b, c) fills the coefficient buffers in place.
    d = x.shape[0]
    rw = dW.shape[1]
    rj = dJ.shape[1]
    r = 0
    for k in range(dts.shape[0]):
        coef(x, alpha, beta, a, b, c)
        for i in range(d):
            inc = a[i] * dts[k]
            for m in range(rw):
                inc += b[i, m] * dW[k, m]
            for m in range(rj):
                inc += c[i, m] * dJ[k, m]
            x[i] += inc
        if r < rec.shape[0] and rec[r] == k:
            for i in range(d):
                out[r, i] = x[i]
            r += 1
    ok = True
    for i in range(d):
        if not math.isfinite(x[i]):
            ok = False
    return ok


def euler_numba(coef, x, alpha, beta, dts, dW, dJ, rec, out, dim_w, dim_j):
    """Advance one path in place through ``len(dts)`` Euler steps.

    ``rec`` holds (chunk-local) step indices after which the state is
    copied into successive rows of ``out``.  Returns False when the final
    state is non-finite.
    """
    d = x.shape[0]
    a = np.empty(d)
    b = np.zeros((d, dim_w))
    c = np.zeros((d, dim_j))
    return _euler_nb(coef, x, alpha, beta, dts, dW, dJ, rec, out, a, b, c)


def euler_numpy(drift, diff, jump, x, alpha, beta, dts, dW, dJ, rec, out):
    """Batch Euler recursion over a leading path axis with vectorized callables.

    ``x`` has shape (B, d); ``dW`` (B, m, r'); ``dJ`` (B, m, r''); ``out``
    (B, len(rec), d).  Returns a boolean mask of paths still finite.
    """
    rec_set = {int(k): i for i, k in enumerate(rec)}
    dim_w = dW.shape[-1]
    for k in range(dts.shape[0]):
        inc = drift(x, alpha) * dts[k]
        if dim_w:
            inc = inc + np.einsum("bim,bm->bi", diff(x, beta), dW[:, k, :])
        inc = inc + np.einsum("bim,bm->bi", jump(x, beta), dJ[:, k, :])
        x += inc
        row = rec_set.get(k)
        if row is not None:
            out[:, row, :] = x
    return np.all(np.isfinite(x), axis=1)
