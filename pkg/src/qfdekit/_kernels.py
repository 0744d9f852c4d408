"""Hot array kernels with a numba path and a pure-array fallback.

Set ``QFDEKIT_DISABLE_NUMBA=1`` (or leave numba uninstalled) to force the
fallback. Both paths must agree to roundoff; ``benchmarks/bench_kernels.py``
times them side by side.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.signal import lfilter

_DISABLED = os.environ.get("QFDEKIT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError("disabled by QFDEKIT_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag in CI
    HAVE_NUMBA = False


def exp_trapezoid_weights(lam: float, h: float) -> tuple[float, float, float]:
    """Left/right cell weights and decay factor of the exponential product-trapezoid rule.

    On one cell of width ``h`` the integrand ``exp(-lam*(h - tau)) * G(tau)`` with ``G``
    linear between the endpoint values is integrated exactly, giving
    ``w_left * g_left + w_right * g_right``.
    """
    mu = lam * h
    if mu < 1e-3:
        # series; the closed forms cancel catastrophically here
        w_left = h * (0.5 - mu / 3.0 + mu * mu / 8.0 - mu**3 / 30.0)
        w_right = h * (0.5 - mu / 6.0 + mu * mu / 24.0 - mu**3 / 120.0)
    else:
        em = np.exp(-mu)
        w_left = h * (-np.expm1(-mu) - mu * em) / (mu * mu)
        w_right = h * (mu + np.expm1(-mu)) / (mu * mu)
    return float(w_left), float(w_right), float(np.exp(-mu))


def _exp_trapezoid_numpy(g, w_left, w_right, decay):
    n = g.shape[0]
    out = np.zeros(n)
    if n < 2:
        return out
    src = w_left * g[:-1] + w_right * g[1:]
    out[1:] = lfilter([1.0], [1.0, -decay], src)
    return out


def _chain_diameter_numpy(values):
    m = values.shape[0]
    best = 0.0
    for i in range(m):
        d = np.max(np.abs(values[i + 1:] - values[i]), initial=0.0)
        best = max(best, float(d))
    return best


def _order_numpy(f, g, eps):
    le = bool(np.all(f <= g + eps))
    ge = bool(np.all(g <= f + eps))
    return le, ge


def _comparable_matrix_numpy(values, eps):
    m = values.shape[0]
    out = np.ones((m, m), dtype=np.bool_)
    for i in range(m):
        diff = values - values[i]
        le = np.all(diff >= -eps, axis=1)
        ge = np.all(diff <= eps, axis=1)
        out[i] = le | ge
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _exp_trapezoid_numba(g, w_left, w_right, decay):
        n = g.shape[0]
        out = np.zeros(n)
        acc = 0.0
        for i in range(n - 1):
            acc = decay * acc + w_left * g[i] + w_right * g[i + 1]
            out[i + 1] = acc
        return out

    @njit(cache=True)
    def _chain_diameter_numba(values):
        m, n = values.shape
        best = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                for k in range(n):
                    d = abs(values[i, k] - values[j, k])
                    if d > best:
                        best = d
        return best

    @njit(cache=True)
    def _order_numba(f, g, eps):
        le = True
        ge = True
        for i in range(f.shape[0]):
            if f[i] > g[i] + eps:
                le = False
            if g[i] > f[i] + eps:
                ge = False
            if not le and not ge:
                break
        return le, ge

    @njit(cache=True)
    def _comparable_matrix_numba(values, eps):
        m, n = values.shape
        out = np.ones((m, m), dtype=np.bool_)
        for i in range(m):
            for j in range(i + 1, m):
                le = True
                ge = True
                for k in range(n):
                    if values[i, k] > values[j, k] + eps:
                        le = False
                    if values[j, k] > values[i, k] + eps:
                        ge = False
                    if not le and not ge:
                        break
                out[i, j] = le or ge
                out[j, i] = out[i, j]
        return out

    exp_trapezoid_kernel = _exp_trapezoid_numba
    chain_diameter_kernel = _chain_diameter_numba
    order_kernel = _order_numba
    comparable_matrix_kernel = _comparable_matrix_numba
else:
    exp_trapezoid_kernel = _exp_trapezoid_numpy
    chain_diameter_kernel = _chain_diameter_numpy
    order_kernel = _order_numpy
    comparable_matrix_kernel = _comparable_matrix_numpy

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def exp_trapezoid(g: np.ndarray, lam: float, h: float) -> np.ndarray:
    """Running values ``I_i = exp(-lam t_i) * int_0^{t_i} exp(lam s) G(s) ds`` on a uniform grid."""
    w_left, w_right, decay = exp_trapezoid_weights(lam, h)
    return exp_trapezoid_kernel(np.ascontiguousarray(g, dtype=float), w_left, w_right, decay)


def order_flags(f: np.ndarray, g: np.ndarray, eps: float = 0.0) -> tuple[bool, bool]:
    """(f <= g + eps everywhere, g <= f + eps everywhere)."""
    le, ge = order_kernel(np.ascontiguousarray(f, dtype=float),
                          np.ascontiguousarray(g, dtype=float), float(eps))
    return bool(le), bool(ge)


def chain_diameter_values(values: np.ndarray) -> float:
    return float(chain_diameter_kernel(np.ascontiguousarray(values, dtype=float)))


def comparable_matrix(values: np.ndarray, eps: float = 0.0) -> np.ndarray:
    return comparable_matrix_kernel(np.ascontiguousarray(values, dtype=float), float(eps))
