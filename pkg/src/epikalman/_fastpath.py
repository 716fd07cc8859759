"""Optional compiled kernels for the hottest inner loops.

Only the fixed-step RK4 grid solves are compiled: a likelihood evaluation
spends most of its time there, and the pure-python fallback (used when
numba is unavailable or the model is user-defined) is ~30x slower but
produces the same grids.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True)
    def _sir_rk4(lam, gam, s0, i0, h, n_steps):
        out = np.empty((n_steps + 1, 2))
        s, i = s0, i0
        out[0, 0] = s
        out[0, 1] = i
        for k in range(n_steps):
            k1s = -lam * s * i
            k1i = lam * s * i - gam * i
            s2 = s + 0.5 * h * k1s
            i2 = i + 0.5 * h * k1i
            k2s = -lam * s2 * i2
            k2i = lam * s2 * i2 - gam * i2
            s3 = s + 0.5 * h * k2s
            i3 = i + 0.5 * h * k2i
            k3s = -lam * s3 * i3
            k3i = lam * s3 * i3 - gam * i3
            s4 = s + h * k3s
            i4 = i + h * k3i
            k4s = -lam * s4 * i4
            k4i = lam * s4 * i4 - gam * i4
            s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
            i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
            out[k + 1, 0] = s
            out[k + 1, 1] = i
        return out

    @njit(cache=True)
    def _seir_rk4(lam, eps, gam, s0, e0, i0, h, n_steps):
        out = np.empty((n_steps + 1, 3))
        s, e, i = s0, e0, i0
        out[0, 0] = s
        out[0, 1] = e
        out[0, 2] = i
        for k in range(n_steps):
            k1s = -lam * s * i
            k1e = lam * s * i - eps * e
            k1i = eps * e - gam * i
            s2, e2, i2 = s + 0.5 * h * k1s, e + 0.5 * h * k1e, i + 0.5 * h * k1i
            k2s = -lam * s2 * i2
            k2e = lam * s2 * i2 - eps * e2
            k2i = eps * e2 - gam * i2
            s3, e3, i3 = s + 0.5 * h * k2s, e + 0.5 * h * k2e, i + 0.5 * h * k2i
            k3s = -lam * s3 * i3
            k3e = lam * s3 * i3 - eps * e3
            k3i = eps * e3 - gam * i3
            s4, e4, i4 = s + h * k3s, e + h * k3e, i + h * k3i
            k4s = -lam * s4 * i4
            k4e = lam * s4 * i4 - eps * e4
            k4i = eps * e4 - gam * i4
            s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
            e += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
            i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
            out[k + 1, 0] = s
            out[k + 1, 1] = e
            out[k + 1, 2] = i
        return out


def rk4_grid(
    model_name: str, zeta: np.ndarray, x0: np.ndarray, h: float, n_steps: int
) -> np.ndarray | None:
    """Compiled RK4 grid for a built-in model, or None if unavailable."""
    if not HAVE_NUMBA:
        return None
    if model_name == "sir":
        return _sir_rk4(zeta[0], zeta[1], x0[0], x0[1], h, n_steps)
    if model_name == "seir":
        return _seir_rk4(zeta[0], zeta[1], zeta[2], x0[0], x0[1], x0[2], h, n_steps)
    return None
