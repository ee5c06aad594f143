"""Time operators on boundary signals: reversal, the J integral, I and its adjoint.

All of them act on the time axis (``axis=-2``) of ``(..., nt, n_b)`` arrays
sampled on a :class:`~bcinclusion.forward.TimeGrid` with uniform weights
``dt``, so the S-adjoint of a time operator is its plain transpose.  The
``*_weights`` functions return the dense quadrature matrices; the operators
themselves run in O(nt) with cumulative sums.
"""

from __future__ import annotations

import numpy as np

from .forward import BoundarySignal, TimeGrid


def _vals(f):
    return f.values if isinstance(f, BoundarySignal) else np.asarray(f, dtype=float)


def _wrap(f, out):
    return f.like(out) if isinstance(f, BoundarySignal) else out


def _cumtrapz(v, dt):
    """``C[n] = trapz(v[0..n])`` along axis -2, ``C[0] = 0``."""
    c = np.zeros_like(v)
    c[..., 1:, :] = np.cumsum(0.5 * dt * (v[..., 1:, :] + v[..., :-1, :]), axis=-2)
    return c


def op_R(f):
    """``R f(t) = f(2T - t)``: sample ``k`` is paired with ``nt - 1 - k``."""
    return _wrap(f, _vals(f)[..., ::-1, :].copy())


def op_J(f, time: TimeGrid | None = None):
    """``J f(t) = 1/2 int_t^{2T-t} f(s) ds`` for ``t < T``, zero from ``T`` on."""
    time = f.time if time is None else time
    v = _vals(f)
    c = _cumtrapz(v, time.dt)
    out = np.zeros_like(v)
    n = np.arange(time.n_half)
    out[..., n, :] = 0.5 * (c[..., time.nt - 1 - n, :] - c[..., n, :])
    return _wrap(f, out)


def op_I(f, time: TimeGrid | None = None):
    """``I f(t) = 1_{t<T} int_0^t f(s) ds`` (cumulative trapezoid)."""
    time = f.time if time is None else time
    v = _vals(f)
    out = _cumtrapz(v, time.dt)
    out[..., time.n_half:, :] = 0.0
    return _wrap(f, out)


def op_I_adj(f, time: TimeGrid | None = None):
    """S-adjoint of :func:`op_I`, the exact transpose of its quadrature."""
    time = f.time if time is None else time
    v = _vals(f)
    dt, m = time.dt, time.n_half
    g = v[..., 1:m, :]  # rows of I that are non-zero
    out = np.zeros_like(v)
    if m > 1:
        # tail[k] = sum_{n=k+1}^{m-1} g(n)
        rev = np.cumsum(g[..., ::-1, :], axis=-2)[..., ::-1, :]
        tail = np.zeros_like(v[..., :m, :])
        tail[..., : m - 1, :] = rev
        out[..., 0, :] = 0.5 * dt * tail[..., 0, :]
        k = np.arange(1, m)
        out[..., k, :] = 0.5 * dt * v[..., k, :] + dt * tail[..., k, :]
    return _wrap(f, out)


def j_weights(time: TimeGrid) -> np.ndarray:
    """Dense matrix of :func:`op_J` (for inspection and tests)."""
    return op_J(np.eye(time.nt)[:, :, None], time)[..., 0].T


def i_weights(time: TimeGrid) -> np.ndarray:
    """Dense matrix of :func:`op_I`."""
    return op_I(np.eye(time.nt)[:, :, None], time)[..., 0].T


def i_adj_one(time: TimeGrid) -> np.ndarray:
    """Closed form ``(I^+ 1)(s) = (T - s)_+`` on the samples."""
    return np.maximum(time.T - time.times, 0.0)
