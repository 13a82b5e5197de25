"""Adaptive Dormand-Prince 5(4) stepping for batched linear systems.

The Wronskian root scans integrate hundreds of copies of the same small
linear ODE system that differ only in (lambda, theta).  Driving them as one
batched state through a single adaptive loop amortizes the per-step Python
cost, which dominates when each system is integrated separately.  Step size
is controlled by the worst error over the batch.  Endpoint values only; the
trajectory operations use scipy's RK45 with dense output instead.
"""

from __future__ import annotations

import numpy as np

from .errors import IntegratorError

# Dormand-Prince 5(4) tableau (FSAL)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


def integrate_batch(rhs, t0: float, t1: float, y0: np.ndarray, rtol: float, atol: float):
    """Integrate y' = rhs(t, y) from t0 to t1, returning y(t1).

    `y0` may have any shape; the error norm is the max over all entries of
    |err| / (atol + rtol*max(|y|, |y_new|)).
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    span = t1 - t0
    if span == 0.0:
        return y
    direction = 1.0 if span > 0 else -1.0
    h = span / 100.0
    k = [None] * 7
    k[0] = rhs(t, y)
    min_step = 1e-14 * abs(span)
    for _ in range(10_000_000):
        if direction * (t + h - t1) > 0.0:
            h = t1 - t
        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]) if a != 0.0)
            k[i] = rhs(t + _C[i] * h, yi)
        y_new = y + h * (
            _B5[0] * k[0]
            + _B5[2] * k[2]
            + _B5[3] * k[3]
            + _B5[4] * k[4]
            + _B5[5] * k[5]
        )
        err_vec = h * (
            _E[0] * k[0]
            + _E[2] * k[2]
            + _E[3] * k[3]
            + _E[4] * k[4]
            + _E[5] * k[5]
            + _E[6] * k[6]
        )
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if err <= 1.0:
            t = t + h
            y = y_new
            k[0] = k[6]  # FSAL
            if direction * (t - t1) >= 0.0 or abs(t - t1) < min_step:
                return y
        factor = 0.9 * (max(err, 1e-300)) ** (-0.2)
        h = h * min(5.0, max(0.2, factor))
        if abs(h) < min_step:
            raise IntegratorError(f"step-size underflow at t={t}")
    raise IntegratorError("step budget exhausted")
