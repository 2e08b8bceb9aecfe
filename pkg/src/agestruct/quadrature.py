"""Small quadrature helpers used across the package."""

from __future__ import annotations

import numpy as np


def trapezoid(y, dx: float) -> float:
    """Composite trapezoid on a uniform grid. Fewer than two nodes -> 0."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return 0.0
    return float(dx * (y.sum() - 0.5 * (y[0] + y[-1])))


def cumulative_trapezoid(y, dx: float) -> np.ndarray:
    """Running trapezoid integral on a uniform grid; out[0] == 0."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    out[0] = 0.0
    if y.size > 1:
        np.cumsum(0.5 * dx * (y[1:] + y[:-1]), out=out[1:])
    return out


def simpson(y, x) -> float:
    """Composite Simpson on an arbitrary strictly increasing grid.

    Interval pairs use the nonuniform three-point rule; an odd leftover
    interval is integrated with the quadratic through the last three nodes,
    so quadratics are exact for any node count >= 3.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise ValueError("simpson expects matching 1-d arrays")
    m = x.size - 1
    if m < 1:
        return 0.0
    if m == 1:
        return float(0.5 * (x[1] - x[0]) * (y[0] + y[1]))
    total = 0.0
    pairs = m // 2
    for k in range(pairs):
        i = 2 * k
        h0 = x[i + 1] - x[i]
        h1 = x[i + 2] - x[i + 1]
        hsum = h0 + h1
        total += (hsum / 6.0) * (
            (2.0 - h1 / h0) * y[i]
            + (hsum * hsum / (h0 * h1)) * y[i + 1]
            + (2.0 - h0 / h1) * y[i + 2]
        )
    if m % 2 == 1:
        # quadratic through the last three nodes, integrated over the final interval
        h0 = x[m - 1] - x[m - 2]
        h1 = x[m] - x[m - 1]
        w0 = -(h1 ** 3) / (6.0 * h0 * (h0 + h1))
        w1 = h1 * h1 / (6.0 * h0) + 0.5 * h1
        w2 = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1))
        total += w0 * y[m - 2] + w1 * y[m - 1] + w2 * y[m]
    return float(total)
