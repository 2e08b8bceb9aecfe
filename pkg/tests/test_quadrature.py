import math

import numpy as np

from agestruct.quadrature import cumulative_trapezoid, simpson, trapezoid


def test_trapezoid_linear_exact():
    x = np.linspace(0.0, 3.0, 31)
    assert math.isclose(trapezoid(2 * x + 1, 0.1), 12.0, rel_tol=1e-13)


def test_trapezoid_degenerate():
    assert trapezoid([], 0.1) == 0.0
    assert trapezoid([5.0], 0.1) == 0.0


def test_cumulative_trapezoid_matches_total():
    y = np.sin(np.linspace(0, 2, 101))
    out = cumulative_trapezoid(y, 0.02)
    assert out[0] == 0.0
    assert math.isclose(out[-1], trapezoid(y, 0.02), rel_tol=1e-14)
    assert np.all(np.diff(out) >= 0)  # nonnegative integrand here


def test_simpson_exact_on_quadratic_nonuniform():
    # composite rule integrates quadratics exactly on any node layout,
    # including an odd interval count
    x = np.array([0.0, 0.3, 0.9, 1.0, 1.7, 2.0, 2.2])
    y = 3 * x**2 - 2 * x + 1
    exact = x[-1] ** 3 - x[-1] ** 2 + x[-1]
    assert math.isclose(simpson(y, x), exact, rel_tol=1e-13)


def test_simpson_two_nodes_falls_back_to_trapezoid():
    assert math.isclose(simpson([1.0, 3.0], [0.0, 2.0]), 4.0, rel_tol=1e-15)


def test_simpson_fourth_order_convergence():
    exact = 1 - math.cos(1.0)
    errs = []
    for n in (8, 16):
        x = np.linspace(0, 1, 2 * n + 1)
        errs.append(abs(simpson(np.sin(x), x) - exact))
    assert errs[0] / errs[1] > 12  # ~16 for a fourth-order rule
