"""Adaptive Simpson quadrature with interval bisection."""
from __future__ import annotations

import math
from typing import Callable

ABS_TOL = 1e-12
REL_TOL = 1e-9
MAX_DEPTH = 60


class QuadratureError(ArithmeticError):
    pass


def adaptive_simpson(
    func: Callable[[float], float],
    a: float,
    b: float,
    abs_tol: float = ABS_TOL,
    rel_tol: float = REL_TOL,
    max_depth: int = MAX_DEPTH,
    initial_panels: int = 16,
) -> float:
    """Integrate ``func`` over ``[a, b]``.

    The tolerance is ``max(abs_tol, rel_tol * |I|)`` where ``I`` is a
    16-panel Simpson estimate; each panel gets a share proportional to its
    width and the usual ``|S2 - S1| <= 15 tol`` acceptance test with
    Richardson correction is applied on bisection.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    width = b - a
    n = initial_panels
    xs = [a + width * i / (2 * n) for i in range(2 * n + 1)]
    xs[-1] = b
    fs = [float(func(x)) for x in xs]
    panels = []
    rough = 0.0
    for i in range(n):
        x0, xm, x1 = xs[2 * i], xs[2 * i + 1], xs[2 * i + 2]
        f0, fm, f1 = fs[2 * i], fs[2 * i + 1], fs[2 * i + 2]
        s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1)
        rough += s
        panels.append((x0, x1, f0, fm, f1, s))
    if not math.isfinite(rough):
        raise QuadratureError("non-finite integrand on [%g, %g]" % (a, b))
    tol = max(abs_tol, rel_tol * abs(rough))

    total = 0.0
    # explicit stack: (x0, x1, f0, fm, f1, whole, tol, depth)
    stack = [(x0, x1, f0, fm, f1, s, tol * (x1 - x0) / width, 0)
             for (x0, x1, f0, fm, f1, s) in reversed(panels)]
    while stack:
        x0, x1, f0, fm, f1, whole, eps, depth = stack.pop()
        xm = 0.5 * (x0 + x1)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x1)
        fl = float(func(xl))
        fr = float(func(xr))
        left = (xm - x0) / 6.0 * (f0 + 4.0 * fl + fm)
        right = (x1 - xm) / 6.0 * (fm + 4.0 * fr + f1)
        delta = left + right - whole
        if not math.isfinite(delta):
            raise QuadratureError("non-finite integrand near x=%g" % xm)
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((xm, x1, fm, fr, f1, right, 0.5 * eps, depth + 1))
            stack.append((x0, xm, f0, fl, fm, left, 0.5 * eps, depth + 1))
    return sign * total
