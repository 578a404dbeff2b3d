"""Scalar root isolation: sign-change bracketing on a grid plus bisection."""
from __future__ import annotations

import numpy as np


def bisect(fn, lo: float, hi: float, flo: float | None = None, max_iter: int = 200) -> float:
    """Shrink a sign-change bracket until it stops shrinking in floating point.

    Returns the end point with the smaller ``|fn|``.
    """
    flo = fn(lo) if flo is None else flo
    fhi = fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("bisect needs a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo if abs(flo) <= abs(fhi) else hi


def sign_change_brackets(x: np.ndarray, y: np.ndarray) -> list[tuple[int, int]]:
    """Index pairs of consecutive nonzero samples with opposite signs."""
    s = np.sign(y)
    nz = np.flatnonzero(s != 0)
    return [(int(j), int(k)) for j, k in zip(nz[:-1], nz[1:]) if s[j] != s[k]]


def isolate_roots(fn, x: np.ndarray) -> list[float]:
    """All roots of a vectorized ``fn`` detected by sign changes or exact zeros on the grid ``x``."""
    y = np.asarray(fn(x), dtype=float)
    roots = [float(xi) for xi, yi in zip(x, y) if yi == 0.0]
    scalar = lambda t: float(fn(np.array([t]))[0])
    for j, k in sign_change_brackets(x, y):
        if k == j + 1:  # wider brackets enclose exact grid zeros, already recorded
            roots.append(bisect(scalar, float(x[j]), float(x[k]), float(y[j])))
    return sorted(roots)
