"""Deterministic quadrature helpers.

Two workhorses: composite Gauss-Legendre with panel splits at known
integrand kinks (exponentially accurate on piecewise-smooth integrands),
and a small adaptive Simpson routine for one-off integrals of black-box
functions.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1], cached per order."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
    return _GL_CACHE[n]


def panel_nodes(a: float, b: float, breaks: Iterable[float] = (),
                order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [a, b], split at interior breakpoints.

    Breakpoints outside (a, b) are ignored; duplicates collapse.  Returns
    flat arrays (nodes, weights); empty when b <= a.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    cuts = sorted({float(c) for c in breaks if a < c < b})
    edges = np.array([a, *cuts, b])
    x, w = gauss_legendre(order)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate_panels(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                     breaks: Iterable[float] = (), order: int = 16) -> float:
    """Integrate a vectorized callable over [a, b] with panel splits."""
    nodes, weights = panel_nodes(a, b, breaks, order)
    if nodes.size == 0:
        return 0.0
    return float(weights @ np.asarray(f(nodes), dtype=float))


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with absolute tolerance.

    Scalar callable; recursion bisects until the Richardson estimate of
    the local error drops below the allotted tolerance.
    """
    if b <= a:
        return 0.0

    def simp(lo: float, hi: float, flo: float, fmid: float, fhi: float) -> float:
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simp(lo, mid, flo, flm, fmid)
        right = simp(mid, hi, fmid, frm, fhi)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, flm, fmid, left, eps / 2.0, depth + 1)
                + recurse(mid, hi, fmid, frm, fhi, right, eps / 2.0, depth + 1))

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    whole = simp(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)
