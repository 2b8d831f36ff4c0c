"""Shared numerical kernels: quadrature, vectorized bisection, settings.

Everything here is deterministic given its inputs; randomness only enters
through explicitly seeded generators created by callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CorruptFoliationError, PrecisionError

# Convolutions with support radius below this are numerically the identity
# map on float64 inputs (the shifted nodes round back onto y), so the
# quadrature loop can be skipped without changing any representable value.
NOOP_RADIUS = 2.0 ** -60


@dataclass(frozen=True)
class EvalSettings:
    """Numerical budgets used by evaluators and certificates.

    root_tol        absolute tolerance (in y) of the monotone inverse solver
    root_max_iter   bisection iteration cap; hitting it raises
    quad_nodes      fixed Gauss-Legendre order for mollification integrals
    quad_selfcheck  doubling drift budget for the convolution self-check
    fd_step         central-difference step for fallback x-derivatives
    strip_tol_scale strip measures use absolute tolerance scale * 2**-n
    """

    root_tol: float = 1e-12
    root_max_iter: int = 200
    quad_nodes: int = 64
    quad_selfcheck: float = 1e-8
    fd_step: float = 1e-6
    strip_tol_scale: float = 1e-10

    def __post_init__(self):
        if not (0 < self.root_tol <= 1e-10):
            raise ValueError("root_tol must be positive and at most 1e-10")
        if self.quad_nodes < 8 or self.fd_step <= 0 or self.strip_tol_scale <= 0:
            raise ValueError("quadrature/step settings must be positive")


DEFAULT_SETTINGS = EvalSettings()


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1], cached."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def fixed_quad(fn, a: float, b: float, n: int) -> float:
    """Fixed-order Gauss-Legendre quadrature of a vectorized integrand."""
    x, w = gauss_legendre(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(half * np.dot(w, fn(mid + half * x)))


def adaptive_simpson(fn, a: float, b: float, tol: float,
                     min_depth: int = 2, max_depth: int = 40,
                     breakpoints=()) -> float:
    """Batched adaptive Simpson rule for a vectorized integrand on [a, b].

    The integrand must accept a numpy array and return one.  Known interior
    kinks can be passed via ``breakpoints`` so the initial panels are split
    there; the usual |S2 - S1|/15 error estimate then converges fast.
    """
    if b <= a:
        return 0.0
    pts = [a] + sorted(float(p) for p in breakpoints if a < p < b) + [b]
    # seed panels, forcing a a few initial bisections per panel
    lo = np.array(pts[:-1])
    hi = np.array(pts[1:])
    for _ in range(min_depth):
        mid = 0.5 * (lo + hi)
        lo = np.concatenate([lo, mid])
        hi = np.concatenate([mid, hi])

    def simpson(x0, x2):
        x1 = 0.5 * (x0 + x2)
        f0, f1, f2 = fn(x0), fn(x1), fn(x2)
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    total = 0.0
    s_whole = simpson(lo, hi)
    depth = 0
    while lo.size:
        depth += 1
        if depth > max_depth:
            # leftover panels are accepted at their current estimate
            total += float(np.sum(s_whole))
            break
        mid = 0.5 * (lo + hi)
        s_left = simpson(lo, mid)
        s_right = simpson(mid, hi)
        err = np.abs(s_left + s_right - s_whole)
        # distribute the absolute budget by panel length
        budget = tol * np.maximum((hi - lo) / (b - a), 1e-300)
        done = err <= 15.0 * budget
        refined = s_left + s_right + (s_left + s_right - s_whole) / 15.0
        total += float(np.sum(refined[done]))
        keep = ~done
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        s_whole = np.concatenate([s_left[keep], s_right[keep]])
    return total


def bisect_monotone(fn, z, lo: float, hi: float, tol: float,
                    max_iter: int = 200):
    """Vectorized bisection for an increasing map on [lo, hi].

    Solves fn(y) = z elementwise.  ``fn`` must be vectorized; ``z`` may be a
    scalar or array.  Raises CorruptFoliationError if the bracket does not
    actually bracket (non-monotone upstream data).
    """
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    a = np.full(z.shape, float(lo))
    b = np.full(z.shape, float(hi))
    fa = fn(a) - z
    fb = fn(b) - z
    bad = (fa > 1e-9) | (fb < -1e-9)
    if np.any(bad):
        raise CorruptFoliationError(
            "bracket failure in monotone inverse: endpoint values do not "
            "enclose the target (non-monotone foliation?)")
    it = 0
    while np.max(b - a) > tol:
        it += 1
        if it > max_iter:
            raise PrecisionError("bisection iteration cap reached")
        m = 0.5 * (a + b)
        below = (fn(m) - z) < 0.0  # root lies to the right of m
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    y = 0.5 * (a + b)
    return float(y[0]) if scalar else y


def monotone_interp_inverse(y_grid: np.ndarray, f_vals: np.ndarray,
                            z) -> np.ndarray:
    """Inverse of a strictly increasing sampled map by linear interpolation.

    Used only inside metric estimators where a scheme-level approximation is
    the documented contract; the bisection path stays the exact oracle.
    """
    return np.interp(np.asarray(z, dtype=float), f_vals, y_grid)


def require_unit_interval(name: str, x) -> np.ndarray:
    """Validate points lie in [0, 1] (tiny slack for rounding)."""
    arr = np.asarray(x, dtype=float)
    if arr.size and (np.min(arr) < -1e-12 or np.max(arr) > 1.0 + 1e-12):
        from .errors import DomainError
        raise DomainError(f"{name} must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)
