"""Dyadic perturbations and the density constructor.

Given a smoothed generator f3, a rational interval I and a sharpness m, the
constructor redistributes leaf mass inside every dyadic cell
[2a/2^n, (2a+2)/2^n] so that each level-n strip gives the band I x [0,1]
conditional mass below 1/m or above 1 - 1/m, while staying d_alpha-close to
the input.  The redistribution is driven by a C^1 profile a~(x) built from
the classical smooth step

    a(x) = (1/gamma) * integral_0^x exp(1/((2t-1)^2 - 1)) dt.

Every free constant (delta1, delta2, n) is selected by closed-form
feasibility conditions and re-verified in a machine-readable certificate
together with measured stage distances and bi-Holder certificates.

Printed-formula corrections adopted here (all forced by continuity and by
the endpoint pins a~(0) = 1/2, a~ = delta2 off I, a~ = 1 - delta2 on I):
the descent/ascent orientations of the three transition branches, and
degenerate profiles for intervals anchored at x = 0 or x = 1 (the interval
transition that would fall outside [0, 1] merges with the anchor or is
dropped).  The second feasibility condition of the perturbation lemma
tightens as n grows as printed, contradicting the conditions that force n
large; it is evaluated and logged but not enforced, and the property it
supports (the lower bi-Holder bound) is certified directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Foliation, HolderClass, register_kind
from .errors import ParameterError
from .metric import SampleScheme, certify_bi_holder, d_alpha
from .numerics import (DEFAULT_SETTINGS, EvalSettings, adaptive_simpson,
                       gauss_legendre)
from .smoothing import (InterpolationParams, LipschitzEstimates, MollifyParams,
                        _bump_unit, _BUMP_MASS, choose_epsilon, choose_r,
                        estimate_lipschitz, interpolate_identity, mollify)


@dataclass(frozen=True)
class IntervalQ:
    """A rational interval [b1, b2] inside [0, 1]."""

    b1: Fraction
    b2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "b1", Fraction(self.b1))
        object.__setattr__(self, "b2", Fraction(self.b2))
        if not (0 <= self.b1 < self.b2 <= 1):
            raise ParameterError("interval must satisfy 0 <= b1 < b2 <= 1")

    @property
    def length(self) -> Fraction:
        return self.b2 - self.b1

    @classmethod
    def parse(cls, text: str) -> "IntervalQ":
        lo, _, hi = text.partition(":")
        if not hi:
            raise ParameterError("interval must be given as 'p/q:r/s'")
        return cls(Fraction(lo.strip()), Fraction(hi.strip()))

    def __str__(self):
        return f"{self.b1}:{self.b2}"


# -- smooth step ------------------------------------------------------------

_STEP_GRID = np.linspace(-1.0, 1.0, 4097)
_GL8 = gauss_legendre(8)
_GL16 = gauss_legendre(16)


def _cumulative_table() -> np.ndarray:
    x, w = _GL8
    lo = _STEP_GRID[:-1]
    hi = _STEP_GRID[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    seg = (half[:, 0]) * (_bump_unit(mid + half * x[None, :]) @ w)
    return np.concatenate([[0.0], np.cumsum(seg)])

_STEP_CUM = _cumulative_table()


def bump_a(x):
    """The normalized smooth step: a(0) = 0, a(1) = 1, C-infinity.

    Evaluated from a cumulative table with a local 16-node correction, so
    individual queries are accurate to ~1e-14 and vectorize.
    """
    x = np.asarray(x, dtype=float)
    u = np.clip(2.0 * x - 1.0, -1.0, 1.0)
    idx = np.clip(((u + 1.0) * 2048.0).astype(int), 0, 4095)
    base = _STEP_CUM[idx]
    lo = _STEP_GRID[idx]
    gx, gw = _GL16
    mid = 0.5 * (lo + u)
    half = 0.5 * (u - lo)
    local = half * (_bump_unit(mid[..., None] + half[..., None] * gx) @ gw)
    return (base + local) / _BUMP_MASS


def bump_a_deriv(x):
    """a'(x) = 2 exp(1/((2x-1)^2 - 1)) / integral; vanishes at 0 and 1."""
    x = np.asarray(x, dtype=float)
    return 2.0 * _bump_unit(2.0 * x - 1.0) / _BUMP_MASS

A_DERIV_MAX = 2.0 / (np.e * _BUMP_MASS)  # attained at x = 1/2


class BumpProfile:
    """The redistribution weight a~(x): 1/2 at x = 0, 1 - delta2 on I,
    delta2 on the rest, with smooth-step transitions of width delta1 (the
    x = 0 anchor transition may be narrower: ``anchor_width``).

    For b1 = 0 the anchor ascends directly into the plateau 1 - delta2; for
    b2 = 1 the right descent is dropped.  Values stay in
    [delta2, max(1/2, 1 - delta2)] and a~ is C^1.
    """

    def __init__(self, interval: IntervalQ, delta1: float, delta2: float,
                 anchor_width: float | None = None):
        b1 = float(interval.b1)
        b2 = float(interval.b2)
        if not (0.0 < delta2 < 0.5):
            raise ParameterError("delta2 must lie in (0, 1/2)")
        if not (0.0 < delta1 < 0.5):
            raise ParameterError("delta1 must lie in (0, 1/2)")
        w0 = delta1 if anchor_width is None else float(anchor_width)
        if not (0.0 < w0 <= delta1):
            raise ParameterError("anchor width must lie in (0, delta1]")
        if b1 > 0.0 and not (delta1 <= b1 / 2.0):
            raise ParameterError("delta1 too large: need delta1 <= b1/2")
        if b1 == 0.0 and not (w0 <= (b2 - b1) / 2.0):
            raise ParameterError("anchor width must fit inside the interval")
        if b2 < 1.0 and not (b2 + delta1 <= 1.0):
            raise ParameterError("delta1 too large: need b2 + delta1 <= 1")
        self.interval = interval
        self.b1 = b1
        self.b2 = b2
        self.delta1 = float(delta1)
        self.delta2 = float(delta2)
        self.anchor_width = w0

    # piecewise evaluation; conditions are ordered so selectors are disjoint
    def value(self, x):
        x = np.asarray(x, dtype=float)
        d1, d2, w0 = self.delta1, self.delta2, self.anchor_width
        b1, b2 = self.b1, self.b2
        conds, vals = [], []
        if b1 > 0.0:
            conds.append(x < w0)
            vals.append((0.5 - d2) * bump_a(1.0 - x / w0) + d2)
            conds.append(x < b1 - d1)
            vals.append(np.full_like(x, d2))
            conds.append(x < b1)
            vals.append((1.0 - 2.0 * d2) * bump_a((x - b1 + d1) / d1) + d2)
        else:
            conds.append(x < w0)
            vals.append((0.5 - d2) * bump_a(x / w0) + 0.5)
        if b2 < 1.0:
            conds.append(x <= b2)
            vals.append(np.full_like(x, 1.0 - d2))
            conds.append(x < b2 + d1)
            vals.append((1.0 - 2.0 * d2) * bump_a(1.0 - (x - b2) / d1) + d2)
            conds.append(x >= b2 + d1)
            vals.append(np.full_like(x, d2))
        else:
            conds.append(x <= 1.0)
            vals.append(np.full_like(x, 1.0 - d2))
        return np.select(conds, vals, default=d2)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        d1, d2, w0 = self.delta1, self.delta2, self.anchor_width
        b1, b2 = self.b1, self.b2
        conds, vals = [], []
        if b1 > 0.0:
            conds.append(x < w0)
            vals.append(-(0.5 - d2) / w0 * bump_a_deriv(1.0 - x / w0))
            conds.append(x < b1 - d1)
            vals.append(np.zeros_like(x))
            conds.append(x < b1)
            vals.append((1.0 - 2.0 * d2) / d1
                        * bump_a_deriv((x - b1 + d1) / d1))
        else:
            conds.append(x < w0)
            vals.append((0.5 - d2) / w0 * bump_a_deriv(x / w0))
        if b2 < 1.0:
            conds.append(x <= b2)
            vals.append(np.zeros_like(x))
            conds.append(x < b2 + d1)
            vals.append(-(1.0 - 2.0 * d2) / d1
                        * bump_a_deriv(1.0 - (x - b2) / d1))
        return np.select(conds, vals, default=0.0)

    def deriv_sup(self) -> float:
        """Analytic sup of |a~'|; below the printed bound 2(1-2 delta2)/d1
        when anchor_width = delta1, larger when the anchor is narrowed."""
        d2 = self.delta2
        return A_DERIV_MAX * max((0.5 - d2) / self.anchor_width,
                                 (1.0 - 2.0 * d2) / self.delta1)

    def effective_delta1(self) -> float:
        """The delta1 to use in sup|a~'|-driven inequalities: matches the
        printed 2(1-2 delta2)/delta1 envelope for the actual profile."""
        return min(self.delta1,
                   2.0 * (1.0 - 2.0 * self.delta2) / self.deriv_sup())

    def breakpoints(self) -> tuple[float, ...]:
        pts = {0.0, self.anchor_width, 1.0}
        if self.b1 > 0.0:
            pts.update((self.b1 - self.delta1, self.b1))
        pts.add(self.b2)
        if self.b2 < 1.0:
            pts.add(self.b2 + self.delta1)
        return tuple(sorted(p for p in pts if 0.0 <= p <= 1.0))


def bump_a_tilde(x, delta1: float, delta2: float, interval: IntervalQ,
                 anchor_width: float | None = None):
    """Functional form of the profile (convenience wrapper)."""
    return BumpProfile(interval, delta1, delta2, anchor_width).value(x)


# -- parameter selection -----------------------------------------------------


def lemma5_value(delta1: float, delta2: float, L3: float, mu: float) -> float:
    """max of the two printed strip-ratio bounds; must be < 1/m."""
    den = 1.0 - mu - 3.0 * delta1
    if den <= 0.0 or mu <= 0.0:
        return math.inf
    first = L3 * L3 * delta2 * mu / den
    second = L3 * L3 * (3.0 * delta1 + delta2 * (1.0 - mu - 3.0 * delta1)) / mu
    return max(first, second)


@dataclass(frozen=True)
class DeltaChoice:
    delta1: float
    delta2: float
    lemma5: float
    halvings: int


def choose_deltas(L3: float, m: int, interval: IntervalQ,
                  ratio: float = 1.0,
                  delta_cap: float | None = None) -> DeltaChoice:
    """Pick (delta1, delta2) with delta2 = ratio * delta1, halving until the
    ratio bounds clear 1/(2m) (factor-two headroom).

    The starting point combines the 1/(8 m L3^2) scale of the bounds with
    the geometric room the profile needs; intervals anchored at 0 or 1 use
    the interval length for the side that has no transition.
    """
    if m < 2:
        raise ParameterError("m must be at least 2")
    mu = float(interval.length)
    if not (0.0 < mu < 1.0):
        raise ParameterError("interval length must lie strictly in (0, 1)")
    if not (0.0 < ratio <= 1.0):
        raise ParameterError("delta ratio must lie in (0, 1]")
    caps = [1.0 / (8.0 * m * L3 * L3), (1.0 - mu) / 8.0]
    b1, b2 = float(interval.b1), float(interval.b2)
    if b1 > 0.0:
        caps.append(b1 / 4.0)
    else:
        caps.append(mu / 4.0)
    if b2 < 1.0:
        caps.append((1.0 - b2) / 4.0)
    if delta_cap is not None:
        caps.append(float(delta_cap))
    d1 = min(caps)
    halvings = 0
    while lemma5_value(d1, ratio * d1, L3, mu) >= 1.0 / (2.0 * m):
        halvings += 1
        if halvings > 80:
            raise ParameterError(
                "no feasible (delta1, delta2) after 80 halvings")
        d1 *= 0.5
    return DeltaChoice(delta1=d1, delta2=ratio * d1,
                       lemma5=lemma5_value(d1, ratio * d1, L3, mu),
                       halvings=halvings)


def perturbation_conditions(n: int, hc: HolderClass, C_eps: float, L3: float,
                            K3: float, delta1: float, delta2: float,
                            xi: float) -> dict[str, tuple[float, float]]:
    """(lhs, rhs) of every feasibility condition at level n.

    Keys c1, c3, c4a..c4d are enforced; c2_logged is recorded only.
    """
    C, beta, alpha = hc.C, hc.beta, hc.alpha
    c1 = L3 * (1.0 - delta2) / 2.0 ** (n * (1.0 - beta) - 3.0) + C_eps
    c2 = 2.0 * 2.0 ** (n * (1.0 - 1.0 / beta)) * L3 / delta2
    c3 = 2.0 ** (n * (1.0 - 1.0 / beta) + 2.0 / beta) * L3 / delta2
    c4 = {
        "c4a": L3 / 2.0 ** (n - 1),
        "c4b": (4.0 * L3 / delta1 + 3.0 * K3) / 2.0 ** n,
        "c4c": 3.0 * L3 / 2.0 ** (n * (1.0 - alpha) - 2.0),
        "c4d": (C ** (2.0 * beta - alpha)
                / 2.0 ** ((n - 1.0) * beta * (beta - alpha) - 1.0)),
    }
    out = {"c1": (c1, C), "c2_logged": (C_eps, c2), "c3": (c3, C)}
    for key, lhs in c4.items():
        out[key] = (lhs, xi / 12.0)
    return out


ENFORCED_CONDITIONS = ("c1", "c3", "c4a", "c4b", "c4c", "c4d")


def choose_n(hc: HolderClass, C_eps: float, L3: float, K3: float,
             delta1: float, delta2: float, xi: float,
             n_floor: int = 1, n_cap: int = 64) -> int:
    """Smallest level n <= n_cap meeting every enforced condition."""
    for n in range(max(1, n_floor), n_cap + 1):
        conds = perturbation_conditions(n, hc, C_eps, L3, K3,
                                        delta1, delta2, xi)
        if all(conds[k][0] <= conds[k][1] for k in ENFORCED_CONDITIONS):
            return n
    conds = perturbation_conditions(n_cap, hc, C_eps, L3, K3,
                                    delta1, delta2, xi)
    binding = [k for k in ENFORCED_CONDITIONS if conds[k][0] > conds[k][1]]
    raise ParameterError(
        f"no feasible perturbation level n <= {n_cap}; binding conditions: "
        f"{', '.join(binding)}")


@dataclass(frozen=True)
class PerturbationParams:
    delta1: float
    delta2: float
    n: int
    anchor_width: float
    lemma5: float
    mollify: MollifyParams | None = None
    interpolation: InterpolationParams | None = None
    lipschitz: LipschitzEstimates | None = None


# -- the perturbed generator -------------------------------------------------


@register_kind
class DyadicPerturbedFoliation(Foliation):
    """Within each dyadic cell [2a/2^n, (2a+2)/2^n] the generator follows

        f~(x, (2a+t)/2^n) = f3(x, 2a/2^n) + w(t, x) * cell_width,
        w = t a~(x)                 on t in [0, 1],
        w = (t-1) + a~(x) (2 - t)   on t in [1, 2],

    so it agrees with f3 on every even dyadic line and splits each cell's
    width in proportion a~ : 1 - a~.  Interior arithmetic runs on exact
    dyadic indices, so widths and slopes remain available at levels far
    below float64 resolution of y itself.
    """

    kind = "dyadic-perturbed"

    def __init__(self, base: Foliation, n: int, profile: BumpProfile,
                 declared_class: HolderClass | None = None):
        super().__init__(declared_class or base.declared_class)
        if n < 1:
            raise ParameterError("perturbation level must be >= 1")
        self.base = base
        self.n = int(n)
        self.profile = profile

    # -- cell bookkeeping ----------------------------------------------

    def _cells(self, y):
        """(a_float, t): cell index (integer-valued float) and t in [0, 2]."""
        y = np.asarray(y, dtype=float)
        scale = 2.0 ** self.n
        if not np.isfinite(scale):
            return np.zeros_like(y), np.zeros_like(y)
        y2n = y * scale
        a = np.floor(0.5 * y2n)
        a = np.minimum(a, 2.0 ** (self.n - 1) - 1.0)
        a = np.maximum(a, 0.0)
        t = y2n - 2.0 * a
        return a, t

    def _cell_edges(self, a):
        scale = 2.0 ** -self.n
        y0 = (2.0 * a) * scale
        y2 = (2.0 * a + 2.0) * scale
        return y0, np.minimum(y2, 1.0)

    def _weight(self, t, az):
        lower = t <= 1.0
        return np.where(lower, t * az, (t - 1.0) + az * (2.0 - t))

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        a, t = self._cells(y)
        y0, y2 = self._cell_edges(a)
        az = self.profile.value(x)
        w = self._weight(t, az)
        cell = self.base.pair_width(x, y0, y2)
        return self.base.value(x, y0) + w * cell

    def dx(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        a, t = self._cells(y)
        y0, y2 = self._cell_edges(a)
        az = self.profile.value(x)
        daz = self.profile.deriv(x)
        w = self._weight(t, az)
        w_x = np.where(t <= 1.0, t * daz, (2.0 - t) * daz)
        f0x = self.base.dx(x, y0)
        f2x = self.base.dx(x, y2)
        cell = self.base.pair_width(x, y0, y2)
        return f0x + w * (f2x - f0x) + w_x * cell

    def dy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        a, t = self._cells(y)
        az = self.profile.value(x)
        wt = np.where(t < 1.0, az, 1.0 - az)  # lower-closed convention
        scale = 2.0 ** self.n
        if self.n <= 40:
            # cell edges stay distinct floats: fully vectorized
            y0, y2 = self._cell_edges(a)
            return wt * scale * self.base.pair_width(x, y0, y2)
        # deep cells: group by exact index via sorted runs
        out = np.empty(x.shape)
        flat_a = a.ravel()
        flat_x = x.ravel()
        flat_w = wt.ravel()
        flat_o = out.ravel()
        order = np.argsort(flat_a, kind="stable")
        sorted_a = flat_a[order]
        starts = np.flatnonzero(np.concatenate(
            [[True], sorted_a[1:] != sorted_a[:-1]]))
        bounds = np.append(starts, sorted_a.size)
        for s, e in zip(bounds[:-1], bounds[1:]):
            sel = order[s:e]
            width = self.strip_width(flat_x[sel], self.n - 1,
                                     int(sorted_a[s]))
            flat_o[sel] = flat_w[sel] * scale * width
        return out

    def pair_width(self, x, y_lo, y_hi):
        x = np.asarray(x, dtype=float)
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        x, y_lo, y_hi = np.broadcast_arrays(x, y_lo, y_hi)
        a1, t1 = self._cells(y_lo)
        a2, t2 = self._cells(y_hi)
        az = self.profile.value(x)
        same = a1 == a2
        # within one cell: difference of interpolation weights, exactly
        w1 = self._weight(t1, az)
        w2 = self._weight(t2, az)
        y0, y2c = self._cell_edges(a1)
        inner = (w2 - w1) * self.base.pair_width(x, y0, y2c)
        # across cells: split at the enclosing even dyadic lines
        lo_hi_edge = self._cell_edges(a1)[1]   # top of y_lo's cell
        hi_lo_edge = self._cell_edges(a2)[0]   # bottom of y_hi's cell
        up_part = (1.0 - w1) * self.base.pair_width(x, y0, lo_hi_edge)
        mid_part = self.base.pair_width(x, lo_hi_edge, hi_lo_edge)
        y0b, y2b = self._cell_edges(a2)
        low_part = w2 * self.base.pair_width(x, y0b, y2b)
        return np.where(same, inner, up_part + mid_part + low_part)

    def strip_width(self, x, level: int, index: int):
        """Width of the level-``level`` strip ``index`` at transversal x."""
        x = np.asarray(x, dtype=float)
        n = self.n
        if level < n:
            return self.base.strip_width(x, level, index)
        # the strip sits inside one half-cell; locate it with exact ints
        span = 1 << (level - n + 1)           # level strips per cell
        a, rem = divmod(index, span)
        half = span >> 1
        az = self.profile.value(x)
        weight = np.where(rem < half, az, 1.0 - az)
        frac = 2.0 ** (n - 1 - level)          # strip share of the half-cell
        cell = self.base.strip_width(x, n - 1, a)
        return weight * 2.0 * frac * cell

    def slope_envelope(self, x):
        # widest case over all levels: deep strips scale base slopes by
        # 2 a~ or 2 (1 - a~); the coarse-strip envelope sits inside it
        x = np.asarray(x, dtype=float)
        az = self.profile.value(x)
        m_lo = np.minimum(az, 1.0 - az)
        m_hi = np.maximum(az, 1.0 - az)
        blo, bhi = self.base.slope_envelope(x)
        return 2.0 * m_lo * blo, 2.0 * m_hi * bhi

    def level_widths(self, x: float, n: int) -> np.ndarray:
        if n < self.n:
            return self.base.level_widths(x, n)
        cells = self.base.level_widths(x, self.n - 1)
        az = float(self.profile.value(np.float64(x)))
        split = np.empty(2 * cells.size)
        split[0::2] = az * cells
        split[1::2] = (1.0 - az) * cells
        if n == self.n:
            return split
        sub = 1 << (n - self.n)
        return np.repeat(split, sub) / sub

    def x_breakpoints(self):
        pts = set(self.base.x_breakpoints())
        pts.update(self.profile.breakpoints())
        return tuple(sorted(pts))

    def finest_level(self):
        inner = self.base.finest_level()
        return self.n if inner is None else max(self.n, inner)

    def manifest_params(self):
        p = self.profile
        return {"n": self.n, "delta1": p.delta1, "delta2": p.delta2,
                "b1": p.interval.b1, "b2": p.interval.b2,
                "anchor_width": p.anchor_width}

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        interval = IntervalQ(Fraction(params["b1"]), Fraction(params["b2"]))
        profile = BumpProfile(interval, float(params["delta1"]),
                              float(params["delta2"]),
                              float(params["anchor_width"]))
        return cls(base, int(params["n"]), profile, declared_class)


def dyadic_perturb(f3: Foliation, pp: PerturbationParams, interval: IntervalQ,
                   declared_class: HolderClass | None = None
                   ) -> DyadicPerturbedFoliation:
    profile = BumpProfile(interval, pp.delta1, pp.delta2, pp.anchor_width)
    return DyadicPerturbedFoliation(f3, pp.n, profile, declared_class)
