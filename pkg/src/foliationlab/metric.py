"""Sampled estimation of the foliation metric and bi-Holder certification.

True sup norms over [0,1]^2 are not computable; every estimator here is a
lower bound built from a reproducible sampling scheme, paired with a
refinement check (the refined scheme is a strict superset of the base one,
so estimates can only grow).  Distances between two generators are always
evaluated on the shared sample set, which makes symmetry and the triangle
inequality hold exactly at scheme level.

The metric has four ingredients: the C0 distance of the generators, the C0
distance of their x-derivatives, and for each transversal x the alpha
seminorms of the forward holonomy difference f(x,.) - g(x,.) and of the
inverse holonomy difference f(x,.)^-1 - g(x,.)^-1.  The printed definition
is ambiguous about whether the sup over x covers both holonomy terms; both
are included here, since both are bounded in every downstream estimate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Foliation, HolderClass
from .numerics import DEFAULT_SETTINGS, EvalSettings


@dataclass(frozen=True)
class SampleScheme:
    """Deterministic sample plan for norm estimation.

    The pair ladder anchors a uniform grid and walks separations 2^-k for
    k = 0..k_max (so separations cover [2^-k_max, 1]), plus uniform random
    pairs.  ``extra_separations`` lets certificates pin scales like the
    exact 2^-n of a perturbation.  ``inverse_grid`` is the resolution of
    the monotone table used to invert holonomies inside the metric; it is
    deliberately not refined so per-pair values are refinement-invariant.
    """

    x_res: int = 17
    y_res: int = 129
    anchors: int = 65
    k_max: int = 20
    n_random: int = 10000
    seed: int = 2026
    extra_separations: tuple = ()
    inverse_grid: int = 16385

    def __post_init__(self):
        if self.k_max < 10:
            raise ValueError("k_max must be at least 10")
        if self.n_random < 0:
            raise ValueError("n_random must be nonnegative")

    def refine(self) -> "SampleScheme":
        """Doubled scheme whose sample set contains this scheme's."""
        return replace(self,
                       x_res=2 * (self.x_res - 1) + 1,
                       y_res=2 * (self.y_res - 1) + 1,
                       anchors=2 * (self.anchors - 1) + 1,
                       k_max=self.k_max + 2,
                       n_random=2 * self.n_random)

    def digest(self) -> str:
        txt = (f"x{self.x_res}y{self.y_res}a{self.anchors}k{self.k_max}"
               f"r{self.n_random}s{self.seed}i{self.inverse_grid}"
               f"e{tuple(float(s) for s in self.extra_separations)}")
        return txt + "#" + hashlib.sha1(txt.encode()).hexdigest()[:8]

    # -- sample sets ----------------------------------------------------

    def x_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.x_res)

    def c0_points(self) -> tuple[np.ndarray, np.ndarray]:
        xg = np.linspace(0.0, 1.0, self.x_res)
        yg = np.linspace(0.0, 1.0, self.y_res)
        gx, gy = np.meshgrid(xg, yg, indexing="ij")
        rng = np.random.default_rng(self.seed)
        # row-wise draws so a doubled count extends the same point stream
        pts = rng.random((self.n_random, 2))
        return (np.concatenate([gx.ravel(), pts[:, 0]]),
                np.concatenate([gy.ravel(), pts[:, 1]]))

    def y_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Pair ladder (y1, y2) with y1 < y2, used for every seminorm."""
        a = np.linspace(0.0, 1.0, self.anchors)
        lo, hi = [], []
        seps = [2.0 ** -k for k in range(0, self.k_max + 1)]
        seps.extend(float(s) for s in self.extra_separations)
        for s in seps:
            keep = a + s <= 1.0 + 1e-15
            y1 = a[keep]
            y2 = np.minimum(y1 + s, 1.0)
            ok = y2 > y1
            lo.append(y1[ok])
            hi.append(y2[ok])
        rng = np.random.default_rng(self.seed + 1)
        uv = rng.random((self.n_random, 2))
        y1 = np.minimum(uv[:, 0], uv[:, 1])
        y2 = np.maximum(uv[:, 0], uv[:, 1])
        ok = y2 > y1
        lo.append(y1[ok])
        hi.append(y2[ok])
        return np.concatenate(lo), np.concatenate(hi)


DEFAULT_SCHEME = SampleScheme()

# light scheme for bulk sanity sweeps (metric axioms over many triples)
LIGHT_SCHEME = SampleScheme(x_res=9, y_res=33, anchors=17, k_max=12,
                            n_random=512, inverse_grid=4097)


@dataclass(frozen=True)
class NormEstimate:
    """A sampled lower bound for a sup norm.

    ``refined_value``/``monotone`` are filled when a one-step refinement was
    run; monotonicity is structural (superset sampling) so a False here
    signals a bug, not noise.
    """

    value: float
    scheme_digest: str
    refined_value: float | None = None
    monotone: bool | None = None
    parts: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _max_abs_diff(fa, fb, x, y):
    return float(np.max(np.abs(fa(x, y) - fb(x, y)))) if x.size else 0.0


def _structure_x(f: Foliation, g: Foliation) -> np.ndarray:
    """Breakpoints and their midpoints: where derivative terms peak."""
    pts = sorted(set(f.x_breakpoints()) | set(g.x_breakpoints()))
    if not pts:
        return np.empty(0)
    mids = [0.5 * (a + b) for a, b in zip(pts[:-1], pts[1:])]
    out = np.array(sorted(set(pts) | set(mids)))
    return out[(out >= 0.0) & (out <= 1.0)]


def c0_distance(f: Foliation, g: Foliation, scheme: SampleScheme = DEFAULT_SCHEME,
                refine_check: bool = True) -> NormEstimate:
    """sup |f - g| over the scheme's grid and random points."""
    x, y = scheme.c0_points()
    val = _max_abs_diff(f.value, g.value, x, y)
    refined = monotone = None
    if refine_check:
        xr, yr = scheme.refine().c0_points()
        refined = _max_abs_diff(f.value, g.value, xr, yr)
        monotone = refined >= val - 1e-15
    return NormEstimate(val, scheme.digest(), refined, monotone)


def holder_seminorm(h, alpha: float, scheme: SampleScheme = DEFAULT_SCHEME,
                    refine_check: bool = True) -> NormEstimate:
    """sup over pairs of |h(y2) - h(y1)| / |y2 - y1|^alpha.

    ``h`` must be a vectorized one-variable map on [0, 1].
    """
    def estimate(sch):
        y1, y2 = sch.y_pairs()
        num = np.abs(h(y2) - h(y1))
        return float(np.max(num / (y2 - y1) ** alpha)) if y1.size else 0.0

    val = estimate(scheme)
    refined = monotone = None
    if refine_check:
        refined = estimate(scheme.refine())
        monotone = refined >= val - 1e-15
    return NormEstimate(val, scheme.digest(), refined, monotone)


def _inverse_table(f: Foliation, x: float, grid: int):
    yt = np.linspace(0.0, 1.0, grid)
    vals = f.value(np.full(yt.shape, x), yt)
    return yt, vals


def _holonomy_terms(f: Foliation, g: Foliation, alpha: float,
                    scheme: SampleScheme,
                    xs_extra=np.empty(0)) -> tuple[float, float]:
    """sup over x of the forward / inverse holonomy-difference seminorms."""
    y1, y2 = scheme.y_pairs()
    den = (y2 - y1) ** alpha
    fwd = 0.0
    inv = 0.0
    xs_all = np.unique(np.concatenate([scheme.x_grid(), xs_extra]))
    for x in xs_all:
        xa = np.full(y1.shape, x)
        df = (f.value(xa, y2) - g.value(xa, y2)
              - (f.value(xa, y1) - g.value(xa, y1)))
        fwd = max(fwd, float(np.max(np.abs(df) / den)))
        yt, fv = _inverse_table(f, x, scheme.inverse_grid)
        _, gv = _inverse_table(g, x, scheme.inverse_grid)
        hf1 = np.interp(y1, fv, yt)
        hf2 = np.interp(y2, fv, yt)
        hg1 = np.interp(y1, gv, yt)
        hg2 = np.interp(y2, gv, yt)
        di = (hf2 - hg2) - (hf1 - hg1)
        inv = max(inv, float(np.max(np.abs(di) / den)))
    return fwd, inv


def d_alpha(f: Foliation, g: Foliation, hc: HolderClass,
            scheme: SampleScheme = DEFAULT_SCHEME,
            refine_check: bool = False,
            settings: EvalSettings = DEFAULT_SETTINGS) -> NormEstimate:
    """The foliation metric: C0 term + x-derivative term + holonomy term.

    Sampling is structure-aware: breakpoints of either generator and their
    midpoints join the x grid, since the derivative difference peaks inside
    transition bands far narrower than any uniform grid.  Inverse
    holonomies are read from a monotone interpolation table (the bisection
    solver stays the exact oracle for tests); the table grid is shared
    between f and g, so d_alpha(f, f) is exactly zero and symmetry is
    exact.
    """
    xs_extra = _structure_x(f, g)

    def estimate(sch):
        x, y = sch.c0_points()
        t_c0 = _max_abs_diff(f.value, g.value, x, y)
        t_dx = _max_abs_diff(f.dx, g.dx, x, y)
        if xs_extra.size:
            yg = np.linspace(0.0, 1.0, sch.y_res)
            xe = xs_extra[:, None]
            t_c0 = max(t_c0, _max_abs_diff(f.value, g.value, xe, yg))
            t_dx = max(t_dx, _max_abs_diff(f.dx, g.dx, xe, yg))
        fwd, inv = _holonomy_terms(f, g, hc.alpha, sch, xs_extra)
        return t_c0 + t_dx + max(fwd, inv), {
            "c0": t_c0, "dx": t_dx, "holonomy_fwd": fwd, "holonomy_inv": inv}

    val, parts = estimate(scheme)
    refined = monotone = None
    if refine_check:
        refined, _ = estimate(scheme.refine())
        monotone = refined >= val - 1e-15
    return NormEstimate(val, scheme.digest(), refined, monotone, parts)


@dataclass(frozen=True)
class BiHolderCertificate:
    """Measured two-sided Holder constants against a declared class.

    upper: smallest C with |df| <= C |dy|^beta over the samples
    lower: smallest C with |df| >= C^-1 |dy|^(1/beta) over the samples
    Pass requires both at most declared C * (1 + slack).
    """

    upper: float
    lower: float
    declared_C: float
    beta: float
    slack: float
    passed: bool
    worst_pair: dict
    scheme_digest: str


def certify_bi_holder(f: Foliation, hc: HolderClass,
                      scheme: SampleScheme = DEFAULT_SCHEME,
                      slack: float = 1e-2) -> BiHolderCertificate:
    """Check C^-1 |dy|^(1/beta) <= |df| <= C |dy|^beta on the pair ladder.

    Widths go through the stable pair_width path so separations at the
    perturbation scale keep full relative accuracy.  A flat spot (zero
    width over positive separation) fails the lower bound with an infinite
    measured constant and is reported with the offending pair.
    """
    y1, y2 = scheme.y_pairs()
    h = y2 - y1
    up_best = 0.0
    lo_best = 0.0
    worst = {}
    for x in scheme.x_grid():
        xa = np.full(y1.shape, x)
        dv = np.abs(f.pair_width(xa, y1, y2))
        up = dv / h ** hc.beta
        i_up = int(np.argmax(up))
        if up[i_up] > up_best:
            up_best = float(up[i_up])
            if up_best > hc.C * (1.0 + slack):
                worst = {"side": "upper", "x": float(x),
                         "y1": float(y1[i_up]), "y2": float(y2[i_up]),
                         "value": up_best}
        with np.errstate(divide="ignore"):
            lo = np.where(dv > 0.0, h ** (1.0 / hc.beta) / dv, np.inf)
        i_lo = int(np.argmax(lo))
        if lo[i_lo] > lo_best:
            lo_best = float(lo[i_lo])
            if lo_best > hc.C * (1.0 + slack):
                worst = {"side": "lower", "x": float(x),
                         "y1": float(y1[i_lo]), "y2": float(y2[i_lo]),
                         "value": lo_best}
    passed = (up_best <= hc.C * (1.0 + slack)
              and lo_best <= hc.C * (1.0 + slack))
    return BiHolderCertificate(upper=up_best, lower=lo_best, declared_C=hc.C,
                               beta=hc.beta, slack=slack, passed=passed,
                               worst_pair=worst, scheme_digest=scheme.digest())


@dataclass(frozen=True)
class CauchyReport:
    """Successive distances of a sequence, checked against decay budgets."""

    distances: tuple
    budgets: tuple | None
    within_budget: tuple | None
    passed: bool
    matrix: tuple | None = None

    def table(self) -> str:
        lines = ["k\td(f_k,f_{k+1})\tbudget\tok"]
        for k, d in enumerate(self.distances):
            b = "" if self.budgets is None else f"{self.budgets[k]:.6g}"
            ok = "" if self.within_budget is None else str(self.within_budget[k])
            lines.append(f"{k}\t{d:.6g}\t{b}\t{ok}")
        return "\n".join(lines)


def cauchy_probe(fols, hc: HolderClass,
                 scheme: SampleScheme = DEFAULT_SCHEME,
                 xi0: float | None = None,
                 full_matrix: bool = False) -> CauchyReport:
    """Pairwise distances of a candidate Cauchy sequence.

    With ``xi0`` set, flags whether d(f_k, f_{k+1}) <= xi0 / 2^k.
    """
    fols = list(fols)
    if len(fols) < 2:
        return CauchyReport((), (xi0,) if xi0 else None, (), True)
    dists = tuple(
        d_alpha(fols[k], fols[k + 1], hc, scheme).value
        for k in range(len(fols) - 1))
    budgets = within = None
    passed = True
    if xi0 is not None:
        budgets = tuple(xi0 / 2.0 ** k for k in range(len(dists)))
        within = tuple(d <= b for d, b in zip(dists, budgets))
        passed = all(within)
    matrix = None
    if full_matrix:
        n = len(fols)
        m = [[0.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                m[i][j] = m[j][i] = d_alpha(fols[i], fols[j], hc, scheme).value
        matrix = tuple(tuple(row) for row in m)
    return CauchyReport(dists, budgets, within, passed, matrix)
