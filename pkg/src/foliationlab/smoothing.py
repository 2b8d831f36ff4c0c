"""Smoothing stages of the perturbation pipeline.

Two stages live here.  First the generator is extended past y = 0 and y = 1
by odd reflections and convolved with a compactly supported bump, producing
a version that is C^2 in the leaf parameter without leaving the declared
bi-Holder class.  Second, interpolating with the identity shrinks the
Holder constant strictly below C, opening the room the dyadic perturbation
will later spend.

The support radius r and the interpolation weight epsilon are capped by
closed-form bounds derived from the stage distance budget xi/3; both caps
are implemented verbatim and re-verified in certificates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Foliation, HolderClass, register_kind
from .errors import ParameterError, PrecisionError
from .numerics import (DEFAULT_SETTINGS, NOOP_RADIUS, EvalSettings,
                       gauss_legendre)

# integral of exp(1/(u^2-1)) over (-1, 1), via 256-node Gauss-Legendre with
# a doubling self-check at import time (agrees to ~1e-16)
def _bump_unit(u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    uu = u[inside]
    out[inside] = np.exp(1.0 / (uu * uu - 1.0))
    return out


def _bump_mass(n: int) -> float:
    x, w = gauss_legendre(n)
    return float(np.dot(w, _bump_unit(x)))

_BUMP_MASS = _bump_mass(256)
if abs(_BUMP_MASS - _bump_mass(512)) > 1e-12:
    raise PrecisionError("mollifier normalization failed its doubling check")


def mollifier(r: float, nodes: int = 64):
    """The bump density phi_r on (-r, r) and its quadrature rule.

    phi_r(t) = (c / r) exp(1/((t/r)^2 - 1)), c = 1 / integral of the unit
    bump, so the configured quadrature of phi_r is 1 to better than 1e-12.
    Returns (phi_r callable, nodes t_i in (-r, r), weights W_i summing to 1).
    """
    if r <= 0:
        raise ParameterError("mollifier radius must be positive")
    c = 1.0 / _BUMP_MASS

    def phi(t):
        return (c / r) * _bump_unit(np.asarray(t, dtype=float) / r)

    u, w = gauss_legendre(nodes)
    t_nodes = r * u
    weights = w * _bump_unit(u) / _bump_mass(nodes)
    return phi, t_nodes, weights


def modulus_dx(f: Foliation, r: float, x_res: int = 33, y_res: int = 129
               ) -> float:
    """C_r(df/dx): sup over x of the oscillation of df/dx over y-shifts < r.

    Sampled estimate (lower bound), like every sup in this package.
    """
    if r >= NOOP_RADIUS:
        xs = np.linspace(0.0, 1.0, x_res)[:, None]
        ys = np.linspace(0.0, 1.0, y_res)[None, :]
        worst = 0.0
        for frac in (0.25, 0.5, 0.999999):
            s = frac * r
            y2 = np.clip(ys + s, 0.0, 1.0)
            worst = max(worst, float(np.max(np.abs(
                f.dx(xs, y2) - f.dx(xs, ys)))))
        return worst
    return 0.0


@dataclass(frozen=True)
class MollifyParams:
    r: float
    analytic_cap: float
    nodes: int
    modulus: float
    halvings: int
    structure_cap: float | None = None


def analytic_r_cap(hc: HolderClass, xi: float) -> float:
    """min of the three closed-form admissibility bounds on r."""
    C, beta, alpha = hc.C, hc.beta, hc.alpha
    r1 = (xi / (12.0 * C)) ** (1.0 / beta)
    r2 = (xi / (24.0 * C)) ** (1.0 / (beta - alpha))
    r3 = (xi / 24.0) * (xi / (12.0 * C ** beta)) ** (alpha / (beta - alpha))
    return min(r1, r2, r3, 1.0)


def choose_r(f: Foliation, hc: HolderClass, xi: float,
             settings: EvalSettings = DEFAULT_SETTINGS,
             structure_cap: float | None = None) -> MollifyParams:
    """Pick the support radius: analytic cap, then halve until the measured
    modulus of df/dx drops below xi/12.

    ``structure_cap`` optionally forces r below the finest dyadic scale of
    the input so that previously certified strip structure survives the
    convolution (any smaller r is admissible for every printed bound).
    """
    if xi <= 0:
        raise ParameterError("xi must be positive")
    cap = analytic_r_cap(hc, xi)
    r = cap if structure_cap is None else min(cap, structure_cap)
    budget = xi / 12.0
    halvings = 0
    mod = modulus_dx(f, r)
    while mod > budget:
        halvings += 1
        if halvings > 60:
            raise ParameterError(
                "modulus of df/dx will not drop below xi/12: input does not "
                "look uniformly C^1 in x")
        r *= 0.5
        mod = modulus_dx(f, r)
    return MollifyParams(r=r, analytic_cap=cap, nodes=settings.quad_nodes,
                         modulus=mod, halvings=halvings,
                         structure_cap=structure_cap)


class ExtendedEvaluator:
    """Odd reflection of a generator about (y=0, 0) and (y=1, 1).

    Covers y in [-1, 2]:  -f(x, -y) below, f on [0, 1], 2 - f(x, 2 - y)
    above.  Continuous and strictly increasing in y; slopes are preserved,
    so the extension stays inside the same bi-Holder class locally.
    """

    def __init__(self, base: Foliation):
        self.base = base

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        yc = np.clip(y, 0.0, 1.0)
        mid = self.base.value(x, yc)
        lowv = -self.base.value(x, np.clip(-y, 0.0, 1.0))
        hiv = 2.0 - self.base.value(x, np.clip(2.0 - y, 0.0, 1.0))
        return np.where(y < 0.0, lowv, np.where(y > 1.0, hiv, mid))

    def dx(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        mid = self.base.dx(x, np.clip(y, 0.0, 1.0))
        lowv = -self.base.dx(x, np.clip(-y, 0.0, 1.0))
        hiv = -self.base.dx(x, np.clip(2.0 - y, 0.0, 1.0))
        return np.where(y < 0.0, lowv, np.where(y > 1.0, hiv, mid))

    def dy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        yr = np.where(y < 0.0, -y, np.where(y > 1.0, 2.0 - y, y))
        return self.base.dy(x, np.clip(yr, 0.0, 1.0))

    def pair_width(self, x, y_lo, y_hi):
        """Width across the extended strip, split at the reflection joins."""
        x = np.asarray(x, dtype=float)
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        x, y_lo, y_hi = np.broadcast_arrays(x, y_lo, y_hi)
        total = np.zeros(x.shape)
        # segment below 0: g(y) = -f(-y)
        lo = np.clip(y_lo, -1.0, 0.0)
        hi = np.clip(y_hi, -1.0, 0.0)
        total = total + self.base.pair_width(x, -hi, -lo)
        # middle segment
        lo = np.clip(y_lo, 0.0, 1.0)
        hi = np.clip(y_hi, 0.0, 1.0)
        total = total + self.base.pair_width(x, lo, hi)
        # segment above 1: g(y) = 2 - f(2 - y)
        lo = np.clip(y_lo, 1.0, 2.0)
        hi = np.clip(y_hi, 1.0, 2.0)
        total = total + self.base.pair_width(x, 2.0 - hi, 2.0 - lo)
        return total


def reflect_extend(f: Foliation) -> ExtendedEvaluator:
    """The extension used by mollification, exposed for tests."""
    return ExtendedEvaluator(f)


_CHUNK = 1 << 22  # cap on elements fed to a base evaluator in one call


@register_kind
class MollifiedFoliation(Foliation):
    """Convolution of the reflected extension with the bump density.

    C^2 in y for any r > 0; below the float64 shift resolution the
    quadrature provably returns the base values, so that path is skipped.
    """

    kind = "mollified"

    def __init__(self, base: Foliation, r: float, nodes: int = 64,
                 declared_class: HolderClass | None = None,
                 selfcheck: bool = True,
                 selfcheck_tol: float = DEFAULT_SETTINGS.quad_selfcheck):
        super().__init__(declared_class or base.declared_class)
        if r <= 0:
            raise ParameterError("mollification radius must be positive")
        self.base = base
        self.r = float(r)
        self.nodes = int(nodes)
        self.ext = ExtendedEvaluator(base)
        _, t, w = mollifier(self.r, self.nodes)
        self._t = t
        self._w = w
        if selfcheck and self.r >= NOOP_RADIUS:
            self._run_selfcheck(selfcheck_tol)

    def _run_selfcheck(self, tol: float):
        xs = np.linspace(0.05, 0.95, 5)
        ys = np.linspace(0.0, 1.0, 7)
        coarse = self.value(xs[:, None], ys[None, :])
        _, t2, w2 = mollifier(self.r, 2 * self.nodes)
        fine = self._convolve(self.ext.value, xs[:, None], ys[None, :],
                              t2, w2)
        drift = float(np.max(np.abs(coarse - fine)))
        if drift > tol:
            raise PrecisionError(
                f"convolution self-check drift {drift:.3e} exceeds {tol:.1e}")

    def _convolve(self, fn, x, y, t=None, w=None):
        t = self._t if t is None else t
        w = self._w if w is None else w
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        shape = x.shape
        xf = x.ravel()
        yf = y.ravel()
        out = np.empty(xf.shape)
        step = max(1, _CHUNK // t.size)
        for i in range(0, xf.size, step):
            sl = slice(i, i + step)
            vals = fn(xf[sl, None], yf[sl, None] - t[None, :])
            out[sl] = vals @ w
        return out.reshape(shape)

    @property
    def _noop(self):
        return self.r < NOOP_RADIUS

    def value(self, x, y):
        if self._noop:
            return self.base.value(x, y)
        return self._convolve(self.ext.value, x, y)

    def dx(self, x, y):
        if self._noop:
            return self.base.dx(x, y)
        return self._convolve(self.ext.dx, x, y)

    def dy(self, x, y):
        if self._noop:
            return self.base.dy(x, y)
        return self._convolve(self.ext.dy, x, y)

    def pair_width(self, x, y_lo, y_hi):
        if self._noop:
            return self.base.pair_width(x, y_lo, y_hi)
        x = np.asarray(x, dtype=float)
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        x, y_lo, y_hi = np.broadcast_arrays(x, y_lo, y_hi)
        shape = x.shape
        xf, lof, hif = x.ravel(), y_lo.ravel(), y_hi.ravel()
        out = np.empty(xf.shape)
        t, w = self._t, self._w
        step = max(1, _CHUNK // t.size)
        for i in range(0, xf.size, step):
            sl = slice(i, i + step)
            vals = self.ext.pair_width(xf[sl, None], lof[sl, None] - t,
                                       hif[sl, None] - t)
            out[sl] = vals @ w
        return out.reshape(shape)

    def strip_width(self, x, level: int, index: int):
        if self._noop:
            return self.base.strip_width(x, level, index)
        h = 2.0 ** -level
        x = np.asarray(x, dtype=float)
        y_lo = float(index) * h
        y_hi = min(float(index + 1) * h, 1.0)
        if h >= 2.0 ** -40:
            return self.pair_width(x, np.full(x.shape, y_lo),
                                   np.full(x.shape, y_hi))
        # strip far below the kernel scale: smooth the slope instead
        mid = min(y_lo + 0.5 * h, 1.0)
        out = np.zeros(x.shape)
        for t, w in zip(self._t, self._w):
            out = out + w * self.ext.dy(x, mid - t)
        return out * h

    def slope_envelope(self, x):
        # y-convolution is a convex average, so the base's y-global
        # envelope still bounds every cell-average slope
        return self.base.slope_envelope(x)

    def level_widths(self, x: float, n: int) -> np.ndarray:
        if self._noop:
            return self.base.level_widths(x, n)
        return super().level_widths(x, n)

    def x_breakpoints(self):
        return self.base.x_breakpoints()

    def finest_level(self):
        return self.base.finest_level()

    def manifest_params(self):
        return {"r": self.r, "nodes": self.nodes}

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        return cls(base, float(params["r"]), int(params["nodes"]),
                   declared_class, selfcheck=False)


def mollify(f: Foliation, mp: MollifyParams,
            settings: EvalSettings = DEFAULT_SETTINGS,
            declared_class: HolderClass | None = None) -> MollifiedFoliation:
    return MollifiedFoliation(f, mp.r, mp.nodes, declared_class,
                              selfcheck_tol=settings.quad_selfcheck)


@dataclass(frozen=True)
class InterpolationParams:
    epsilon: float
    C_eps: float
    dx_norm: float


def interpolation_constant(C: float, eps: float) -> float:
    """C_eps = max(C(1-eps)+eps, C/(1-eps+C*eps)); strictly below C for
    0 < eps < 1 and equal to 1 at eps = 1."""
    return max(C * (1.0 - eps) + eps, C / (1.0 - eps + C * eps))


def choose_epsilon(f2: Foliation, hc: HolderClass, xi: float,
                   cap: float | None = None,
                   x_res: int = 33, y_res: int = 129) -> InterpolationParams:
    """The printed four-way minimum for the interpolation weight."""
    if xi <= 0:
        raise ParameterError("xi must be positive")
    xs = np.linspace(0.0, 1.0, x_res)[:, None]
    ys = np.linspace(0.0, 1.0, y_res)[None, :]
    dx_norm = float(np.max(np.abs(f2.dx(xs, ys))))
    bounds = [xi / 12.0,
              xi / (12.0 * (1.0 + hc.C)),
              (xi / (24.0 * hc.C ** hc.beta)) ** (1.0 / (hc.beta - hc.alpha))]
    if dx_norm > 0:
        bounds.append(xi / (12.0 * dx_norm))
    if cap is not None:
        bounds.append(float(cap))
    eps = min(bounds)
    if not (0.0 < eps < 1.0):
        raise ParameterError("no admissible interpolation weight")
    return InterpolationParams(epsilon=eps,
                               C_eps=interpolation_constant(hc.C, eps),
                               dx_norm=dx_norm)


@register_kind
class InterpolatedFoliation(Foliation):
    """f3(x, y) = (1 - eps) f2(x, y) + eps y."""

    kind = "identity-interpolated"

    def __init__(self, base: Foliation, epsilon: float,
                 declared_class: HolderClass | None = None):
        super().__init__(declared_class or base.declared_class)
        if not (0.0 < epsilon <= 1.0):
            raise ParameterError("epsilon must lie in (0, 1]")
        self.base = base
        self.epsilon = float(epsilon)

    def value(self, x, y):
        e = self.epsilon
        y = np.asarray(y, dtype=float)
        return (1.0 - e) * self.base.value(x, y) + e * y

    def dx(self, x, y):
        return (1.0 - self.epsilon) * self.base.dx(x, y)

    def dy(self, x, y):
        return (1.0 - self.epsilon) * self.base.dy(x, y) + self.epsilon

    def pair_width(self, x, y_lo, y_hi):
        e = self.epsilon
        h = np.asarray(y_hi, dtype=float) - np.asarray(y_lo, dtype=float)
        return (1.0 - e) * self.base.pair_width(x, y_lo, y_hi) + e * h

    def strip_width(self, x, level: int, index: int):
        e = self.epsilon
        return ((1.0 - e) * self.base.strip_width(x, level, index)
                + e * 2.0 ** -level)

    def slope_envelope(self, x):
        e = self.epsilon
        lo, hi = self.base.slope_envelope(x)
        return (1.0 - e) * lo + e, (1.0 - e) * hi + e

    def level_widths(self, x: float, n: int) -> np.ndarray:
        e = self.epsilon
        return (1.0 - e) * self.base.level_widths(x, n) + e * 2.0 ** -n

    def x_breakpoints(self):
        return self.base.x_breakpoints()

    def finest_level(self):
        return self.base.finest_level()

    def manifest_params(self):
        return {"epsilon": self.epsilon}

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        return cls(base, float(params["epsilon"]), declared_class)


def interpolate_identity(f2: Foliation, ip: InterpolationParams,
                         declared_class: HolderClass | None = None
                         ) -> InterpolatedFoliation:
    return InterpolatedFoliation(f2, ip.epsilon, declared_class)


@dataclass(frozen=True)
class LipschitzEstimates:
    """Bi-Lipschitz constant of f3 in y, and the y-Lipschitz constant of
    df3/dx, both grid-measured and inflated by the safety factor before use
    in any downstream inequality."""

    L: float
    K: float
    safety: float
    L_raw: float = field(default=0.0)
    K_raw: float = field(default=0.0)


def _structure_y_samples(f: Foliation, rng: np.random.Generator,
                         per_cell: int = 2, n_cells: int = 512) -> np.ndarray:
    """y samples that land inside half-cells of the finest dyadic level, so
    slope extremes of perturbed generators are actually visited."""
    level = f.finest_level()
    ys = [np.linspace(0.0, 1.0, 4097)]
    if level is not None:
        # beyond ~2^-46 the within-cell offsets fall below float spacing
        n_half = 2.0 ** min(level, 46)
        idx = rng.integers(0, 2 ** min(level, 46), size=min(n_cells, 4096))
        ts = rng.uniform(0.05, 0.95, size=(idx.size, per_cell))
        cells = (idx[:, None] + ts) / n_half
        ys.append(np.clip(cells.ravel(), 0.0, 1.0))
    return np.unique(np.concatenate(ys))


def estimate_lipschitz(f3: Foliation, safety: float = 1.25,
                       x_res: int = 65, seed: int = 7) -> LipschitzEstimates:
    """Measure L3 and K3 on structure-aware grids.

    L3 bounds |delta f3 / delta y| and its reciprocal; it is read off the
    exact slope recursion (plus coarse difference quotients down to 2^-14 as
    a cross-check).  K3 is the Lipschitz constant of df3/dx with respect to
    y, measured on difference quotients at separations down to 2^-14 and on
    within-cell quotients where dyadic structure exists.
    """
    rng = np.random.default_rng(seed)
    xs = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, x_res),
        np.asarray(f3.x_breakpoints(), dtype=float)]))
    ys = _structure_y_samples(f3, rng)
    slopes = f3.dy(xs[:, None], ys[None, :])
    if np.any(slopes <= 0):
        from .errors import CorruptFoliationError
        raise CorruptFoliationError("nonpositive leaf slope encountered")
    L_raw = float(max(np.max(slopes), np.max(1.0 / slopes)))
    # difference-quotient cross-check at dyadic separations down to 2^-14
    anchors = np.linspace(0.0, 1.0, 257)
    for k in range(1, 15):
        h = 2.0 ** -k
        a = anchors[anchors + h <= 1.0]
        q = f3.pair_width(xs[:, None], a[None, :], a[None, :] + h) / h
        if np.any(q <= 0):
            from .errors import CorruptFoliationError
            raise CorruptFoliationError("nonpositive difference quotient")
        L_raw = max(L_raw, float(np.max(q)), float(np.max(1.0 / q)))
    K_raw = 0.0
    for k in range(4, 15):
        h = 2.0 ** -k
        a = anchors[anchors + h <= 1.0]
        dq = np.abs(f3.dx(xs[:, None], a[None, :] + h)
                    - f3.dx(xs[:, None], a[None, :])) / h
        K_raw = max(K_raw, float(np.max(dq)))
    level = f3.finest_level()
    if level is not None and level > 12:
        # quotients across half-cell interiors at the structural scale;
        # capped where the offsets stay resolvable in float64
        cap = min(level, 44)
        n_half = 2 ** cap
        idx = rng.integers(0, n_half, size=1024)
        y0 = (idx + 0.25) / float(n_half)
        y1 = (idx + 0.75) / float(n_half)
        h = y1 - y0
        ok = h > 0
        dq = np.abs(f3.dx(xs[:, None], y1[None, ok])
                    - f3.dx(xs[:, None], y0[None, ok])) / h[ok]
        if dq.size:
            K_raw = max(K_raw, float(np.max(dq)))
    return LipschitzEstimates(L=safety * L_raw, K=safety * K_raw,
                              safety=safety, L_raw=L_raw, K_raw=K_raw)
