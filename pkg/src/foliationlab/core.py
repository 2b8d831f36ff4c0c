"""Foliation generators of the unit square.

A foliation here is an evaluable function f(x, y) on [0,1]^2 whose leaves
are the graphs x -> f(x, y), one per y.  Every generator satisfies

    f(0, y) = y,  f(x, 0) = 0,  f(x, 1) = 1,

and is strictly increasing in y.  Generators are immutable, composable
evaluators; composite kinds (mollified, identity-interpolated,
dyadic-perturbed) live in their own modules and register themselves here so
manifests can be parsed without import cycles.

Besides plain evaluation, every kind exposes two "structure aware" paths
that stay accurate at scales where naive float differencing cancels:

    pair_width(x, y_lo, y_hi)   exact f(x,y_hi) - f(x,y_lo)
    dy(x, y)                    exact partial derivative in y

Composite kinds implement these recursively, which is what makes strip
measures at very fine dyadic levels computable at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError, ParameterError
from .numerics import (DEFAULT_SETTINGS, EvalSettings, bisect_monotone,
                       require_unit_interval)

_KIND_REGISTRY: dict[str, type] = {}


def register_kind(cls):
    """Class decorator: make a Foliation subclass manifest-parseable."""
    _KIND_REGISTRY[cls.kind] = cls
    return cls


@dataclass(frozen=True)
class HolderClass:
    """Parameters (C, beta, alpha) of the bi-Holder class and its metric."""

    C: float
    beta: float
    alpha: float

    def __post_init__(self):
        if not self.C > 1.0:
            raise ParameterError("C must be > 1")
        if not (0.0 < self.beta < 1.0):
            raise ParameterError("beta must lie in (0, 1)")
        if not (0.0 <= self.alpha < self.beta):
            raise ParameterError("alpha must lie in [0, beta)")


class Foliation:
    """Base class.  Subclasses are immutable after construction."""

    kind: str = "abstract"

    def __init__(self, declared_class: HolderClass | None = None):
        self.declared_class = declared_class

    # -- evaluation ------------------------------------------------------

    def value(self, x, y):
        raise NotImplementedError

    def dx(self, x, y):
        """Partial derivative in x (analytic for every shipped kind)."""
        raise NotImplementedError

    def dy(self, x, y):
        """Partial derivative in y where the kind is differentiable.

        Piecewise-linear kinds return the one-sided slope from the right
        (lower half-open convention).
        """
        raise NotImplementedError

    def pair_width(self, x, y_lo, y_hi):
        """f(x, y_hi) - f(x, y_lo), computed without catastrophic loss.

        Default: direct difference for separations >= 2^-26, midpoint slope
        times separation below.  Fine for kinds smooth in y; composite kinds
        override with exact recursions.
        """
        x = np.asarray(x, dtype=float)
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        h = y_hi - y_lo
        out = np.where(
            h >= 2.0 ** -26,
            self.value(x, y_hi) - self.value(x, y_lo),
            self.dy(x, 0.5 * (y_lo + y_hi)) * h,
        )
        return out

    def strip_width(self, x, level: int, index: int):
        """Width of the dyadic strip [f(x, i/2^n), f(x, (i+1)/2^n)).

        ``index`` is an exact integer, so this stays meaningful at levels
        where i/2^n and (i+1)/2^n collide as floats: smooth kinds fall back
        to slope * 2^-level, composite kinds recurse on exact indices.
        """
        x = np.asarray(x, dtype=float)
        h = 2.0 ** -level
        y_lo = float(index) * h
        if h >= 2.0 ** -26:
            return self.pair_width(x, np.full(x.shape, y_lo),
                                   np.full(x.shape, min(float(index + 1) * h, 1.0)))
        return self.dy(x, np.full(x.shape, min(y_lo, 1.0))) * h

    def slope_envelope(self, x):
        """(lo, hi) bounding every dyadic cell-average slope at this x.

        Default: sampled min/max of dy over a y grid (a lower/upper pair in
        the sampled sense).  Kinds with closed forms override with true
        envelopes; certificates record which kind produced them.
        """
        x = np.asarray(x, dtype=float)
        ys = np.linspace(0.0, 1.0, 257)
        sl = self.dy(x[..., None], ys)
        return np.min(sl, axis=-1), np.max(sl, axis=-1)

    def level_widths(self, x: float, n: int) -> np.ndarray:
        """All 2^n strip widths at one transversal, as a single sweep.

        Default: telescoping differences of the line values.  Composite
        kinds override with their factorized forms, which is what makes
        full-level enumeration affordable.
        """
        lines = np.arange((1 << n) + 1, dtype=float) * 2.0 ** -n
        lines[-1] = 1.0
        return np.diff(np.asarray(self.value(np.float64(x), lines)))

    def invert(self, x, z, settings: EvalSettings = DEFAULT_SETTINGS):
        """Monotone inverse in y by bisection; endpoints map exactly."""
        z = require_unit_interval("z", z)
        scalar = np.ndim(z) == 0
        z_arr = np.atleast_1d(np.asarray(z, dtype=float))
        x_arr = np.broadcast_to(np.asarray(x, dtype=float), z_arr.shape)
        require_unit_interval("x", x_arr)
        y = bisect_monotone(lambda yy: self.value(x_arr, yy), z_arr,
                            0.0, 1.0, settings.root_tol,
                            settings.root_max_iter)
        y = np.where(z_arr <= 0.0, 0.0, y)
        y = np.where(z_arr >= 1.0, 1.0, y)
        return float(y[0]) if scalar else y

    # -- structure hints -------------------------------------------------

    def x_breakpoints(self) -> tuple[float, ...]:
        """x locations where the generator is only piecewise smooth."""
        return ()

    def finest_level(self) -> int | None:
        """Finest dyadic level n at which this generator has structure."""
        return None

    def lineage(self):
        """Yield self and all base generators, outermost first."""
        node = self
        while node is not None:
            yield node
            node = getattr(node, "base", None)

    # -- serialization ---------------------------------------------------

    def manifest_params(self) -> dict:
        return {}

    def manifest(self) -> str:
        lines = ["format = foliationlab/1"]
        lines.extend(_manifest_lines(self, prefix=""))
        return "\n".join(lines) + "\n"

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.manifest_params().items()
                           if k != "values")
        return f"<{type(self).__name__} {params}>"


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(repr(float(t)) for t in np.asarray(v).ravel())
    return str(v)


def _manifest_lines(f: Foliation, prefix: str) -> list[str]:
    lines = [f"{prefix}kind = {f.kind}"]
    for key, val in f.manifest_params().items():
        lines.append(f"{prefix}{key} = {_fmt(val)}")
    if f.declared_class is not None:
        hc = f.declared_class
        lines.append(f"{prefix}class.C = {repr(hc.C)}")
        lines.append(f"{prefix}class.beta = {repr(hc.beta)}")
        lines.append(f"{prefix}class.alpha = {repr(hc.alpha)}")
    base = getattr(f, "base", None)
    if base is not None:
        lines.extend(_manifest_lines(base, prefix + "base."))
    return lines


def parse_manifest(text: str) -> Foliation:
    """Rebuild a foliation from its text manifest (exact replay)."""
    flat: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        flat[key.strip()] = val.strip()
    flat.pop("format", None)
    return _build_from_flat(flat, prefix="")


def _build_from_flat(flat: dict[str, str], prefix: str) -> Foliation:
    kind = flat.get(prefix + "kind")
    if kind is None:
        raise ParameterError(f"manifest missing '{prefix}kind'")
    cls = _KIND_REGISTRY.get(kind)
    if cls is None:
        raise ParameterError(f"unknown foliation kind {kind!r}")
    local = {}
    for key, val in flat.items():
        if not key.startswith(prefix):
            continue
        rest = key[len(prefix):]
        if rest == "kind" or "." in rest and not rest.startswith("class."):
            continue
        if rest.startswith("class.") or rest == "kind":
            continue
        local[rest] = val
    hc = None
    if prefix + "class.C" in flat:
        hc = HolderClass(float(flat[prefix + "class.C"]),
                         float(flat[prefix + "class.beta"]),
                         float(flat[prefix + "class.alpha"]))
    base = None
    if prefix + "base.kind" in flat:
        base = _build_from_flat(flat, prefix + "base.")
    return cls.from_manifest_params(local, base=base, declared_class=hc)


def parse_fraction(text: str) -> Fraction:
    return Fraction(text)


# -- builtin analytic kinds ------------------------------------------------


@register_kind
class IdentityFoliation(Foliation):
    """f(x, y) = y; the absolutely continuous reference point."""

    kind = "identity"

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_arrays(x, y)[1].copy()

    def dx(self, x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def dy(self, x, y):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def pair_width(self, x, y_lo, y_hi):
        w = np.asarray(y_hi, dtype=float) - np.asarray(y_lo, dtype=float)
        return np.broadcast_arrays(np.asarray(x, dtype=float), w)[1].copy()

    def strip_width(self, x, level: int, index: int):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape, 2.0 ** -level)

    def slope_envelope(self, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape), np.ones(x.shape)

    def level_widths(self, x: float, n: int) -> np.ndarray:
        return np.full(1 << n, 2.0 ** -n)

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        return cls(declared_class)


TWO_PI = 2.0 * np.pi


@register_kind
class ShearFoliation(Foliation):
    """f(x, y) = y + kappa * x * sin(2 pi y).

    dy = 1 + 2 pi kappa x cos(2 pi y) stays positive iff 2 pi |kappa| < 1,
    which is the admissibility margin enforced here.
    """

    kind = "shear"

    def __init__(self, kappa: float, declared_class: HolderClass | None = None):
        super().__init__(declared_class)
        if not TWO_PI * abs(kappa) < 1.0:
            raise ParameterError(
                "shear kappa violates the monotonicity margin: need "
                "2*pi*|kappa| < 1")
        self.kappa = float(kappa)

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return y + self.kappa * x * np.sin(TWO_PI * y)

    def dx(self, x, y):
        y = np.asarray(y, dtype=float)
        out = self.kappa * np.sin(TWO_PI * y)
        return np.broadcast_arrays(np.asarray(x, dtype=float), out)[1].copy()

    def dy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return 1.0 + TWO_PI * self.kappa * x * np.cos(TWO_PI * y)

    def slope_bounds(self) -> tuple[float, float]:
        m = TWO_PI * abs(self.kappa)
        return 1.0 - m, 1.0 + m

    def slope_envelope(self, x):
        x = np.asarray(x, dtype=float)
        m = TWO_PI * abs(self.kappa) * x
        return 1.0 - m, 1.0 + m

    def manifest_params(self):
        return {"kappa": self.kappa}

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        return cls(float(params["kappa"]), declared_class)


@register_kind
class CubicWarpFoliation(Foliation):
    """f(x, y) = y + s * x * y (1 - y)(1 - 2y): a polynomial S-warp.

    dy = 1 + s x (1 - 6y + 6y^2); the bracket ranges over [-1/2, 1] on
    [0, 1], so |s| <= 0.9 keeps dy in [0.55, 1.9] (s > 0) or [0.1, 1.45].
    """

    kind = "cubic"

    def __init__(self, strength: float,
                 declared_class: HolderClass | None = None):
        super().__init__(declared_class)
        if not abs(strength) <= 0.9:
            raise ParameterError("cubic warp strength must satisfy |s| <= 0.9")
        self.strength = float(strength)

    def _bump(self, y):
        return y * (1.0 - y) * (1.0 - 2.0 * y)

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return y + self.strength * x * self._bump(y)

    def dx(self, x, y):
        y = np.asarray(y, dtype=float)
        out = self.strength * self._bump(y)
        return np.broadcast_arrays(np.asarray(x, dtype=float), out)[1].copy()

    def dy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return 1.0 + self.strength * x * (1.0 - 6.0 * y + 6.0 * y * y)

    def slope_bounds(self) -> tuple[float, float]:
        s = self.strength
        lo = 1.0 + min(s * 1.0, s * -0.5, 0.0)
        hi = 1.0 + max(s * 1.0, s * -0.5, 0.0)
        return lo, hi

    def slope_envelope(self, x):
        x = np.asarray(x, dtype=float)
        s = self.strength
        lo = 1.0 + x * min(s * 1.0, s * -0.5, 0.0)
        hi = 1.0 + x * max(s * 1.0, s * -0.5, 0.0)
        return lo, hi

    def manifest_params(self):
        return {"strength": self.strength}

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        return cls(float(params["strength"]), declared_class)


@register_kind
class GridSampledFoliation(Foliation):
    """Bilinear interpolant of leaf values on a uniform grid.

    A diagnostics kind: it does not enforce the class invariants, so tests
    can build deliberately broken fixtures (flat spots) and the plotting
    command can memoize expensive generators.  Never used in certificates.
    """

    kind = "grid-sampled"

    def __init__(self, values: np.ndarray,
                 declared_class: HolderClass | None = None):
        super().__init__(declared_class)
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 2 or vals.shape[1] < 2:
            raise ParameterError("grid values must be a 2-D array, >= 2x2")
        self.values_grid = vals
        self.x_nodes = np.linspace(0.0, 1.0, vals.shape[0])
        self.y_nodes = np.linspace(0.0, 1.0, vals.shape[1])

    @classmethod
    def sample(cls, f: Foliation, nx: int, ny: int):
        xg = np.linspace(0.0, 1.0, nx)
        yg = np.linspace(0.0, 1.0, ny)
        vals = f.value(xg[:, None], yg[None, :])
        return cls(vals, f.declared_class)

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        nx, ny = self.values_grid.shape
        fx = np.clip(x, 0, 1) * (nx - 1)
        fy = np.clip(y, 0, 1) * (ny - 1)
        i = np.minimum(fx.astype(int), nx - 2)
        j = np.minimum(fy.astype(int), ny - 2)
        tx = fx - i
        ty = fy - j
        v = self.values_grid
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])

    def dx(self, x, y):
        h = 1.0 / (self.values_grid.shape[0] - 1)
        x = np.asarray(x, dtype=float)
        xl = np.clip(x - 0.5 * h, 0.0, 1.0)
        xr = np.clip(x + 0.5 * h, 0.0, 1.0)
        return (self.value(xr, y) - self.value(xl, y)) / (xr - xl)

    def dy(self, x, y):
        h = 1.0 / (self.values_grid.shape[1] - 1)
        y = np.asarray(y, dtype=float)
        yl = np.clip(y - 0.5 * h, 0.0, 1.0)
        yr = np.clip(y + 0.5 * h, 0.0, 1.0)
        return (self.value(x, yr) - self.value(x, yl)) / (yr - yl)

    def manifest_params(self):
        return {"nx": self.values_grid.shape[0],
                "ny": self.values_grid.shape[1],
                "values": self.values_grid}

    @classmethod
    def from_manifest_params(cls, params, base=None, declared_class=None):
        nx, ny = int(params["nx"]), int(params["ny"])
        vals = np.array([float(t) for t in params["values"].split(",")])
        return cls(vals.reshape(nx, ny), declared_class)


# -- module-level operations ------------------------------------------------


def builtin(name: str, declared_class: HolderClass | None = None, **params
            ) -> Foliation:
    """Construct a named base generator with validated parameters."""
    if name == "identity":
        return IdentityFoliation(declared_class)
    if name == "shear":
        return ShearFoliation(params.pop("kappa", 1.0 / (8.0 * np.pi)),
                              declared_class)
    if name == "cubic":
        return CubicWarpFoliation(params.pop("strength", 0.5), declared_class)
    raise ParameterError(f"unknown builtin foliation {name!r}")


def eval_foliation(f: Foliation, x, y):
    """Evaluate f at (x, y) in [0,1]^2 with domain validation."""
    x = require_unit_interval("x", x)
    y = require_unit_interval("y", y)
    return f.value(x, y)


def eval_dx(f: Foliation, x, y):
    x = require_unit_interval("x", x)
    y = require_unit_interval("y", y)
    return f.dx(x, y)


def eval_dx_fd(f: Foliation, x, y, step: float | None = None,
               settings: EvalSettings = DEFAULT_SETTINGS):
    """Central-difference fallback x-derivative (one-sided at the edges)."""
    h = settings.fd_step if step is None else float(step)
    x = np.asarray(require_unit_interval("x", x), dtype=float)
    xl = np.clip(x - h, 0.0, 1.0)
    xr = np.clip(x + h, 0.0, 1.0)
    return (f.value(xr, y) - f.value(xl, y)) / (xr - xl)


def invert_y(f: Foliation, x, z, settings: EvalSettings = DEFAULT_SETTINGS):
    """Inverse leaf parameter: the y with |f(x, y) - z| <= root tolerance."""
    return f.invert(x, z, settings)
