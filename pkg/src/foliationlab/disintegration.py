"""Strip measures, conditional ratios, atoms, and the residual iteration.

The dyadic strips of a generator f at level n are

    P_i = {(x, y) : y in [f(x, i/2^n), f(x, (i+1)/2^n))},    i = 0..2^n-1,

with Lebesgue measure the integral over x of the width function.  Ratios
mu(P cap I x [0,1]) / mu(P) along nested strips are the finite-level stand-in
for the conditional measures of the disintegration; every report states the
level it was computed at.  Widths always go through the exact strip_width
recursion, so levels far beyond float resolution of y remain available for
constructed generators.

Conventions: strips are half-open in y; a leaf parameter sitting on a dyadic
boundary belongs to the strip whose closed lower edge it is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Foliation, HolderClass
from .errors import CorruptFoliationError, DomainError, ParameterError
from .metric import SampleScheme, cauchy_probe
from .numerics import DEFAULT_SETTINGS, EvalSettings, adaptive_simpson, gauss_legendre
from .perturbation import IntervalQ

ENUM_LEVEL_CAP = 24  # cost of full enumeration is 2^n quadratures


def _width_fn(f: Foliation, n: int, i: int):
    def width(x):
        w = np.asarray(f.strip_width(np.asarray(x, dtype=float), n, i))
        if np.any(w < -1e-15):
            raise CorruptFoliationError(
                f"negative strip width at level {n}, index {i}")
        return w
    return width


def _strip_tol(f: Foliation, n: int, settings: EvalSettings) -> float:
    base = settings.strip_tol_scale * 2.0 ** -n
    if n <= 48:
        return base
    # far below float resolution of y: tolerance goes relative
    probe = float(np.mean(np.asarray(
        f.strip_width(np.linspace(0.0, 1.0, 33), n, 0))))
    return max(base, 1e-9 * max(probe, 5e-324))


def strip_measure(f: Foliation, n: int, i: int,
                  settings: EvalSettings = DEFAULT_SETTINGS) -> float:
    """mu(P_i) by adaptive quadrature, absolute tolerance scale * 2^-n."""
    if not (0 <= i < 2 ** n):
        raise DomainError("strip index out of range")
    return adaptive_simpson(_width_fn(f, n, i), 0.0, 1.0,
                            _strip_tol(f, n, settings),
                            breakpoints=f.x_breakpoints())


def strip_measure_in(f: Foliation, n: int, i: int, interval: IntervalQ,
                     settings: EvalSettings = DEFAULT_SETTINGS) -> float:
    """mu(P_i cap interval x [0,1]): the same integrand restricted in x."""
    if not (0 <= i < 2 ** n):
        raise DomainError("strip index out of range")
    a, b = float(interval.b1), float(interval.b2)
    return adaptive_simpson(_width_fn(f, n, i), a, b,
                            _strip_tol(f, n, settings),
                            breakpoints=f.x_breakpoints())


# -- full-level tables -------------------------------------------------------


@dataclass(frozen=True)
class StripTable:
    """All level-n strip measures and their conditional ratios."""

    n: int
    interval: IntervalQ
    measures: np.ndarray
    measures_in: np.ndarray
    sum_error: float
    method: str = "sweep"

    @property
    def ratios(self) -> np.ndarray:
        return self.measures_in / self.measures


def _panel_rule(f: Foliation, interval: IntervalQ | None,
                per_panel: int = 16, max_sub: int = 8):
    """Composite Gauss rule on [0,1], split at breakpoints and interval
    endpoints; returns nodes, weights, and the I-restricted weights."""
    cuts = {0.0, 1.0}
    cuts.update(float(p) for p in f.x_breakpoints())
    if interval is not None:
        cuts.update((float(interval.b1), float(interval.b2)))
    cuts = sorted(c for c in cuts if 0.0 <= c <= 1.0)
    gx, gw = gauss_legendre(per_panel)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        sub = min(max_sub, max(1, int(np.ceil((b - a) * 10))))
        edges = np.linspace(a, b, sub + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            nodes.append(mid + half * gx)
            weights.append(half * gw)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    if interval is not None:
        a, b = float(interval.b1), float(interval.b2)
        in_w = np.where((nodes >= a) & (nodes <= b), weights, 0.0)
    else:
        in_w = np.zeros_like(weights)
    return nodes, weights, in_w


def strip_table(f: Foliation, n: int, interval: IntervalQ,
                settings: EvalSettings = DEFAULT_SETTINGS,
                crosscheck: bool = True) -> StripTable:
    """Measures of every level-n strip on one shared composite rule.

    Line values telescope, so the measures sum to exactly the quadrature of
    the full height 1.  A few strips are cross-checked against the adaptive
    path; disagreement raises rather than silently degrading.
    """
    if n > ENUM_LEVEL_CAP:
        raise ParameterError(
            f"full enumeration capped at level {ENUM_LEVEL_CAP} "
            f"(cost 2^n quadratures)")
    nodes, weights, in_w = _panel_rule(f, interval)
    count = 1 << n
    measures = np.zeros(count)
    measures_in = np.zeros(count)
    # one factorized width sweep per quadrature node
    for xk, wk, wk_in in zip(nodes, weights, in_w):
        dv = f.level_widths(float(xk), n)
        if np.any(dv < -1e-15):
            raise CorruptFoliationError(
                f"negative strip width at level {n} near x={xk:.6f}")
        measures += wk * dv
        if wk_in:
            measures_in += wk_in * dv
    total = float(np.sum(measures))
    if crosscheck:
        probe = [0, count // 2, count - 1] if count > 2 else [0]
        for i in probe:
            ref = strip_measure(f, n, i, settings)
            if abs(ref - measures[i]) > max(1e-12, 1e-6 * ref):
                raise CorruptFoliationError(
                    f"sweep/adaptive disagreement on strip {i} at level {n}:"
                    f" {measures[i]!r} vs {ref!r}")
    return StripTable(n=n, interval=interval, measures=measures,
                      measures_in=measures_in, sum_error=abs(total - 1.0))


# -- set membership ----------------------------------------------------------


@dataclass(frozen=True)
class MembershipReport:
    """Verdict of the all-strips ratio test at one level.

    passed means every ratio falls outside [1/m, 1 - 1/m]; margin is the
    worst distance to that band (negative when inside it).
    """

    n: int
    m: int
    interval: IntervalQ
    passed: bool
    margin: float
    table: StripTable

    def worst_index(self) -> int:
        r = self.table.ratios
        return int(np.argmin(np.minimum(np.abs(r - 1.0 / self.m),
                                        np.abs(r - (1.0 - 1.0 / self.m)))))


def band_margin(ratios: np.ndarray, m: int) -> float:
    """min over strips of the signed distance outside [1/m, 1-1/m]."""
    lo, hi = 1.0 / m, 1.0 - 1.0 / m
    below = lo - ratios
    above = ratios - hi
    return float(np.min(np.maximum(below, above)))


def membership_A(f: Foliation, n: int, m: int, interval: IntervalQ,
                 settings: EvalSettings = DEFAULT_SETTINGS) -> MembershipReport:
    """Evaluate all 2^n strip ratios; pass iff each is outside [1/m, 1-1/m]."""
    if m < 2:
        raise ParameterError("m must be at least 2")
    table = strip_table(f, n, interval, settings)
    margin = band_margin(table.ratios, m)
    return MembershipReport(n=n, m=m, interval=interval,
                            passed=margin > 0.0, margin=margin, table=table)


def membership_B(f: Foliation, m: int, interval: IntervalQ, n_max: int,
                 settings: EvalSettings = DEFAULT_SETTINGS
                 ) -> MembershipReport | None:
    """Smallest witness level n <= n_max passing membership_A, if any."""
    if n_max > ENUM_LEVEL_CAP:
        raise ParameterError(
            f"n_max capped at {ENUM_LEVEL_CAP}: enumeration costs 2^n "
            f"quadratures per level")
    for n in range(1, n_max + 1):
        report = membership_A(f, n, m, interval, settings)
        if report.passed:
            return report
    return None


def sampled_strip_ratios(f: Foliation, n: int, interval: IntervalQ,
                         n_samples: int = 32,
                         settings: EvalSettings = DEFAULT_SETTINGS,
                         seed: int = 11,
                         crosscheck: bool = False) -> list[tuple[int, float]]:
    """(index, ratio) for a spread of strips at an arbitrary level.

    The sampled companion to the enumeration, used when 2^n strips cannot
    be listed; indices cover both parities, the range ends, and random
    interior cells.  Measures come from the shared composite rule; the
    adaptive path can cross-check a couple of strips on demand.
    """
    count = 1 << n
    rng = np.random.default_rng(seed)
    idx = {0, 1, count - 2, count - 1, count // 2, count // 2 + 1}
    while len(idx) < min(n_samples, count):
        # draw exact cell indices even when 2^n overflows int64
        base = min(int(rng.random() * (count // 2)), count // 2 - 1) * 2
        idx.update((base, base + 1))
    nodes, weights, in_w = _panel_rule(f, interval)
    out = []
    for i in sorted(idx):
        w = np.asarray(f.strip_width(nodes, n, i))
        if np.any(w < -1e-15):
            raise CorruptFoliationError(
                f"negative strip width at level {n}, index {i}")
        mu = float(w @ weights)
        mu_in = float(w @ in_w)
        out.append((i, mu_in / mu))
        if crosscheck and i in (0, count // 2):
            ref = strip_measure(f, n, i, settings)
            if abs(ref - mu) > max(1e-13, 1e-5 * ref):
                raise CorruptFoliationError(
                    f"panel/adaptive disagreement on strip {i}: "
                    f"{mu!r} vs {ref!r}")
    return out


# -- ratio sequences and atoms -----------------------------------------------


@dataclass(frozen=True)
class RatioSequence:
    """n -> mu(P_n cap I~)/mu(P_n) along the nested strips through a leaf."""

    y_leaf: float
    interval: IntervalQ
    entries: tuple          # (n, ratio)
    measures: tuple         # (n, mu, mu_in)
    tolerance_scale: float

    def ratios(self) -> np.ndarray:
        return np.array([r for _, r in self.entries])

    def to_text(self) -> str:
        lines = ["n\tratio\tmeasure\tmeasure_in"]
        for (n, r), (_, mu, mu_in) in zip(self.entries, self.measures):
            lines.append(f"{n}\t{r:.12g}\t{mu:.12g}\t{mu_in:.12g}")
        return "\n".join(lines)


def leaf_strip_index(y_leaf: float, n: int) -> int:
    """Index of the level-n strip containing the leaf (lower-closed)."""
    i = int(np.floor(y_leaf * 2.0 ** n))
    return min(max(i, 0), 2 ** n - 1)


def ratio_sequence(f: Foliation, y_leaf: float, interval: IntervalQ,
                   n_max: int, settings: EvalSettings = DEFAULT_SETTINGS
                   ) -> RatioSequence:
    """The finite Rokhlin ratio sequence for the leaf through y_leaf."""
    if not (0.0 < y_leaf < 1.0):
        raise DomainError("leaf parameter must lie in (0, 1)")
    if n_max > ENUM_LEVEL_CAP:
        raise ParameterError(f"n_max capped at {ENUM_LEVEL_CAP} "
                             f"(quadrature cost grows with the level)")
    entries = []
    measures = []
    for n in range(1, n_max + 1):
        i = leaf_strip_index(y_leaf, n)
        mu = strip_measure(f, n, i, settings)
        mu_in = strip_measure_in(f, n, i, interval, settings)
        entries.append((n, mu_in / mu))
        measures.append((n, mu, mu_in))
    return RatioSequence(y_leaf=y_leaf, interval=interval,
                         entries=tuple(entries), measures=tuple(measures),
                         tolerance_scale=settings.strip_tol_scale)


@dataclass(frozen=True)
class AtomReport:
    """Greedy dyadic localization of the conditional mass over x-windows.

    profile holds (window width, conditional mass of the kept window); the
    kept window halves each step, keeping the heavier side (ties keep the
    left half and are flagged).  level is the strip refinement standing in
    for the conditional measure and is part of the claim, not a detail.
    """

    y_leaf: float
    level: int
    x_low: float
    x_high: float
    x_point: float
    atom_value: float
    profile: tuple                # (width, mass fraction)
    tie_steps: tuple
    flat_like: bool

    def mass_at_width(self, width: float) -> float:
        for w, mass in self.profile:
            if w <= width + 1e-15:
                return mass
        return 1.0


def _window_mass(f: Foliation, n: int, i: int, a: float, b: float,
                 tol: float, breaks) -> float:
    if b <= a:
        return 0.0
    return adaptive_simpson(_width_fn(f, n, i), a, b, tol, breakpoints=breaks)


def atom_locate(f: Foliation, y_leaf: float, depth: int,
                level: int | None = None,
                settings: EvalSettings = DEFAULT_SETTINGS) -> AtomReport:
    """Binary search over x-windows for the conditional mass concentration.

    The level-``level`` nested strip through the leaf stands in for the
    conditional measure.  For the absolutely continuous reference the kept
    mass tracks the window width (flat profile); constructed fixtures
    concentrate it in a few steps.
    """
    if depth > 12:
        raise ParameterError("localization depth capped at 12")
    if not (0.0 < y_leaf < 1.0):
        raise DomainError("leaf parameter must lie in (0, 1)")
    if level is None:
        base = f.finest_level()
        level = 12 if base is None else base + 2
    i = leaf_strip_index(y_leaf, level)
    breaks = f.x_breakpoints()
    total = strip_measure(f, level, i, settings)
    tol = max(1e-12 * total, 5e-324)
    lo, hi = 0.0, 1.0
    mass = total
    profile = []
    ties = []
    for step in range(1, depth + 1):
        mid = 0.5 * (lo + hi)
        left = _window_mass(f, level, i, lo, mid, tol, breaks)
        right = mass - left
        if abs(left - right) <= 1e-9 * max(mass, 1e-300):
            ties.append(step)
            hi, mass = mid, left
        elif left >= right:
            hi, mass = mid, left
        else:
            lo, mass = mid, right
        profile.append((hi - lo, mass / total))
    x_point = 0.5 * (lo + hi)
    flat = all(abs(mfrac - w) <= 1e-3 for w, mfrac in profile)
    return AtomReport(y_leaf=y_leaf, level=level, x_low=lo, x_high=hi,
                      x_point=x_point,
                      atom_value=float(f.value(x_point, y_leaf)),
                      profile=tuple(profile), tie_steps=tuple(ties),
                      flat_like=flat)


# -- absolute continuity diagnostics ------------------------------------------


@dataclass(frozen=True)
class ACReport:
    """Leafwise density statistics of the base-to-x holonomy at one scale.

    Quotients (f(x, y + s) - f(x, y)) / s approximate the holonomy density;
    for an absolutely continuous generator the global max/min ratio stays
    moderate while constructed fixtures push it to (1 - delta2)/delta2.
    """

    scale: float
    x_grid: tuple
    per_x_min: tuple
    per_x_max: tuple
    global_min: float
    global_max: float

    @property
    def global_ratio(self) -> float:
        return self.global_max / self.global_min

    def to_rows(self):
        for x, lo, hi in zip(self.x_grid, self.per_x_min, self.per_x_max):
            yield x, lo, hi, hi / lo


def ac_report(f: Foliation, x_grid, scale: float,
              settings: EvalSettings = DEFAULT_SETTINGS) -> ACReport:
    """Holonomy density quotients at dyadic scale over a grid of x."""
    k = round(-np.log2(scale))
    if abs(scale - 2.0 ** -k) > 1e-15:
        raise ParameterError("scale must be a dyadic 2^-k")
    x_grid = np.asarray(x_grid, dtype=float)
    ys = np.arange(2 ** k, dtype=float) * scale
    per_min, per_max = [], []
    for x in x_grid:
        xa = np.full(ys.shape, x)
        q = f.pair_width(xa, ys, ys + scale) / scale
        if np.any(q <= 0):
            raise CorruptFoliationError("nonpositive density quotient")
        per_min.append(float(np.min(q)))
        per_max.append(float(np.max(q)))
    return ACReport(scale=scale, x_grid=tuple(float(v) for v in x_grid),
                    per_x_min=tuple(per_min), per_x_max=tuple(per_max),
                    global_min=min(per_min), global_max=max(per_max))


# -- residual iteration --------------------------------------------------------


@dataclass(frozen=True)
class ResidualStep:
    """One scheduled density step: land in B_{m, interval} within the
    stage budget.  n_floor forces the perturbation level at least that
    deep (every feasibility condition is still verified at the chosen
    level); delta_ratio and anchor_frac pass through to the profile."""

    m: int
    interval: IntervalQ
    n_floor: int | None = None
    delta_ratio: float = 1.0
    anchor_frac: float = 1.0
    n_cap: int = 256


@dataclass
class RetentionCheck:
    step: int
    n: int
    m: int
    interval: IntervalQ
    margin: float
    passed: bool
    method: str


@dataclass
class ResidualRun:
    iterates: list
    certificates: list
    cauchy: object
    retention: list


def _retention_margin(f: Foliation, n: int, m: int, interval: IntervalQ,
                      settings: EvalSettings) -> tuple[float, str]:
    if n <= 12:
        report = membership_A(f, n, m, interval, settings)
        return report.margin, "enumerated"
    ratios = np.array([r for _, r in sampled_strip_ratios(
        f, n, interval, n_samples=24, settings=settings)])
    return band_margin(ratios, m), "sampled"


def residual_iterate(f0: Foliation, schedule, xi0: float, hc: HolderClass,
                     settings: EvalSettings = DEFAULT_SETTINGS,
                     scheme: SampleScheme | None = None,
                     structure_guard: bool = True) -> ResidualRun:
    """Iterate the density constructor along a finite schedule.

    Step k runs with budget xi0 / 2^k; previously attained memberships are
    re-tested on each new iterate (openness is verified, never assumed),
    and the whole chain is Cauchy-probed against the budgets at the end.
    With ``structure_guard`` the mollification radius of step k+1 is capped
    far below the cells of step k, which is what lets earlier certificates
    survive; any smaller radius is admissible for every printed bound.
    """
    from .constructor import construct_in_B  # lazy: avoids import cycle

    steps = [s if isinstance(s, ResidualStep) else ResidualStep(*s)
             for s in schedule]
    if len(steps) > 8:
        raise ParameterError("desk-scale residual schedules are capped at 8")
    iterates = [f0]
    certificates = []
    retention: list[RetentionCheck] = []
    history: list[tuple[int, int, IntervalQ]] = []
    current = f0
    for k, step in enumerate(steps):
        xi_k = xi0 / 2.0 ** k
        r_cap = None
        if structure_guard and current.finest_level() is not None:
            # far below both the finest cells and the float64 shift
            # resolution: earlier certificates survive, and evaluating the
            # convolution provably reproduces the base values
            r_cap = min(2.0 ** -(current.finest_level() + 10), 2.0 ** -61)
        current, cert = construct_in_B(
            current, hc, xi_k, step.m, step.interval, settings=settings,
            scheme=scheme, n_floor=step.n_floor, n_cap=step.n_cap,
            delta_ratio=step.delta_ratio, anchor_frac=step.anchor_frac,
            r_cap=r_cap, skip_if_member=False)
        if not cert.passed:
            raise ParameterError(
                f"residual step {k} failed its certificate: "
                f"{cert.failing_rows()}")
        iterates.append(current)
        certificates.append(cert)
        history.append((cert.params["n"], step.m, step.interval))
        for j, (nj, mj, ij) in enumerate(history):
            margin, method = _retention_margin(current, nj, mj, ij, settings)
            retention.append(RetentionCheck(
                step=j, n=nj, m=mj, interval=ij, margin=margin,
                passed=margin > 0.0, method=method))
    probe_scheme = scheme or SampleScheme()
    cauchy = cauchy_probe(iterates, hc, probe_scheme, xi0=xi0)
    return ResidualRun(iterates=iterates, certificates=certificates,
                       cauchy=cauchy, retention=retention)
