"""Mollification, identity interpolation, Lipschitz estimation."""

import numpy as np
import pytest

from foliationlab import (HolderClass, builtin, c0_distance, choose_epsilon,
                          choose_r, estimate_lipschitz, interpolate_identity,
                          mollifier, mollify, reflect_extend)
from foliationlab.core import Foliation
from foliationlab.numerics import adaptive_simpson
from foliationlab.smoothing import analytic_r_cap, interpolation_constant

KAPPA = 1.0 / (8.0 * np.pi)
HC = HolderClass(2.0, 0.5, 0.25)


def test_mollifier_unit_mass_and_shape():
    r = 0.01
    phi, t, w = mollifier(r)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    # independent quadrature of the density itself
    mass = adaptive_simpson(phi, -r, r, 1e-13)
    assert mass == pytest.approx(1.0, abs=1e-12)
    assert phi(r) == 0.0 and phi(-r) == 0.0
    ts = np.linspace(-r, r, 33)
    assert np.max(np.abs(phi(ts) - phi(-ts))) < 1e-15
    # peak value c / (r e)
    c = 1.0 / adaptive_simpson(lambda u: np.exp(
        np.where(np.abs(u) < 1, 1.0 / np.minimum(u * u - 1.0, -1e-300), -745)
    ) * (np.abs(u) < 1), -1.0, 1.0, 1e-13)
    assert float(phi(0.0)) == pytest.approx(c / (r * np.e), rel=1e-9)


def test_reflect_extend_formulas(identity, shear):
    ext = reflect_extend(identity)
    ys = np.linspace(-0.3, 1.3, 33)
    assert np.max(np.abs(ext.value(np.full(ys.shape, 0.4), ys) - ys)) < 1e-15
    ext_s = reflect_extend(shear)
    for t in (0.01, 0.05, 0.2):
        low = float(ext_s.value(0.7, -t))
        assert low == pytest.approx(-float(shear.value(0.7, t)), abs=1e-15)
    hi = float(ext_s.value(0.7, 1.01))
    assert hi == pytest.approx(2.0 - float(shear.value(0.7, 0.99)),
                               abs=1e-15)
    # extension is increasing across the joins
    vals = ext_s.value(np.full(ys.shape, 0.7), ys)
    assert np.all(np.diff(vals) > 0)


def test_choose_r_analytic_caps():
    xi = 0.5
    # oracle: substitute into the three printed bounds
    b1 = (xi / (12 * HC.C)) ** (1 / HC.beta)
    b2 = (xi / (24 * HC.C)) ** (1 / (HC.beta - HC.alpha))
    b3 = (xi / 24) * (xi / (12 * HC.C ** HC.beta)) ** (
        HC.alpha / (HC.beta - HC.alpha))
    assert b1 == pytest.approx(4.3403e-4, rel=1e-3)
    assert b2 == pytest.approx(1.1774e-8, rel=1e-3)
    cap = analytic_r_cap(HC, xi)
    assert cap == min(b1, b2, b3) == b2


def test_choose_r_identity_hits_cap(identity):
    mp = choose_r(identity, HC, 0.5)
    assert mp.modulus == 0.0
    assert mp.r == mp.analytic_cap
    assert mp.halvings == 0


def test_choose_r_shear_modulus_bound(shear):
    mp = choose_r(shear, HC, 0.5)
    # the x-derivative kappa sin(2 pi y) moves at most 2 pi kappa r over
    # a shift of r
    assert mp.modulus <= 2 * np.pi * KAPPA * mp.r + 1e-15
    assert mp.halvings <= 3


def test_mollify_identity_fixed_point(identity):
    mp = choose_r(identity, HC, 0.5)
    f2 = mollify(identity, mp)
    xs = np.linspace(0, 1, 17)[:, None]
    ys = np.linspace(0, 1, 33)[None, :]
    assert np.max(np.abs(f2.value(xs, ys) - ys)) < 1e-12


def test_mollify_c0_shift_bound(shear):
    mp = choose_r(shear, HC, 0.5)
    f2 = mollify(shear, mp)
    est = c0_distance(shear, f2, refine_check=False)
    assert est.value <= HC.C * mp.r ** HC.beta


def test_mollified_second_difference_bounded(shear):
    mp = choose_r(shear, HC, 0.5)
    f2 = mollify(shear, mp)
    h = 1e-3
    ys = np.linspace(h, 1 - h, 201)
    xs = np.full(ys.shape, 0.8)
    dd = (f2.value(xs, ys + h) - 2 * f2.value(xs, ys)
          + f2.value(xs, ys - h)) / h ** 2
    # |d2f/dy2| <= 4 pi^2 kappa for the shear; quadrature adds nothing
    assert np.max(np.abs(dd)) <= 4 * np.pi ** 2 * KAPPA + 0.1


class _Blend(Foliation):
    kind = "blend"

    def __init__(self, f, g, a):
        super().__init__(None)
        self.f, self.g, self.a = f, g, a

    def value(self, x, y):
        return (1 - self.a) * self.f.value(x, y) + self.a * self.g.value(x, y)

    def dx(self, x, y):
        return (1 - self.a) * self.f.dx(x, y) + self.a * self.g.dx(x, y)

    def dy(self, x, y):
        return (1 - self.a) * self.f.dy(x, y) + self.a * self.g.dy(x, y)


def test_mollification_linearity(identity, shear):
    blend = _Blend(identity, shear, 0.375)
    mp = choose_r(shear, HC, 0.5)
    left = mollify(blend, mp)
    f2i = mollify(identity, mp)
    f2s = mollify(shear, mp)
    xs = np.linspace(0, 1, 9)[:, None]
    ys = np.linspace(0, 1, 17)[None, :]
    direct = left.value(xs, ys)
    combined = 0.625 * f2i.value(xs, ys) + 0.375 * f2s.value(xs, ys)
    assert np.max(np.abs(direct - combined)) < 1e-10


def test_interpolation_constant_examples():
    assert interpolation_constant(2.0, 0.1) == pytest.approx(1.9)
    assert interpolation_constant(2.0, 1e-9) == pytest.approx(2.0, abs=1e-8)
    assert interpolation_constant(2.0, 1.0) == pytest.approx(1.0)


def test_choose_epsilon_and_interpolate(shear):
    mp = choose_r(shear, HC, 0.5)
    f2 = mollify(shear, mp)
    ip = choose_epsilon(f2, HC, 0.5)
    assert 0 < ip.epsilon < 1
    assert ip.C_eps < HC.C
    oracle = min(0.5 / 12, 0.5 / (12 * ip.dx_norm), 0.5 / (12 * 3),
                 (0.5 / (24 * HC.C ** HC.beta)) ** (1 / 0.25))
    assert ip.epsilon == pytest.approx(oracle, rel=1e-12)
    f3 = interpolate_identity(f2, ip)
    xs = np.linspace(0, 1, 9)[:, None]
    ys = np.linspace(0, 1, 33)[None, :]
    shift = np.max(np.abs(f3.value(xs, ys) - f2.value(xs, ys)))
    assert shift <= ip.epsilon  # = eps sup|y - f2|
    assert np.min(f3.dy(xs, ys)) >= ip.epsilon - 1e-15


def test_interpolate_identity_fixed_point(identity):
    ip = choose_epsilon(identity, HC, 0.5)
    f3 = interpolate_identity(identity, ip)
    ys = np.linspace(0, 1, 33)
    # (1-eps) y + eps y re-rounds, so exact equality is one ulp away
    assert np.max(np.abs(f3.value(np.full(ys.shape, 0.3), ys) - ys)) < 1e-15


def test_estimate_lipschitz_identity(identity):
    est = estimate_lipschitz(identity)
    assert est.L == pytest.approx(1.25)  # safety * 1
    assert est.K == 0.0


def test_estimate_lipschitz_shear_chain(shear):
    mp = choose_r(shear, HC, 0.5)
    f2 = mollify(shear, mp)
    ip = choose_epsilon(f2, HC, 0.5)
    f3 = interpolate_identity(f2, ip)
    est = estimate_lipschitz(f3)
    lo, hi = shear.slope_bounds()
    expect_L = max((1 - ip.epsilon) * hi + ip.epsilon,
                   1.0 / ((1 - ip.epsilon) * lo + ip.epsilon))
    assert est.L == pytest.approx(1.25 * expect_L, rel=1e-2)
    # K bound: Lipschitz in y of (1-eps) kappa sin(2 pi y) is 2 pi kappa
    assert est.K <= 1.25 * 2 * np.pi * KAPPA * (1 - ip.epsilon) + 1e-6
    assert est.K >= 0.9 * 2 * np.pi * KAPPA * (1 - ip.epsilon)


def test_manifest_roundtrip_chain(shear):
    mp = choose_r(shear, HC, 0.5)
    f2 = mollify(shear, mp)
    ip = choose_epsilon(f2, HC, 0.5)
    f3 = interpolate_identity(f2, ip, declared_class=HC)
    from foliationlab import parse_manifest
    clone = parse_manifest(f3.manifest())
    xs = np.linspace(0, 1, 7)[:, None]
    ys = np.linspace(0, 1, 9)[None, :]
    assert np.max(np.abs(clone.value(xs, ys) - f3.value(xs, ys))) < 1e-15
    assert clone.declared_class == HC
