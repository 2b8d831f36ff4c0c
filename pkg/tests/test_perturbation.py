"""Bump profiles, feasibility solvers, the dyadic perturbation itself."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from foliationlab import (HolderClass, IntervalQ, ParameterError, builtin,
                          choose_deltas, choose_n, construct_in_B,
                          dyadic_perturb, membership_A, parse_manifest)
from foliationlab.perturbation import (A_DERIV_MAX, BumpProfile,
                                       PerturbationParams, bump_a,
                                       bump_a_deriv, bump_a_tilde,
                                       lemma5_value,
                                       perturbation_conditions)

I_QH = IntervalQ(Fraction(1, 4), Fraction(1, 2))
HC = HolderClass(2.0, 0.5, 0.25)


def test_interval_validation():
    with pytest.raises(ParameterError):
        IntervalQ(Fraction(1, 2), Fraction(1, 4))
    with pytest.raises(ParameterError):
        IntervalQ.parse("1/4")
    assert IntervalQ.parse("1/4:1/2") == I_QH
    assert float(I_QH.length) == 0.25


def test_smooth_step_values():
    assert float(bump_a(0.0)) == pytest.approx(0.0, abs=1e-14)
    assert float(bump_a(1.0)) == pytest.approx(1.0, abs=1e-12)
    # the integrand is symmetric about t = 1/2
    assert float(bump_a(0.5)) == pytest.approx(0.5, abs=1e-12)
    assert float(bump_a(0.25) + bump_a(0.75)) == pytest.approx(1.0,
                                                               abs=1e-12)
    # strictly increasing away from the flat-to-all-orders endpoints,
    # nondecreasing everywhere (endpoint increments fall below one ulp)
    xs = np.linspace(0, 1, 257)
    assert np.all(np.diff(bump_a(xs)) >= 0)
    mid = np.linspace(0.05, 0.95, 257)
    assert np.all(np.diff(bump_a(mid)) > 0)


def test_smooth_step_derivative():
    xs = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    fd = (bump_a(xs + h) - bump_a(xs - h)) / (2 * h)
    assert np.max(np.abs(fd - bump_a_deriv(xs))) < 1e-8
    assert float(np.max(bump_a_deriv(np.linspace(0, 1, 2001)))) == \
        pytest.approx(A_DERIV_MAX, rel=1e-6)
    assert A_DERIV_MAX < 2.0  # the printed envelope 2/delta1 dominates


def test_profile_pins_and_plateaus():
    prof = BumpProfile(I_QH, 0.05, 0.01)
    assert float(prof.value(0.0)) == pytest.approx(0.5, abs=1e-12)
    xs_plateau = np.linspace(0.25, 0.5, 11)
    assert np.max(np.abs(prof.value(xs_plateau) - 0.99)) < 1e-12
    xs_floor = np.linspace(0.06, 0.19, 7)
    assert np.max(np.abs(prof.value(xs_floor) - 0.01)) < 1e-12
    xs_tail = np.linspace(0.56, 1.0, 7)
    assert np.max(np.abs(prof.value(xs_tail) - 0.01)) < 1e-12
    # ascending branch midpoint: (1 - 2 d2) a(1/2) + d2 = 1/2
    mid = 0.5 * ((0.25 - 0.05) + 0.25)
    assert float(prof.value(mid)) == pytest.approx(0.5, abs=1e-12)
    # range [delta2, 1 - delta2]
    xs = np.linspace(0, 1, 4001)
    vals = prof.value(xs)
    assert vals.min() >= 0.01 - 1e-12 and vals.max() <= 0.99 + 1e-12


def test_profile_derivative_bound():
    prof = BumpProfile(I_QH, 0.05, 0.01)
    xs = np.linspace(0, 1, 8001)
    printed = 2 * (1 - 2 * 0.01) / 0.05
    assert np.max(np.abs(prof.deriv(xs))) <= printed
    assert prof.deriv_sup() <= printed
    h = 1e-7
    fd = (prof.value(xs[1:-1] + h) - prof.value(xs[1:-1] - h)) / (2 * h)
    assert np.max(np.abs(fd - prof.deriv(xs[1:-1]))) < 1e-5


def test_profile_continuity():
    prof = BumpProfile(I_QH, 0.05, 0.01, anchor_width=0.05 / 8)
    xs = np.linspace(0, 1, 200001)
    vals = prof.value(xs)
    assert np.max(np.abs(np.diff(vals))) < prof.deriv_sup() * (xs[1] - xs[0]) * 1.1


def test_profile_geometry_errors():
    with pytest.raises(ParameterError):
        BumpProfile(I_QH, 0.2, 0.01)  # delta1 > b1/2
    with pytest.raises(ParameterError):
        BumpProfile(IntervalQ(Fraction(1, 2), Fraction(9, 10)), 0.2, 0.01)
    with pytest.raises(ParameterError):
        BumpProfile(I_QH, 0.05, 0.6)
    assert bump_a_tilde(0.3, 0.05, 0.01, I_QH) == pytest.approx(0.99)


def test_profile_edge_intervals():
    left = BumpProfile(IntervalQ(Fraction(0), Fraction(1, 2)), 0.05, 0.01)
    assert float(left.value(0.0)) == pytest.approx(0.5, abs=1e-12)
    assert float(left.value(0.3)) == pytest.approx(0.99)
    assert float(left.value(0.8)) == pytest.approx(0.01)
    right = BumpProfile(IntervalQ(Fraction(1, 2), Fraction(1)), 0.05, 0.01)
    assert float(right.value(0.0)) == pytest.approx(0.5, abs=1e-12)
    assert float(right.value(0.3)) == pytest.approx(0.01)
    assert float(right.value(0.9)) == pytest.approx(0.99)
    assert float(right.value(1.0)) == pytest.approx(0.99)


def test_lemma5_worked_example():
    # L3=1, mu=1/4, m=10, delta = 1/200
    val = lemma5_value(1 / 200, 1 / 200, 1.0, 0.25)
    first = (1 / 200) * 0.25 / (1 - 0.25 - 3 / 200)
    second = (3 / 200 + (1 / 200) * (1 - 0.25 - 3 / 200)) / 0.25
    assert val == pytest.approx(max(first, second))
    assert val == pytest.approx(0.0747, abs=1e-4)
    assert val < 1 / 10


def test_lemma5_degenerate_length():
    assert lemma5_value(0.1, 0.1, 1.0, 0.9) == np.inf  # 1 - mu - 3 d1 <= 0


def test_choose_deltas_scaling():
    d1 = choose_deltas(1.0, 10, I_QH)
    d2 = choose_deltas(2.0, 10, I_QH)
    assert d1.lemma5 < 1 / 20
    assert d2.delta1 <= d1.delta1 / 3  # roughly quartered via L^2
    with pytest.raises(ParameterError):
        choose_deltas(1.0, 10, IntervalQ(Fraction(0), Fraction(1)))
    ratio = choose_deltas(1.0, 10, I_QH, ratio=1 / 50)
    assert ratio.delta2 == pytest.approx(ratio.delta1 / 50)


def test_choose_n_worked_examples():
    # first branch of the distance conditions: L3/2^{n-1} <= xi/12 forces
    # n >= 7 at L3 = 2, xi = 0.5
    c6 = perturbation_conditions(6, HC, 1.9, 2.0, 0.0, 0.01, 0.01, 0.5)
    c7 = perturbation_conditions(7, HC, 1.9, 2.0, 0.0, 0.01, 0.01, 0.5)
    assert c6["c4a"][0] > c6["c4a"][1]
    assert c7["c4a"][0] <= c7["c4a"][1]
    # Holder budget: C_eps = 1.9, C = 2, L3 = 2, delta2 = 0.005 forces
    # n >= 15 at beta = 1/2
    c14 = perturbation_conditions(14, HC, 1.9, 2.0, 0.0, 0.01, 0.005, 0.5)
    c15 = perturbation_conditions(15, HC, 1.9, 2.0, 0.0, 0.01, 0.005, 0.5)
    assert c14["c1"][0] > 2.0 and c15["c1"][0] <= 2.0
    # lower-Holder condition closes at n >= 4 + log2(L3/(C delta2))
    import math
    threshold = 4 + math.log2(2.0 / (2.0 * 0.005))
    lo = perturbation_conditions(int(threshold), HC, 1.9, 2.0, 0.0, 0.01,
                                 0.005, 0.5)
    hi = perturbation_conditions(int(threshold) + 1, HC, 1.9, 2.0, 0.0,
                                 0.01, 0.005, 0.5)
    assert lo["c3"][0] > 2.0 and hi["c3"][0] <= 2.0
    n = choose_n(HC, 1.9, 2.0, 0.0, 0.01, 0.005, 0.5)
    conds = perturbation_conditions(n, HC, 1.9, 2.0, 0.0, 0.01, 0.005, 0.5)
    for key in ("c1", "c3", "c4a", "c4b", "c4c", "c4d"):
        assert conds[key][0] <= conds[key][1]


def test_choose_n_unreachable_names_binding():
    with pytest.raises(ParameterError, match="c1"):
        # C_eps exactly C leaves no Holder room at any level
        choose_n(HC, HC.C, 2.0, 0.0, 0.01, 0.005, 0.5, n_cap=32)


def _small_perturbation(identity, n=4, delta2=0.01, delta1=0.05):
    pp = PerturbationParams(delta1=delta1, delta2=delta2, n=n,
                            anchor_width=delta1, lemma5=0.0)
    return dyadic_perturb(identity, pp, I_QH), pp


def test_even_line_agreement_exact(identity):
    ft, pp = _small_perturbation(identity)
    ys = np.arange(0, 2 ** (pp.n - 1) + 1) * 2.0 ** -(pp.n - 1)
    xs = np.linspace(0, 1, 9)
    for x in xs:
        assert np.array_equal(ft.value(np.full(ys.shape, x), ys), ys)


def test_anchor_transversal_is_identity(identity):
    ft, _ = _small_perturbation(identity)
    ys = np.linspace(0, 1, 97)
    vals = ft.value(np.zeros(97), ys)
    assert np.max(np.abs(vals - ys)) < 1e-15


def test_central_curve_value(identity):
    # with the identity base and one cell, the central curve sits at
    # 1 - delta2 inside the interval
    pp = PerturbationParams(delta1=0.05, delta2=0.01, n=1,
                            anchor_width=0.05, lemma5=0.0)
    ft = dyadic_perturb(identity, pp, I_QH)
    assert float(ft.value(0.3, 0.5)) == pytest.approx(0.99, abs=1e-15)
    assert float(ft.value(0.8, 0.5)) == pytest.approx(0.01, abs=1e-15)


@hyp_settings(max_examples=30, deadline=None)
@given(delta2=st.floats(min_value=1e-4, max_value=0.49),
       x=st.floats(min_value=0.0, max_value=1.0))
def test_monotone_for_all_delta2(delta2, x):
    ident = builtin("identity")
    pp = PerturbationParams(delta1=0.05, delta2=delta2, n=3,
                            anchor_width=0.05, lemma5=0.0)
    ft = dyadic_perturb(ident, pp, I_QH)
    ys = np.linspace(0, 1, 257)
    vals = ft.value(np.full(ys.shape, x), ys)
    assert np.all(np.diff(vals) > 0)


def test_strip_compression_bound(identity):
    ft, pp = _small_perturbation(identity, n=6, delta2=0.003)
    # in the flat floor of the profile the lower half of every cell is
    # squeezed: f~(x,(2a+1)/2^n) - f~(x,2a/2^n) <= 2 L3 delta2 / 2^n
    xs = np.linspace(0.07, 0.18, 9)   # flat floor region
    for i in range(0, 2 ** 6, 2):
        w = ft.strip_width(xs, 6, i)
        assert np.max(w) <= 2 * 0.003 * 2.0 ** -6 * (1 + 1e-12)


def test_pair_width_matches_value_difference(identity):
    ft, _ = _small_perturbation(identity)
    rng = np.random.default_rng(8)
    x = rng.random(200)
    y1 = rng.random(200) * 0.98
    y2 = np.minimum(y1 + rng.uniform(1e-4, 0.4, 200), 1.0)
    direct = ft.value(x, y2) - ft.value(x, y1)
    via = ft.pair_width(x, y1, y2)
    assert np.max(np.abs(direct - via)) < 1e-14


def test_dy_matches_difference_quotient(identity):
    ft, _ = _small_perturbation(identity)
    for (x, y) in ((0.3, 0.4), (0.8, 0.11), (0.05, 0.93)):
        d = float(ft.dy(np.float64(x), np.float64(y)))
        h = 1e-10
        fd = (float(ft.value(x, y + h)) - float(ft.value(x, y))) / h
        assert d == pytest.approx(fd, rel=1e-4)


def test_level_widths_consistency(identity):
    ft, pp = _small_perturbation(identity, n=5)
    x = 0.37
    lw = ft.level_widths(x, 5)
    assert lw.sum() == pytest.approx(1.0, abs=1e-12)
    for i in (0, 7, 20, 31):
        assert float(ft.strip_width(np.float64(x), 5, i)) == \
            pytest.approx(lw[i], abs=1e-17)
    finer = ft.level_widths(x, 7)
    assert np.max(np.abs(finer.reshape(-1, 4).sum(axis=1) - lw)) < 1e-17


def test_deep_strip_widths_stay_exact(identity):
    ft, pp = _small_perturbation(identity)
    x = np.array([0.3])
    az = float(ft.profile.value(np.float64(0.3)))
    # far below the perturbation level the slope is exactly 2 a~ in lower
    # halves and 2 (1 - a~) in upper halves of each cell
    base_idx = 1 << 78                            # start of cell a = 2
    low = ft.strip_width(x, 80, base_idx + 3)     # lower half of the cell
    up = ft.strip_width(x, 80, base_idx + (1 << 76) + 3)  # upper half
    assert float(low) * 2.0 ** 80 == pytest.approx(2 * az, rel=1e-12)
    assert float(up) * 2.0 ** 80 == pytest.approx(2 * (1 - az), rel=1e-12)


def test_manifest_roundtrip_perturbed(identity):
    ft, _ = _small_perturbation(identity)
    clone = parse_manifest(ft.manifest())
    xs = np.linspace(0, 1, 9)[:, None]
    ys = np.linspace(0, 1, 17)[None, :]
    assert np.array_equal(clone.value(xs, ys), ft.value(xs, ys))


def test_construct_rejects_full_interval(identity):
    with pytest.raises(ParameterError):
        construct_in_B(identity, HC, 0.5, 10,
                       IntervalQ(Fraction(0), Fraction(1)))


def test_construct_short_circuits_on_member(identity):
    # narrow transitions keep the profile's off-plateau mass small enough
    # for the all-strips ratio test to clear m = 10 at its own level
    ft, _ = _small_perturbation(identity, n=4, delta2=0.0015, delta1=0.008)
    report = membership_A(ft, 4, 10, I_QH)
    assert report.passed
    out, cert = construct_in_B(ft, HolderClass(4.0, 0.5, 0.0), 8.0, 10,
                               I_QH, precheck_levels=5)
    assert out is ft
    assert cert.passed
    assert cert.params.get("short_circuit") is True
