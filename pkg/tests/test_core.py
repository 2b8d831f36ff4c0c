"""Generator evaluation, inversion, derivatives, manifests."""

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from foliationlab import (DomainError, HolderClass, ParameterError, builtin,
                          eval_dx, eval_foliation, invert_y, parse_manifest)
from foliationlab.core import GridSampledFoliation, eval_dx_fd
from foliationlab.numerics import DEFAULT_SETTINGS

KAPPA = 1.0 / (8.0 * np.pi)


def test_identity_eval_trivial(identity):
    assert float(eval_foliation(identity, 0.7, 0.3)) == 0.3


def test_shear_closed_form(shear):
    # direct evaluation of y + kappa x sin(2 pi y) at (1, 1/4)
    expected = 0.25 + KAPPA
    assert abs(float(eval_foliation(shear, 1.0, 0.25)) - expected) < 1e-15


@pytest.mark.parametrize("name,params", [
    ("identity", {}),
    ("shear", {"kappa": KAPPA}),
    ("cubic", {"strength": 0.8}),
    ("cubic", {"strength": -0.6}),
])
def test_boundary_conditions(name, params):
    f = builtin(name, **params)
    grid = np.linspace(0.0, 1.0, 64)
    assert np.max(np.abs(f.value(np.zeros(64), grid) - grid)) <= 1e-9
    assert np.max(np.abs(f.value(grid, np.zeros(64)))) <= 1e-9
    assert np.max(np.abs(f.value(grid, np.ones(64)) - 1.0)) <= 1e-9


def test_range_inside_unit_square(shear, cubic):
    xs = np.linspace(0, 1, 64)[:, None]
    ys = np.linspace(0, 1, 64)[None, :]
    for f in (shear, cubic):
        vals = f.value(xs, ys)
        assert vals.min() >= -1e-12 and vals.max() <= 1.0 + 1e-12


def test_monotone_in_y(shear, cubic):
    rng = np.random.default_rng(3)
    x = rng.random(500)
    y1 = rng.random(500)
    y2 = np.minimum(y1 + rng.uniform(1e-6, 0.3, 500), 1.0)
    keep = y2 > y1
    for f in (shear, cubic):
        assert np.all(f.value(x[keep], y2[keep]) > f.value(x[keep], y1[keep]))


def test_invert_roundtrip(shear, cubic):
    rng = np.random.default_rng(5)
    x = rng.random(1000)
    y = rng.random(1000)
    tol = DEFAULT_SETTINGS.root_tol
    for f in (shear, cubic):
        z = f.value(x, y)
        back = f.invert(x, z)
        assert np.max(np.abs(back - y)) <= 10 * tol


def test_invert_trivial_cases(identity, shear):
    assert invert_y(identity, 0.9, 0.42) == pytest.approx(0.42, abs=1e-11)
    # sin(2 pi * 1/2) = 0 makes y = 1/2 a fixed point of the shear
    assert invert_y(shear, 1.0, 0.5) == pytest.approx(0.5, abs=1e-11)
    assert invert_y(shear, 1.0, 0.25 + KAPPA) == pytest.approx(0.25,
                                                               abs=1e-10)
    assert invert_y(shear, 0.3, 0.0) == 0.0
    assert invert_y(shear, 0.3, 1.0) == 1.0


def test_eval_dx_values(identity, shear):
    assert float(eval_dx(identity, 0.5, 0.7)) == 0.0
    # d/dx of the shear is kappa sin(2 pi y); at y = 1/4 that is kappa
    assert float(eval_dx(shear, 0.5, 0.25)) == pytest.approx(KAPPA,
                                                             abs=1e-15)


def test_eval_dx_matches_central_difference(shear, cubic):
    xs = np.linspace(0.05, 0.95, 7)[:, None]
    ys = np.linspace(0.0, 1.0, 9)[None, :]
    for f in (shear, cubic):
        fd = eval_dx_fd(f, xs, ys, step=1e-4)
        assert np.max(np.abs(fd - f.dx(xs, ys))) <= 1e-4


def test_builtin_validation():
    with pytest.raises(ParameterError):
        builtin("no-such-generator")
    with pytest.raises(ParameterError):
        builtin("shear", kappa=1.0)  # 2 pi kappa > 1 kills monotonicity
    with pytest.raises(ParameterError):
        builtin("cubic", strength=1.5)


def test_shear_slope_bounds(shear):
    lo, hi = shear.slope_bounds()
    assert lo == pytest.approx(0.75) and hi == pytest.approx(1.25)
    ys = np.linspace(0, 1, 257)
    sl = shear.dy(np.full(ys.shape, 1.0), ys)
    assert sl.min() >= lo - 1e-12 and sl.max() <= hi + 1e-12


def test_domain_validation(shear):
    with pytest.raises(DomainError):
        eval_foliation(shear, 1.2, 0.5)
    with pytest.raises(DomainError):
        eval_foliation(shear, 0.5, -0.2)


def test_holder_class_validation():
    with pytest.raises(ParameterError):
        HolderClass(1.0, 0.5, 0.25)
    with pytest.raises(ParameterError):
        HolderClass(2.0, 1.0, 0.25)
    with pytest.raises(ParameterError):
        HolderClass(2.0, 0.5, 0.5)


def test_manifest_roundtrip_builtin(shear, cubic):
    for f in (shear, cubic):
        clone = parse_manifest(f.manifest())
        xs = np.linspace(0, 1, 11)[:, None]
        ys = np.linspace(0, 1, 13)[None, :]
        assert np.array_equal(clone.value(xs, ys), f.value(xs, ys))


def test_grid_sampled_memoization(shear):
    proxy = GridSampledFoliation.sample(shear, 129, 129)
    xs = np.linspace(0, 1, 33)[:, None]
    ys = np.linspace(0, 1, 33)[None, :]
    assert np.max(np.abs(proxy.value(xs, ys) - shear.value(xs, ys))) < 1e-3


@hyp_settings(max_examples=25, deadline=None)
@given(kappa=st.floats(min_value=-0.15, max_value=0.15),
       x=st.floats(min_value=0.0, max_value=1.0),
       y=st.floats(min_value=0.0, max_value=1.0))
def test_shear_pair_width_matches_difference(kappa, x, y):
    f = builtin("shear", kappa=kappa)
    y2 = min(y + 0.125, 1.0)
    direct = float(f.value(x, y2)) - float(f.value(x, y))
    via = float(f.pair_width(np.float64(x), np.float64(y), np.float64(y2)))
    assert abs(direct - via) < 1e-14
