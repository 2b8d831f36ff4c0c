"""Shared fixtures: expensive pipeline runs are built once per session."""

import time
from fractions import Fraction

import numpy as np
import pytest

from foliationlab import (HolderClass, IntervalQ, ResidualStep, builtin,
                          construct_in_B, residual_iterate)

QUARTER_HALF = IntervalQ(Fraction(1, 4), Fraction(1, 2))


@pytest.fixture(scope="session")
def identity():
    return builtin("identity")


@pytest.fixture(scope="session")
def shear():
    return builtin("shear", kappa=1.0 / (8.0 * np.pi))


@pytest.fixture(scope="session")
def cubic():
    return builtin("cubic", strength=0.8)


@pytest.fixture(scope="session")
def desk_run(identity):
    """Desk-scale pipeline: every stage visible and enumerable (n = 12)."""
    hc = HolderClass(4.0, 0.5, 0.0)
    t0 = time.time()
    f_tilde, cert = construct_in_B(identity, hc, 16.0, 10, QUARTER_HALF)
    return {"f": f_tilde, "cert": cert, "hc": hc, "xi": 16.0, "m": 10,
            "interval": QUARTER_HALF, "seconds": time.time() - t0}


@pytest.fixture(scope="session")
def strict_run(identity):
    """The tight-budget pipeline: xi = 0.5 forces the deep level the
    feasibility conditions dictate; strips are certified by bounds."""
    hc = HolderClass(4.0, 0.5, 0.25)
    t0 = time.time()
    f_tilde, cert = construct_in_B(identity, hc, 0.5, 10, QUARTER_HALF)
    return {"f": f_tilde, "cert": cert, "hc": hc, "xi": 0.5, "m": 10,
            "interval": QUARTER_HALF, "seconds": time.time() - t0}


@pytest.fixture(scope="session")
def residual_run(identity):
    """Four-step schedule sharing the boundary point 1/2, which is what
    concentrates conditional mass for every leaf parity pattern."""
    hc = HolderClass(4.0, 0.5, 0.0)
    half = Fraction(1, 2)
    schedule = [
        ResidualStep(8, IntervalQ(Fraction(0), half), anchor_frac=1 / 64),
        ResidualStep(8, IntervalQ(half - Fraction(1, 128),
                                  half + Fraction(1, 128)),
                     anchor_frac=1 / 64),
        ResidualStep(8, IntervalQ(half - Fraction(1, 512), half),
                     anchor_frac=1 / 64),
        ResidualStep(8, IntervalQ(half, half + Fraction(1, 512)),
                     anchor_frac=1 / 64),
    ]
    t0 = time.time()
    run = residual_iterate(identity, schedule, 0.5, hc)
    return {"run": run, "hc": hc, "xi0": 0.5, "schedule": schedule,
            "seconds": time.time() - t0}
