import os
import sys

import numpy as np
import pytest
import sympy as sp

sys.path.insert(0, os.path.dirname(__file__))

from pardisp.core import X, T, make_grid
from pardisp.data import VectorFunc, DataSet, manufactured_forcing


@pytest.fixture(scope="session")
def grid_fine():
    return make_grid(40.0, 4097)


@pytest.fixture(scope="session")
def grid_mid():
    return make_grid(30.0, 513)


@pytest.fixture(scope="session")
def grid_small():
    return make_grid(20.0, 257)


@pytest.fixture(scope="session")
def mms_scalar():
    """One-component manufactured solution with u_x(0, t) = 0."""
    u = VectorFunc([sp.exp(-X ** 2) * (sp.cos(T)
                                       + sp.Rational(3, 10) * sp.sin(2 * T) * X ** 2)],
                   name="mms_scalar")
    return u


def lp1_dataset(u_star, alpha, eps):
    g = manufactured_forcing(u_star, "lp1", alpha, eps)
    return DataSet(u_star.m, VectorFunc(u_star.exprs.subs(T, 0)), g,
                   name="manufactured")


def rand_decaying_fields(grid, count, seed=0, comps=1):
    rng = np.random.default_rng(seed)
    x = grid.x
    out = []
    for _ in range(count):
        f = np.zeros((grid.n_points, comps))
        for c in range(comps):
            amp = rng.uniform(-1, 1, 3)
            wdt = rng.uniform(0.3, 2.0, 3)
            cen = rng.uniform(0, 4, 3)
            f[:, c] = sum(a * np.exp(-w * (x - s) ** 2)
                          for a, w, s in zip(amp, wdt, cen))
        out.append(f)
    return out
