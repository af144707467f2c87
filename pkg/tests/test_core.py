import numpy as np
import pytest
import sympy as sp

from pardisp.core import (DecayWarning, Grid, HalfLineField, OperatorCoeffs,
                          check_strong_ellipticity, fd_derivative,
                          fornberg_weights, make_grid, sobolev_norm,
                          sobolev_norm_values, vortex_operator, X, T)
from pardisp.data import preset_w

from conftest import rand_decaying_fields


class TestGrid:
    def test_spacing(self):
        g = make_grid(10.0, 11)
        assert g.h == 1.0
        assert g.x[0] == 0.0
        assert g.x[-1] == 10.0

    def test_fine_spacing(self):
        g = make_grid(40.0, 4097)
        assert g.h == pytest.approx(40.0 / 4096)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            make_grid(-1.0, 11)
        with pytest.raises(ValueError):
            make_grid(10.0, 4)


class TestFiniteDifferences:
    def test_fornberg_first_derivative_centered(self):
        w = fornberg_weights(0.0, np.array([-1.0, 0.0, 1.0]), 1)[1]
        assert np.allclose(w, [-0.5, 0.0, 0.5])

    def test_polynomial_exactness(self):
        g = make_grid(2.0, 33)
        x = g.x
        vals = (x ** 5)[:, None]
        d3 = fd_derivative(vals, g.h, 3)
        assert np.allclose(d3[:, 0], 60.0 * x ** 2, atol=1e-8)

    def test_convergence_order(self):
        errs = []
        for n in (129, 257):
            g = make_grid(10.0, n)
            vals = np.exp(-g.x)[:, None]
            d2 = fd_derivative(vals, g.h, 2)
            errs.append(np.max(np.abs(d2[:, 0] - np.exp(-g.x))))
        order = np.log2(errs[0] / errs[1])
        assert order > 3.5


class TestSobolevNorm:
    def test_zero_field(self, grid_fine):
        f = HalfLineField(grid_fine, np.zeros(grid_fine.n_points))
        assert sobolev_norm(f, 3) == 0.0

    def test_exp_decay_order0(self):
        # int_0^inf e^{-2x} dx = 1/2 -> norm sqrt(1/2); trapezoid needs a
        # fine grid for the 1e-6 target
        g = make_grid(40.0, 16385)
        f = HalfLineField(g, np.exp(-g.x))
        assert sobolev_norm(f, 0) == pytest.approx(np.sqrt(0.5), abs=1e-6)

    def test_exp_decay_order1(self):
        g = make_grid(40.0, 16385)
        f = HalfLineField(g, np.exp(-g.x))
        assert sobolev_norm(f, 1) == pytest.approx(1.0, abs=1e-6)

    def test_xexp_closed_forms(self):
        # ||x e^{-x}||^2 = 1/4, ||(x e^{-x})'||^2 = 1/4
        g = make_grid(40.0, 32769)
        f = HalfLineField(g, g.x * np.exp(-g.x))
        assert sobolev_norm(f, 0) == pytest.approx(0.5, abs=1e-6)
        assert sobolev_norm(f, 1) == pytest.approx(np.sqrt(0.5), abs=1e-6)

    def test_monotone_in_order(self, grid_mid):
        for f in rand_decaying_fields(grid_mid, 5, seed=3):
            prev = 0.0
            for k in range(4):
                cur = sobolev_norm_values(f, grid_mid, k)
                assert cur >= prev
                prev = cur

    def test_second_order_convergence(self):
        exact = 1.0  # H^1 norm of e^{-x}
        errs = []
        for n in (2049, 4097):
            g = make_grid(40.0, n)
            errs.append(abs(sobolev_norm_values(np.exp(-g.x)[:, None], g, 1) - exact))
        assert np.log2(errs[0] / errs[1]) > 1.8

    def test_decay_warning(self):
        g = make_grid(5.0, 65)
        f = HalfLineField(g, np.exp(-g.x))   # e^{-5} at the end: not decayed
        with pytest.warns(DecayWarning):
            f.decay_audit()


class TestInterpolationInequality:
    def test_grid_stable_constant(self):
        # ||u_xx||^2 <= C ||u_x|| ||u_xxx|| with C stable under refinement
        cs = []
        for n in (513, 1025):
            g = make_grid(30.0, n)
            worst = 0.0
            for f in rand_decaying_fields(g, 10, seed=5):
                n1 = np.sqrt(np.sum(g.trapz_weights() * fd_derivative(f, g.h, 1)[:, 0] ** 2))
                n2 = np.sqrt(np.sum(g.trapz_weights() * fd_derivative(f, g.h, 2)[:, 0] ** 2))
                n3 = np.sqrt(np.sum(g.trapz_weights() * fd_derivative(f, g.h, 3)[:, 0] ** 2))
                worst = max(worst, n2 ** 2 / (n1 * n3))
            cs.append(worst)
        assert cs[1] <= 2.0 * cs[0]
        assert cs[0] <= 2.0 * cs[1]


class TestEllipticity:
    def test_identity(self):
        op = OperatorCoeffs.identity_parabolic(3, 1.0)
        ok, margin = check_strong_ellipticity(op, 1.0, np.linspace(0, 5, 17))
        assert ok
        assert margin == pytest.approx(2.0)

    def test_skew_only_fails(self):
        skew = sp.Matrix([[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
        zero = sp.zeros(3, 3)
        op = OperatorCoeffs(3, skew, zero, zero)
        ok, margin = check_strong_ellipticity(op, 0.1, np.linspace(0, 5, 9))
        assert not ok
        assert margin == pytest.approx(0.0, abs=1e-14)

    def test_vortex_margin_exact(self):
        w = preset_w("tilted")
        op = vortex_operator(w.exprs, -1.0, delta=0.7)
        ok, margin = check_strong_ellipticity(op, 0.7, np.linspace(0, 20, 257),
                                              [0.0, 0.4, 0.9])
        assert ok
        assert margin == pytest.approx(1.4, abs=1e-13)


class TestVortexOperator:
    def test_constant_w_kills_stretch_term(self):
        # w = e3 constant: A0 X = delta X + e3 x X
        op = vortex_operator(sp.Matrix([0, 0, 1]), -1.0, delta=0.5)
        a0 = op.coeff(0, np.array([0.3, 1.7]), 0.0)
        e3_cross = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        expected = 0.5 * np.eye(3) + e3_cross
        assert np.allclose(a0[0], expected)
        assert np.allclose(a0[1], expected)

    def test_zero_w(self):
        op = vortex_operator(sp.zeros(3, 1), -1.0, delta=0.9)
        a0 = op.coeff(0, np.array([1.0]), 0.0)
        assert np.allclose(a0[0], 0.9 * np.eye(3))

    def test_skew_structure_random_w(self):
        w = preset_w("tilted")
        op = vortex_operator(w.exprs, -2.0, delta=1.3)
        x = np.linspace(0, 10, 101)
        a0 = op.coeff(0, x, 0.2)
        sym = a0 + np.swapaxes(a0, 1, 2)
        assert np.allclose(sym, 2 * 1.3 * np.eye(3)[None, :, :], atol=1e-14)

    def test_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            vortex_operator(sp.Matrix([1, 0]), -1.0, 1.0)

    def test_jets_follow_leibniz(self):
        # d_t A0 for w = (sin(q), 0, cos(q)), q = 0.3 e^{-x^2} cos t
        w = preset_w("tilted")
        op = vortex_operator(w.exprs, -1.0, delta=1.0)
        x = np.linspace(0, 3, 7)
        dt = 1e-6
        a_plus = op.coeff(0, x, dt)
        a_minus = op.coeff(0, x, -dt)
        fd = (a_plus - a_minus) / (2 * dt)
        jet = op.jet(0, 1, 0, x)
        assert np.allclose(fd, jet, atol=1e-7)
