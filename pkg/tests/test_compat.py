import numpy as np
import pytest
import sympy as sp

from pardisp.core import X, T, HalfLineField, OperatorCoeffs, make_grid
from pardisp.compat import (CompatibilityError, check_compat_original,
                            correct_data, exp_decay_integral, exp_kernel,
                            initial_iterate, kernel_apply, p_recursion, q_jets)
from pardisp.data import (DataSet, VectorFunc, preset_u0,
                          random_compatible_dataset, skew_operator)

from conftest import rand_decaying_fields


@pytest.fixture(scope="module")
def skew_op():
    return skew_operator(3, delta=1.0, seed=1)


@pytest.fixture(scope="module")
def compatible_data(skew_op):
    return random_compatible_dataset(3, skew_op, -1.0, order=3, seed=2)


class TestExpKernel:
    def test_zero(self, grid_fine):
        f = HalfLineField(grid_fine, np.zeros(grid_fine.n_points))
        assert not exp_kernel(f, -1.0, 0.5).values.any()

    def test_closed_form(self, grid_fine):
        # K[e^{-y}] = e^{-x}/(1 - alpha eps) = (2/3) e^{-x}
        f = HalfLineField(grid_fine, np.exp(-grid_fine.x))
        out = exp_kernel(f, -1.0, 0.5)
        exact = np.exp(-grid_fine.x) / 1.5
        rel = np.max(np.abs(out.values[:, 0] - exact) / exact)
        assert rel < 1e-8

    def test_closed_form_stiff_kernel(self, grid_fine):
        # kernel scale far below the grid spacing
        eps = 2.0 ** -10
        out = kernel_apply(np.exp(-grid_fine.x), grid_fine.h, -1.0, eps)
        exact = np.exp(-grid_fine.x) / (1.0 + eps)
        assert np.max(np.abs(out - exact) / exact) < 1e-8

    def test_contraction_100_fields(self, grid_fine):
        from pardisp.core import l2_norm
        rng = np.random.default_rng(0)
        worst = 0.0
        for f in rand_decaying_fields(grid_fine, 100, seed=1):
            eps = float(rng.uniform(0.05, 1.0))
            kf = kernel_apply(f, grid_fine.h, -1.0, eps)
            worst = max(worst, l2_norm(kf, grid_fine) / l2_norm(f, grid_fine))
        assert worst <= 1.0 + 1e-8

    def test_rejects_positive_alpha(self, grid_small):
        f = HalfLineField(grid_small, np.zeros(grid_small.n_points))
        with pytest.raises(ValueError):
            exp_kernel(f, 1.0, 0.5)

    def test_decay_integral_closed_form(self, grid_fine):
        # int e^{y/(alpha eps)} e^{-y} dy = 1/(1 - 1/(alpha eps))
        alpha, eps = -1.0, 0.5
        val = exp_decay_integral(np.exp(-grid_fine.x), grid_fine.h, alpha, eps)
        exact = 1.0 / (1.0 - 1.0 / (alpha * eps))
        assert val[0] == pytest.approx(exact, rel=1e-9)


class TestQRecursion:
    def test_zero_data(self, skew_op):
        data = DataSet(3, VectorFunc.zero(3), VectorFunc.zero(3))
        q = q_jets(data, skew_op, -1.0, 3)
        for n in range(1, 4):
            assert all(e == 0 for e in q[n])

    def test_first_order_formula(self, skew_op):
        u0 = preset_u0("gaussian", 3)
        f = VectorFunc([sp.exp(-X ** 2) * sp.cos(T)] * 3)
        data = DataSet(3, u0, f)
        alpha = -1.5
        q = q_jets(data, skew_op, alpha, 1)
        u0m = sp.Matrix(u0.exprs)
        expected = (alpha * sp.diff(u0m, X, 3)
                    + skew_op.sym(0) * sp.diff(u0m, X, 2)
                    + sp.Matrix(f.exprs).subs(T, 0))
        diff = sp.simplify(q[1] - expected)
        assert all(e == 0 for e in diff)

    def test_second_order_pure_dispersion(self):
        # A = 0, f = 0: Q2 = alpha^2 u0^{(6)}
        op = OperatorCoeffs.zero(1)
        u0 = VectorFunc([(1 + X ** 2) * sp.exp(-X ** 2)])
        data = DataSet(1, u0, VectorFunc.zero(1))
        alpha = -2.0
        q = q_jets(data, op, alpha, 2)
        expected = alpha ** 2 * sp.diff(sp.Matrix(u0.exprs), X, 6)
        assert sp.simplify(q[2][0] - expected[0]) == 0

    def test_check_original_examples(self):
        op = OperatorCoeffs.zero(1)
        even = DataSet(1, VectorFunc([sp.exp(-X ** 2)]), VectorFunc.zero(1))
        assert check_compat_original(even, op, -1.0, 0) == 0.0
        linear = DataSet(1, VectorFunc([X * sp.exp(-X)]), VectorFunc.zero(1))
        assert check_compat_original(linear, op, -1.0, 0) == pytest.approx(1.0)

    def test_projected_data_satisfies_orders(self, compatible_data, skew_op):
        q = q_jets(compatible_data, skew_op, -1.0, 3)
        for n in range(4):
            res = check_compat_original(compatible_data, skew_op, -1.0, n, q)
            assert res <= 1e-10


class TestPRecursion:
    def test_zero_data(self, grid_mid, skew_op):
        data = DataSet(3, VectorFunc.zero(3), VectorFunc.zero(3))
        jet = p_recursion(data, skew_op, -1.0, 0.25, 2, grid_mid)
        for n in range(1, 3):
            assert not jet.p[n].any()
            assert not jet.phi[n].any()

    def test_first_order_closed_form(self, grid_fine):
        # alpha u0''' + A u0 + g(.,0) = e^{-y}  =>  phi_1 = e^{-x}/(1-alpha*eps)
        op = OperatorCoeffs.zero(1)
        alpha, eps = -1.0, 0.5
        data = DataSet(1, VectorFunc.zero(1), VectorFunc([sp.exp(-X)]))
        jet = p_recursion(data, op, alpha, eps, 1, grid_fine)
        exact = np.exp(-grid_fine.x) / 1.5
        assert np.allclose(jet.phi[1][0][:, 0], exact, rtol=1e-8)

    def test_derivative_commutation(self, grid_fine):
        # d_x phi_n = K[d_x P_n]: the stack rows obey the kernel identity
        op = OperatorCoeffs.zero(1)
        alpha, eps = -1.0, 0.25
        data = DataSet(1, VectorFunc([sp.exp(-X ** 2)]),
                       VectorFunc([sp.exp(-2 * X ** 2)]))
        jet = p_recursion(data, op, alpha, eps, 2, grid_fine)
        for n in (1, 2):
            lhs = jet.phi[n][1]
            rhs = kernel_apply(jet.p[n][1], grid_fine.h, alpha, eps)
            assert np.allclose(lhs, rhs, atol=1e-12)

    def test_ode_residual_relative(self, grid_fine, skew_op, compatible_data):
        eps = 2.0 ** -4
        jet = p_recursion(compatible_data, skew_op, -1.0, eps, 3, grid_fine)
        for n in range(1, 4):
            scale = max(1.0, np.max(np.abs(jet.p[n][0])))
            assert jet.ode_residual(n) <= 1e-7 * scale

    def test_by_parts_identity(self, grid_fine, skew_op, compatible_data):
        # regularized residual equals |alpha eps| times the corner form
        alpha, eps = -1.0, 2.0 ** -4
        corrected, _ = correct_data(compatible_data, skew_op, alpha, eps, 2,
                                    grid_fine)
        jet = p_recursion(corrected, skew_op, alpha, eps, 2, grid_fine)
        for n in (1, 2):
            reg = jet.residual_regularized(n)
            bp = abs(alpha * eps) * jet.by_parts_residual(n)
            scale = max(1.0, np.max(np.abs(jet.p[n][0])))
            assert abs(reg - bp) <= 1e-7 * scale


class TestCorrectData:
    def test_zero_q1pp_gives_zero_c0(self, grid_mid):
        # pure dispersive data with vanishing third derivative structure:
        # u0 = 0, f(.,0) = 0 -> Q1 = 0 -> all corrections vanish
        op = OperatorCoeffs.zero(1)
        data = DataSet(1, VectorFunc.zero(1), VectorFunc([T ** 4 * sp.exp(-X ** 2)]))
        corrected, corr = correct_data(data, op, -1.0, 0.25, 1, grid_mid)
        assert np.max(np.abs(corr.coefficients[0])) < 1e-14

    def test_base_case_quadrature_match(self, skew_op, compatible_data):
        # C0 equals (1 - alpha*eps) int e^{y/(alpha eps)} Q1'' dy to 1e-8
        # relative.  (The source writes the prefactor with the opposite sign;
        # the independent residual quadrature fixes it: see decisions ledger.)
        g = make_grid(40.0, 16385)
        alpha, eps = -1.0, 2.0 ** -4
        corrected, corr = correct_data(compatible_data, skew_op, alpha, eps, 1, g)
        assert corr.report["C0_rel_diff"] < 1e-8

    def test_post_correction_residuals(self, grid_fine, skew_op, compatible_data):
        alpha, eps = -1.0, 2.0 ** -4
        corrected, corr = correct_data(compatible_data, skew_op, alpha, eps, 3,
                                       grid_fine)
        assert np.all(corr.residuals <= 1e-9)

    def test_refuses_incompatible_data(self, grid_mid, skew_op):
        bad = DataSet(3, VectorFunc([X * sp.exp(-X ** 2)] * 3), VectorFunc.zero(3))
        with pytest.raises(CompatibilityError):
            correct_data(bad, skew_op, -1.0, 0.25, 1, grid_mid)

    def test_eps_sweep_monotone_vanishing(self, grid_fine, skew_op, compatible_data):
        q = q_jets(compatible_data, skew_op, -1.0, 3)
        sup = []
        for k in range(3, 11):
            _, corr = correct_data(compatible_data, skew_op, -1.0, 2.0 ** -k, 3,
                                   grid_fine, q=q)
            sup.append(np.max(np.abs(corr.coefficients)))
        sup = np.array(sup)
        assert np.all(np.diff(sup) <= 0.05 * sup[:-1])
        assert sup[-1] < 0.02 * sup[0]         # ~ eps-linear decay


class TestInitialIterate:
    def test_order_zero_is_u0(self, grid_mid, skew_op):
        data = DataSet(3, preset_u0("gaussian", 3), VectorFunc.zero(3))
        init = initial_iterate(data, skew_op, -1.0, 0.25, 0, grid_mid)
        u0 = data.u0.eval_t0(grid_mid.x)
        for t in (0.0, 0.3, 1.0):
            assert np.allclose(init.values(t), u0)

    def test_taylor_jets_identity(self, grid_mid, skew_op, compatible_data):
        init = initial_iterate(compatible_data, skew_op, -1.0, 0.25, 3, grid_mid)
        # d_t^j u0_poly(., 0) = psi_j exactly (polynomial identity)
        h = 1e-3
        vals = [init.values(k * h) for k in range(5)]
        first = (vals[1] - init.values(-h)) / (2 * h)
        assert np.allclose(first, init.t_jet(1), atol=1e-5)

    def test_kernel_composition_chain(self, grid_fine):
        # zero forcing, A = 0: psi_k = K[alpha psi_{k-1}''']
        op = OperatorCoeffs.zero(1)
        alpha, eps = -1.0, 0.25
        data = DataSet(1, VectorFunc([sp.exp(-X ** 2)]), VectorFunc.zero(1))
        init = initial_iterate(data, op, alpha, eps, 2, grid_fine)
        jet = init.jet
        for k in (1, 2):
            direct = kernel_apply(alpha * jet.phi[k - 1][3], grid_fine.h,
                                  alpha, eps)
            assert np.allclose(jet.phi[k][0], direct, atol=1e-11)
