import numpy as np
import pytest

from pardisp.charpoly import (RootSelectionError, adaptive_eta0,
                              asymptotic_gap, char_roots, cubic_roots_batch,
                              fast_branch_target, quartic_roots_batch,
                              quartic_stable_pair, residuals_batch,
                              stable_mask, stable_root, stable_roots_batch)


def sample_tuples(n_each=10, seed=0):
    h = np.logspace(-3, 3, n_each)
    eta = np.concatenate([-np.logspace(0, 6, n_each), np.logspace(0, 6, n_each)])
    eps = np.logspace(-4, 0, n_each)
    alpha = -np.logspace(-2, 1, n_each)
    H, E, P, A = np.meshgrid(h, eta, eps, alpha, indexing="ij")
    return (H + 1j * E).ravel(), P.ravel(), A.ravel()


class TestCubicRoots:
    def test_vieta(self):
        tau, eps, alpha = 2.0 + 5.0j, 0.3, -1.5
        rt = char_roots(tau, eps, alpha)
        assert abs(rt.roots.sum()) < 1e-10 * max(1, abs(tau))
        assert abs(np.prod(rt.roots) - tau / alpha) < 1e-10 * abs(tau / alpha)

    def test_paper_scaled_limit(self):
        # eps=2, alpha=-1: as eta -> -inf the scaled nonzero roots approach
        # +-(-1+i) (the eta -> +inf branch is the complex conjugate set)
        eps, alpha = 2.0, -1.0
        eta = -1e8
        lam = cubic_roots_batch(np.array([1.0 + 1j * eta]), eps, alpha)[0]
        scaled = lam / np.sqrt(abs(eta))
        targets = np.array([0.0, -1.0 + 1.0j, 1.0 - 1.0j])
        for t in targets:
            assert np.min(np.abs(scaled - t)) < 1e-3
        conj = cubic_roots_batch(np.array([1.0 - 1j * eta]), eps, alpha)[0]
        assert np.allclose(np.sort_complex(np.conj(conj)), np.sort_complex(lam),
                           atol=1e-6 * np.sqrt(abs(eta)))

    def test_against_companion_oracle(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(200):
            h = 10.0 ** rng.uniform(-2, 2)
            eta = rng.uniform(-1e4, 1e4)
            eps = 10.0 ** rng.uniform(-3, 0)
            alpha = -(10.0 ** rng.uniform(-1, 1))
            tau = h + 1j * eta
            mine = np.sort_complex(cubic_roots_batch(np.array([tau]), eps, alpha)[0])
            oracle = np.sort_complex(np.roots([1.0, 0.0, -eps * tau, -tau / alpha]))
            worst = max(worst, float(np.max(np.abs(mine - oracle))))
        assert worst <= 1e-9 * 1e4

    def test_residual_bound(self):
        tau, eps, alpha = sample_tuples(6)
        lam = cubic_roots_batch(tau, eps, alpha)
        res = residuals_batch(lam, tau, eps, alpha)
        rel = res / np.maximum(1.0, np.abs(tau))[:, None]
        assert np.max(rel) <= 1e-12


class TestStableRoot:
    def test_unique_over_grid(self):
        tau, eps, alpha = sample_tuples(10)      # 10^4 x 2 tuples
        lam = cubic_roots_batch(tau, eps, alpha)
        counts = stable_mask(lam).sum(axis=1)
        assert np.all(counts == 1)

    def test_no_pure_imaginary(self):
        tau, eps, alpha = sample_tuples(8)
        lam = cubic_roots_batch(tau, eps, alpha)
        min_re = np.min(np.abs(lam.real))
        assert min_re > 0.0

    def test_stable_root_sign(self):
        mu = stable_root(1.0 + 10.0j, 0.5, -1.0)
        assert mu.real < 0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            char_roots(-1.0 + 1j, 0.5, -1.0)
        with pytest.raises(ValueError):
            char_roots(1.0 + 1j, -0.5, -1.0)
        with pytest.raises(ValueError):
            char_roots(1.0 + 1j, 0.5, 0.0)

    def test_conjugate_symmetry(self):
        tau = 2.0 + 7.0j
        a = np.sort_complex(cubic_roots_batch(np.array([tau]), 0.4, -2.0)[0])
        b = np.sort_complex(np.conj(cubic_roots_batch(np.array([np.conj(tau)]),
                                                      0.4, -2.0)[0]))
        assert np.allclose(a, b, atol=1e-12)

    def test_slow_branch_coefficient(self):
        # scaled slow root ~ c1 eta^{-1/2} with c1 = -1/(alpha eps) > 0, so the
        # unscaled slow root tends to the positive constant c1: never selected
        eps, alpha = 0.5, -2.0
        eta = 1e8
        lam = cubic_roots_batch(np.array([1.0 + 1j * eta]), eps, alpha)[0]
        slow = lam[np.argmin(np.abs(lam))]
        c1 = -1.0 / (alpha * eps)
        assert c1 > 0
        assert slow == pytest.approx(c1, rel=1e-3)


class TestAsymptoticGap:
    def test_sweep_bounded_and_vanishing_ratio(self):
        eps, alpha, h = 1.0, -1.0, 1.0
        eta = np.logspace(2, 6, 41)
        gap = asymptotic_gap(eta, eps, alpha, h)
        # the gap tends to 1/(2 |alpha| eps); cap well above that
        assert np.max(gap) < 5.0
        assert gap[-1] / np.sqrt(eta[-1]) <= 1e-2

    def test_conjugate_symmetric_sweep(self):
        eps, alpha, h = 0.5, -1.5, 2.0
        eta = np.logspace(2, 5, 13)
        gp = asymptotic_gap(eta, eps, alpha, h)
        gm = asymptotic_gap(-eta, eps, alpha, h)
        assert np.allclose(gp, gm, rtol=1e-10)

    def test_leading_term_scales_with_eps(self):
        # fast branch magnitude ~ sqrt(eps/2) |(-1-i)| sqrt(eta) = sqrt(eps eta)
        alpha, h, eta = -1.0, 1.0, 1e6
        for eps in (0.5, 0.25, 0.125):
            mu = stable_root(h + 1j * eta, eps, alpha)
            assert abs(mu) == pytest.approx(np.sqrt(eps) * np.sqrt(eta), rel=0.05)

    def test_adaptive_eta0_reported(self):
        eta0 = adaptive_eta0(1.0, -1.0, 1.0)
        assert np.isfinite(eta0) and eta0 > 0


class TestQuartic:
    def test_pure_regularization_root_angles(self):
        # eps lam^4 + tau = 0: roots |tau/eps|^{1/4} e^{i (theta+pi+2 pi k)/4};
        # exactly two in the left half-plane for Re tau > 0
        eps = 0.25
        for theta in (-1.2, -0.3, 0.0, 0.7, 1.4):
            tau = 3.0 * np.exp(1j * theta)
            lam = np.array([(abs(tau) / eps) ** 0.25
                            * np.exp(1j * (theta + np.pi + 2 * np.pi * k) / 4)
                            for k in range(4)])
            assert int(np.sum(lam.real < 0)) == 2
            mine = quartic_roots_batch(np.array([tau]), eps, 0.0)[0]
            for root in lam:
                assert np.min(np.abs(mine - root)) < 1e-10

    def test_stable_pair_with_dispersion(self):
        tau = 1.0 + 1j * np.logspace(-1, 5, 31)
        pair = quartic_stable_pair(tau, 0.125, 1.0)
        assert pair.shape == (31, 2)
        assert np.all(pair.real < 0)

    def test_stable_pair_with_folded_delta(self):
        tau = 0.5 + 1j * np.linspace(-2e3, 2e3, 41)
        pair = quartic_stable_pair(tau, 0.0625, 1.0, delta=1.0)
        assert np.all(pair.real < 0)
