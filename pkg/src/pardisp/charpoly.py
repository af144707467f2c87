"""Roots of the corrector's characteristic cubic and stable-root selection.

The cubic is lambda^3 - eps*tau*lambda - tau/alpha = 0 with tau = h + i*eta,
h > 0.  For every admissible parameter tuple exactly one root has negative
real part; that root gives the decaying boundary-layer profile e^{mu x}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROOT_RESIDUAL_TOL = 1e-12
# a root counts as stable only when clearly in the open left half-plane
STABLE_CLASSIFY_TOL = 1e-13


class RootSelectionError(RuntimeError):
    """Stable-root count differs from one: numerical breakdown, not math."""


@dataclass
class RootTriple:
    tau: complex
    roots: np.ndarray          # (3,) complex
    stable_index: int
    residuals: np.ndarray      # (3,) float

    @property
    def mu(self) -> complex:
        return complex(self.roots[self.stable_index])


def _poly_eval(lam: np.ndarray, tau: np.ndarray, eps: float, alpha: float) -> np.ndarray:
    return lam ** 3 - eps * tau * lam - tau / alpha


def cubic_roots_batch(tau: np.ndarray, eps, alpha) -> np.ndarray:
    """Roots of the cubic for a batch of tau values, shape (k, 3).

    Companion-matrix eigenvalues followed by one Newton polish step.
    eps and alpha may be scalars or arrays broadcastable against tau.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=complex))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), tau.shape)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), tau.shape)
    k = tau.size
    comp = np.zeros((k, 3, 3), dtype=complex)
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    comp[:, 0, 2] = tau / alpha          # -(coeff of lambda^0) = tau/alpha
    comp[:, 1, 2] = eps * tau            # -(coeff of lambda^1)
    lam = np.linalg.eigvals(comp)
    # one Newton step restores the last digits after the eigen solve
    p = _poly_eval(lam, tau[:, None], eps[:, None], alpha[:, None])
    dp = 3.0 * lam ** 2 - (eps * tau)[:, None]
    safe = np.abs(dp) > 0
    lam = np.where(safe, lam - p / np.where(safe, dp, 1.0), lam)
    return lam


def residuals_batch(lam: np.ndarray, tau: np.ndarray, eps, alpha) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(tau, dtype=complex))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), tau.shape)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), tau.shape)
    return np.abs(_poly_eval(lam, tau[:, None], eps[:, None], alpha[:, None]))


def stable_mask(lam: np.ndarray) -> np.ndarray:
    """True where a root is strictly in the left half-plane."""
    return lam.real < -STABLE_CLASSIFY_TOL * (1.0 + np.abs(lam))


def char_roots(tau: complex, eps: float, alpha: float) -> RootTriple:
    """Root triple for a single tau with Re tau > 0."""
    if tau.real <= 0:
        raise ValueError("need Re tau > 0")
    if eps <= 0:
        raise ValueError("need eps > 0")
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    lam = cubic_roots_batch(np.array([tau]), eps, alpha)[0]
    res = residuals_batch(lam[None, :], np.array([tau]), eps, alpha)[0]
    neg = stable_mask(lam)
    if neg.sum() != 1:
        raise RootSelectionError(
            f"found {int(neg.sum())} roots with Re < 0 at tau={tau}: "
            "real parts too close to zero for the float budget")
    idx = int(np.argmax(neg))
    return RootTriple(tau=complex(tau), roots=lam, stable_index=idx, residuals=res)


def stable_root(tau: complex, eps: float, alpha: float) -> complex:
    return char_roots(tau, eps, alpha).mu


def stable_roots_batch(tau: np.ndarray, eps: float, alpha: float) -> np.ndarray:
    """Stable root for each tau in a batch; raises if any count is off."""
    lam = cubic_roots_batch(tau, eps, alpha)
    neg = stable_mask(lam)
    counts = neg.sum(axis=1)
    if not np.all(counts == 1):
        bad = np.flatnonzero(counts != 1)
        raise RootSelectionError(
            f"{bad.size} tau samples with stable-root count != 1 "
            f"(first at index {bad[0]}, tau={np.atleast_1d(tau)[bad[0]]})")
    idx = np.argmax(neg, axis=1)
    return lam[np.arange(lam.shape[0]), idx]


def fast_branch_target(eta, eps: float) -> np.ndarray:
    """Asymptote of the stable root: sqrt(eps/2) (-1 - i sign(eta)) |eta|^(1/2).

    The two infinite-|eta| branches are complex conjugates of each other;
    the sign of Im follows -sign(eta) for the stable branch.
    """
    eta = np.asarray(eta, dtype=float)
    s = np.where(eta >= 0, 1.0, -1.0)
    return np.sqrt(eps / 2.0) * (-1.0 - 1j * s) * np.sqrt(np.abs(eta))


def asymptotic_gap(eta, eps: float, alpha: float, h: float) -> np.ndarray:
    """|mu(h + i eta) - fast-branch asymptote| per eta sample."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    tau = h + 1j * eta
    mu = stable_roots_batch(tau, eps, alpha)
    return np.abs(mu - fast_branch_target(eta, eps))


def adaptive_eta0(eps: float, alpha: float, h: float,
                  eta_grid=None) -> float:
    """Smallest |eta| where the three roots separate by > 0.1 |eta|^(1/2).

    Makes the asymptotic regime of the root lemma operational; reported in
    diagnostics, never asserted against.
    """
    if eta_grid is None:
        eta_grid = np.logspace(-1, 6, 141)
    lam = cubic_roots_batch(h + 1j * np.asarray(eta_grid), eps, alpha)
    d01 = np.abs(lam[:, 0] - lam[:, 1])
    d02 = np.abs(lam[:, 0] - lam[:, 2])
    d12 = np.abs(lam[:, 1] - lam[:, 2])
    sep = np.minimum(np.minimum(d01, d02), d12)
    ok = sep > 0.1 * np.sqrt(np.abs(eta_grid))
    # first index after which separation persists
    for i in range(len(eta_grid)):
        if ok[i:].all():
            return float(eta_grid[i])
    return float(eta_grid[-1])


def quartic_roots_batch(tau: np.ndarray, eps: float, alpha: float,
                        delta: float = 0.0) -> np.ndarray:
    """Roots of eps*lambda^4 - alpha*lambda^3 - delta*lambda^2 + tau = 0.

    The alpha > 0 corrector characteristic; delta > 0 appears when the
    diagonal parabolic part rides in the principal symbol.  Returns (k, 4)
    complex roots, companion eigenvalues plus Newton polish.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=complex))
    k = tau.size
    comp = np.zeros((k, 4, 4), dtype=complex)
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    comp[:, 3, 2] = 1.0
    # monic: lambda^4 - (alpha/eps) lambda^3 - (delta/eps) lambda^2 + tau/eps
    comp[:, 0, 3] = -tau / eps
    comp[:, 2, 3] = delta / eps
    comp[:, 3, 3] = alpha / eps
    lam = np.linalg.eigvals(comp)
    p = (lam ** 4 - (alpha / eps) * lam ** 3 - (delta / eps) * lam ** 2
         + (tau / eps)[:, None])
    dp = 4.0 * lam ** 3 - 3.0 * (alpha / eps) * lam ** 2 - 2.0 * (delta / eps) * lam
    safe = np.abs(dp) > 0
    lam = np.where(safe, lam - p / np.where(safe, dp, 1.0), lam)
    return lam


def quartic_stable_pair(tau: np.ndarray, eps: float, alpha: float,
                        delta: float = 0.0):
    """The two left-half-plane roots per tau; raises when the count is off."""
    lam = quartic_roots_batch(tau, eps, alpha, delta)
    neg = stable_mask(lam)
    counts = neg.sum(axis=1)
    if not np.all(counts == 2):
        bad = np.flatnonzero(counts != 2)
        raise RootSelectionError(
            f"{bad.size} tau samples with quartic stable-root count != 2 "
            f"(first at tau={np.atleast_1d(tau)[bad[0]]})")
    out = np.empty((lam.shape[0], 2), dtype=complex)
    for i in range(lam.shape[0]):
        out[i] = lam[i, neg[i]]
    return out
