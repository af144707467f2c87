"""Closed-form data evaluators with exact derivatives.

Scenario data (u0, f, w) is carried as sympy expressions in (x, t); every
mixed derivative the recursions need is generated symbolically once and then
evaluated as a vectorized numpy lambda.  This keeps high-order jets exact
instead of trusting 9th-order finite differences on samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

from .core import X, T, OperatorCoeffs, vortex_operator


class VectorFunc:
    """m-component sympy expression in (x, t) with cached derivative lambdas."""

    def __init__(self, exprs, name: str = ""):
        mat = sp.Matrix(exprs)
        if mat.shape[1] != 1:
            mat = mat.T
        self.exprs = mat
        self.m = mat.shape[0]
        self.name = name
        self._cache: dict = {}

    @classmethod
    def zero(cls, m: int) -> "VectorFunc":
        return cls(sp.zeros(m, 1), name="zero")

    def is_zero(self) -> bool:
        return all(e == 0 for e in self.exprs)

    def _lambda(self, r: int, j: int):
        key = (r, j)
        if key not in self._cache:
            expr = sp.diff(self.exprs, X, r, T, j)
            self._cache[key] = [sp.lambdify((X, T), expr[i], modules="numpy", cse=True)
                                for i in range(self.m)]
        return self._cache[key]

    def eval(self, x: np.ndarray, t: float = 0.0, r: int = 0, j: int = 0) -> np.ndarray:
        """Samples of d_x^r d_t^j of the field; shape (nx, m)."""
        x = np.asarray(x, dtype=float)
        fns = self._lambda(r, j)
        out = np.zeros((self.m, x.size))
        for i in range(self.m):
            out[i] = np.broadcast_to(np.asarray(fns[i](x, t), dtype=float), x.shape)
        return out.T

    def eval_t0(self, x: np.ndarray, r: int = 0, j: int = 0) -> np.ndarray:
        return self.eval(x, 0.0, r=r, j=j)

    def diff(self, r: int = 0, j: int = 0) -> "VectorFunc":
        return VectorFunc(sp.diff(self.exprs, X, r, T, j), name=f"d{r}x d{j}t {self.name}")


@dataclass
class DataSet:
    """The data triple (u0, f, w) of a scenario, plus derived conveniences."""

    m: int
    u0: VectorFunc
    f: VectorFunc
    w: Optional[VectorFunc] = None
    name: str = ""
    # numeric corrections C_j e^{-x} t^j / j! added to f (set by correct_data)
    correction: Optional[np.ndarray] = None   # (N+1, m)

    def g_jet(self, x: np.ndarray, r: int = 0, j: int = 0) -> np.ndarray:
        """d_x^r d_t^j g(., 0) where g = f + h_eps (if a correction is set)."""
        out = self.f.eval_t0(x, r=r, j=j)
        if self.correction is not None and j < self.correction.shape[0]:
            out = out + ((-1.0) ** r) * np.exp(-x)[:, None] * self.correction[j][None, :]
        return out

    def g_values(self, x: np.ndarray, t: float) -> np.ndarray:
        out = self.f.eval(x, t)
        if self.correction is not None:
            tp = np.array([t ** j / _fact(j) for j in range(self.correction.shape[0])])
            amp = tp @ self.correction          # (m,)
            out = out + np.exp(-x)[:, None] * amp[None, :]
        return out

    def with_correction(self, c: np.ndarray) -> "DataSet":
        return DataSet(self.m, self.u0, self.f, self.w, self.name, np.asarray(c, dtype=float))


def _fact(j: int) -> float:
    out = 1.0
    for k in range(2, j + 1):
        out *= k
    return out


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

def manufactured_forcing(u_star: VectorFunc, tag: str, alpha: float, eps: float,
                         op: Optional[OperatorCoeffs] = None) -> VectorFunc:
    """Forcing that makes u_star an exact solution of the tagged equation.

    tags: 'lp1'   u_t = alpha (u_xx - eps u_t)_x + g
          'lpp1'  u_t = alpha (u_xx - eps u_t)_x + A u + g
          'lpd1'  u_t = alpha u_xxx + A u + f
          'nr+'   u_t = alpha u_xxx - eps u_xxxx + A u + g   (alpha > 0 path)
    """
    u = u_star.exprs
    ut = sp.diff(u, T)
    lhs = ut - alpha * sp.diff(u, X, 3)
    if tag in ("lp1", "lpp1"):
        lhs = lhs + alpha * eps * sp.diff(ut, X)
    if tag == "nr+":
        lhs = lhs + eps * sp.diff(u, X, 4)
    if tag in ("lpp1", "lpd1", "nr+") and op is not None:
        au = (op.sym(0) * sp.diff(u, X, 2) + op.sym(1) * sp.diff(u, X)
              + op.sym(2) * u)
        lhs = lhs - au
    # no simplify: it can refactor decaying products into exp(+x^2) * exp(-2x^2)
    # forms that overflow pointwise evaluation far from the origin
    return VectorFunc(lhs, name=f"mms[{tag}]({u_star.name})")


# ---------------------------------------------------------------------------
# preset registry
# ---------------------------------------------------------------------------

def _gaussian_even(coeffs, widths):
    """Sum of even Gaussian bumps: zero slope at x = 0, decays both ways."""
    return sum(c * sp.exp(-w * X ** 2) for c, w in zip(coeffs, widths))


def preset_u0(name: str, m: int, rng: Optional[np.random.Generator] = None) -> VectorFunc:
    if name == "zero":
        return VectorFunc.zero(m)
    if name == "gaussian":
        comps = [_gaussian_even([1.0 / (i + 1)], [1.0 + 0.25 * i]) for i in range(m)]
        return VectorFunc(comps, name="gaussian")
    if name == "gaussian_mix":
        rng = rng or np.random.default_rng(0)
        comps = []
        for _ in range(m):
            c = rng.uniform(-1, 1, size=2)
            w = rng.uniform(0.6, 1.6, size=2)
            comps.append(_gaussian_even(np.round(c, 6), np.round(w, 6)))
        return VectorFunc(comps, name="gaussian_mix")
    raise KeyError(f"unknown u0 preset '{name}'")


def preset_w(name: str, rng: Optional[np.random.Generator] = None) -> VectorFunc:
    """Unit 3-vector fields for the built-in operator."""
    if name == "e3":
        return VectorFunc([0, 0, 1], name="e3")
    if name == "tilted":
        theta = sp.Rational(3, 10) * sp.exp(-X ** 2) * sp.cos(T)
        return VectorFunc([sp.sin(theta), 0, sp.cos(theta)], name="tilted")
    if name == "tilted_static":
        theta = sp.Rational(3, 10) * sp.exp(-X ** 2)
        return VectorFunc([sp.sin(theta), 0, sp.cos(theta)], name="tilted_static")
    raise KeyError(f"unknown w preset '{name}'")


def preset_operator(spec: dict, alpha: float) -> OperatorCoeffs:
    """Build coefficients from a scenario [operator] table."""
    kind = spec.get("kind", "vortex")
    delta = float(spec.get("delta", 1.0))
    if kind == "vortex":
        w = preset_w(spec.get("w", "tilted"))
        return vortex_operator(w.exprs, alpha, delta)
    if kind == "delta":
        return OperatorCoeffs.identity_parabolic(int(spec.get("m", 3)), delta)
    if kind == "zero":
        return OperatorCoeffs.zero(int(spec.get("m", 3)))
    if kind == "skew":
        m = int(spec.get("m", 3))
        seed = int(spec.get("seed", 0))
        return skew_operator(m, delta, seed)
    raise KeyError(f"unknown operator kind '{kind}'")


def skew_operator(m: int, delta: float, seed: int = 0,
                  scale: float = 0.5) -> OperatorCoeffs:
    """delta*I plus a random constant skew part: elliptic with margin 2*delta."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(-scale, scale, size=(m, m))
    s = s - s.T
    a0 = delta * sp.eye(m) + sp.Matrix(np.round(s, 6))
    zero = sp.zeros(m, m)
    return OperatorCoeffs(m, a0, zero, zero, name="skew")


def random_compatible_dataset(m: int, op: OperatorCoeffs, alpha: float,
                              order: int, seed: int = 0) -> DataSet:
    """Random smooth data projected onto the original compatibility conditions.

    u0 is a mix of even Gaussians (so u0'(0) = 0 exactly); the forcing is then
    corrected order by order with t^{n-1} x exp(-x^2) bumps so that
    (d_x Q_n)(0, 0) = 0 for n = 1..order.
    """
    from .compat import q_jets   # local import to avoid a cycle

    rng = np.random.default_rng(seed)
    # wide bumps keep the 9th-derivative scales (and hence the correction
    # constants) within a few orders of the field scale
    comps_u0 = []
    for _ in range(m):
        c = np.round(rng.uniform(-1, 1, size=2), 6)
        wdt = np.round(rng.uniform(0.3, 0.6, size=2), 6)
        comps_u0.append(_gaussian_even(c, wdt))
    u0 = VectorFunc(comps_u0, name="gaussian_mix")
    comps = []
    for _ in range(m):
        c = np.round(rng.uniform(-1, 1, size=2), 6)
        w = np.round(rng.uniform(0.3, 0.6, size=2), 6)
        a = np.round(rng.uniform(-0.5, 0.5, size=2), 6)
        comps.append(c[0] * sp.exp(-w[0] * X ** 2) * sp.cos(a[0] * T)
                     + c[1] * sp.exp(-w[1] * X ** 2) * sp.cos(T + a[1]))
    f_expr = sp.Matrix(comps)

    bump = X * sp.exp(-X ** 2)          # d/dx at 0 equals 1
    for n in range(1, order + 1):
        ds = DataSet(m, u0, VectorFunc(f_expr), None)
        qn = q_jets(ds, op, alpha, n)[n]
        trace = sp.diff(qn, X).subs({X: 0, T: 0})
        corr = -sp.Matrix(trace) * bump * T ** (n - 1) / sp.factorial(n - 1)
        f_expr = f_expr + corr
    return DataSet(m, u0, VectorFunc(f_expr, name="projected"), None,
                   name=f"random_compatible(seed={seed})")
