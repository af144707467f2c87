"""Grids, sampled vector fields, discrete Sobolev norms, and operator coefficients.

Everything downstream works on a truncated half-line [0, L].  Data is expected
to decay below ``tol_decay`` before x = L; a decay audit warns (never fails)
when that assumption looks violated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

DECAY_TOL = 1e-10

X, T = sp.symbols("x t", real=True)


class DecayWarning(UserWarning):
    """Field does not decay below tolerance at the truncation boundary."""


def fornberg_weights(x0: float, nodes: np.ndarray, max_order: int) -> np.ndarray:
    """Finite-difference weights on arbitrary nodes (Fornberg's recursion).

    Returns an array of shape (max_order + 1, len(nodes)); row k holds the
    weights of the k-th derivative at x0.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    c = np.zeros((max_order + 1, n))
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, max_order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def fd_derivative(values: np.ndarray, h: float, order: int, acc: int = 4) -> np.ndarray:
    """Differentiate samples on a uniform grid along axis 0.

    Centered stencils in the interior, one-sided stencils of the same width
    near the ends.  Stencil width is order + acc rounded up to odd, so the
    interior accuracy is at least ``acc``.
    """
    if order == 0:
        return np.array(values, copy=True)
    n = values.shape[0]
    width = order + acc
    if width % 2 == 0:
        width += 1
    if width > n:
        raise ValueError(f"grid too small for derivative order {order} (need {width} nodes)")
    half = width // 2
    idx = np.arange(width)
    out = np.empty_like(values, dtype=float)

    w_center = fornberg_weights(0.0, (idx - half) * h, order)[order]
    sw = np.lib.stride_tricks.sliding_window_view(values, width, axis=0)
    # sliding_window_view puts the window axis last
    out[half:n - half] = np.tensordot(sw, w_center, axes=([-1], [0]))

    for i in range(half):
        w = fornberg_weights(i * h, idx * h, order)[order]
        out[i] = np.tensordot(values[:width], w, axes=([0], [0]))
    for i in range(n - half, n):
        w = fornberg_weights(i * h, (n - width + idx) * h, order)[order]
        out[i] = np.tensordot(values[n - width:], w, axes=([0], [0]))
    return out


def onesided_weights(h: float, order: int, width: int = 7) -> np.ndarray:
    """Weights of the order-th derivative at x=0 using the first `width` nodes."""
    return fornberg_weights(0.0, np.arange(width) * h, order)[order]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, L] with x_0 = 0."""

    L: float
    n_points: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("grid length must be positive")
        if self.n_points < 8:
            raise ValueError("need at least 8 grid points")

    @property
    def h(self) -> float:
        return self.L / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n_points)

    def trapz_weights(self) -> np.ndarray:
        w = np.full(self.n_points, self.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def make_grid(L: float, n: int) -> Grid:
    return Grid(L, n)


@dataclass
class HalfLineField:
    """m-component samples on a half-line grid; values shape (n_points, m)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] == 1 and self.grid.n_points != 1:
            self.values = self.values.T
        if self.values.shape[0] != self.grid.n_points:
            raise ValueError("value array length must match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def decay_audit(self, tol: float = DECAY_TOL) -> float:
        """Magnitude at x = L; warns when truncation looks unsafe."""
        tail = float(np.max(np.abs(self.values[-1])))
        scale = float(np.max(np.abs(self.values)))
        if scale > 0 and tail > tol * max(1.0, scale):
            warnings.warn(
                f"field magnitude {tail:.3e} at x=L exceeds decay tolerance; "
                "truncation suspect", DecayWarning, stacklevel=2)
        return tail


def l2_norm(values: np.ndarray, grid: Grid) -> float:
    """Discrete L2(0, L) norm of (n, m) samples via trapezoid quadrature."""
    w = grid.trapz_weights()
    v = np.atleast_2d(values)
    if v.shape[0] != grid.n_points:
        v = v.T
    return float(np.sqrt(np.einsum("i,ij->", w, np.abs(v) ** 2)))


def sobolev_norm(f: HalfLineField, order: int) -> float:
    """Discrete H^order(0, L) norm: sqrt(sum_{j<=order} ||d^j f||^2)."""
    f.decay_audit()
    total = 0.0
    for j in range(order + 1):
        dj = fd_derivative(f.values, f.grid.h, j)
        total += l2_norm(dj, f.grid) ** 2
    return float(np.sqrt(total))


def sobolev_norm_values(values: np.ndarray, grid: Grid, order: int) -> float:
    total = 0.0
    for j in range(order + 1):
        total += l2_norm(fd_derivative(values, grid.h, j), grid) ** 2
    return float(np.sqrt(total))


@dataclass
class Trajectory:
    """Time-indexed snapshots on a half-line grid plus boundary traces.

    traces maps 'u', 'ux', 'uxx', 'uxxx', 'ut' to arrays of shape
    (n_times, m) holding the values at x = 0.
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray          # (n_times, n_points, m)
    traces: dict = field(default_factory=dict)
    derivatives: dict = field(default_factory=dict)   # optional j -> (n_times, n_points, m)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != len(self.times):
            raise ValueError("snapshot count must match time grid")

    @property
    def h_t(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def m(self) -> int:
        return self.values.shape[2]

    def snapshot(self, k: int) -> HalfLineField:
        return HalfLineField(self.grid, self.values[k])

    def x_derivative(self, j: int) -> np.ndarray:
        """(n_times, n_points, m) array of the j-th spatial derivative.

        Uses a stored exact representation when the solver attached one,
        otherwise finite differences.
        """
        if j in self.derivatives:
            return self.derivatives[j]
        if j == 0:
            return self.values
        out = fd_derivative(np.moveaxis(self.values, 1, 0), self.grid.h, j)
        return np.moveaxis(out, 0, 1)

    def t_derivative(self) -> np.ndarray:
        if "t1" in self.derivatives:
            return self.derivatives["t1"]
        return fd_derivative(self.values, self.h_t, 1)


@dataclass
class Params:
    """Problem parameters; the sign of alpha selects the boundary setup."""

    alpha: float
    eps: float = 0.0
    delta: float = 1.0
    T: float = 1.0
    m: int = 1
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.alpha == 0:
            raise ValueError("alpha must be nonzero")
        if self.delta <= 0:
            raise ValueError("ellipticity constant must be positive")
        if self.e is not None:
            self.e = np.asarray(self.e, dtype=float)


def _lambdify(expr_matrix: sp.Matrix, m_rows: int, m_cols: int) -> Callable:
    # entry-wise lambdas: mixed constant/array entries break matrix lambdify
    fns = [[sp.lambdify((X, T), expr_matrix[i, j], modules="numpy", cse=True)
            for j in range(m_cols)] for i in range(m_rows)]

    def call(x: np.ndarray, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        res = np.empty((m_rows, m_cols, x.size))
        for i in range(m_rows):
            for j in range(m_cols):
                res[i, j] = np.broadcast_to(np.asarray(fns[i][j](x, t), dtype=float),
                                            x.shape)
        return np.moveaxis(res, 2, 0)   # (nx, m, m)

    return call


class OperatorCoeffs:
    """Matrix coefficients of A(w, dx) = A0 dx^2 + A1 dx + A2 with t-jets.

    Built from sympy matrix expressions in (x, t); mixed jets
    d_t^j d_x^r A_i at t = 0 are generated symbolically and cached, which is
    what the compatibility recursions consume (B_j data).
    """

    def __init__(self, m: int, a0: sp.Matrix, a1: sp.Matrix, a2: sp.Matrix,
                 name: str = "explicit", w_expr: Optional[sp.Matrix] = None):
        self.m = m
        self.name = name
        self.w_expr = w_expr
        self._sym = {0: sp.Matrix(a0), 1: sp.Matrix(a1), 2: sp.Matrix(a2)}
        for k, mat in self._sym.items():
            if mat.shape != (m, m):
                raise ValueError(f"A{k} must be {m}x{m}")
        self._jet_cache: dict = {}
        self._eval_cache: dict = {}

    @classmethod
    def identity_parabolic(cls, m: int, delta: float) -> "OperatorCoeffs":
        eye = sp.eye(m) * delta
        zero = sp.zeros(m, m)
        return cls(m, eye, zero, zero, name="delta_laplacian")

    @classmethod
    def zero(cls, m: int) -> "OperatorCoeffs":
        z = sp.zeros(m, m)
        return cls(m, z, z, z, name="zero")

    def sym(self, which: int) -> sp.Matrix:
        return self._sym[which]

    def coeff(self, which: int, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        """(nx, m, m) samples of A_which at time t."""
        key = ("full", which)
        if key not in self._eval_cache:
            self._eval_cache[key] = _lambdify(self._sym[which], self.m, self.m)
        return self._eval_cache[key](x, t)

    def jet(self, which: int, j_t: int, r_x: int, x: np.ndarray) -> np.ndarray:
        """(nx, m, m) samples of d_t^{j_t} d_x^{r_x} A_which at t = 0."""
        key = (which, j_t, r_x)
        if key not in self._jet_cache:
            expr = sp.diff(self._sym[which], T, j_t, X, r_x).subs(T, 0)
            self._jet_cache[key] = _lambdify(expr, self.m, self.m)
        return self._jet_cache[key](x, 0.0)

    def apply(self, u: np.ndarray, ux: np.ndarray, uxx: np.ndarray,
              x: np.ndarray, t: float) -> np.ndarray:
        """A(w, dx) applied to sampled (u, ux, uxx); shapes (nx, m)."""
        out = np.einsum("nij,nj->ni", self.coeff(0, x, t), uxx)
        out += np.einsum("nij,nj->ni", self.coeff(1, x, t), ux)
        out += np.einsum("nij,nj->ni", self.coeff(2, x, t), u)
        return out

    def a0_sup_norm(self, x: np.ndarray, times: Sequence[float]) -> float:
        """max over samples of the spectral norm of A0 (the L-infinity bound)."""
        worst = 0.0
        for t in times:
            a0 = self.coeff(0, x, float(t))
            worst = max(worst, float(np.max(np.linalg.norm(a0, ord=2, axis=(1, 2)))))
        return worst


def _cross_matrix(v: sp.Matrix) -> sp.Matrix:
    return sp.Matrix([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def vortex_operator(w: sp.Matrix, alpha: float, delta: float) -> OperatorCoeffs:
    """Coefficients of X -> delta*X + w x X + 3*alpha*X x (w x w_s).

    w is a 3-component sympy column vector in (x, t); the second-derivative
    coefficient picks up delta*I plus two skew parts, so A0 + A0* = 2*delta*I
    at every sample.
    """
    w = sp.Matrix(w)
    if w.shape[0] != 3:
        raise ValueError("the built-in operator needs a 3-component field")
    ws = sp.diff(w, X)
    cross = w.cross(ws)
    a0 = delta * sp.eye(3) + _cross_matrix(w) - 3 * alpha * _cross_matrix(cross)
    zero = sp.zeros(3, 3)
    return OperatorCoeffs(3, a0, zero, zero, name="vortex", w_expr=w)


def check_strong_ellipticity(coeffs: OperatorCoeffs, delta: float,
                             x: np.ndarray, times: Sequence[float] = (0.0,)):
    """min over samples of lambda_min(A0 + A0^T), compared against delta."""
    margin = np.inf
    for t in times:
        a0 = coeffs.coeff(0, x, float(t))
        sym_part = a0 + np.swapaxes(a0, 1, 2)
        eigs = np.linalg.eigvalsh(sym_part)
        margin = min(margin, float(eigs.min()))
    return bool(margin >= delta), margin
