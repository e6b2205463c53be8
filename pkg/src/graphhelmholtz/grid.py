"""Tensor grids on the flattened half-space, spectral differentiation and
mixed-norm quadrature.

The horizontal variable ``x`` lives on a torus of period ``L`` sampled at
``N`` uniform nodes per axis, the vertical variable ``t`` on a (possibly
graded) node list ``0 = t_0 < ... < t_{m-1} = T``.  Scalar lattices are stored
as arrays of shape ``(nt, N**d)`` with C-order flattening of the x-nodes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "HalfGrid",
    "MixedNormSpec",
    "HalfSpaceField",
    "make_grid",
    "fourier_diff_matrix",
    "spectral_gradient",
    "gradient_matrices",
    "null_modes",
    "trig_basis",
    "time_derivative_matrix",
    "mixed_norm",
    "gradient_mixed_norm",
    "l2_inner",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True, eq=False)
class HalfGrid:
    """Discretization of ``T^d x [0, T]``.

    Parameters
    ----------
    d : int
        Horizontal dimension, 1 or 2.
    N : int
        Nodes per horizontal axis (even, at least 8).
    L : float
        Horizontal period.
    t : ndarray
        Strictly increasing vertical nodes starting at 0.
    """

    d: int
    N: int
    L: float
    t: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive, got {self.L}")
        t = np.array(self.t, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise ValueError("need at least 3 t-nodes")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
            raise ValueError("t-nodes must start at 0 and increase strictly")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        w = trapezoid_weights(t)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def h(self):
        return self.L / self.N

    @property
    def n(self):
        """Number of horizontal nodes ``N**d``."""
        return self.N**self.d

    @property
    def nt(self):
        return self.t.size

    @property
    def T(self):
        return float(self.t[-1])

    @property
    def cell(self):
        """Horizontal quadrature weight ``h**d``."""
        return self.h**self.d

    @cached_property
    def axis(self):
        """Nodes of one horizontal axis."""
        return np.arange(self.N) * self.h

    @cached_property
    def x(self):
        """Horizontal nodes, shape ``(N**d, d)``."""
        if self.d == 1:
            return self.axis[:, None].copy()
        X1, X2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    def spec(self):
        """JSON-friendly description."""
        return {
            "d": self.d,
            "N": self.N,
            "L": self.L,
            "T": self.T,
            "count": self.nt,
            "ratio": grading_ratio(self.t),
        }

    def same_as(self, other):
        return (
            isinstance(other, HalfGrid)
            and self.d == other.d
            and self.N == other.N
            and self.L == other.L
            and np.array_equal(self.t, other.t)
        )


@dataclass(frozen=True)
class MixedNormSpec:
    """Exponents of the norm ``L^q_t(L^r_x)``; ``np.inf`` is allowed."""

    q: float = 2.0
    r: float = 2.0

    def __post_init__(self):
        for name in ("q", "r"):
            v = float(getattr(self, name))
            if not v > 1:
                raise ValueError(f"{name} must exceed 1, got {v}")
            object.__setattr__(self, name, v)

    @staticmethod
    def _conj(p):
        return 1.0 if np.isinf(p) else (np.inf if p == 1 else p / (p - 1))

    @property
    def q_conj(self):
        return self._conj(self.q)

    @property
    def r_conj(self):
        return self._conj(self.r)


class HalfSpaceField:
    """Scalar or vector samples on a :class:`HalfGrid`.

    ``values`` has shape ``(ncomp, nt, N**d)``; a 2-D array is taken as a
    single component.  The stored array is read-only.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        v = np.array(values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[1:] != (grid.nt, grid.n):
            raise ValueError(
                f"field shape {np.shape(values)} does not match grid "
                f"(nt={grid.nt}, n={grid.n})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field entries must be finite")
        v.setflags(write=False)
        self.grid = grid
        self.values = v

    @property
    def ncomp(self):
        return self.values.shape[0]

    def component(self, i):
        return HalfSpaceField(self.grid, self.values[i])

    def __repr__(self):
        return f"HalfSpaceField(ncomp={self.ncomp}, nt={self.grid.nt}, n={self.grid.n})"


def trapezoid_weights(t):
    t = np.asarray(t, dtype=float)
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def grading_ratio(t):
    dt = np.diff(t)
    r = dt[1:] / dt[:-1]
    return float(np.round(np.exp(np.mean(np.log(r))), 12))


def make_grid(d, N, L, T, count, ratio=1.0):
    """Build a half-space grid with geometric vertical spacing.

    Parameters
    ----------
    d, N, L : see :class:`HalfGrid`.
    T : float
        Slab depth.
    count : int
        Number of t-nodes (at least 3, the minimum needed for the
        second-order t-derivative).
    ratio : float
        Ratio of consecutive t-steps (1 gives a uniform mesh); steps grow away
        from ``t = 0``.

    Returns
    -------
    HalfGrid
    """
    if not (np.isfinite(T) and T > 0):
        raise ValueError(f"T must be positive, got {T}")
    if int(count) != count or count < 3:
        raise ValueError(f"count must be an integer >= 3, got {count}")
    if not (np.isfinite(ratio) and ratio >= 1):
        raise ValueError(f"grading ratio must be >= 1, got {ratio}")
    count = int(count)
    m = count - 1
    if ratio == 1:
        t = np.linspace(0.0, T, count)
    else:
        h1 = T * (ratio - 1) / (ratio**m - 1)
        t = np.concatenate([[0.0], np.cumsum(h1 * ratio ** np.arange(m))])
    t[-1] = T
    return HalfGrid(int(d), int(N), float(L), t)


def fourier_diff_matrix(N, L):
    """Fourier differentiation matrix on ``N`` uniform nodes of period ``L``.

    The Nyquist mode is dropped, which makes the matrix real and exactly
    skew-symmetric; it differentiates every trigonometric polynomial of degree
    below ``N/2`` exactly.
    """
    if int(N) != N or N < 2 or N % 2:
        raise ValueError(f"N must be a positive even integer, got {N}")
    N = int(N)
    m = np.arange(1, N // 2)
    # circulant entries c_m = (-1)^m cot(m h / 2) / 2 for period 2 pi,
    # with c_{N-m} = -c_m and c_{N/2} = 0
    c = np.zeros(N)
    c[m] = 0.5 * (-1.0) ** m / np.tan(np.pi * m / N)
    c[N - m] = -c[m]
    c *= 2 * np.pi / L
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    U = np.triu(c[idx], 1)
    return U - U.T


def spectral_gradient(grid):
    """Fourier differentiation matrix on one horizontal axis of ``grid``.

    Returns
    -------
    ndarray, shape (N, N)
    """
    return fourier_diff_matrix(grid.N, grid.L)


def gradient_matrices(grid):
    """Spectral gradient on the flattened horizontal lattice.

    Returns
    -------
    ndarray, shape (d, N**d, N**d)
    """
    D = spectral_gradient(grid)
    if grid.d == 1:
        return D[None]
    eye = np.eye(grid.N)
    return np.stack([np.kron(D, eye), np.kron(eye, D)])


def null_modes(grid):
    """Orthonormal basis of the common kernel of the gradient matrices.

    The kernel consists of the constants and the Nyquist oscillations on
    each axis (``2**d`` modes).

    Returns
    -------
    ndarray, shape (N**d, 2**d)
    """
    N = grid.N
    one = np.ones(N) / np.sqrt(N)
    alt = (-1.0) ** np.arange(N) / np.sqrt(N)
    if grid.d == 1:
        return np.column_stack([one, alt])
    cols = [np.kron(u, v) for u in (one, alt) for v in (one, alt)]
    return np.column_stack(cols)


def trig_basis(grid, kmax):
    """Orthonormal real trigonometric basis with wavenumbers ``|k_j| <= kmax``.

    Columns are ordered deterministically; the constant is included.  For
    ``d = 2`` the basis is the orthonormalized span of products of axis modes.
    """
    N = grid.N
    if not 0 <= kmax < N // 2:
        raise ValueError(f"kmax must lie in [0, {N // 2 - 1}]")
    s = 2 * np.pi * grid.axis / grid.L
    cols = [np.ones(N)]
    for k in range(1, kmax + 1):
        cols += [np.cos(k * s), np.sin(k * s)]
    B1 = np.column_stack(cols) / np.sqrt(N / 2)
    B1[:, 0] /= np.sqrt(2)
    if grid.d == 1:
        return B1
    return np.kron(B1, B1)


def lagrange_derivative_weights(t0, t1, t2, at):
    """Weights of the derivative of the quadratic interpolant through three
    nodes, evaluated at ``at``."""
    w0 = ((at - t1) + (at - t2)) / ((t0 - t1) * (t0 - t2))
    w1 = ((at - t0) + (at - t2)) / ((t1 - t0) * (t1 - t2))
    w2 = ((at - t0) + (at - t1)) / ((t2 - t0) * (t2 - t1))
    return w0, w1, w2


def time_derivative_matrix(t):
    """Second-order finite-difference t-derivative on arbitrary nodes.

    Three-point Lagrange differentiation: centered stencil at interior nodes,
    one-sided stencils at the two endpoints.

    Returns
    -------
    scipy.sparse.csr_matrix, shape (nt, nt)
    """
    t = np.asarray(t, dtype=float)
    m = t.size
    if m < 3:
        raise ValueError("need at least 3 t-nodes for the t-derivative")
    rows, cols, vals = [], [], []
    for k in range(m):
        j = min(max(k - 1, 0), m - 3)
        w = lagrange_derivative_weights(t[j], t[j + 1], t[j + 2], t[k])
        rows += [k] * 3
        cols += [j, j + 1, j + 2]
        vals += list(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def _check_field(field, grid=None):
    if not isinstance(field, HalfSpaceField):
        raise TypeError("expected a HalfSpaceField")
    if grid is not None and not field.grid.same_as(grid):
        raise ValueError("fields live on different grids")


def _pnorm_x(mag, r, cell):
    # mag: (nt, n) nonnegative
    if np.isinf(r):
        return mag.max(axis=1)
    s = mag.max(axis=1)
    s_safe = np.where(s > 0, s, 1.0)
    return s * (cell * np.sum((mag / s_safe[:, None]) ** r, axis=1)) ** (1 / r)


def _pnorm_t(vals, q, weights):
    if np.isinf(q):
        return float(vals.max())
    s = vals.max()
    if s == 0:
        return 0.0
    return float(s * np.sum(weights * (vals / s) ** q) ** (1 / q))


def mixed_norm(field, spec=None):
    """``L^q_t(L^r_x)`` norm of a field by quadrature.

    Vector fields use the pointwise Euclidean magnitude.  The x-quadrature
    has uniform weight ``h**d``; the t-quadrature is the trapezoid rule on the
    grid nodes.  Infinite exponents take maxima.
    """
    _check_field(field)
    spec = MixedNormSpec() if spec is None else spec
    g = field.grid
    mag = np.hypot.reduce(field.values, axis=0)  # no under/overflow
    return _pnorm_t(_pnorm_x(mag, spec.r, g.cell), spec.q, g.weights)


def spacetime_gradient(w):
    """``(D w, d_t w)`` with spectral x-derivatives and three-point
    finite differences in t."""
    _check_field(w)
    if w.ncomp != 1:
        raise ValueError("expected a scalar field")
    g = w.grid
    Ds = gradient_matrices(g)
    v = w.values[0]
    comps = [v @ Dj.T for Dj in Ds]
    comps.append(time_derivative_matrix(g.t) @ v)
    return HalfSpaceField(g, np.stack(comps))


def gradient_mixed_norm(w, spec=None):
    """Mixed norm of the space-time gradient of a scalar field."""
    return mixed_norm(spacetime_gradient(w), spec)


def l2_inner(a, b):
    """``L^2`` inner product of two fields on the same grid."""
    _check_field(a)
    _check_field(b, a.grid)
    if a.values.shape != b.values.shape:
        raise ValueError("component counts differ")
    g = a.grid
    pt = np.sum(a.values * b.values, axis=(0, 2))
    return float(g.cell * np.dot(g.weights, pt))


# ---------------------------------------------------------------- CSV I/O


def _header(d):
    return ["t"] + [f"x{j + 1}" for j in range(d)] + ["component", "value"]


def write_field_csv(path_or_buf, field):
    """Write a field as ``t,x1[,x2],component,value`` rows.

    Floats are written with 17 significant digits so reading back is
    bit-exact.
    """
    g = field.grid
    f17 = "%.17g"
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(_header(g.d))
    xs = [[f17 % v for v in row] for row in g.x]
    ts = [f17 % v for v in g.t]
    for c in range(field.ncomp):
        vals = field.values[c]
        for k in range(g.nt):
            for i in range(g.n):
                wr.writerow([ts[k], *xs[i], c, f17 % vals[k, i]])
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)


def read_field_csv(path_or_buf, grid, ncomp=None):
    """Read a field written by :func:`write_field_csv` onto ``grid``.

    Every grid sample must be present exactly once; sample coordinates must
    coincide with the grid nodes to within ``1e-9`` relative.
    """
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != _header(grid.d):
        raise ValueError(f"expected header {','.join(_header(grid.d))}")
    body = rows[1:]
    try:
        arr = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"malformed field CSV: {exc}") from None
    if arr.ndim != 2 or arr.shape[1] != grid.d + 3:
        raise ValueError("malformed field CSV rows")
    comp = arr[:, grid.d + 1]
    if np.any(comp != np.round(comp)) or np.any(comp < 0):
        raise ValueError("component indices must be nonnegative integers")
    comp = comp.astype(int)
    nc = int(comp.max()) + 1 if ncomp is None else int(ncomp)
    tol = 1e-9
    k = np.searchsorted(grid.t, arr[:, 0] - tol * max(grid.T, 1))
    k = np.clip(k, 0, grid.nt - 1)
    if np.any(np.abs(grid.t[k] - arr[:, 0]) > tol * max(grid.T, 1)):
        raise ValueError("t coordinates do not match the grid")
    idx = np.zeros(len(arr), dtype=int)
    for j in range(grid.d):
        xj = arr[:, 1 + j] / grid.h
        ij = np.round(xj).astype(int)
        if np.any(np.abs(xj - ij) > tol * grid.N) or np.any((ij < 0) | (ij >= grid.N)):
            raise ValueError("x coordinates do not match the grid")
        idx = idx * grid.N + ij
    if np.any(comp >= nc):
        raise ValueError("component index out of range")
    out = np.full((nc, grid.nt, grid.n), np.nan)
    seen = np.zeros(out.shape, dtype=int)
    np.add.at(seen, (comp, k, idx), 1)
    if np.any(seen != 1):
        raise ValueError("field CSV must list every grid sample exactly once")
    out[comp, k, idx] = arr[:, -1]
    return HalfSpaceField(grid, out)
