"""Graph domains ``{x_{d+1} > eta(x)}``, the flattening shear and the
coefficients it induces.

The shear ``(x, s) -> (x, s - eta(x))`` maps the domain onto the half-space
with unit Jacobian.  Pulling the Laplacian back through it gives the
divergence-form operator with coefficient matrix
``[[I, a], [a^T, b]]``, ``a = -grad eta``, ``b = 1 + |a|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import HalfGrid, HalfSpaceField, gradient_matrices

__all__ = [
    "GraphDomainSpec",
    "Coefficients",
    "OmegaVectorField",
    "ellipticity_bounds",
    "build_coefficients",
    "omega_points",
    "push_forward",
    "pull_forward",
    "pull_back_gradient",
    "physical_gradient",
]

KINDS = ("flat", "slope", "sine", "samples")


def _as_float_vector(v, d, name):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.size == 1:
        arr = np.full(d, float(arr[0]))
    if arr.shape != (d,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite scalar or length-{d} vector")
    return arr


@dataclass(frozen=True, eq=False)
class GraphDomainSpec:
    """Boundary function of a periodic Lipschitz graph domain.

    Parameters
    ----------
    kind : {'flat', 'slope', 'sine', 'samples'}
        ``flat``: ``eta = 0``.  ``slope``: ``eta = c . x``; only its constant
        gradient enters the coefficients.  ``sine``: ``eta = alpha *
        sum_j sin(2 pi m x_j / L)``.  ``samples``: periodic samples on a
        uniform lattice, evaluated by trigonometric interpolation.
    params : dict
        ``slope``: ``c``.  ``sine``: ``alpha`` (or derived from ``lip``) and
        optional integer ``m`` (default 1).  ``samples``: ``values``, a flat
        list of ``M**d`` samples in C order.
    L : float
        Period in every horizontal direction.
    lip : float, optional
        Declared bound on ``|grad eta|``.  Defaults to the exact value for
        catalog kinds and to the sampled maximum for ``samples``.
    d : int
        Horizontal dimension.
    """

    kind: str
    params: dict = field(default_factory=dict)
    L: float = 2 * np.pi
    lip: float | None = None
    d: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"eta.kind must be one of {KINDS}, got {self.kind!r}")
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive, got {self.L}")
        p = dict(self.params)
        allowed = {
            "flat": set(),
            "slope": {"c"},
            "sine": {"alpha", "m"},
            "samples": {"values"},
        }[self.kind]
        extra = set(p) - allowed
        if extra:
            raise ValueError(f"unknown eta.params for {self.kind}: {sorted(extra)}")
        lip = None if self.lip is None else float(self.lip)
        if lip is not None and not (np.isfinite(lip) and lip >= 0):
            raise ValueError(f"lip must be nonnegative, got {self.lip}")

        if self.kind == "slope":
            p["c"] = _as_float_vector(p.get("c", 0.0), self.d, "slope c")
            exact = float(np.linalg.norm(p["c"]))
        elif self.kind == "sine":
            m = p.get("m", 1)
            if int(m) != m or m < 1:
                raise ValueError("sine mode m must be a positive integer")
            p["m"] = int(m)
            unit = 2 * np.pi * p["m"] / self.L * np.sqrt(self.d)
            if "alpha" not in p:
                if lip is None:
                    raise ValueError("sine needs eta.params.alpha or lip")
                p["alpha"] = lip / unit
            p["alpha"] = float(p["alpha"])
            exact = abs(p["alpha"]) * unit
        elif self.kind == "samples":
            vals = np.asarray(p.get("values", []), dtype=float).ravel()
            M = int(round(vals.size ** (1 / self.d)))
            if M**self.d != vals.size or M < 4 or M % 2:
                raise ValueError("eta samples must form an even lattice of M**d values, M >= 4")
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite eta samples")
            vals.setflags(write=False)
            p["values"] = vals
            object.__setattr__(self, "params", p)
            exact = None
        else:
            exact = 0.0
        object.__setattr__(self, "params", p)

        # validate the declared bound on a check lattice
        M = 256 if self.d == 1 else 64
        if self.kind == "samples":
            M = int(round(p["values"].size ** (1 / self.d)))
        pts = _lattice(M, self.L, self.d)
        gmax = float(np.max(np.linalg.norm(self.grad_eta(pts), axis=1)))
        if not np.all(np.isfinite(self.eta(pts))):
            raise ValueError("non-finite eta values")
        if lip is None:
            lip = exact if exact is not None else gmax
        if gmax > lip * (1 + 1e-9) + 1e-12:
            raise ValueError(f"max |grad eta| = {gmax:.6g} exceeds declared lip = {lip:.6g}")
        object.__setattr__(self, "lip", lip)
        if self.kind in ("sine", "samples"):
            shift = pts.copy()
            shift[:, 0] += self.L
            if np.max(np.abs(self.eta(shift) - self.eta(pts))) > 1e-12 * max(1.0, gmax * self.L):
                raise ValueError("eta is not L-periodic")

    # -------------------------------------------------------- evaluation
    def _x(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.d == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ValueError(f"points must have shape (n, {self.d})")
        return x

    def eta(self, x):
        """Boundary height at points ``x`` of shape ``(n, d)``."""
        x = self._x(x)
        if self.kind == "flat":
            return np.zeros(len(x))
        if self.kind == "slope":
            return x @ self.params["c"]
        if self.kind == "sine":
            k = 2 * np.pi * self.params["m"] / self.L
            return self.params["alpha"] * np.sum(np.sin(k * x), axis=1)
        return self._interp(x, deriv=None)

    def grad_eta(self, x):
        """Gradient of the boundary height, shape ``(n, d)``."""
        x = self._x(x)
        if self.kind == "flat":
            return np.zeros_like(x)
        if self.kind == "slope":
            return np.broadcast_to(self.params["c"], x.shape).copy()
        if self.kind == "sine":
            k = 2 * np.pi * self.params["m"] / self.L
            return self.params["alpha"] * k * np.cos(k * x)
        return np.column_stack([self._interp(x, deriv=j) for j in range(self.d)])

    def _interp(self, x, deriv):
        vals = self.params["values"]
        M = int(round(vals.size ** (1 / self.d)))
        c = np.fft.fftn(vals.reshape((M,) * self.d)) / vals.size
        k = np.fft.fftfreq(M, d=1.0 / M)
        k[M // 2] = M // 2
        scale = 2 * np.pi / self.L
        theta = scale * x
        mats = []
        for ax in range(self.d):
            # Nyquist term as a cosine keeps the interpolant real
            ph = theta[:, ax, None] * k[None, :]
            E = np.exp(1j * ph)
            E[:, M // 2] = np.cos(ph[:, M // 2])
            if deriv == ax:
                E = E * (1j * k * scale)
                E[:, M // 2] = -scale * (M // 2) * np.sin(ph[:, M // 2])
            mats.append(E)
        if self.d == 1:
            out = mats[0] @ c
        else:
            out = np.einsum("pk,pl,kl->p", mats[0], mats[1], c)
        return np.real(out)

    def describe(self):
        p = {}
        for k, v in self.params.items():
            p[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return {"kind": self.kind, "params": p, "L": self.L, "lip": self.lip, "d": self.d}


def _lattice(M, L, d):
    ax = np.arange(M) * (L / M)
    if d == 1:
        return ax[:, None]
    X1, X2 = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([X1.ravel(), X2.ravel()])


def ellipticity_bounds(lip):
    """Extreme eigenvalues of ``[[I, a], [a^T, 1 + |a|^2]]`` over ``|a| <= lip``.

    The matrix has determinant 1 and eigenvalues ``1`` and the roots of
    ``l^2 - (2 + s) l + 1`` with ``s = |a|^2``; the smaller root decreases
    in ``s``.
    """
    s = float(lip) ** 2
    lo = 2.0 / (2.0 + s + np.sqrt(s * s + 4.0 * s))
    return lo, 1.0 / lo


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Nodal coefficient fields on the horizontal lattice.

    Attributes
    ----------
    a : ndarray, shape (d, N**d)
        ``-grad eta`` at the nodes.
    b : ndarray, shape (N**d,)
        ``1 + |a|^2``.
    nu1, nu2 : float
        Ellipticity bounds of the full coefficient matrix for ``|a| <= lip``.
    """

    grid: HalfGrid
    a: np.ndarray
    b: np.ndarray
    lip: float
    nu1: float
    nu2: float

    @property
    def d(self):
        return self.grid.d

    def matrix(self, i):
        """The ``(d+1) x (d+1)`` coefficient matrix at node ``i``."""
        d = self.d
        A = np.eye(d + 1)
        A[:d, d] = A[d, :d] = self.a[:, i]
        A[d, d] = self.b[i]
        return A


def build_coefficients(domain, grid):
    """Sample ``a = -grad eta`` and ``b = 1 + |a|^2`` at the grid nodes."""
    if domain.d != grid.d:
        raise ValueError("domain and grid dimensions differ")
    if abs(domain.L - grid.L) > 1e-12 * grid.L:
        raise ValueError(f"domain period {domain.L} does not match grid period {grid.L}")
    if not np.all(np.isfinite(domain.eta(grid.x))):
        raise ValueError("non-finite eta values at grid nodes")
    a = -domain.grad_eta(grid.x).T.copy()
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite grad eta values at grid nodes")
    gmax = float(np.max(np.linalg.norm(a, axis=0)))
    if gmax > domain.lip * (1 + 1e-9) + 1e-12:
        raise ValueError(f"max |grad eta| = {gmax:.6g} exceeds declared lip = {domain.lip:.6g}")
    b = 1.0 + np.sum(a * a, axis=0)
    nu1, nu2 = ellipticity_bounds(domain.lip)
    a.setflags(write=False)
    b.setflags(write=False)
    return Coefficients(grid, a, b, float(domain.lip), nu1, nu2)


def omega_points(domain, grid):
    """Physical points ``(y, t + eta(y))`` of every grid node.

    Returns
    -------
    ndarray, shape (nt, N**d, d+1)
    """
    x = grid.x
    e = domain.eta(x)
    pts = np.empty((grid.nt, grid.n, grid.d + 1))
    pts[:, :, : grid.d] = x[None]
    pts[:, :, grid.d] = grid.t[:, None] + e[None, :]
    return pts


class OmegaVectorField:
    """A ``(d+1)``-vector field sampled at the image of the grid in the
    physical domain.

    ``values`` has shape ``(d+1, nt, N**d)``; sample ``[:, k, i]`` sits at
    ``omega_points(domain, grid)[k, i]``.
    """

    __slots__ = ("domain", "grid", "values", "_points")

    def __init__(self, domain, grid, values, points=None):
        v = np.array(values, dtype=float)
        if v.shape != (grid.d + 1, grid.nt, grid.n):
            raise ValueError(f"values must have shape {(grid.d + 1, grid.nt, grid.n)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field entries must be finite")
        canonical = omega_points(domain, grid)
        if points is not None:
            points = np.asarray(points, dtype=float)
            if points.shape != canonical.shape or not np.allclose(
                points, canonical, rtol=1e-12, atol=1e-12 * max(grid.L, grid.T)
            ):
                raise ValueError("point set is not the image of the grid")
        v.setflags(write=False)
        canonical.setflags(write=False)
        self.domain = domain
        self.grid = grid
        self.values = v
        self._points = canonical

    @property
    def points(self):
        return self._points

    @classmethod
    def from_function(cls, domain, grid, func):
        """Sample ``func(points) -> (..., d+1)`` at the image points."""
        pts = omega_points(domain, grid)
        vals = np.asarray(func(pts), dtype=float)
        return cls(domain, grid, np.moveaxis(vals, -1, 0))

    @classmethod
    def zeros(cls, domain, grid):
        return cls(domain, grid, np.zeros((grid.d + 1, grid.nt, grid.n)))

    def __add__(self, other):
        return OmegaVectorField(self.domain, self.grid, self.values + other.values)

    def __sub__(self, other):
        return OmegaVectorField(self.domain, self.grid, self.values - other.values)

    def __mul__(self, s):
        return OmegaVectorField(self.domain, self.grid, self.values * float(s))

    __rmul__ = __mul__

    def __repr__(self):
        return f"OmegaVectorField(kind={self.domain.kind!r}, nt={self.grid.nt}, n={self.grid.n})"


def push_forward(f):
    """Transport a physical field to the flattened half-space.

    Samples already sit on the image of the grid, so this relabels them.
    """
    return HalfSpaceField(f.grid, f.values)


def pull_forward(domain, F):
    """Inverse of :func:`push_forward`."""
    return OmegaVectorField(domain, F.grid, F.values)


def physical_gradient(coeffs, gradw):
    """Physical gradient ``(g_x + a g_t, g_t)`` from the flattened gradient
    ``(g_x, g_t)``; values of shape ``(d+1, nt, n)``."""
    g = np.asarray(gradw, dtype=float)
    out = g.copy()
    out[: coeffs.d] += coeffs.a[:, None, :] * g[coeffs.d][None]
    return out


def pull_back_gradient(domain, w, dtw):
    """Gradient of ``p = w o shear`` at the physical image points.

    Parameters
    ----------
    domain : GraphDomainSpec
    w : HalfSpaceField
        Scalar field on the flattened grid.
    dtw : HalfSpaceField
        Its t-derivative on the same grid.

    Returns
    -------
    OmegaVectorField
    """
    if w.ncomp != 1 or dtw.ncomp != 1 or not w.grid.same_as(dtw.grid):
        raise ValueError("w and dtw must be scalar fields on the same grid")
    g = w.grid
    Ds = gradient_matrices(g)
    wv, tv = w.values[0], dtw.values[0]
    ge = domain.grad_eta(g.x).T
    comps = [wv @ Dj.T - ge[j][None, :] * tv for j, Dj in enumerate(Ds)]
    comps.append(np.array(tv))
    return OmegaVectorField(domain, g, np.stack(comps))
