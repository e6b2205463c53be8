"""Seeded analytic fields used as inputs and test functions.

Every generator draws its coefficients from a seed alone and evaluates a
closed-form function of ``(y, t)``, so the same seed gives the same
underlying field on every grid (needed for refinement studies).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import OmegaVectorField
from .grid import HalfSpaceField

__all__ = [
    "bump",
    "bump_derivative",
    "smooth_step",
    "TrigPattern",
    "RandomField",
    "random_fields",
    "gradient_field",
    "curl_field",
    "TestPotential",
    "potential_battery",
    "random_trig_vectors",
]


def bump(s):
    """``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, zero outside (peak 1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def bump_derivative(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    sm = s[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - sm**2)) * (-2.0 * sm / (1.0 - sm**2) ** 2)
    return out


def smooth_step(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)

    def f(u):
        out = np.zeros_like(u)
        m = u > 0
        out[m] = np.exp(-1.0 / u[m])
        return out

    a, b = f(s), f(1.0 - s)
    return a / (a + b)


@dataclass(frozen=True)
class TrigPattern:
    """Real trigonometric polynomial on the torus with wavenumbers up to
    ``kmax`` per axis."""

    coef_cos: np.ndarray  # (2 kmax + 1,)*d
    coef_sin: np.ndarray
    L: float

    @classmethod
    def random(cls, rng, kmax, d, L, decay=1.0):
        shape = (2 * kmax + 1,) * d
        ks = np.arange(-kmax, kmax + 1)
        grids = np.meshgrid(*([ks] * d), indexing="ij")
        kn = np.sqrt(sum(k.astype(float) ** 2 for k in grids))
        w = 1.0 / (1.0 + kn) ** decay
        c = rng.standard_normal(shape) * w
        s = rng.standard_normal(shape) * w
        return cls(c, s, float(L))

    @property
    def kmax(self):
        return (self.coef_cos.shape[0] - 1) // 2

    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[1]
        ks = np.arange(-self.kmax, self.kmax + 1)
        grids = np.meshgrid(*([ks] * d), indexing="ij")
        K = np.stack([g.ravel() for g in grids], axis=1) * (2 * np.pi / self.L)
        return x @ K.T, K  # (n, nk), (nk, d)

    def value(self, x):
        ph, _ = self._phases(x)
        return np.cos(ph) @ self.coef_cos.ravel() + np.sin(ph) @ self.coef_sin.ravel()

    def gradient(self, x):
        ph, K = self._phases(x)
        out = []
        for j in range(K.shape[1]):
            out.append(
                -np.sin(ph) @ (self.coef_cos.ravel() * K[:, j]) + np.cos(ph) @ (self.coef_sin.ravel() * K[:, j])
            )
        return np.stack(out)  # (d, n)


@dataclass(frozen=True)
class _Term:
    pattern: TrigPattern
    amp: float
    center: float
    radius: float

    def profile(self, t):
        return self.amp * bump((t - self.center) / self.radius)

    def dprofile(self, t):
        return self.amp * bump_derivative((t - self.center) / self.radius) / self.radius


@dataclass(frozen=True)
class RandomField:
    """Band-limited vector field, compactly supported in ``t``, given in
    flattened coordinates.

    Each component is a sum of ``terms`` products of a random trigonometric
    pattern and a smooth bump in ``t``.
    """

    comps: tuple
    d: int

    @classmethod
    def draw(cls, seed, d=1, kmax=4, L=2 * np.pi, terms=2, support=(0.75, 5.25)):
        rng = np.random.default_rng(seed)
        lo, hi = support
        comps = []
        for _ in range(d + 1):
            ts = []
            for _ in range(terms):
                r = rng.uniform(0.3, 0.45) * (hi - lo)
                c = rng.uniform(lo + r, hi - r)
                ts.append(_Term(TrigPattern.random(rng, kmax, d, L), float(rng.uniform(0.5, 1.5)), float(c), float(r)))
            comps.append(tuple(ts))
        return cls(tuple(comps), d)

    def flattened_values(self, grid):
        out = np.zeros((self.d + 1, grid.nt, grid.n))
        for c, terms in enumerate(self.comps):
            for term in terms:
                out[c] += np.outer(term.profile(grid.t), term.pattern.value(grid.x))
        return out

    def on_grid(self, grid):
        return HalfSpaceField(grid, self.flattened_values(grid))

    def on_domain(self, domain, grid):
        """Physical field whose push-forward is :meth:`on_grid`."""
        return OmegaVectorField(domain, grid, self.flattened_values(grid))


def random_fields(seeds, domain, grid, kmax=4, terms=2, support=None):
    """Physical ensemble fields for a list of seeds."""
    support = (0.0625 * grid.T, 0.4375 * grid.T) if support is None else support
    return [
        RandomField.draw(s, grid.d, kmax, grid.L, terms, support).on_domain(domain, grid) for s in seeds
    ]


@dataclass(frozen=True)
class TestPotential:
    """Smooth potential ``psi(y, t) = S(y) * A * bump((t - c) / r)`` in
    flattened coordinates; its physical gradient is evaluated analytically."""

    __test__ = False

    pattern: TrigPattern
    amp: float
    center: float
    radius: float

    def _term(self):
        return _Term(self.pattern, self.amp, self.center, self.radius)

    def value(self, grid):
        tm = self._term()
        return np.outer(tm.profile(grid.t), self.pattern.value(grid.x))

    def flat_gradient(self, grid):
        """``(d_y psi, d_t psi)``, shape ``(d+1, nt, n)``."""
        tm = self._term()
        p, dp = tm.profile(grid.t), tm.dprofile(grid.t)
        S, dS = self.pattern.value(grid.x), self.pattern.gradient(grid.x)
        comps = [np.outer(p, dS[j]) for j in range(grid.d)]
        comps.append(np.outer(dp, S))
        return np.stack(comps)

    def gradient(self, domain, grid):
        """Physical gradient of ``psi o shear`` on the image grid."""
        g = self.flat_gradient(grid)
        ge = domain.grad_eta(grid.x).T
        out = g.copy()
        out[: grid.d] -= ge[:, None, :] * g[grid.d][None]
        return OmegaVectorField(domain, grid, out)


def gradient_field(domain, grid, seed=0, kmax=3, support=None):
    """Gradient of a smooth potential compactly supported in the slab."""
    rng = np.random.default_rng(seed)
    lo, hi = (0.0625 * grid.T, 0.4375 * grid.T) if support is None else support
    pot = TestPotential(TrigPattern.random(rng, kmax, grid.d, grid.L), 1.0, 0.5 * (lo + hi), 0.5 * (hi - lo))
    return pot.gradient(domain, grid)


def curl_field(domain, grid, seed=0, kmax=3, support=None):
    """Divergence-free field ``(d_s psi, ..., -d_{x_1} psi)`` from a compact
    stream function ``psi`` (rotation in the ``x_1``-vertical plane)."""
    rng = np.random.default_rng(seed)
    lo, hi = (0.0625 * grid.T, 0.4375 * grid.T) if support is None else support
    pot = TestPotential(TrigPattern.random(rng, kmax, grid.d, grid.L), 1.0, 0.5 * (lo + hi), 0.5 * (hi - lo))
    gp = pot.gradient(domain, grid).values  # physical gradient of psi
    out = np.zeros_like(gp)
    out[0] = gp[grid.d]
    out[grid.d] = -gp[0]
    return OmegaVectorField(domain, grid, out)


def potential_battery(grid, size=32, seed=0, kmax=4):
    """Fixed family of smooth compactly supported test potentials.

    Half are supported in the open slab, half reach the boundary ``t = 0``
    (they probe the flux condition); none reach ``t = T``.
    """
    rng = np.random.default_rng(seed)
    T = grid.T
    out = []
    for i in range(size):
        pat = TrigPattern.random(rng, kmax, grid.d, grid.L)
        if i % 2 == 0:
            r = rng.uniform(0.15, 0.3) * T
            c = rng.uniform(r + 0.02 * T, 0.75 * T - r)
        else:
            r = rng.uniform(0.2, 0.35) * T
            c = rng.uniform(0.0, 0.5 * r)
        out.append(TestPotential(pat, 1.0, float(c), float(r)))
    return out


def random_trig_vectors(grid, count, seed=0, kmax=None, mean_zero=True):
    """Seeded random trigonometric vectors on the horizontal lattice.

    Wavenumbers are limited to ``kmax`` (default: the lowest third of the
    resolved spectrum); coefficients are drawn independently of ``N`` so the
    same seed gives the same functions after refinement.

    Returns
    -------
    ndarray, shape (N**d, count)
    """
    kmax = grid.N // 6 if kmax is None else int(kmax)
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(count):
        pat = TrigPattern.random(rng, kmax, grid.d, grid.L, decay=0.0)
        if mean_zero:
            pat.coef_cos[(kmax,) * grid.d] = 0.0
        cols.append(pat.value(grid.x))
    return np.column_stack(cols)
