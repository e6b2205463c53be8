"""Helmholtz decomposition ``f = u + grad p`` on a periodic graph domain.

The field is pushed to the flattened slab, the weak Neumann problem for
``p`` is solved there, and ``u`` is defined as ``f - grad p`` so the split
reproduces ``f`` exactly.  Certificates (orthogonality, Pythagoras,
weak-divergence residual, stability ratio) are computed for every call.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .geometry import GraphDomainSpec, OmegaVectorField, build_coefficients, push_forward
from .grid import HalfSpaceField, MixedNormSpec, make_grid, mixed_norm
from .neumann import DirectSolver, FormulaSolver, build_neumann_data
from .operators import build_bundle
from .samples import RandomField, smooth_step, potential_battery

__all__ = [
    "DecompositionResult",
    "decompose",
    "make_solver",
    "weak_divergence_residual",
    "idempotence_check",
    "SweepSpec",
    "stability_sweep",
    "flat_reflection_oracle",
    "spectral_tail_fraction",
    "HelmholtzDecomposer",
]

log = logging.getLogger(__name__)


def _omega_inner(f, g):
    """``L^2(Omega)`` inner product; the shear has unit Jacobian, so the
    slab quadrature applies unchanged."""
    gr = f.grid
    return float(gr.cell * np.einsum("k,ckn,ckn->", gr.weights, f.values, g.values))


def _ynorm(f, q, r=2.0):
    return mixed_norm(HalfSpaceField(f.grid, f.values), MixedNormSpec(q, r))


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """Output of :func:`decompose`.

    Attributes
    ----------
    u, gradp : OmegaVectorField
        Solenoidal and gradient parts; ``u`` is ``f - gradp``.
    normF, normU, normGradP : float
        ``L^q_t(L^2_x)`` norms after flattening.
    divResidual : float
        Weak-divergence residual of ``u`` over the test battery.
    orthoDefect : float
        ``|<u, grad p>|`` in ``L^2(Omega)``.
    pythagorasDefect : float
        ``| ||u||^2 + ||grad p||^2 - ||f||^2 | / ||f||^2`` in ``L^2``.
    stabilityRatio : float
        ``(normU + normGradP) / normF`` (0 for ``f = 0``).
    discardedEnergy : float
        Relative ``L^2`` energy removed by the optional taper.
    """

    u: OmegaVectorField
    gradp: OmegaVectorField
    q: float
    normF: float
    normU: float
    normGradP: float
    divResidual: float
    orthoDefect: float
    pythagorasDefect: float
    stabilityRatio: float
    discardedEnergy: float
    diagnostics: dict = field(default_factory=dict)

    def summary(self):
        """JSON-ready scalars."""
        keys = (
            "q",
            "normF",
            "normU",
            "normGradP",
            "divResidual",
            "orthoDefect",
            "pythagorasDefect",
            "stabilityRatio",
            "discardedEnergy",
        )
        out = {k: float(getattr(self, k)) for k in keys}
        out["diagnostics"] = {k: v for k, v in sorted(self.diagnostics.items())}
        return out


def make_solver(domain, grid, method="direct"):
    """Neumann solver for a domain and grid.

    ``'direct'`` is the discrete least-squares projection; ``'formula'`` the
    semigroup representation built on the operator bundle.
    """
    coeffs = build_coefficients(domain, grid)
    if method == "direct":
        return DirectSolver(coeffs)
    if method == "formula":
        return FormulaSolver(build_bundle(coeffs))
    raise ValueError(f"unknown method {method!r}")


def spectral_tail_fraction(f, fraction=1.0 / 3.0):
    """Share of the energy of ``f`` in horizontal wavenumbers above
    ``fraction`` of the Nyquist index."""
    g = f.grid
    vals = f.values.reshape(f.values.shape[:2] + (g.N,) * g.d)
    axes = tuple(range(2, 2 + g.d))
    spec = np.abs(np.fft.fftn(vals, axes=axes)) ** 2
    k = np.abs(np.fft.fftfreq(g.N, 1.0 / g.N))
    kk = np.max(np.stack(np.meshgrid(*([k] * g.d), indexing="ij")), axis=0)
    high = kk > fraction * (g.N // 2)
    tot = spec.sum()
    return float(spec[..., high].sum() / tot) if tot > 0 else 0.0


def _taper(grid, width):
    t, T = grid.t, grid.T
    return smooth_step(t / width) * smooth_step((T - t) / width)


def decompose(domain, f, q=2.0, solver=None, taper_width=0.0, battery=None):
    """Split ``f`` into ``u + grad p``.

    Parameters
    ----------
    domain : GraphDomainSpec
    f : OmegaVectorField
    q : float
        Time exponent of the reported ``L^q_t(L^2_x)`` norms.
    solver : DirectSolver or FormulaSolver, optional
        Reused factorization; built with the direct method if omitted.
    taper_width : float
        If positive, ``f`` is multiplied by a smooth cutoff vanishing at
        both slab faces before the solve; the removed energy is reported.
    battery : list of TestPotential, optional
        Test potentials for the weak-divergence residual (default: the
        32-member seeded battery).

    Returns
    -------
    DecompositionResult
    """
    if not isinstance(f, OmegaVectorField):
        raise TypeError("f must be an OmegaVectorField")
    if f.domain is not domain and f.domain.describe() != domain.describe():
        raise ValueError("f lives on a different domain")
    g = f.grid
    solver = make_solver(domain, g) if solver is None else solver
    if not solver.grid.same_as(g):
        raise ValueError("solver grid does not match the field grid")
    diag = {}
    tail = spectral_tail_fraction(f)
    diag["spectral_tail"] = tail
    if tail > 0.01:
        log.warning("field is under-resolved: %.1f%% of the energy in the top spectral band", 100 * tail)
    fin = f
    discarded = 0.0
    if taper_width > 0:
        chi = _taper(g, taper_width)
        fin = OmegaVectorField(domain, g, f.values * chi[None, :, None], f.points)
        ef = _omega_inner(f, f)
        diff = f - fin
        discarded = _omega_inner(diff, diff) / ef if ef > 0 else 0.0
    sol = solver.solve(build_neumann_data(push_forward(fin), solver.coeffs))
    diag.update({f"solver_{k}": v for k, v in sol.diagnostics.items() if isinstance(v, (int, float))})
    gradp = OmegaVectorField(domain, g, sol.physical_gradient(solver.coeffs), f.points)
    u = OmegaVectorField(domain, g, f.values - gradp.values, f.points)
    nf, nu, ng = _ynorm(f, q), _ynorm(u, q), _ynorm(gradp, q)
    e2 = _omega_inner(f, f)
    ortho = abs(_omega_inner(u, gradp))
    pyth = abs(_omega_inner(u, u) + _omega_inner(gradp, gradp) - e2) / e2 if e2 > 0 else 0.0
    battery = potential_battery(g) if battery is None else battery
    return DecompositionResult(
        u=u,
        gradp=gradp,
        q=float(q),
        normF=nf,
        normU=nu,
        normGradP=ng,
        divResidual=weak_divergence_residual(u, battery),
        orthoDefect=ortho,
        pythagorasDefect=pyth,
        stabilityRatio=(nu + ng) / nf if nf > 0 else 0.0,
        discardedEnergy=discarded,
        diagnostics=diag,
    )


def weak_divergence_residual(u, battery):
    """``max |<u, grad phi>| / (||u|| ||grad phi||)`` over the battery
    (0 when ``u = 0``)."""
    nu = np.sqrt(_omega_inner(u, u))
    if nu == 0:
        return 0.0
    worst = 0.0
    for pot in battery:
        gphi = pot.gradient(u.domain, u.grid)
        ng = np.sqrt(_omega_inner(gphi, gphi))
        if ng == 0:
            continue
        worst = max(worst, abs(_omega_inner(u, gphi)) / (nu * ng))
    return float(worst)


def idempotence_check(domain, f, q=2.0, solver=None):
    """Decompose ``u`` and ``grad p`` once more.

    Returns
    -------
    dict
        ``u_gradient_part``: ``||grad p_2|| / ||u||`` for the second pass on
        ``u``; ``gradp_solenoidal_part``: ``||u_3|| / ||grad p||`` for the
        pass on ``grad p``; plus the first-pass result under ``first``.
    """
    solver = make_solver(domain, f.grid) if solver is None else solver
    battery = []
    r1 = decompose(domain, f, q, solver, battery=battery)
    r2 = decompose(domain, r1.u, q, solver, battery=battery)
    r3 = decompose(domain, r1.gradp, q, solver, battery=battery)
    return {
        "u_gradient_part": r2.normGradP / r1.normU if r1.normU > 0 else 0.0,
        "gradp_solenoidal_part": r3.normU / r1.normGradP if r1.normGradP > 0 else 0.0,
        "first": r1,
    }


# ------------------------------------------------------------------ sweep


@dataclass(frozen=True)
class SweepSpec:
    """Stability sweep protocol.

    ``lip = 0`` denotes the flat boundary; other values use
    ``eta = alpha sin(x)`` with the given Lipschitz constant.  The refined
    level doubles ``N`` and the number of t-intervals.  ``rs`` lists extra
    space exponents whose ratios are measured on the base level only
    (exploratory, no pass/fail).
    """

    lips: tuple = (0.5, 1.0, 2.0, 5.0)
    qs: tuple = (4.0 / 3.0, 2.0, 4.0)
    seeds: tuple = tuple(range(8))
    d: int = 1
    N: int = 64
    L: float = 2 * np.pi
    T: float = 12.0
    count: int = 129
    ratio: float = 1.03
    kmax: int = 4
    refine: bool = True
    rs: tuple = ()


def _sweep_domain(lip, spec):
    if lip == 0:
        return GraphDomainSpec("flat", {}, L=spec.L, d=spec.d)
    return GraphDomainSpec("sine", {"m": 1}, L=spec.L, lip=float(lip), d=spec.d)


def _sweep_level(spec, lip, level, rs=()):
    N = spec.N * 2**level
    count = (spec.count - 1) * 2**level + 1
    ratio = spec.ratio ** (0.5**level)
    g = make_grid(spec.d, N, spec.L, spec.T, count, ratio)
    dom = _sweep_domain(lip, spec)
    solver = make_solver(dom, g)
    sup = (0.0625 * spec.T, 0.4375 * spec.T)
    out = {}
    for s in spec.seeds:
        f = RandomField.draw(s, spec.d, spec.kmax, spec.L, 2, sup).on_domain(dom, g)
        r = decompose(dom, f, 2.0, solver, battery=[])
        for q in spec.qs:
            for rx in (2.0,) + tuple(rs):
                nf, nu, ng = _ynorm(f, q, rx), _ynorm(r.u, q, rx), _ynorm(r.gradp, q, rx)
                out[(q, s) if rx == 2.0 else (q, rx, s)] = (nu + ng) / nf
    return N, count, out


def stability_sweep(spec=None):
    """Table of stability-ratio maxima per ``(lip, q)`` cell.

    Returns
    -------
    list of dict
        Keys ``lip, q, N, count, ratio_max, refine_drift, spread,
        ratio_min, ratio_max_refined``; ``refine_drift`` is
        ``|max_refined - max| / max`` and ``spread`` is
        ``(max - min) / max`` over seeds (both NaN-free).  With ``spec.rs``
        each row also carries ``ratio_max_r``, a dict ``{r: max ratio}``.
    """
    spec = SweepSpec() if spec is None else spec
    rs = tuple(float(v) for v in spec.rs if float(v) != 2.0)
    rows = []
    for lip in spec.lips:
        N, count, coarse = _sweep_level(spec, lip, 0, rs)
        fine = _sweep_level(spec, lip, 1)[2] if spec.refine else None
        for q in spec.qs:
            vals = np.array([coarse[(q, s)] for s in spec.seeds])
            rmax = float(vals.max())
            row = {
                "lip": float(lip),
                "q": float(q),
                "N": N,
                "count": count,
                "ratio_max": rmax,
                "refine_drift": 0.0,
                "spread": float((vals.max() - vals.min()) / rmax),
                "ratio_min": float(vals.min()),
                "ratio_max_refined": rmax,
            }
            if fine is not None:
                fmax = max(fine[(q, s)] for s in spec.seeds)
                row["ratio_max_refined"] = float(fmax)
                row["refine_drift"] = float(abs(fmax - rmax) / rmax)
            if rs:
                row["ratio_max_r"] = {rx: float(max(coarse[(q, rx, s)] for s in spec.seeds)) for rx in rs}
            rows.append(row)
    return rows


# ----------------------------------------------------------- flat oracle


def _composite_gauss(a, b, panel, points=8):
    if b <= a:
        return np.zeros(0), np.zeros(0)
    m = max(1, int(np.ceil((b - a) / panel)))
    x, w = np.polynomial.legendre.leggauss(points)
    edges = np.linspace(a, b, m + 1)
    h = np.diff(edges)
    s = (edges[:-1, None] + h[:, None] * (x[None] + 1) / 2).ravel()
    ws = (h[:, None] * w[None] / 2).ravel()
    return s, ws


def flat_reflection_oracle(rf, grid, panel=0.02):
    """Gradient part of a :class:`RandomField` on the flat half-space.

    Each horizontal Fourier mode ``xi`` (``k = |xi|``) is solved with the
    half-line Neumann Green's function
    ``G(t, s) = (exp(-k|t-s|) + exp(-k(t+s))) / (2k)``,

        p_k(t)    = int f_last(s) d_s G - i xi . f'(s) G ds,
        d_t p_k(t) = f_last(t) + int f_last(s) d_t d_s G - i xi . f'(s) d_t G ds,

    with the bump profiles integrated by composite Gauss quadrature split at
    ``s = t``; the mean mode has ``d_t p = f_last``.

    Returns
    -------
    ndarray, shape (d+1, nt, n)
        Physical gradient of ``p`` at the grid nodes.
    """
    d, N = grid.d, grid.N
    shape = (N,) * d
    freqs = np.fft.fftfreq(N, 1.0 / N) * (2 * np.pi / grid.L)
    XI = np.stack(np.meshgrid(*([freqs] * d), indexing="ij"))  # (d, N..)
    K = np.sqrt(np.sum(XI**2, axis=0))
    out_p = np.zeros((grid.nt,) + shape, dtype=complex)
    out_dt = np.zeros((grid.nt,) + shape, dtype=complex)
    top = grid.T
    for c, terms in enumerate(rf.comps):
        for term in terms:
            hat = np.fft.fftn(term.pattern.value(grid.x).reshape(shape))
            active = np.abs(hat) > 1e-12 * max(np.abs(hat).max(), 1e-300)
            for idx in zip(*np.nonzero(active)):
                k = K[idx]
                xi = XI[(slice(None),) + idx]
                coef = hat[idx]
                for j, t in enumerate(grid.t):
                    if k == 0:
                        if c == d:
                            out_dt[(j,) + idx] += coef * term.profile(np.array([t]))[0]
                        continue
                    s1, w1 = _composite_gauss(0.0, t, panel)
                    s2, w2 = _composite_gauss(t, top, panel)
                    s = np.concatenate([s1, s2])
                    w = np.concatenate([w1, w2])
                    sg = np.sign(t - s)
                    e1, e2 = np.exp(-k * np.abs(t - s)), np.exp(-k * (t + s))
                    prof = term.profile(s)
                    if c == d:
                        dsG = (sg * e1 - e2) / 2
                        dtdsG = k * (e2 - e1) / 2
                        out_p[(j,) + idx] += coef * np.dot(w, prof * dsG)
                        out_dt[(j,) + idx] += coef * (term.profile(np.array([t]))[0] + np.dot(w, prof * dtdsG))
                    else:
                        G = (e1 + e2) / (2 * k)
                        dtG = (-sg * e1 - e2) / 2
                        out_p[(j,) + idx] += -1j * xi[c] * coef * np.dot(w, prof * G)
                        out_dt[(j,) + idx] += -1j * xi[c] * coef * np.dot(w, prof * dtG)
    axes = tuple(range(1, 1 + d))
    comps = [np.real(np.fft.ifftn(1j * XI[i][None] * out_p, axes=axes)).reshape(grid.nt, -1) for i in range(d)]
    comps.append(np.real(np.fft.ifftn(out_dt, axes=axes)).reshape(grid.nt, -1))
    return np.stack(comps)


# --------------------------------------------------------------- estimator


class HelmholtzDecomposer(TransformerMixin, BaseEstimator):
    """Scikit-learn style transformer returning the solenoidal part.

    Samples are vector fields on the canonical grid flattened to rows of
    length ``(d+1) * nt * N**d`` (component, then t, then x).

    Parameters
    ----------
    eta : {'flat', 'slope', 'sine', 'samples'}
    eta_params : dict, optional
    lip : float, optional
    d, N, L, T, count, ratio :
        Grid parameters (see :func:`make_grid`).
    q : float
        Exponent of the reported norms.
    method : {'direct', 'formula'}
    taper_width : float

    Attributes
    ----------
    domain_, grid_, solver_ :
        Built by :meth:`fit`.
    last_result_ : DecompositionResult
        Certificates of the last transformed sample.
    """

    def __init__(
        self,
        eta="flat",
        eta_params=None,
        lip=None,
        d=1,
        N=64,
        L=2 * np.pi,
        T=12.0,
        count=129,
        ratio=1.03,
        q=2.0,
        method="direct",
        taper_width=0.0,
    ):
        self.eta = eta
        self.eta_params = eta_params
        self.lip = lip
        self.d = d
        self.N = N
        self.L = L
        self.T = T
        self.count = count
        self.ratio = ratio
        self.q = q
        self.method = method
        self.taper_width = taper_width

    def fit(self, X=None, y=None):
        self.domain_ = GraphDomainSpec(self.eta, dict(self.eta_params or {}), L=self.L, lip=self.lip, d=self.d)
        self.grid_ = make_grid(self.d, self.N, self.L, self.T, self.count, self.ratio)
        self.solver_ = make_solver(self.domain_, self.grid_, self.method)
        self.n_features_in_ = (self.d + 1) * self.grid_.nt * self.grid_.n
        if X is not None:
            self._rows(X)
        return self

    def _rows(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None]
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected rows of length {self.n_features_in_}, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains non-finite values")
        return X

    def _field(self, row):
        g = self.grid_
        return OmegaVectorField(self.domain_, g, row.reshape(self.d + 1, g.nt, g.n))

    def decompose(self, f):
        """Full :class:`DecompositionResult` for one field."""
        check_is_fitted(self, "solver_")
        if not isinstance(f, OmegaVectorField):
            f = self._field(self._rows(f)[0])
        res = decompose(self.domain_, f, self.q, self.solver_, self.taper_width)
        self.last_result_ = res
        return res

    def transform(self, X):
        """Solenoidal parts ``u`` of the rows of ``X``."""
        check_is_fitted(self, "solver_")
        X = self._rows(X)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            out[i] = self.decompose(self._field(row)).u.values.ravel()
        return out

    def gradient_part(self, X):
        """Gradient parts ``grad p`` of the rows of ``X``."""
        X = self._rows(X)
        return X - self.transform(X)
