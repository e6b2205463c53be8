"""Weak Neumann problem on the flattened half-space.

Find ``w`` with

    <A grad w, grad phi> = <F', grad_x phi + a d_t phi> + <F_last, d_t phi>

for all test functions ``phi``.  Two solvers are provided:

* :func:`solve_formula` evaluates the semigroup representation built from
  the factorized operator ``-M_b (d_t - Q)(d_t + P)``;
* :class:`DirectSolver` minimizes ``|| J w - F ||`` over nodal fields with
  ``w(T) = 0``, where ``J w = (D w + a d_t w, d_t w)`` uses spectral
  x-derivatives and three-point t-differences.  The minimizer satisfies the
  discrete weak form exactly, so ``J w`` is the orthogonal projection of
  ``F`` onto discrete gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .grid import HalfSpaceField, MixedNormSpec, gradient_mixed_norm, mixed_norm, time_derivative_matrix
from .semigroup import SemigroupEvaluator

__all__ = [
    "NeumannData",
    "NeumannSolution",
    "build_neumann_data",
    "solve_formula",
    "FormulaSolver",
    "DirectSolver",
    "solve_direct",
    "estimate_stability",
    "slab_mean",
    "energy_identity",
    "neumann_slab_depth",
    "extend_nodes",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NeumannData:
    """Right-hand side of the transformed Neumann problem.

    Attributes
    ----------
    F : HalfSpaceField
        The full ``(d+1)``-vector field.
    Fprime : ndarray, shape (d, nt, n)
    Flast : ndarray, shape (nt, n)
    G : ndarray, shape (nt, n)
        ``-(F_last + a . F')``.
    traceG : ndarray, shape (n,)
        ``G`` at ``t = 0``.
    """

    F: HalfSpaceField
    Fprime: np.ndarray
    Flast: np.ndarray
    G: np.ndarray
    traceG: np.ndarray

    @property
    def grid(self):
        return self.F.grid


def build_neumann_data(F, coeffs):
    """Split ``F`` and form the flux datum ``G = -(F_last + a . F')``."""
    if not isinstance(F, HalfSpaceField):
        raise TypeError("F must be a HalfSpaceField")
    if not F.grid.same_as(coeffs.grid):
        raise ValueError("field and coefficients live on different grids")
    d = coeffs.d
    if F.ncomp != d + 1:
        raise ValueError(f"F needs {d + 1} components, got {F.ncomp}")
    Fp = F.values[:d]
    Fl = F.values[d]
    G = -(Fl + np.einsum("jn,jkn->kn", coeffs.a, Fp))
    return NeumannData(F, Fp, Fl, G, G[0].copy())


@dataclass(frozen=True, eq=False)
class NeumannSolution:
    """Potential ``w`` and its flattened gradient ``(D w, d_t w)``."""

    w: HalfSpaceField
    gradw: HalfSpaceField
    method: str
    diagnostics: dict = field(default_factory=dict)

    def physical_gradient(self, coeffs):
        """``(D w + a d_t w, d_t w)``: the gradient of the potential in
        physical coordinates, sampled on the image grid."""
        g = self.gradw.values
        out = g.copy()
        out[: coeffs.d] += coeffs.a[:, None, :] * g[coeffs.d][None]
        return out


def slab_mean(grid, values):
    """Quadrature mean of a scalar lattice over the slab."""
    vol = grid.T * grid.L**grid.d
    return float(grid.cell * np.dot(grid.weights, values.sum(axis=1)) / vol)


def _decay_ratio(data):
    nrm = np.linalg.norm(data.F.values, axis=(0, 2))
    top = nrm.max()
    return float(nrm[-1] / top) if top > 0 else 0.0


def _check_bundle(bundle, tol=1e-6):
    bad = {
        k: v
        for k, v in bundle.certificates.items()
        if k
        in (
            "lambda_from_poisson",
            "adjoint_generator",
            "factorization_second_order",
            "factorization_first_order",
            "rellich",
        )
        and not v <= tol
    }
    if bad:
        raise RuntimeError(f"operator bundle certificates fail: {bad}")


def solve_formula(bundle, data, ev_P=None, ev_Q=None):
    """Semigroup representation of the Neumann solution.

    With ``h = M_{1/b} div F'`` and ``psi = M_{1/b} G - Q^# h``,

        v(t)  = -M_{1/b} G(t) + Q int_t^T exp(-(s-t) Q) psi(s) ds,
        w(0)  = Lambda^+ (G(0) + M_b v(0)),
        w(t)  = exp(-t P) w(0) + int_0^t exp(-(t-s) P) v(s) ds,
        d_t w = -P w + v.

    ``Q^#`` and ``Lambda^+`` are the group inverse and the pseudo-inverse on
    the complement of the gradient kernel.

    Returns
    -------
    NeumannSolution
    """
    _check_bundle(bundle)
    g = data.grid
    if not g.same_as(bundle.grid):
        raise ValueError("data and bundle live on different grids")
    ev_P = SemigroupEvaluator(bundle.P) if ev_P is None else ev_P
    ev_Q = SemigroupEvaluator.adjoint_of(ev_P, bundle.b) if ev_Q is None else ev_Q
    b = bundle.b
    K = bundle.kernel
    diag = {}

    div = np.einsum("jkn,jmn->km", data.Fprime, bundle.D)  # sum_j F'_j D_j^T
    # a divergence has no component along the left kernel of Q
    ref = max(np.abs(div).max(), 1.0)
    mean_comp = float(np.abs(div @ K).max() / ref) if div.size else 0.0
    diag["divergence_kernel_component"] = mean_comp
    if mean_comp > 1e-10:
        raise ValueError(f"divergence has a kernel component of relative size {mean_comp:.2e}")
    hdiv = div / b[None, :]
    psi = data.G / b[None, :] - hdiv @ bundle.q_ginv.T
    tail = {}
    I = ev_Q.anticausal(psi, g.t, tail)
    diag.update({f"anticausal_{k}": v for k, v in tail.items()})
    v = -data.G / b[None, :] + I @ bundle.Q.T

    r0 = data.traceG + b * v[0]
    scale = max(np.linalg.norm(r0), np.linalg.norm(data.traceG), 1e-300)
    diag["range_defect"] = float(np.linalg.norm(K.T @ r0) / scale) if np.any(r0) else 0.0
    w0 = bundle.lambda_pinv @ r0
    w = ev_P.propagate(w0, g.t) + ev_P.duhamel(v, g.t)
    dtw = v - w @ bundle.P.T
    gx = np.einsum("kn,jmn->jkm", w, bundle.D)
    shift = slab_mean(g, w)
    w = w - shift
    flux0 = -(np.einsum("jn,jn->n", bundle.a, gx[:, 0]) + b * dtw[0])
    diag["boundary_flux_defect"] = float(np.abs(flux0 - data.traceG).max())
    diag["evaluator_mode"] = ev_P.mode
    return NeumannSolution(
        HalfSpaceField(g, w),
        HalfSpaceField(g, np.concatenate([gx, dtw[None]])),
        "formula",
        diag,
    )


class FormulaSolver:
    """Semigroup-representation solver bound to one operator bundle.

    The eigen-decompositions of ``P`` and ``Q`` are computed once and
    reused for every right-hand side.
    """

    def __init__(self, bundle):
        _check_bundle(bundle)
        self.bundle = bundle
        self.coeffs = bundle.coeffs
        self.grid = bundle.grid
        self.ev_P = SemigroupEvaluator(bundle.P)
        self.ev_Q = SemigroupEvaluator.adjoint_of(self.ev_P, bundle.b)

    def solve(self, data):
        return solve_formula(self.bundle, data, self.ev_P, self.ev_Q)


class DirectSolver:
    """Discrete least-squares projection onto gradients on the slab.

    The normal matrix of ``min_w || J w - F ||_W`` (``W``: trapezoid in t,
    uniform in x; ``w(T) = 0``) is block pentadiagonal in t and symmetric
    positive definite; it is factorized once by banded Cholesky and reused
    for every right-hand side.

    Parameters
    ----------
    coeffs : Coefficients
    """

    def __init__(self, coeffs, slab_depth=None):
        self.coeffs = coeffs
        g = coeffs.grid
        self.grid = g
        from .grid import gradient_matrices, trapezoid_weights

        self.D = gradient_matrices(g)
        depth = g.T if slab_depth is None else (neumann_slab_depth(g, coeffs.lip) if slab_depth == "auto" else float(slab_depth))
        self.t = extend_nodes(g.t, depth)
        self.slab_depth = float(self.t[-1])
        self.delta = time_derivative_matrix(self.t).toarray()
        self.weights = trapezoid_weights(self.t)
        n, nt = g.n, self.t.size
        a, b = coeffs.a, coeffs.b
        M0 = np.einsum("jkn,jkm->nm", self.D, self.D)
        B = np.einsum("jkn,jk->nk", self.D, a)  # sum_j D_j^T M_{a_j}
        Mb = np.diag(b)
        w = self.weights
        dl = self.delta
        Wd = w[:, None] * dl  # W delta
        dWd = dl.T @ Wd  # delta^T W delta
        m = nt - 1  # unknown time levels (w(T) = 0)
        u = 3 * n - 1
        ab = np.zeros((u + 1, m * n))
        r = np.arange(n)
        for k in range(m):
            for l in range(k, min(k + 3, m)):
                blk = (Wd[k, l]) * B + (Wd[l, k]) * B.T + dWd[k, l] * Mb
                if k == l:
                    blk = blk + w[k] * M0
                # banded upper storage: ab[u + i - j, j] = A[i, j], i <= j
                rows = k * n + r[:, None]
                cols = l * n + r[None, :]
                mask = rows <= cols
                ab[(u + rows - cols)[mask], np.broadcast_to(cols, (n, n))[mask]] = blk[mask]
        self._u = u
        self._m = m
        self._chol = sla.cholesky_banded(ab, lower=False)

    def _apply_J(self, wv):
        # wv: (nt, n) with wv[-1] = 0
        dw = self.delta @ wv
        gx = np.einsum("kn,jmn->jkm", wv, self.D)
        return gx, dw

    def solve(self, data):
        """Weak solution for ``data``.

        Returns
        -------
        NeumannSolution
            ``gradw`` holds ``(D w, d_t w)``; ``w`` is normalized to zero
            slab mean.
        """
        if not data.grid.same_as(self.grid):
            raise ValueError("data lives on a different grid")
        g = self.grid
        w = self.weights
        nt, ne = g.nt, self.t.size
        Fp = np.zeros((g.d, ne, g.n))
        G = np.zeros((ne, g.n))
        Fp[:, :nt], G[:nt] = data.Fprime, data.G  # data vanish beyond T
        # right side J^T W F = W D^T F' + delta^T W (a . F' + F_last)
        rhs = w[:, None] * np.einsum("jkn,jnm->km", Fp, self.D)
        rhs = rhs - self.delta.T @ (w[:, None] * G)
        sol = sla.cho_solve_banded((self._chol, False), rhs[:-1].ravel())
        wv = np.zeros((ne, g.n))
        wv[:-1] = sol.reshape(self._m, g.n)
        gx, dw = self._apply_J(wv)
        wv, gx, dw = wv[:nt], gx[:, :nt], dw[:nt]
        diag = {"tail_ratio": _decay_ratio(data), "slab_depth": self.slab_depth}
        if diag["tail_ratio"] > 1e-8:
            log.warning("data has not decayed at T: tail ratio %.2e", diag["tail_ratio"])
        flux0 = -(np.einsum("jn,jn->n", self.coeffs.a, gx[:, 0]) + self.coeffs.b * dw[0])
        diag["boundary_flux_defect"] = float(np.abs(flux0 - data.traceG).max())
        wv = wv - slab_mean(g, wv)
        return NeumannSolution(
            HalfSpaceField(g, wv),
            HalfSpaceField(g, np.concatenate([gx, dw[None]])),
            "direct",
            diag,
        )


def solve_direct(coeffs, grid, data, solver=None, slab_depth="auto"):
    """Direct variational solve of the half-space problem.

    The slab is deepened to :func:`neumann_slab_depth` (zero data beyond
    ``T``) so the Dirichlet condition on the far face does not pollute the
    solution on the grid; ``solver`` reuses an existing factorization.
    """
    if not grid.same_as(coeffs.grid):
        raise ValueError("grid does not match the coefficients")
    solver = DirectSolver(coeffs, slab_depth) if solver is None else solver
    return solver.solve(data)


def neumann_slab_depth(grid, lip, tol=1e-8):
    """Depth at which the slowest mode has decayed by ``tol``.

    The decay rate of the lowest nonconstant mode is bounded below by
    ``(2 pi / L) * nu_1``, ``nu_1`` the ellipticity constant.
    """
    from .geometry import ellipticity_bounds

    rate = (2 * np.pi / grid.L) * ellipticity_bounds(lip)[0]
    return max(grid.T, float(-np.log(tol) / rate))


def extend_nodes(t, depth, growth=1.1, max_step=1.0):
    """Append nodes beyond ``t[-1]`` up to ``depth`` with steps growing by
    ``growth`` (capped at ``max_step``)."""
    t = np.asarray(t, dtype=float)
    if depth <= t[-1] * (1 + 1e-12):
        return t.copy()
    out = list(t)
    h = t[-1] - t[-2]
    cur = t[-1]
    while cur < depth:
        h = min(h * growth, max_step)
        cur = min(cur + h, depth) if depth - cur - h > 0.5 * h else depth
        out.append(cur)
    return np.array(out)


def estimate_stability(solver, fields, q=2.0):
    """Largest ratio ``||grad w|| / ||F||`` in ``L^q_t(L^2_x)`` over an
    ensemble.

    Parameters
    ----------
    solver : object
        Anything with ``coeffs`` and ``solve(data)`` (a :class:`DirectSolver`
        or a bound formula solver).
    fields : sequence of HalfSpaceField
    q : float

    Returns
    -------
    constant : float
    table : list of dict
        One row per field with the two norms and their ratio.
    """
    spec = MixedNormSpec(q, 2.0)
    rows = []
    for i, F in enumerate(fields):
        sol = solver.solve(build_neumann_data(F, solver.coeffs))
        nf = mixed_norm(F, spec)
        ng = gradient_mixed_norm(sol.w, spec)
        rows.append({"index": i, "norm_F": nf, "norm_grad_w": ng, "ratio": ng / nf if nf > 0 else 0.0})
    const = max((r["ratio"] for r in rows), default=0.0)
    return const, rows


def energy_identity(coeffs, data, sol):
    """Both sides of the weak form tested with the solution itself.

    Returns
    -------
    lhs, rhs : float
        ``<A grad w, grad w>`` and ``<F', D w + a d_t w> + <F_last, d_t w>``
        with trapezoid quadrature in ``t``.
    """
    g = coeffs.grid
    d = coeffs.d
    gw = sol.gradw.values
    phys = sol.physical_gradient(coeffs)
    wt = g.weights[None, :, None] * g.cell
    # A = [[I, a], [a^T, b]] so <A grad w, grad w> = |D w + a d_t w|^2 + |d_t w|^2
    Agg = np.sum(gw[:d] ** 2, axis=0) + 2 * np.einsum("jn,jkn->kn", coeffs.a, gw[:d]) * gw[d] + coeffs.b * gw[d] ** 2
    lhs = float(np.sum(wt[0] * Agg))
    rhs = float(np.sum(wt * data.Fprime * phys[:d]) + np.sum(wt[0] * data.Flast * gw[d]))
    return lhs, rhs
