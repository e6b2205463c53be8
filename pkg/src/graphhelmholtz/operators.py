"""Dirichlet-to-Neumann map, Poisson generator and adjoint generator.

The decaying solutions ``w(t) = exp(-t P) w0`` of the semi-discrete
harmonic equation

    M_b w'' + M_1 w' - M_0 w = 0,
    M_1 = sum_j (M_{a_j} D_j + D_j M_{a_j}),  M_0 = sum_j D_j^T D_j,

span the stable invariant subspace of the companion linearization.  The
generator ``P`` is read off that subspace, ``Lambda = M_b P - M_a . D`` and
``Q = M_{1/b} P^T M_b``.

The common kernel ``K`` of the gradient matrices (constants and Nyquist
oscillations) consists of ``t``-independent harmonic functions with zero
flux; it is deflated analytically, so ``P``, ``Lambda`` and ``Q``
annihilate it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import gradient_matrices, null_modes

__all__ = [
    "Pencil",
    "OperatorBundle",
    "ExtractionError",
    "build_pencil",
    "extract_poisson",
    "dtn_from_poisson",
    "adjoint_generator",
    "build_bundle",
    "dtn_via_strip",
    "default_strip_depth",
    "default_strip_step",
    "fourier_symbol_oracle",
    "rel_residual",
    "group_inverse",
]

log = logging.getLogger(__name__)

COND_LIMIT = 1e8


class ExtractionError(RuntimeError):
    """The stable subspace could not be separated cleanly."""


def rel_residual(lhs, rhs, scale=0.0):
    """``||lhs - rhs|| / max(||lhs||, ||rhs||, scale)`` in the Frobenius norm
    (0 if everything vanishes).

    ``scale`` guards identities whose two sides may both vanish, such as the
    first-order matching on a flat boundary."""
    scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), scale)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(lhs - rhs) / scale)


@dataclass(frozen=True, eq=False)
class Pencil:
    """Matrices of ``mu^2 M2 - mu M1 - M0`` together with the pieces they
    were assembled from."""

    M2: np.ndarray
    M1: np.ndarray
    M0: np.ndarray
    D: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def n(self):
        return self.M0.shape[0]


def build_pencil(coeffs, D):
    """Assemble the quadratic pencil of the semi-discrete harmonic equation.

    Parameters
    ----------
    coeffs : Coefficients
    D : ndarray, shape (d, n, n) or (n, n)
        Skew-symmetric gradient matrices.

    Returns
    -------
    Pencil
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = D[None]
    a = np.asarray(coeffs.a, dtype=float).reshape(D.shape[0], -1)
    b = np.asarray(coeffs.b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("coefficients must be finite")
    if np.any(b <= 0):
        raise ValueError("b must be positive")
    if np.max(np.abs(D + np.transpose(D, (0, 2, 1)))) > 0:
        raise ValueError("gradient matrices must be skew-symmetric")
    n = b.size
    M1 = np.zeros((n, n))
    M0 = np.zeros((n, n))
    for j in range(D.shape[0]):
        M1 += a[j][:, None] * D[j] + D[j] * a[j][None, :]
        M0 += D[j].T @ D[j]
    return Pencil(np.diag(b), M1, M0, D, a, b)


def extract_poisson(pencil, kernel, return_info=False):
    """Generator of the decaying solutions of the pencil.

    Parameters
    ----------
    pencil : Pencil
    kernel : ndarray, shape (n, m)
        Orthonormal basis of the common kernel of the gradient matrices.
    return_info : bool
        Also return a dict of diagnostics.

    Returns
    -------
    P : ndarray, shape (n, n)
    info : dict, optional
        ``sdim`` (stable dimension), ``cond`` (condition number of the
        basis change), ``fallback`` (conditioning gate tripped), ``gap``
        (smallest real part of the selected eigenvalues).

    Raises
    ------
    ExtractionError
        If the stable subspace does not have dimension ``n - m`` or an
        eigenvalue sits on the imaginary axis.
    """
    M0, M1, b = pencil.M0, pencil.M1, pencil.b
    n = pencil.n
    K = np.asarray(kernel, dtype=float)
    m = K.shape[1]
    ib = 1.0 / b
    C = np.block([[np.zeros((n, n)), np.eye(n)], [ib[:, None] * M0, -ib[:, None] * M1]])

    # generalized null space of the companion matrix: each kernel mode k
    # gives C (k, 0) = 0 and C (zeta, k) = (k, 0) with M0 zeta = M1 k
    zeta = np.linalg.lstsq(M0, M1 @ K, rcond=None)[0]
    zeta -= K @ (K.T @ zeta)
    Z0 = np.vstack([np.hstack([K, zeta]), np.hstack([np.zeros_like(K), K])])
    Qf, _ = np.linalg.qr(Z0, mode="complete")
    U, W = Qf[:, : 2 * m], Qf[:, 2 * m :]
    C11 = U.T @ C @ U
    C12 = U.T @ C @ W
    C22 = W.T @ C @ W

    thr = 1e-12 * np.linalg.norm(C, 1)
    T, Z, sdim = sla.schur(C22, output="real", sort=lambda x, y: x < -thr)
    ev = np.linalg.eigvals(T)
    near = int(np.sum(np.abs(ev.real) <= thr))
    if near or sdim != n - m:
        raise ExtractionError(
            f"stable subspace dimension {sdim}, expected {n - m}; "
            f"{near} eigenvalue(s) within {thr:.2e} of the imaginary axis"
        )
    # lift the invariant subspace of the compressed matrix back to C
    S = T[:sdim, :sdim]
    Y = Z[:, :sdim]
    Zs = sla.solve_sylvester(C11, -S, -C12 @ Y)
    X, _ = np.linalg.qr(U @ Zs + W @ Y)
    X1, X2 = X[:n], X[n:]
    B = np.hstack([X1, K])
    cond = float(np.linalg.cond(B))
    # decaying modes have w' = -P w; kernel modes are fixed points
    P = np.linalg.solve(B.T, np.hstack([-X2, np.zeros_like(K)]).T).T
    gap = float(np.min(-ev.real[ev.real < -thr]))
    info = {"sdim": int(sdim), "cond": cond, "fallback": cond > COND_LIMIT, "gap": gap}
    if info["fallback"]:
        log.warning("basis change for the Poisson generator has condition %.3e", cond)
    return (P, info) if return_info else P


def dtn_from_poisson(P, coeffs, D):
    """``Lambda = M_b P - M_a . D``, symmetrized.

    Returns
    -------
    Lambda : ndarray
    asymmetry : float
        ``||L - L^T|| / ||L||`` of the raw product.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = D[None]
    a = np.asarray(coeffs.a).reshape(D.shape[0], -1)
    Lam = coeffs.b[:, None] * P
    for j in range(D.shape[0]):
        Lam = Lam - a[j][:, None] * D[j]
    nrm = np.linalg.norm(Lam)
    asym = float(np.linalg.norm(Lam - Lam.T) / nrm) if nrm > 0 else 0.0
    if asym > 1e-6:
        raise ExtractionError(f"Dirichlet-to-Neumann asymmetry {asym:.2e} exceeds 1e-6")
    return 0.5 * (Lam + Lam.T), asym


def adjoint_generator(P, coeffs):
    """``Q = M_{1/b} P^T M_b``, the adjoint of ``P`` for the weight ``b``."""
    b = coeffs.b
    return (P.T * b[None, :]) / b[:, None]


def group_inverse(X, right, left):
    """Group inverse of ``X`` given bases of its right and left null spaces.

    Uses ``X^# = (X + R L^T)^{-1} - R L^T`` with ``L`` rescaled so that
    ``L^T R = I``.
    """
    left = left @ np.linalg.inv(right.T @ left)
    E = right @ left.T
    return np.linalg.inv(X + E) - E


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """Discrete operators of a graph domain on a fixed horizontal lattice.

    Attributes
    ----------
    D : ndarray, shape (d, n, n)
        Gradient matrices.
    a, b : ndarray
        Coefficient fields (``M_a``, ``M_b`` are their diagonal matrices).
    Lambda, P, Q : ndarray, shape (n, n)
    kernel : ndarray, shape (n, 2**d)
        Orthonormal basis of the common kernel.
    certificates : dict
        Relative residuals of the defining identities.
    info : dict
        Extraction diagnostics.
    """

    grid: object
    coeffs: object
    D: np.ndarray
    Lambda: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    kernel: np.ndarray
    pencil: Pencil
    certificates: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def a(self):
        return self.coeffs.a

    @property
    def b(self):
        return self.coeffs.b

    @property
    def n(self):
        return self.P.shape[0]

    @cached_property
    def Ma(self):
        return np.stack([np.diag(aj) for aj in self.a])

    @cached_property
    def Mb(self):
        return np.diag(self.b)

    @cached_property
    def MaD(self):
        """``M_a . D = sum_j M_{a_j} D_j``."""
        return np.einsum("jn,jnk->nk", self.a, self.D)

    @cached_property
    def mean_zero_projector(self):
        """Orthogonal projector onto the complement of the kernel."""
        K = self.kernel
        return np.eye(self.n) - K @ K.T

    @cached_property
    def lambda_pinv(self):
        """Pseudo-inverse of ``Lambda`` on the complement of the kernel."""
        E = self.kernel @ self.kernel.T
        return np.linalg.inv(self.Lambda + E) - E

    @cached_property
    def p_left_kernel(self):
        """Orthonormal basis of the null space of ``P^T``."""
        return _small_null_space(self.P.T, self.kernel.shape[1])

    @cached_property
    def p_ginv(self):
        return group_inverse(self.P, self.kernel, self.p_left_kernel)

    @cached_property
    def q_kernel(self):
        """Right null space of ``Q`` (``M_{1/b}`` times the left kernel of P)."""
        return self.p_left_kernel / self.b[:, None]

    @cached_property
    def q_left_kernel(self):
        return self.b[:, None] * self.kernel

    @cached_property
    def q_ginv(self):
        """Group inverse of ``Q``; inverts ``Q`` on its range."""
        return group_inverse(self.Q, self.q_kernel, self.q_left_kernel)

    def gradient(self, phi):
        """``D phi`` stacked over the horizontal axes; phi: (n,) or (n, m)."""
        return np.einsum("jnk,k...->jn...", self.D, phi)

    def describe(self):
        return {"certificates": dict(self.certificates), "info": dict(self.info)}


def _small_null_space(A, dim):
    U, s, Vt = np.linalg.svd(A)
    return Vt[-dim:].T.copy()


def _certify(Lam_raw_asym, P, Lam, Q, pencil, kernel):
    M0, M1, b = pencil.M0, pencil.M1, pencil.b
    Mb = np.diag(b)
    MaD = np.einsum("jn,jnk->nk", pencil.a, pencil.D)
    DMa = np.einsum("jnk,jk->nk", pencil.D, pencil.a)
    Kp = np.eye(P.shape[0]) - kernel @ kernel.T
    evP = np.linalg.eigvals(Kp @ P @ Kp + kernel @ kernel.T)
    evL = np.linalg.eigvalsh(Lam)
    nL = max(1.0, np.linalg.norm(Lam))
    return {
        "lambda_asymmetry": Lam_raw_asym,
        "lambda_from_poisson": rel_residual(Lam, Mb @ P - MaD),
        "adjoint_generator": rel_residual(Q, (P.T * b[None, :]) / b[:, None]),
        "factorization_second_order": rel_residual(Mb @ Q @ P, M0),
        "factorization_first_order": rel_residual(
            Mb @ (P - Q), MaD + DMa, scale=np.linalg.norm(Mb @ P)
        ),
        "quadratic_pencil": rel_residual(Mb @ P @ P - M1 @ P, M0),
        "rellich": rel_residual(P.T @ Mb @ P, M0),
        "kernel_annihilation": float(
            max(np.linalg.norm(P @ kernel), np.linalg.norm(Lam @ kernel)) / nL
        ),
        "lambda_min_eigenvalue": float(evL[0]),
        "lambda_gap": float(evL[kernel.shape[1]]),
        "generator_min_real_part": float(np.min(evP.real)),
    }


def build_bundle(coeffs, grid=None):
    """Assemble pencil, generators and certificates for one lattice.

    Parameters
    ----------
    coeffs : Coefficients
    grid : HalfGrid, optional
        Defaults to ``coeffs.grid``.

    Returns
    -------
    OperatorBundle
    """
    grid = coeffs.grid if grid is None else grid
    D = gradient_matrices(grid)
    kernel = null_modes(grid)
    pencil = build_pencil(coeffs, D)
    P, info = extract_poisson(pencil, kernel, return_info=True)
    Lam, asym = dtn_from_poisson(P, coeffs, D)
    Q = adjoint_generator(P, coeffs)
    cert = _certify(asym, P, Lam, Q, pencil, kernel)
    return OperatorBundle(grid, coeffs, D, Lam, P, Q, kernel, pencil, cert, info)


# ------------------------------------------------------------ strip oracle


def default_strip_depth(grid, lip):
    """Depth at which the slowest decaying mode has fallen by ``1e-10``."""
    lam1 = (2 * np.pi / grid.L) / np.sqrt(1.0 + lip**2)
    return float(np.log(1e10) / lam1)


def default_strip_step(grid):
    """Uniform strip step resolving wavenumbers up to a quarter of the grid."""
    k_res = (2 * np.pi / grid.L) * grid.N / 4
    return 0.3 / k_res


def _strip_blocks(pencil, kernel, depth, step):
    M = max(int(np.ceil(depth / step)), 2)
    h = depth / M
    M0, M1, b = pencil.M0, pencil.M1, pencil.b
    Mb = np.diag(b)
    B = np.einsum("jkn,jk->nk", pencil.D, pencil.a)  # sum_j D_j^T M_{a_j}
    symB = 0.5 * (B + B.T)
    interior = h * M0 + 2 * Mb / h
    top = 0.5 * h * M0 + Mb / h - symB
    off = -Mb / h - 0.5 * M1
    # bottom nodes restricted to the kernel span (zero flux for kernel modes)
    bottom_full = 0.5 * h * M0 + Mb / h + symB
    bottom = kernel.T @ bottom_full @ kernel
    bottom_off = off @ kernel
    return M, h, top, interior, off, bottom, bottom_off


def dtn_via_strip(coeffs, grid=None, strip_depth=None, strip_step=None, method="blocks"):
    """Trace-to-flux matrix of a finite-difference strip discretization.

    Lumped linear elements in ``t`` on a uniform mesh (equivalent to
    second-order centered differences), spectral differentiation in ``x``.
    The interior unknowns are eliminated onto the ``t = 0`` trace.  At the
    bottom of the strip the solution is constrained to the span of the
    gradient kernel, which makes the kernel modes zero-flux exactly.

    Parameters
    ----------
    coeffs : Coefficients
    grid : HalfGrid, optional
    strip_depth : float, optional
        Defaults to :func:`default_strip_depth`.
    strip_step : float, optional
        Defaults to :func:`default_strip_step`.
    method : {'blocks', 'sparse'}
        Block Schur recursion or one sparse factorization of the assembled
        strip operator.

    Returns
    -------
    ndarray, shape (n, n)
    """
    grid = coeffs.grid if grid is None else grid
    D = gradient_matrices(grid)
    kernel = null_modes(grid)
    pencil = build_pencil(coeffs, D)
    depth = default_strip_depth(grid, coeffs.lip) if strip_depth is None else float(strip_depth)
    step = default_strip_step(grid) if strip_step is None else float(strip_step)
    if not (depth > 0 and step > 0):
        raise ValueError("strip depth and step must be positive")
    M, h, top, interior, off, bottom, bottom_off = _strip_blocks(pencil, kernel, depth, step)
    n = pencil.n
    if method == "blocks":
        X = bottom
        coup = bottom_off
        for k in range(M - 1, -1, -1):
            diag = top if k == 0 else interior
            try:
                cf = sla.cho_factor(X)
            except np.linalg.LinAlgError:
                raise np.linalg.LinAlgError("singular interior block in strip elimination") from None
            X = diag - coup @ sla.cho_solve(cf, coup.T)
            X = 0.5 * (X + X.T)
            coup = off
        return X
    if method != "sparse":
        raise ValueError(f"unknown method {method!r}")
    m = kernel.shape[1]
    blocks = [[None] * (M + 1) for _ in range(M + 1)]
    for k in range(M):
        blocks[k][k] = sp.csr_matrix(top if k == 0 else interior)
        if k + 1 < M:
            blocks[k][k + 1] = sp.csr_matrix(off)
            blocks[k + 1][k] = sp.csr_matrix(off.T)
    blocks[M][M] = sp.csr_matrix(bottom)
    blocks[M - 1][M] = sp.csr_matrix(bottom_off)
    blocks[M][M - 1] = sp.csr_matrix(bottom_off.T)
    S = sp.bmat(blocks, format="csc")
    rest = np.arange(n, M * n + m)
    Srr = S[rest][:, rest].tocsc()
    Sr0 = S[rest][:, :n].toarray()
    lu = spla.splu(Srr)
    X = top - Sr0.T @ lu.solve(Sr0)
    return 0.5 * (X + X.T)


def fourier_symbol_oracle(c, xi):
    """Poisson and Dirichlet-to-Neumann symbols for a constant slope ``c``
    at frequency ``xi`` (``d = 1``).

    Roots of ``b mu^2 - 2 i a xi mu - xi^2 = 0`` with ``a = -c``,
    ``b = 1 + c^2``; the root with positive real part generates decay.

    Returns
    -------
    mu_P : complex
    lam : float
    """
    xi = float(xi)
    if xi == 0:
        raise ValueError("xi must be nonzero")
    a = -float(c)
    b = 1.0 + a * a
    lam = np.sqrt(b * xi * xi - (a * xi) ** 2)
    return complex(1j * a * xi + lam) / b, float(lam)
