import math
from types import SimpleNamespace

import numpy as np
import pytest

from graphhelmholtz.geometry import GraphDomainSpec, build_coefficients
from graphhelmholtz.grid import gradient_matrices, make_grid, trig_basis
from graphhelmholtz.operators import (
    build_bundle,
    build_pencil,
    default_strip_step,
    dtn_via_strip,
    fourier_symbol_oracle,
    group_inverse,
    rel_residual,
)

TWO_PI = 2 * math.pi


def _bundle(kind, params=None, N=32):
    g = make_grid(1, N, TWO_PI, 1.0, 3)
    c = build_coefficients(GraphDomainSpec(kind, params or {}), g)
    return g, c, build_bundle(c)


@pytest.fixture(scope="module")
def slope2():
    return _bundle("slope", {"c": 2.0})


@pytest.fixture(scope="module")
def sine():
    return _bundle("sine", {"alpha": 0.5}, N=64)


class TestPencil:
    def test_flat(self):
        g = make_grid(1, 16, TWO_PI, 1.0, 3)
        D = gradient_matrices(g)
        p = build_pencil(build_coefficients(GraphDomainSpec("flat"), g), D)
        assert np.array_equal(p.M2, np.eye(16)) and not p.M1.any()
        assert np.allclose(p.M0, D[0].T @ D[0])

    def test_slope(self):
        g = make_grid(1, 16, TWO_PI, 1.0, 3)
        D = gradient_matrices(g)
        p = build_pencil(build_coefficients(GraphDomainSpec("slope", {"c": 2.0}), g), D)
        assert np.allclose(p.M2, 5 * np.eye(16)) and np.allclose(p.M1, -4 * D[0])

    def test_rejects_nonpositive_b_and_non_skew(self):
        g = make_grid(1, 8, TWO_PI, 1.0, 3)
        D = gradient_matrices(g)
        bad = SimpleNamespace(a=np.zeros((1, 8)), b=np.r_[np.ones(7), 0.0])
        with pytest.raises(ValueError):
            build_pencil(bad, D)
        ok = SimpleNamespace(a=np.zeros((1, 8)), b=np.ones(8))
        with pytest.raises(ValueError):
            build_pencil(ok, np.abs(D))


class TestSymbols:
    def test_oracle_examples(self):
        mu, lam = fourier_symbol_oracle(0.0, 3.0)
        assert mu == 3.0 and lam == 3.0
        mu, lam = fourier_symbol_oracle(2.0, 1.0)
        assert np.isclose(mu, 0.2 - 0.4j, atol=1e-15) and math.isclose(lam, 1.0)
        with pytest.raises(ValueError):
            fourier_symbol_oracle(1.0, 0.0)

    def test_flat_dtn_is_abs_wavenumber(self):
        g, _, B = _bundle("flat")
        x = g.axis
        for k in range(1, 16):
            assert np.allclose(B.Lambda @ np.cos(k * x), k * np.cos(k * x), atol=1e-10)
        assert np.allclose(B.P, B.Lambda, atol=1e-12)

    def test_slope_mode_one(self, slope2):
        g, _, B = slope2
        e = np.exp(1j * g.axis)
        assert np.allclose(B.P @ e, (0.2 - 0.4j) * e, atol=1e-11)
        assert np.allclose(B.Q @ e, (0.2 + 0.4j) * e, atol=1e-11)
        assert np.allclose(B.Lambda @ e, e, atol=1e-11)

    def test_kernel_annihilated(self, sine):
        g, _, B = sine
        one = np.ones(g.n)
        assert np.abs(B.P @ one).max() < 1e-10 and np.abs(B.Lambda @ one).max() < 1e-10
        assert B.kernel.shape == (g.n, 2)


class TestCertificates:
    @pytest.mark.parametrize("which", ["slope2", "sine"])
    def test_identities(self, which, request):
        B = request.getfixturevalue(which)[2]
        cert = B.certificates
        for key in ("lambda_from_poisson", "adjoint_generator", "factorization_second_order",
                    "factorization_first_order", "quadratic_pencil", "rellich", "kernel_annihilation"):
            assert cert[key] < 1e-9, key
        assert cert["generator_min_real_part"] > 0
        assert cert["lambda_min_eigenvalue"] > -1e-9 and cert["lambda_gap"] > 0.1
        assert np.allclose(B.Lambda, B.Lambda.T)

    def test_group_inverse(self, sine):
        B = sine[2]
        X = B.p_ginv
        assert rel_residual(B.P @ X @ B.P, B.P) < 1e-9
        assert rel_residual(X @ B.P @ X, X) < 1e-9
        assert rel_residual(B.P @ X, X @ B.P) < 1e-9

    def test_group_inverse_small(self):
        A = np.diag([2.0, 0.0])
        e = np.array([[0.0], [1.0]])
        assert np.allclose(group_inverse(A, e, e), np.diag([0.5, 0.0]))

    def test_rel_residual_zero(self):
        assert rel_residual(np.zeros(3), np.zeros(3)) == 0.0


class TestStrip:
    def _gap(self, c, g, kcut, step=None):
        B = build_bundle(c)
        R = trig_basis(g, kcut)
        ref = R.T @ B.Lambda @ R
        S = dtn_via_strip(c, strip_step=step)
        return np.linalg.norm(R.T @ S @ R - ref, 2) / np.linalg.norm(ref, 2)

    def test_flat_low_modes(self):
        g = make_grid(1, 32, TWO_PI, 1.0, 3)
        c = build_coefficients(GraphDomainSpec("flat"), g)
        S = dtn_via_strip(c)
        x = g.axis
        for k in range(1, 9):
            v = np.cos(k * x)
            assert abs(v @ S @ v / (v @ v) - k) / k <= 0.02

    def test_sine_within_three_percent(self, sine):
        g, c, _ = sine
        assert self._gap(c, g, g.N // 4) <= 0.03

    def test_second_order_in_step(self, sine):
        g, c, _ = sine
        h = default_strip_step(g)
        ratio = self._gap(c, g, g.N // 4, h) / self._gap(c, g, g.N // 4, h / 2)
        assert 3.5 < ratio < 4.5

    def test_sparse_matches_blocks(self):
        g = make_grid(1, 16, TWO_PI, 1.0, 3)
        c = build_coefficients(GraphDomainSpec("sine", {"alpha": 0.5}), g)
        a = dtn_via_strip(c, strip_depth=3.0)
        b = dtn_via_strip(c, strip_depth=3.0, method="sparse")
        assert rel_residual(a, b) < 1e-10
        with pytest.raises(ValueError):
            dtn_via_strip(c, method="dense")
        with pytest.raises(ValueError):
            dtn_via_strip(c, strip_depth=-1.0)
