import math

import numpy as np
import pytest

from graphhelmholtz.geometry import (
    GraphDomainSpec,
    OmegaVectorField,
    build_coefficients,
    ellipticity_bounds,
    omega_points,
    physical_gradient,
    pull_back_gradient,
    pull_forward,
    push_forward,
)
from graphhelmholtz.grid import HalfSpaceField, make_grid

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def g16():
    return make_grid(1, 16, TWO_PI, 2.0, 9, 1.0)


class TestDomainSpec:
    def test_flat_coefficients(self, g16):
        c = build_coefficients(GraphDomainSpec("flat"), g16)
        assert np.array_equal(c.a, np.zeros((1, 16)))
        assert np.array_equal(c.b, np.ones(16))
        assert c.nu1 == 1.0 and c.nu2 == 1.0

    def test_slope_coefficients(self, g16):
        c = build_coefficients(GraphDomainSpec("slope", {"c": 2.0}), g16)
        assert np.allclose(c.a, -2.0) and np.allclose(c.b, 5.0)
        assert np.allclose(c.matrix(3), [[1, -2], [-2, 5]])

    def test_sine_from_lip(self):
        dom = GraphDomainSpec("sine", lip=2.0)
        assert math.isclose(dom.params["alpha"], 2.0)
        x = np.linspace(0, TWO_PI, 7)[:, None]
        assert np.allclose(dom.eta(x), 2.0 * np.sin(x[:, 0]))
        assert np.allclose(dom.grad_eta(x)[:, 0], 2.0 * np.cos(x[:, 0]))

    def test_sine_two_dimensional(self):
        dom = GraphDomainSpec("sine", {"alpha": 0.5}, d=2)
        assert math.isclose(dom.lip, 0.5 * math.sqrt(2))
        g = make_grid(2, 8, TWO_PI, 1.0, 3)
        c = build_coefficients(dom, g)
        assert c.a.shape == (2, 64)
        assert np.allclose(c.b, 1 + np.sum(c.a**2, axis=0))

    def test_samples_interpolate_trig_profile(self):
        M = 32
        x = np.arange(M) * TWO_PI / M
        dom = GraphDomainSpec("samples", {"values": (0.3 * np.sin(2 * x) + 0.1 * np.cos(x)).tolist()})
        y = np.array([[0.123], [1.7], [4.4]])
        assert np.allclose(dom.eta(y)[:], 0.3 * np.sin(2 * y[:, 0]) + 0.1 * np.cos(y[:, 0]), atol=1e-12)
        assert math.isclose(dom.lip, np.max(np.abs(0.6 * np.cos(2 * x) - 0.1 * np.sin(x))), rel_tol=1e-9)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(kind="bump"), dict(kind="slope", params={"c": 1.0, "alpha": 1.0}), dict(kind="sine"),
         dict(kind="sine", params={"alpha": 1.0}, lip=0.5), dict(kind="flat", lip=-1.0),
         dict(kind="samples", params={"values": [0.0, 1.0, 2.0]}), dict(kind="flat", d=3),
         dict(kind="sine", params={"alpha": 1.0, "m": 1.5})],
    )
    def test_rejections(self, kwargs):
        with pytest.raises(ValueError):
            GraphDomainSpec(**kwargs)

    def test_period_mismatch(self, g16):
        with pytest.raises(ValueError):
            build_coefficients(GraphDomainSpec("sine", {"alpha": 0.5}, L=4.0), g16)

    def test_describe_is_plain(self):
        desc = GraphDomainSpec("samples", {"values": [0, 1, 0, -1]}).describe()
        assert desc["params"]["values"] == [0.0, 1.0, 0.0, -1.0] and desc["kind"] == "samples"


class TestEllipticity:
    @pytest.mark.parametrize("lip", [0.0, 0.5, 2.0, 5.0])
    def test_matches_eigenvalues(self, lip):
        A = np.array([[1.0, -lip], [-lip, 1 + lip**2]])
        lo, hi = ellipticity_bounds(lip)
        ev = np.linalg.eigvalsh(A)
        assert math.isclose(lo, ev[0], rel_tol=1e-12) and math.isclose(hi, ev[-1], rel_tol=1e-12)
        assert math.isclose(lo * hi, 1.0, rel_tol=1e-12)


class TestFields:
    def test_points_are_shifted_nodes(self, g16):
        dom = GraphDomainSpec("sine", {"alpha": 0.5})
        pts = omega_points(dom, g16)
        assert pts.shape == (9, 16, 2)
        assert np.allclose(pts[4, :, 1], g16.t[4] + 0.5 * np.sin(g16.axis))
        assert np.array_equal(pts[2, :, 0], g16.axis)

    def test_from_function_and_round_trip(self, g16):
        dom = GraphDomainSpec("sine", {"alpha": 0.5})
        f = OmegaVectorField.from_function(dom, g16, lambda p: np.stack([p[..., 0], p[..., 1]], -1))
        assert np.allclose(f.values[1], f.points[..., 1])
        F = push_forward(f)
        assert isinstance(F, HalfSpaceField)
        assert np.array_equal(pull_forward(dom, F).values, f.values)

    def test_rejects_foreign_points_and_bad_values(self, g16):
        dom = GraphDomainSpec("sine", {"alpha": 0.5})
        pts = omega_points(dom, g16)
        with pytest.raises(ValueError):
            OmegaVectorField(dom, g16, np.zeros((2, 9, 16)), points=pts + 0.1)
        with pytest.raises(ValueError):
            OmegaVectorField(dom, g16, np.full((2, 9, 16), np.nan))
        with pytest.raises(ValueError):
            OmegaVectorField(dom, g16, np.zeros((1, 9, 16)))

    def test_arithmetic(self, g16):
        dom = GraphDomainSpec("flat")
        f = OmegaVectorField(dom, g16, np.ones((2, 9, 16)))
        assert np.array_equal((2 * f - f + f * 0.5).values, 1.5 * np.ones((2, 9, 16)))

    def test_pull_back_gradient_of_linear_potential(self):
        # p(y, s) = s, so w(x, t) = t + eta(x) and grad p = (0, 1)
        g = make_grid(1, 32, TWO_PI, 2.0, 9, 1.0)
        dom = GraphDomainSpec("sine", {"alpha": 0.7})
        T, X = np.meshgrid(g.t, g.axis, indexing="ij")
        w = HalfSpaceField(g, T + 0.7 * np.sin(X))
        gp = pull_back_gradient(dom, w, HalfSpaceField(g, np.ones_like(T)))
        assert np.allclose(gp.values[0], 0.0, atol=1e-12) and np.allclose(gp.values[1], 1.0)

    def test_physical_gradient_shear(self, g16):
        c = build_coefficients(GraphDomainSpec("slope", {"c": 2.0}), g16)
        gw = np.stack([np.zeros((9, 16)), np.ones((9, 16))])
        out = physical_gradient(c, gw)
        assert np.allclose(out[0], -2.0) and np.allclose(out[1], 1.0)
