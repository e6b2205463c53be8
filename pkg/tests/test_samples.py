import math

import numpy as np
import pytest

from graphhelmholtz.geometry import GraphDomainSpec
from graphhelmholtz.grid import make_grid
from graphhelmholtz.samples import (
    RandomField,
    TrigPattern,
    bump,
    bump_derivative,
    curl_field,
    gradient_field,
    potential_battery,
    random_fields,
    random_trig_vectors,
    smooth_step,
)

TWO_PI = 2 * math.pi


def test_bump_values_and_derivative():
    assert bump(np.array([0.0]))[0] == 1.0
    assert not bump(np.array([-1.0, 1.0, 2.0])).any()
    s = np.linspace(-0.9, 0.9, 7)
    h = 1e-6
    fd = (bump(s + h) - bump(s - h)) / (2 * h)
    assert np.allclose(bump_derivative(s), fd, atol=1e-8)


def test_smooth_step():
    v = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert np.array_equal(v[[0, 1]], [0.0, 0.0]) and np.array_equal(v[[3, 4]], [1.0, 1.0])
    assert math.isclose(v[2], 0.5)


def test_trig_pattern_gradient():
    pat = TrigPattern.random(np.random.default_rng(0), 3, 1, TWO_PI)
    x = np.linspace(0, TWO_PI, 11)[:, None]
    h = 1e-6
    fd = (pat.value(x + h) - pat.value(x - h)) / (2 * h)
    assert np.allclose(pat.gradient(x)[0], fd, atol=1e-7)
    assert np.allclose(pat.value(x[:1] + TWO_PI), pat.value(x[:1]))


def test_random_field_grid_independent():
    rf = RandomField.draw(3)
    g1 = make_grid(1, 16, TWO_PI, 8.0, 17, 1.0)
    g2 = make_grid(1, 32, TWO_PI, 8.0, 33, 1.0)
    v1, v2 = rf.flattened_values(g1), rf.flattened_values(g2)
    assert np.allclose(v1, v2[:, ::2, ::2], atol=1e-14)
    assert np.array_equal(RandomField.draw(3).flattened_values(g1), v1)


def test_random_field_support():
    g = make_grid(1, 16, TWO_PI, 8.0, 81, 1.0)
    v = RandomField.draw(4, support=(1.0, 3.0)).flattened_values(g)
    outside = (g.t <= 1.0) | (g.t >= 3.0)
    assert not v[:, outside].any() and v[:, ~outside].any()


def test_random_fields_seeds():
    g = make_grid(1, 16, TWO_PI, 8.0, 17, 1.0)
    dom = GraphDomainSpec("flat")
    a, b = random_fields([1, 2], dom, g)
    assert not np.array_equal(a.values, b.values)


def test_battery_reproducible_and_boundary_mix():
    g = make_grid(1, 16, TWO_PI, 8.0, 17, 1.0)
    b1, b2 = potential_battery(g), potential_battery(g)
    assert len(b1) == 32
    assert all(np.array_equal(p.value(g), q.value(g)) for p, q in zip(b1, b2))
    reach = [p.center - p.radius < 0 for p in b1]
    assert sum(reach) == 16
    assert all(p.center + p.radius < g.T for p in b1)


@pytest.mark.parametrize("kind", ["gradient", "curl"])
def test_fields_have_compact_support(kind):
    g = make_grid(1, 16, TWO_PI, 8.0, 33, 1.0)
    dom = GraphDomainSpec("sine", {"alpha": 0.5})
    f = (gradient_field if kind == "gradient" else curl_field)(dom, g, seed=1)
    assert not f.values[:, 0].any() and not f.values[:, -1].any()
    assert np.abs(f.values).max() > 0


def test_random_trig_vectors():
    g = make_grid(1, 32, TWO_PI, 1.0, 3)
    V = random_trig_vectors(g, 5, seed=1)
    assert V.shape == (32, 5)
    assert np.abs(V.sum(axis=0)).max() < 1e-12
    W = random_trig_vectors(make_grid(1, 64, TWO_PI, 1.0, 3), 5, seed=1, kmax=g.N // 6)
    assert np.allclose(W[::2], V, atol=1e-13)
