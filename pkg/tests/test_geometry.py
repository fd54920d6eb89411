import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repinv import catalog, geometry
from repinv.errors import DimensionMismatch, NonFiniteField, SingularMetric
from repinv.geometry import MetricField, OneFormField


def test_flat_christoffel_and_riemann_vanish():
    g = catalog.minkowski()
    x = [0.1, 0.2, 0.3, 0.4]
    assert np.all(geometry.christoffel(g, x) == 0)
    assert np.all(geometry.riemann(g, x) == 0)


def test_polar_christoffel():
    # Gamma^r_thth = -r, Gamma^th_rth = 1/r
    G = geometry.christoffel(catalog.polar(), [2.0, 0.3])
    assert math.isclose(G[0, 1, 1], -2.0, rel_tol=1e-14)
    assert math.isclose(G[1, 0, 1], 0.5, rel_tol=1e-14)
    assert G[1, 0, 1] == G[1, 1, 0]
    assert G[0, 0, 0] == 0


def test_schwarzschild_christoffel_closed_form():
    M, r, th = 1.0, 6.0, 1.1
    G = geometry.christoffel(catalog.schwarzschild(M), [0.0, r, th, 0.0])
    expect = {
        (0, 0, 1): M / (r * (r - 2 * M)),
        (1, 0, 0): M * (r - 2 * M) / r**3,
        (1, 1, 1): -M / (r * (r - 2 * M)),
        (1, 2, 2): -(r - 2 * M),
        (1, 3, 3): -(r - 2 * M) * math.sin(th) ** 2,
        (2, 1, 2): 1 / r,
        (2, 3, 3): -math.sin(th) * math.cos(th),
        (3, 2, 3): math.cos(th) / math.sin(th),
    }
    for (a, b, c), val in expect.items():
        assert math.isclose(G[a, b, c], val, rel_tol=1e-12), (a, b, c)


def test_sphere_riemann_and_ricci():
    th = 0.7
    R = geometry.riemann(catalog.sphere(1.0), [th, 0.2])
    assert math.isclose(R[0, 1, 0, 1], math.sin(th) ** 2, rel_tol=1e-12)
    assert math.isclose(R[0, 1, 1, 0], -math.sin(th) ** 2, rel_tol=1e-12)
    Ric = geometry.ricci(catalog.sphere(1.0), [th, 0.2])
    assert np.allclose(Ric, np.diag([1.0, math.sin(th) ** 2]), atol=1e-12)


def test_schwarzschild_kretschmann():
    # R_abcd R^abcd = 48 M^2 / r^6
    g = catalog.schwarzschild(1.0)
    x = [0.0, 5.0, 1.2, 0.0]
    R = geometry.riemann(g, x)
    gx = g(x)
    gi = np.linalg.inv(gx)
    low = np.einsum("ae,ebcd->abcd", gx, R)
    up = np.einsum("ae,bf,cg,dh,efgh->abcd", gi, gi, gi, gi, low)
    assert math.isclose(np.sum(low * up), 48.0 / 5.0**6, rel_tol=1e-9)


def test_riemann_symmetries_on_polynomial_metric(rng):
    from repinv.checks import random_metric

    g = random_metric(rng, 4, eps=0.1)
    x = rng.uniform(-1, 1, 4)
    R = geometry.riemann(g, x)
    low = np.einsum("ae,ebcd->abcd", g(x), R)
    assert np.allclose(R, -R.transpose(0, 1, 3, 2), atol=1e-13)
    assert np.allclose(low, -low.transpose(1, 0, 2, 3), atol=1e-12)
    assert np.allclose(low, low.transpose(2, 3, 0, 1), atol=1e-12)
    bianchi = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
    assert np.allclose(bianchi, 0, atol=1e-12)


def test_faraday_uniform_field():
    F = geometry.faraday(catalog.uniform_magnetic(2.0), [0.0, 0.3, -0.2, 0.0])
    # F_xy = d_x A_y - d_y A_x = B
    assert F[1, 2] == 2.0 and F[2, 1] == -2.0
    assert np.count_nonzero(F) == 2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_faraday_is_antisymmetric(x):
    A = catalog.polynomial_one_form(4, {0: [(1.0, [0, 1, 0, 0])], 1: [(0.5, [1, 0, 2, 0])], 3: [(2.0, [0, 0, 1, 1])]})
    F = geometry.faraday(A, x)
    assert np.array_equal(F, -F.T)


def test_geodesic_acceleration_matches_christoffel(rng):
    g = catalog.schwarzschild(1.0)
    x, v = np.array([0.0, 7.0, 1.0, 0.5]), rng.normal(size=4)
    a = geometry.geodesic_acceleration(g, x, v)
    assert np.allclose(a, -np.einsum("abc,b,c->a", geometry.christoffel(g, x), v, v), rtol=1e-12, atol=1e-15)


def test_symmetric_contract_multiplicities():
    S = catalog.polynomial_symmetric(3, 2, {(0, 0, 1): [(1.0, [0, 0])]})
    # S(v,v,v) = 3 S_001 v0^2 v1
    assert math.isclose(geometry.symmetric_contract(S, [0, 0], [2.0, 3.0]), 36.0)
    assert geometry.multiplicity((0, 0, 1)) == 3
    assert len(geometry.multisets(4, 2)) == 10


def test_metric_validation_errors():
    g = catalog.polar()
    with pytest.raises(SingularMetric):
        geometry.christoffel(g, [0.0, 0.0])
    with pytest.raises(SingularMetric):
        g.validate([0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        MetricField(lambda x: [[1.0]], 1, (1, 1))
    bad = MetricField(lambda x: [[1.0, 0.0], [0.0, 1.0 / x[0]]], 2, (1, 1))
    with pytest.raises(NonFiniteField), np.errstate(divide="ignore"):
        bad([0.0, 0.0])
    with pytest.raises(ValueError, match="eigenvalue signs"):
        MetricField(lambda x: [[1.0, 0.0], [0.0, 1.0]], 2, (1, -1)).validate([0, 0])


def test_one_form_batch_and_jet():
    A = catalog.uniform_magnetic(1.0)
    pts = np.random.default_rng(0).normal(size=(4, 3, 5))
    vals = A.batch(pts)
    assert vals.shape == (4, 3, 5)
    assert np.allclose(vals[1], -0.5 * pts[2])
    _, dA = OneFormField(A.func, 4).jet([0, 1, 2, 3])
    assert dA[1, 2] == -0.5 and dA[2, 1] == 0.5
