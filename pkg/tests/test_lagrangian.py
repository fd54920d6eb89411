import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repinv import autodiff as ad
from repinv import catalog, geometry, lagrangian
from repinv.checks import random_canonical_spec, random_metric, random_state
from repinv.errors import DimensionMismatch, DomainError, NoSuchTerm, UndefinedDegree
from repinv.geometry import SymmetricTensorField
from repinv.lagrangian import GaugeScalarField, LagrangianSpec, LagrangianTerm

ETA = catalog.minkowski()


def test_combined_value():
    # q A.v + m sqrt(g v v) with A = (0, -y/2, x/2, 0) at x = (0, 1, 0, 0), v = (1.25, 0, 0.75, 0)
    L = lagrangian.particle(ETA, catalog.uniform_magnetic(1.0), m=1.0, q=0.4)
    val = lagrangian.eval_lagrangian(L, [0, 1, 0, 0], [1.25, 0, 0.75, 0])
    assert math.isclose(val, 0.4 * 0.5 * 0.75 + 1.0, rel_tol=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        LagrangianTerm(2, catalog.uniform_magnetic(1.0))
    with pytest.raises(ValueError):
        LagrangianTerm(1, catalog.uniform_magnetic(1.0), coupling=float("nan"))
    with pytest.raises(ValueError):
        LagrangianSpec((LagrangianTerm(2, ETA), LagrangianTerm(2, ETA)))
    with pytest.raises((ValueError, DimensionMismatch)):
        LagrangianSpec((LagrangianTerm(2, ETA), LagrangianTerm(1, catalog.uniform_magnetic(1.0, dim=3))))
    with pytest.raises(NoSuchTerm):
        lagrangian.particle(ETA).term(3)


def test_root_domain():
    L = lagrangian.particle(ETA)
    with pytest.raises(DomainError):
        lagrangian.eval_lagrangian(L, [0, 0, 0, 0], [0.1, 1, 0, 0])
    assert lagrangian.nth_root(-8.0, 3) == -2.0
    with pytest.raises(DomainError):
        lagrangian.nth_root(0.0, 3)
    with pytest.raises(DimensionMismatch):
        lagrangian.eval_lagrangian(L, [0, 0, 0], [1, 0, 0, 0])


def test_degree_estimates():
    x, v = [0, 0, 0, 0], [2.0, 0.3, 0.1, 0.0]
    d1, r1 = lagrangian.homogeneity_check(lagrangian.particle(ETA), x, v, 3.0)
    d2, r2 = lagrangian.homogeneity_check(lagrangian.quadratic(ETA), x, v, 3.0)
    d3, _ = lagrangian.homogeneity_check(lagrangian.power_of_length(ETA, 3), x, v, 0.5)
    assert abs(d1 - 1) < 1e-14 and abs(d2 - 2) < 1e-14 and abs(d3 - 3) < 1e-14
    assert r1 < 1e-15 and r2 < 1e-14
    with pytest.raises(ValueError):
        lagrangian.homogeneity_check(lagrangian.particle(ETA), x, v, 1.0)


def test_undefined_degree():
    # A.v alone vanishes for v orthogonal to A
    L = LagrangianSpec((LagrangianTerm(1, catalog.constant_one_form([1.0, 0, 0, 0])),))
    with pytest.raises(UndefinedDegree):
        lagrangian.homogeneity_check(L, [0, 0, 0, 0], [0.0, 1.0, 0, 0], 2.0)


def test_hamiltonian_values():
    x, v = [0, 0, 0, 0], [2.0, 0.0, 0.0, 0.0]
    assert abs(lagrangian.hamiltonian(lagrangian.particle(ETA, catalog.uniform_magnetic()), x, v)) < 1e-15
    # L2 = 4, h = 4; (L1)^3 = 8, h = 16
    assert math.isclose(lagrangian.hamiltonian(lagrangian.quadratic(ETA), x, v), 4.0)
    assert math.isclose(lagrangian.hamiltonian(lagrangian.power_of_length(ETA, 3), x, v), 16.0)


def test_hessian_degree1_and_degree2():
    H = lagrangian.hessian_vv(lagrangian.particle(ETA), [0, 0, 0, 0], [1.25, 0.75, 0, 0])
    assert abs(np.linalg.det(H)) < 1e-14
    assert np.allclose(H @ np.array([1.25, 0.75, 0, 0]), 0, atol=1e-15)
    H2 = lagrangian.hessian_vv(lagrangian.quadratic(ETA), [0, 0, 0, 0], [1.25, 0.75, 0, 0])
    assert np.allclose(H2, 2 * np.diag([1, -1, -1, -1]))


def _perturbed(L, n, key, eps):
    t = L.term(n)
    S = t.field

    def func(x):
        comps = dict(S.func(x))
        comps[key] = comps.get(key, 0.0) + eps
        return comps

    new = LagrangianTerm(n, SymmetricTensorField(n, S.dim, func), t.coupling)
    return LagrangianSpec(tuple(new if u.order == n else u for u in L.terms), L.homogeneity)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_source_density_matches_finite_difference(n, rng):
    worst = 0.0
    for _ in range(10):
        L = random_canonical_spec(rng)
        if n == 3 and 3 not in [t.order for t in L.terms]:
            L = LagrangianSpec(L.terms + (LagrangianTerm(3, catalog.polynomial_symmetric(3, 4, {(0, 0, 0): [(1.0, [0, 0, 0, 0])]}), 0.1),))
        if n == 1 and 1 not in [t.order for t in L.terms]:
            L = LagrangianSpec(L.terms + (LagrangianTerm(1, catalog.constant_one_form([0.1, 0, 0, 0]), 0.3),))
        x, v = random_state(rng)
        src = lagrangian.source_density(L, n, x, v)
        assert src.shape == (4,) * n
        for key in geometry.multisets(4, n):
            eps = 1e-6
            fd = (lagrangian.eval_lagrangian(_perturbed(L, n, key, eps), x, v) - lagrangian.eval_lagrangian(_perturbed(L, n, key, -eps), x, v)) / (2 * eps)
            exact = geometry.multiplicity(key) * src[key]
            worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-3))
    assert worst <= 1e-6


def test_source_density_closed_form():
    # n = 2 on eta with v = (1, 0, 0, 0): 1/2 * 1^(-1/2) * v v
    src = lagrangian.source_density(lagrangian.particle(ETA), 2, [0, 0, 0, 0], [1, 0, 0, 0])
    assert src[0, 0] == 0.5 and np.count_nonzero(src) == 1
    raw = lagrangian.source_density(lagrangian.quadratic(ETA), 2, [0, 0, 0, 0], [2, 1, 0, 0])
    assert np.array_equal(raw, np.outer([2, 1, 0, 0], [2, 1, 0, 0]))


def test_two_metric_same_source(rng):
    for _ in range(20):
        h, g = random_metric(rng), random_metric(rng)
        x, v = random_state(rng)
        sh, sg = lagrangian.two_metric_sources(h, g, x, v)
        vv = np.outer(v, v)
        for S in (sh, sg):
            lam = np.sum(S * vv) / np.sum(vv * vv)
            assert np.max(np.abs(S - lam * vv)) <= 1e-9 * np.max(np.abs(S))


def test_two_metric_value_is_degree_one():
    h, g = np.diag([2.0, -1, -1, -1]), np.diag([1.0, -1, -1, -1])
    v = np.array([1.5, 0.2, 0.1, 0.3])
    assert math.isclose(lagrangian.two_metric_value(h, g, 3.0 * v), 3.0 * lagrangian.two_metric_value(h, g, v))
    with pytest.raises(DomainError):
        lagrangian.two_metric_value(h, g, [0.1, 1, 0, 0])


def test_gauge_shift_adds_total_derivative(rng):
    L = lagrangian.particle(ETA, catalog.uniform_magnetic(1.0), q=0.7)
    lam = GaugeScalarField(lambda x: ad.sin(x[0]) * x[1] + x[2] ** 2, 4)
    Ls = lagrangian.gauge_shift(L, lam)
    for _ in range(5):
        x, v = random_state(rng)
        grad = np.array([math.cos(x[0]) * x[1], math.sin(x[0]), 2 * x[2], 0.0])
        assert math.isclose(lagrangian.eval_lagrangian(Ls, x, v), lagrangian.eval_lagrangian(L, x, v) + grad @ v, rel_tol=1e-14)
    # a spec without a one-form gains one
    Lq = lagrangian.gauge_shift(lagrangian.particle(ETA), lam)
    assert Lq.term(1).coupling == 1.0


def test_phase_gradient_matches_finite_difference(rng):
    L = random_canonical_spec(rng)
    x, v = random_state(rng)
    val, px, pv = lagrangian.phase_gradient(L, x, v)
    fx = ad.central_difference(lambda y: lagrangian.eval_lagrangian(L, y, v), x)
    fv = ad.central_difference(lambda w: lagrangian.eval_lagrangian(L, x, w), v)
    assert np.allclose(px, fx, rtol=1e-7, atol=1e-9)
    assert np.allclose(pv, fv, rtol=1e-7, atol=1e-9)


def test_batch_phase_gradient_matches_pointwise(rng):
    L = random_canonical_spec(rng)
    pts = [random_state(rng) for _ in range(6)]
    X = np.array([p[0] for p in pts])
    V = np.array([p[1] for p in pts])
    val, px, pv = lagrangian.batch_phase_gradient(L, X, V)
    for i, (x, v) in enumerate(pts):
        a, b, c = lagrangian.phase_gradient(L, x, v)
        assert math.isclose(val[i], a, rel_tol=1e-13)
        assert np.allclose(px[i], b, rtol=1e-12, atol=1e-14)
        assert np.allclose(pv[i], c, rtol=1e-12, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 20.0))
def test_degree_one_scaling_property(seed, alpha):
    rng = np.random.default_rng(seed)
    L = random_canonical_spec(rng)
    x, v = random_state(rng)
    l1 = lagrangian.eval_lagrangian(L, x, v)
    assert math.isclose(lagrangian.eval_lagrangian(L, x, alpha * v), alpha * l1, rel_tol=1e-12)
    assert abs(lagrangian.hamiltonian(L, x, v)) <= 1e-9 * abs(l1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_power_of_length_energy_property(seed, n):
    rng = np.random.default_rng(seed)
    g = random_metric(rng)
    x, v = random_state(rng)
    L = lagrangian.power_of_length(g, n)
    val = lagrangian.eval_lagrangian(L, x, v)
    assert abs(lagrangian.hamiltonian(L, x, v) - (n - 1) * val) <= 1e-9 * abs(val)
