import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repinv import autodiff as ad
from repinv import catalog, dynamics, lagrangian
from repinv.dynamics import Trajectory
from repinv.errors import DomainError, NonFiniteField, NonMonotone, StepRejected

ETA = catalog.minkowski()


def straight_line(n=41, h=0.05):
    tau = h * np.arange(n)
    v = np.array([1.25, 0.75, 0.0, 0.0])
    return Trajectory(tau, tau[:, None] * v[None, :], np.tile(v, (n, 1)), gauge="proper_time")


def test_trajectory_validation():
    with pytest.raises(NonMonotone):
        Trajectory([0.0, 0.0, 1.0], np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], np.zeros((2, 2)), np.zeros((2, 2)), gauge="wibble")
    with pytest.raises(NonFiniteField):
        Trajectory([0.0, 1.0], [[0, 0], [np.inf, 0]], np.zeros((2, 2)))


def test_csv_round_trip_is_exact(tmp_path):
    tr = dynamics.integrate_geodesic(catalog.schwarzschild(), [0, 8.0, 1.0, 0.0], [1.2, 0.01, 0.02, 0.03], 0.05, 40)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    assert p.read_text().splitlines()[0] == "tau,x0,x1,x2,x3,v0,v1,v2,v3"
    back = Trajectory.from_csv(p)
    assert np.array_equal(back.params, tr.params)
    assert np.array_equal(back.events, tr.events)
    assert np.array_equal(back.velocities, tr.velocities)


def test_flat_geodesic_is_straight():
    tr = dynamics.integrate_geodesic(ETA, [0, 0, 0, 0], [2.0, 1.0, 0.5, 0.0], 0.1, 50)
    v0 = np.array([2.0, 1.0, 0.5, 0.0]) / math.sqrt(4 - 1 - 0.25)
    assert np.allclose(tr.velocities, v0, atol=1e-15)
    assert np.allclose(tr.events, tr.params[:, None] * v0, atol=1e-13)
    assert tr.meta["n_steps"] == 50 and tr.gauge == "proper_time"


def test_initial_state_errors():
    with pytest.raises(DomainError):
        dynamics.integrate_geodesic(ETA, [0, 0, 0, 0], [0.1, 1.0, 0, 0])
    with pytest.raises(ValueError):
        dynamics.integrate_geodesic(ETA, [0, 0, 0, 0], [1.0, 0, 0, 0], gauge="whatever")
    with pytest.raises(ValueError):
        dynamics.integrate_charged(ETA, catalog.uniform_magnetic(), 1.0, 0.0, [0, 0, 0, 0], [1, 0, 0, 0])


def test_step_rejected_for_coarse_step():
    with pytest.raises(StepRejected):
        dynamics.integrate_charged(ETA, catalog.uniform_magnetic(50.0), 1.0, 1.0, [0, 0.01, 0, 0], [1.2, 0, 0.5, 0], 0.1, 10, check_every=1)


def test_renormalization_bounds_drift():
    g = catalog.schwarzschild()
    tr = dynamics.integrate_geodesic(g, [0, 7.0, math.pi / 2, 0], [1.3, 0.1, 0, 0.05], 0.05, 400, renormalize_every=100)
    n2 = np.array([g.norm2(x, v) for x, v in zip(tr.events, tr.velocities)])
    assert np.max(np.abs(n2 - 1)) <= 1e-6
    # projections before steps 100, 200 and 300
    assert tr.meta["renormalizations"] == 3
    assert tr.meta["norm_drift_max"] < 1e-8


def test_charged_with_zero_charge_is_geodesic():
    x0, v0 = [0, 0.5, 0, 0], [math.sqrt(1.25), 0, 0.5, 0]
    a = dynamics.integrate_charged(ETA, catalog.uniform_magnetic(), 0.0, 1.0, x0, v0, 0.01, 100)
    b = dynamics.integrate_geodesic(ETA, x0, v0, 0.01, 100)
    assert np.array_equal(a.events, b.events) and np.array_equal(a.velocities, b.velocities)


def test_convergence_order_on_eccentric_schwarzschild_orbit():
    # the exact circular orbit is a fixed point of RK4 in these coordinates, so boost it by 5%
    g = catalog.schwarzschild(1.0)
    r = 6.0
    v0 = [1 / math.sqrt(1 - 3 / r), 0, 0, 1.05 * math.sqrt(1 / (r * r * (r - 3)))]
    T = 40.0

    def end(h):
        tr = dynamics.integrate_geodesic(g, [0, r, math.pi / 2, 0], v0, h, int(round(T / h)), renormalize_every=0, check_every=0)
        return tr.events[-1]

    ref = end(0.0125)
    e1, e2 = np.linalg.norm(end(0.2) - ref), np.linalg.norm(end(0.1) - ref)
    assert e1 / e2 >= 12.0


def test_pure_oneform_residual():
    A = catalog.uniform_magnetic(1.0)
    tau = np.linspace(0, 1, 11)
    along_z = Trajectory(tau, np.outer(tau, [1, 0, 0, 0.5]), np.tile([1, 0, 0, 0.5], (11, 1)))
    assert dynamics.integrate_pure_oneform(A, along_z).max_norm == 0.0
    across = Trajectory(tau, np.outer(tau, [1, 0.5, 0, 0]), np.tile([1, 0.5, 0, 0], (11, 1)))
    rep = dynamics.integrate_pure_oneform(A, across)
    # F_{nu mu} v^mu with F_xy = 1: (0, 0, -0.5, 0)
    assert np.allclose(rep.residuals, [0, 0, -0.5, 0])
    assert math.isclose(rep.max_norm, 0.5)


def test_fornberg_weights_known_stencils():
    assert np.allclose(dynamics.fornberg_weights(0.0, np.array([-1.0, 0.0, 1.0])), [-0.5, 0, 0.5])
    assert np.allclose(dynamics.fornberg_weights(0.0, np.array([-1.0, 0.0, 1.0]), order=2), [1, -2, 1])
    w = dynamics.fornberg_weights(0.0, np.array([0.0, 1.0, 2.0]))
    assert np.allclose(w, [-1.5, 2.0, -0.5])


def test_sample_derivative_exact_on_quartics():
    rng = np.random.default_rng(3)
    for tau in (np.linspace(0, 2, 21), np.sort(rng.uniform(0, 2, 21))):
        f = 1 + tau - 2 * tau**2 + 0.5 * tau**3 - 0.25 * tau**4
        df = 1 - 4 * tau + 1.5 * tau**2 - tau**3
        assert np.allclose(dynamics.sample_derivative(tau, f), df, atol=1e-11)


def test_el_residual_detects_non_solutions():
    tr = straight_line()
    assert dynamics.el_residual(lagrangian.particle(ETA), tr).max_norm < 1e-13
    tau = np.linspace(0, 3, 61)
    circle = Trajectory(
        tau,
        np.column_stack([math.sqrt(2) * tau, np.cos(tau), np.sin(tau), 0 * tau]),
        np.column_stack([math.sqrt(2) + 0 * tau, -np.sin(tau), np.cos(tau), 0 * tau]),
    )
    rep = dynamics.el_residual(lagrangian.particle(ETA), circle)
    assert rep.interior == slice(2, 59)
    assert rep.rms_norm > 0.5


def test_action_of_straight_line():
    tr = straight_line()
    # L1 = 1 along a unit-speed line, L2 likewise
    assert math.isclose(dynamics.action(lagrangian.particle(ETA), tr), 2.0, rel_tol=1e-14)
    assert math.isclose(dynamics.action(lagrangian.quadratic(ETA), tr), 2.0, rel_tol=1e-14)


def test_reparametrize_basics():
    tr = straight_line()
    assert dynamics.reparametrize(tr, alpha=1.0) is tr
    half = dynamics.reparametrize(tr, alpha=2.0)
    assert np.allclose(half.params, tr.params / 2) and np.allclose(half.velocities, 2 * tr.velocities)
    rp = dynamics.reparametrize(tr, phi=lambda s: s + 0.1 * ad.sin(s))
    assert np.array_equal(rp.events, tr.events)
    assert np.allclose(rp.params + 0.1 * np.sin(rp.params), tr.params, atol=1e-13)
    assert rp.gauge == "custom"
    L1, L2 = lagrangian.particle(ETA), lagrangian.quadratic(ETA)
    assert abs(dynamics.action(L1, rp) - 2.0) < 1e-6
    assert abs(dynamics.action(L2, rp) - 2.0) > 1e-3
    with pytest.raises(NonMonotone):
        dynamics.reparametrize(tr, phi=lambda s: -s)
    with pytest.raises(NonMonotone):
        dynamics.reparametrize(tr, alpha=-1.0)
    with pytest.raises(ValueError):
        dynamics.reparametrize(tr)


def test_reparametrize_with_plain_numpy_phi():
    # functions that reject duals fall back to finite differences
    tr = straight_line()
    rp = dynamics.reparametrize(tr, phi=lambda s: np.asarray(s) ** 3 / 3 + np.asarray(s))
    assert abs(dynamics.action(lagrangian.particle(ETA), rp) - 2.0) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.5, 2.0), st.floats(0, 6.28))
def test_reparametrization_invariance_property(a, k, c):
    # phi' = 1 + a cos(k s + c) stays in [0.5, 1.5]; Simpson on the warped grid stays well inside 1e-6
    tr = dynamics.integrate_geodesic(catalog.schwarzschild(), [0, 8.0, math.pi / 2, 0], [1.2, 0.02, 0, 0.04], 0.02, 200)
    amp = a / k
    rp = dynamics.reparametrize(tr, phi=lambda s: s + amp * ad.sin(k * s + c))
    L1 = lagrangian.particle(catalog.schwarzschild())
    s0 = dynamics.action(L1, tr)
    assert abs(dynamics.action(L1, rp) - s0) <= 1e-6 * abs(s0)


# -- geodesic deviation ---------------------------------------------------------------
def test_sphere_deviation_is_cosine():
    g = catalog.sphere(1.0)
    base = dynamics.integrate_geodesic(g, [math.pi / 2, 0.0], [0.0, 1.0], 0.01, 300)
    dev = dynamics.integrate_deviation(g, base, [1.0, 0.0], [0.0, 0.0])
    xi = np.array([d.xi[0] for d in dev])
    assert np.max(np.abs(xi - np.cos(base.params))) <= 1e-4


def test_flat_deviation_is_linear():
    base = dynamics.integrate_geodesic(ETA, [0, 0, 0, 0], [1.25, 0.75, 0, 0], 0.05, 100)
    dev = dynamics.integrate_deviation(ETA, base, [0, 0, 1.0, 0], [0, 0.1, 0.2, 0])
    xi = np.array([d.xi for d in dev])
    expect = np.array([0, 0, 1.0, 0]) + base.params[:, None] * np.array([0, 0.1, 0.2, 0])
    assert np.max(np.abs(xi - expect)) <= 1e-12


def test_deviation_along_velocity_is_trivial():
    g = catalog.schwarzschild()
    base = dynamics.integrate_geodesic(g, [0, 7.0, math.pi / 2, 0], [1.3, 0.05, 0, 0.05], 0.05, 200)
    dev = dynamics.integrate_deviation(g, base, base.velocities[0], np.zeros(4))
    err = max(np.max(np.abs(d.xi - v)) for d, v in zip(dev, base.velocities))
    assert err < 1e-8


def test_deviation_dimension_checks():
    base = straight_line()
    with pytest.raises(ValueError):
        dynamics.integrate_deviation(catalog.sphere(), base, [1, 0], [0, 0])
    with pytest.raises(ValueError):
        dynamics.integrate_deviation(ETA, base, [1, 0], [0, 0])


# -- time-extended lift ---------------------------------------------------------------
def _harmonic(x, u):
    return 0.5 * float(u @ u) - 0.5 * float(x[1:] @ x[1:])


def test_time_extended_lift_is_homogeneous_and_matches_time_action():
    L = dynamics.time_extended(_harmonic)
    x, v = np.array([0.3, 0.1, -0.2]), np.array([1.7, 0.4, 0.9])
    for lam in (0.2, 1.0, 6.5):
        assert L(x, lam * v) == pytest.approx(lam * L(x, v), rel=1e-13)
    with pytest.raises(DomainError):
        L(x, -v)
    # oscillator x = sin t in the t = tau gauge: action over [0, pi] is 0.5 * int cos 2t = 0
    t = np.linspace(0, math.pi, 401)
    tr = dynamics.Trajectory(t, np.stack([t, np.sin(t)], 1), np.stack([np.ones_like(t), np.cos(t)], 1))
    assert abs(dynamics.time_extended_action(_harmonic, tr)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.5, 2.0), st.floats(0, 6.28))
def test_time_extended_action_is_reparametrization_invariant(a, k, c):
    t = np.linspace(0, 2.0, 401)
    tr = dynamics.Trajectory(t, np.stack([t, np.sin(t), t**2], 1), np.stack([np.ones_like(t), np.cos(t), 2 * t], 1))
    amp = a / k
    rp = dynamics.reparametrize(tr, phi=lambda s: s + amp * ad.sin(k * s + c))
    s0 = dynamics.time_extended_action(_harmonic, tr)
    assert abs(dynamics.time_extended_action(_harmonic, rp) - s0) <= 1e-6 * max(1.0, abs(s0))
