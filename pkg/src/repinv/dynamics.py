"""Equations of motion under a fixed gauge, actions and Euler-Lagrange residuals.

Degree-1 Lagrangians have a singular velocity Hessian, so every integrator
here runs in a fixed parametrization: ``proper_time`` (g(v, v) = 1, massive)
or ``affine_quadratic`` (the quadratic system, any causal character).
Integration is fixed-step RK4; a step-doubling error estimate is used for
rejection only, never for adapting the step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize as sp_optimize

from . import autodiff as ad
from .errors import DomainError, NonFiniteField, NonMonotone, SingularMetric, StepRejected
from .geometry import DET_TOL, MetricField, OneFormField, as_event, christoffel, geodesic_acceleration, riemann
from .lagrangian import LagrangianSpec, batch_phase_gradient

GAUGES = ("proper_time", "affine_quadratic", "custom")
ERROR_TOL = 1e-3


@dataclass(frozen=True)
class Trajectory:
    params: np.ndarray
    events: np.ndarray
    velocities: np.ndarray
    gauge: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        events = np.asarray(self.events, dtype=float)
        velocities = np.asarray(self.velocities, dtype=float)
        if params.ndim != 1 or params.size < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if events.shape != velocities.shape or events.shape[0] != params.size or events.ndim != 2:
            raise ValueError(
                f"inconsistent shapes: params {params.shape}, events {events.shape}, velocities {velocities.shape}"
            )
        if np.any(np.diff(params) <= 0):
            raise NonMonotone("trajectory params must be strictly increasing")
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}; expected one of {GAUGES}")
        if not (np.all(np.isfinite(events)) and np.all(np.isfinite(velocities))):
            raise NonFiniteField("trajectory contains non-finite samples")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "velocities", velocities)

    @property
    def dim(self) -> int:
        return self.events.shape[1]

    def __len__(self) -> int:
        return self.params.size

    def to_csv(self, path) -> None:
        d = self.dim
        header = ",".join(["tau"] + [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)])
        data = np.column_stack([self.params, self.events, self.velocities])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, gauge: str = "custom") -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = (data.shape[1] - 1) // 2
        return cls(data[:, 0], data[:, 1 : 1 + d], data[:, 1 + d :], gauge=gauge)


@dataclass(frozen=True)
class DeviationState:
    xi: np.ndarray
    dxi: np.ndarray


@dataclass(frozen=True)
class ELResidualReport:
    residuals: np.ndarray  # (N, dim)
    max_norm: float
    rms_norm: float
    interior: slice = slice(None)

    @classmethod
    def from_residuals(cls, residuals: np.ndarray, interior: slice = slice(None)) -> "ELResidualReport":
        residuals = np.asarray(residuals, dtype=float)
        norms = np.linalg.norm(residuals[interior], axis=1)
        if norms.size == 0:
            return cls(residuals, 0.0, 0.0, interior)
        return cls(residuals, float(np.max(norms)), float(np.sqrt(np.mean(norms**2))), interior)


# -- integrators ------------------------------------------------------------------
def _metric_accel(g: MetricField, x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(-Gamma v v, g(x))``.

    Finiteness and the determinant guard are checked once per step on the
    sampled state by the driver; inner stages only fail on an exactly
    singular solve.
    """
    try:
        gx, dg = ad.jacobian(g.func, x)
        gx = np.asarray(gx, dtype=float)
        dg = np.asarray(dg, dtype=float)
    except (TypeError, AttributeError):
        gx = np.asarray(g.func(list(x)), dtype=float)
        dg = ad.central_difference(g.func, x)
    dgv = dg @ v
    lowered = dgv @ v - 0.5 * (v @ (v @ dg))
    try:
        return -np.linalg.solve(gx, lowered), gx
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"{g.name} is singular at x = {x.tolist()}") from exc


def _lorentz_accel(g: MetricField, A: OneFormField, ratio: float) -> Callable:
    def accel(x, v):
        a, gx = _metric_accel(g, x, v)
        try:
            _, dA = ad.jacobian(A.func, x)
            dA = np.asarray(dA, dtype=float)
        except (TypeError, AttributeError):
            dA = ad.central_difference(A.func, x)
        F = dA.T - dA
        try:
            return a + ratio * np.linalg.solve(gx, F @ v), gx
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(f"metric is singular at x = {x.tolist()}") from exc

    return accel


def _rk4(accel: Callable, x, v, h, k1):
    a1 = k1
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    a2, _ = accel(x2, v2)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    a3, _ = accel(x3, v3)
    x4, v4 = x + h * v3, v + h * a3
    a4, _ = accel(x4, v4)
    x_new = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return x_new, v_new


def _drive(
    accel: Callable,
    x0: np.ndarray,
    v0: np.ndarray,
    step: float,
    n_steps: int,
    gauge: str,
    renormalize_every: int,
    check_every: int,
    timelike_required: bool,
) -> Trajectory:
    if step <= 0 or n_steps < 1:
        raise ValueError("step must be positive and n_steps >= 1")
    d = x0.size
    xs = np.empty((n_steps + 1, d))
    vs = np.empty((n_steps + 1, d))
    x, v = x0.copy(), v0.copy()
    xs[0], vs[0] = x, v
    ref_norm = None
    drift = 0.0
    err_max = 0.0
    renorms = 0
    for i in range(n_steps):
        k1, gx = accel(x, v)
        if not abs(np.linalg.det(gx)) > DET_TOL:
            raise SingularMetric(f"metric is degenerate at step {i}, x = {x.tolist()} (|det g| <= {DET_TOL})")
        norm = float(v @ gx @ v)
        if ref_norm is None:
            ref_norm = norm
        if timelike_required and not norm > 0:
            raise DomainError(f"velocity left the timelike cone at step {i} (g(v,v) = {norm:.6g})")
        drift = max(drift, abs(norm - ref_norm) / max(abs(ref_norm), 1.0))
        if gauge == "proper_time" and renormalize_every and i and i % renormalize_every == 0:
            v = v / np.sqrt(norm)
            vs[i] = v
            renorms += 1
            k1, gx = accel(x, v)
        x_new, v_new = _rk4(accel, x, v, step, k1)
        if check_every and i % check_every == 0:
            xh, vh = _rk4(accel, x, v, 0.5 * step, k1)
            k1h, _ = accel(xh, vh)
            xh, vh = _rk4(accel, xh, vh, 0.5 * step, k1h)
            scale = max(1.0, float(np.max(np.abs(np.concatenate([x_new, v_new])))))
            err = float(np.max(np.abs(np.concatenate([x_new - xh, v_new - vh])))) / 15.0 / scale
            err_max = max(err_max, err)
            if err > ERROR_TOL:
                raise StepRejected(
                    f"local error estimate {err:.3g} exceeds {ERROR_TOL} at step {i} (tau = {i * step:.6g}); reduce the step"
                )
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
            raise NonFiniteField(f"state became non-finite at step {i}")
        x, v = x_new, v_new
        xs[i + 1], vs[i + 1] = x, v
    _, gx = accel(x, v)
    norm = float(v @ gx @ v)
    drift = max(drift, abs(norm - ref_norm) / max(abs(ref_norm), 1.0))
    params = step * np.arange(n_steps + 1)
    meta = {
        "norm_drift_max": drift,
        "error_estimate_max": err_max,
        "renormalizations": renorms,
        "step": step,
        "n_steps": n_steps,
    }
    return Trajectory(params, xs, vs, gauge=gauge, meta=meta)


def _initial_state(g: MetricField, x0, v0, gauge: str) -> tuple[np.ndarray, np.ndarray]:
    x0 = as_event(x0, g.dim)
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (g.dim,):
        raise ValueError(f"initial velocity has shape {v0.shape}, expected ({g.dim},)")
    if gauge == "proper_time":
        n2 = g.norm2(x0, v0)
        if not n2 > 0:
            raise DomainError(f"proper_time gauge needs a timelike v0, got g(v0,v0) = {n2:.6g}")
        v0 = v0 / np.sqrt(n2)
    elif gauge != "affine_quadratic":
        raise ValueError(f"integration gauge must be proper_time or affine_quadratic, got {gauge!r}")
    return x0, v0


def integrate_geodesic(
    g: MetricField,
    x0: Sequence[float],
    v0: Sequence[float],
    step: float = 1e-3,
    n_steps: int = 1000,
    gauge: str = "proper_time",
    renormalize_every: int = 100,
    check_every: int = 10,
) -> Trajectory:
    """RK4 for ``dv/dtau = -Gamma(v, v)``, ``dx/dtau = v``.

    In ``proper_time`` gauge ``v0`` is normalized to g(v, v) = 1 and projected
    back every ``renormalize_every`` steps (0 disables); the largest relative
    drift seen before projection is kept in ``meta["norm_drift_max"]``. The
    step-doubling error estimate runs every ``check_every`` steps.
    """
    x0, v0 = _initial_state(g, x0, v0, gauge)
    return _drive(
        lambda x, v: _metric_accel(g, x, v), x0, v0, step, n_steps, gauge, renormalize_every, check_every, False
    )


def integrate_charged(
    g: MetricField,
    A: OneFormField,
    q: float,
    m: float,
    x0: Sequence[float],
    v0: Sequence[float],
    step: float = 1e-3,
    n_steps: int = 1000,
    renormalize_every: int = 100,
    check_every: int = 10,
) -> Trajectory:
    """Proper-time motion of ``L = q A.v + m sqrt(g v v)``.

    ``m (dv/dtau + Gamma(v, v)) = q g^{-1} F v`` with ``F_{mu nu} = d_mu A_nu - d_nu A_mu``.
    """
    if not m > 0:
        raise ValueError("mass must be positive")
    if A.dim != g.dim:
        raise ValueError(f"one-form has dim {A.dim}, metric has {g.dim}")
    x0, v0 = _initial_state(g, x0, v0, "proper_time")
    if q == 0:
        accel = lambda x, v: _metric_accel(g, x, v)  # noqa: E731
    else:
        accel = _lorentz_accel(g, A, q / m)
    return _drive(accel, x0, v0, step, n_steps, "proper_time", renormalize_every, check_every, True)


def integrate_pure_oneform(A: OneFormField, traj: Trajectory) -> ELResidualReport:
    """Residual ``F_{nu mu} v^mu`` of the pure one-form theory along ``traj``.

    The equation is a constraint on the tangent, not an evolution law, so
    nothing is integrated; ``traj`` solves the theory iff ``max_norm`` is small.
    """
    if A.dim != traj.dim:
        raise ValueError(f"one-form has dim {A.dim}, trajectory has {traj.dim}")
    res = np.empty_like(traj.velocities)
    for i, (x, v) in enumerate(zip(traj.events, traj.velocities)):
        _, dA = A.jet(x)
        res[i] = (dA.T - dA) @ v
    return ELResidualReport.from_residuals(res)


# -- geodesic deviation ------------------------------------------------------------
def _quintic_midpoint_weights() -> tuple[np.ndarray, np.ndarray]:
    # p(s) = sum c_k s^k on [0, 1] matching value, first and second derivative at both ends
    k = np.arange(6)
    rows = [
        (k == 0).astype(float),
        np.where(k == 1, 1.0, 0.0),
        np.where(k == 2, 2.0, 0.0),
        np.ones(6),
        k.astype(float),
        k * (k - 1.0),
    ]
    Minv = np.linalg.inv(np.array(rows))
    s = 0.5
    val = s**k
    der = np.where(k > 0, k * s ** np.maximum(k - 1, 0), 0.0)
    return val @ Minv, der @ Minv


_MID_VAL, _MID_DER = _quintic_midpoint_weights()


def integrate_deviation(
    g: MetricField, base: Trajectory, xi0: Sequence[float], dxi0: Sequence[float]
) -> list[DeviationState]:
    """Jacobi field along ``base`` by RK4 on the base's own parameter grid.

    Solves ``D^2 xi / dtau^2 = -R(v, xi) v`` as the first-order system in
    ``xi`` and its covariant rate ``w = D xi / dtau``::

        dxi/dtau = w - Gamma(v, xi)
        dw/dtau  = -R^a_{bcd} v^b xi^c v^d - Gamma(v, w)

    Base values at stage midpoints come from quintic Hermite interpolation
    of the sampled events, velocities and geodesic accelerations.
    ``dxi0`` and the returned ``dxi`` are covariant rates ``D xi / dtau``, so
    ``xi0 = v0`` with ``dxi0 = 0`` gives the trivial solution ``xi = v``.
    """
    if g.dim != base.dim:
        raise ValueError(f"metric has dim {g.dim}, trajectory has {base.dim}")
    xi = np.asarray(xi0, dtype=float)
    dxi = np.asarray(dxi0, dtype=float)
    if xi.shape != (g.dim,) or dxi.shape != (g.dim,):
        raise ValueError("deviation vectors must match the trajectory dimension")

    def geom(x):
        return christoffel(g, x), riemann(g, x)

    def rhs(state, v, G, R):
        s, w = state
        return np.array([w - np.einsum("abc,b,c->a", G, v, s), -np.einsum("abcd,b,c,d->a", R, v, s, v) - np.einsum("abc,b,c->a", G, v, w)])

    G0, R0 = geom(base.events[0])
    state = np.array([xi, dxi])
    out = [DeviationState(xi.copy(), dxi.copy())]
    acc = [geodesic_acceleration(g, x, v) for x, v in zip(base.events, base.velocities)]
    for i in range(len(base) - 1):
        h = base.params[i + 1] - base.params[i]
        x0, v0, x1, v1 = base.events[i], base.velocities[i], base.events[i + 1], base.velocities[i + 1]
        stack = np.array([x0, h * v0, h * h * acc[i], x1, h * v1, h * h * acc[i + 1]])
        xm = _MID_VAL @ stack
        vm = (_MID_DER @ stack) / h
        Gm, Rm = geom(xm)
        G1, R1 = geom(x1)
        k1 = rhs(state, v0, G0, R0)
        k2 = rhs(state + 0.5 * h * k1, vm, Gm, Rm)
        k3 = rhs(state + 0.5 * h * k2, vm, Gm, Rm)
        k4 = rhs(state + h * k3, v1, G1, R1)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise NonFiniteField(f"deviation became non-finite at sample {i + 1}")
        G0, R0 = G1, R1
        s, w = state
        out.append(DeviationState(s.copy(), w.copy()))
    return out


# -- actions and residuals -----------------------------------------------------------
def lagrangian_samples(L: LagrangianSpec, traj: Trajectory) -> np.ndarray:
    """``L(x_i, v_i)`` at every sample."""
    val, _, _ = batch_phase_gradient(L, traj.events, traj.velocities)
    return val


def action(L: LagrangianSpec, traj: Trajectory) -> float:
    """Composite Simpson quadrature of ``L`` over ``traj.params``."""
    if L.dim != traj.dim:
        raise ValueError(f"Lagrangian has dim {L.dim}, trajectory has {traj.dim}")
    return float(sp_integrate.simpson(lagrangian_samples(L, traj), x=traj.params))


def time_extended(ell: Callable[[np.ndarray, np.ndarray], float]) -> Callable[[np.ndarray, np.ndarray], float]:
    """Degree-1 lift ``L(x, v) = ell(x, v[1:] / v[0]) * v[0]`` of a time-parametrized ``ell(x, dx/dt)``.

    Coordinate 0 plays the role of ``t``. The lift is homogeneous by
    construction; no statement is made about its Euler-Lagrange equations.
    """

    def L(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if not v[0] > 0:
            raise DomainError(f"time-extended Lagrangian needs dt/dtau > 0, got {v[0]}")
        return float(ell(x, v[1:] / v[0]) * v[0])

    return L


def time_extended_action(ell: Callable[[np.ndarray, np.ndarray], float], traj: Trajectory) -> float:
    """Simpson action of the time-extended lift along ``traj``."""
    L = time_extended(ell)
    vals = np.array([L(x, v) for x, v in zip(traj.events, traj.velocities)])
    return float(sp_integrate.simpson(vals, x=traj.params))


def fornberg_weights(x0: float, nodes: np.ndarray, order: int = 1) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``x0``."""
    n = len(nodes)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def sample_derivative(params: np.ndarray, values: np.ndarray) -> np.ndarray:
    """4th-order derivative of sampled ``values`` (first axis) with 5-point stencils.

    Interior samples use centred stencils, the two samples at each end use
    one-sided ones. Nonuniform grids get per-sample Fornberg weights.
    """
    params = np.asarray(params, dtype=float)
    values = np.asarray(values, dtype=float)
    N = params.size
    if N < 5:
        raise ValueError("need at least 5 samples for 4th-order differencing")
    out = np.empty_like(values)
    h = np.diff(params)
    uniform = np.allclose(h, h[0], rtol=1e-10, atol=0.0)
    if uniform:
        hh = h[0]
        out[2:-2] = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * hh)
        for i in (0, 1, N - 2, N - 1):
            lo = min(max(i - 2, 0), N - 5)
            w = fornberg_weights(params[i], params[lo : lo + 5])
            out[i] = np.tensordot(w, values[lo : lo + 5], axes=1)
        return out
    for i in range(N):
        lo = min(max(i - 2, 0), N - 5)
        w = fornberg_weights(params[i], params[lo : lo + 5])
        out[i] = np.tensordot(w, values[lo : lo + 5], axes=1)
    return out


def el_residual(L: LagrangianSpec, traj: Trajectory) -> ELResidualReport:
    """``r_a = d/dtau (dL/dv^a) - dL/dx^a`` at every sample.

    The outer derivative differences the sampled momenta; the two samples at
    each end use one-sided stencils and are excluded from both norms.
    """
    if len(traj) < 5:
        raise ValueError("el_residual needs at least 5 samples")
    if L.dim != traj.dim:
        raise ValueError(f"Lagrangian has dim {L.dim}, trajectory has {traj.dim}")
    _, dLdx, p = batch_phase_gradient(L, traj.events, traj.velocities)
    res = sample_derivative(traj.params, p) - dLdx
    return ELResidualReport.from_residuals(res, slice(2, len(traj) - 2))


# -- reparametrization -----------------------------------------------------------------
def _phi_derivative(phi: Callable, s: np.ndarray) -> np.ndarray:
    try:
        tag = ad.new_tag()
        out = phi(ad.Dual(s, (1.0,), tag))
        if isinstance(out, np.ndarray) and out.dtype == object and out.ndim == 0:
            out = out.item()
        if type(out) is ad.Dual and out.tag == tag:
            return np.broadcast_to(np.asarray(out.eps[0], dtype=float), s.shape).copy()
        if np.asarray(out).dtype.kind in "fi":
            return np.zeros_like(s)
        raise TypeError("phi did not propagate the dual")
    except (TypeError, AttributeError):
        h = 1e-6 * np.maximum(1.0, np.abs(s))
        return (np.asarray(phi(s + h), dtype=float) - np.asarray(phi(s - h), dtype=float)) / (2 * h)


def _invert(phi: Callable, targets: np.ndarray) -> np.ndarray:
    s = targets.copy()
    for _ in range(50):
        f = np.asarray(phi(s), dtype=float) - targets
        if np.all(np.abs(f) <= 1e-14 * np.maximum(1.0, np.abs(targets))):
            return s
        d = _phi_derivative(phi, s)
        if np.any(d <= 0):
            break
        s = s - f / d
        if not np.all(np.isfinite(s)):
            break
    # Newton did not settle everywhere; bracket each target instead
    out = np.empty_like(targets)
    for i, t in enumerate(targets):
        lo, hi, width = t - 1.0, t + 1.0, 1.0
        for _ in range(60):
            if float(phi(lo)) <= t <= float(phi(hi)):
                break
            width *= 2
            lo, hi = t - width, t + width
        else:
            raise NonMonotone(f"could not bracket phi^-1({t:.6g})")
        out[i] = sp_optimize.brentq(lambda u: float(phi(u)) - t, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return out


def reparametrize(traj: Trajectory, phi: Callable | None = None, alpha: float | None = None) -> Trajectory:
    """Relabel ``traj`` by ``tau = phi(sigma)`` (or ``tau = alpha sigma``).

    New params are ``phi^-1(params)`` and velocities pick up ``dphi/dsigma``;
    the events are untouched. ``alpha`` is shorthand for ``tau -> tau / alpha``.
    """
    if (phi is None) == (alpha is None):
        raise ValueError("give exactly one of phi or alpha")
    if alpha is not None:
        if not alpha > 0:
            raise NonMonotone("alpha must be positive")
        if alpha == 1:
            return traj
        return Trajectory(traj.params / alpha, traj.events, alpha * traj.velocities, gauge="custom", meta=dict(traj.meta))
    sigma = _invert(phi, traj.params)
    back = np.asarray(phi(sigma), dtype=float)
    if np.max(np.abs(back - traj.params)) > 1e-9 * max(1.0, float(np.max(np.abs(traj.params)))):
        raise NonMonotone("phi could not be inverted on the trajectory params")
    dphi = _phi_derivative(phi, sigma)
    if np.any(dphi <= 0) or np.any(np.diff(sigma) <= 0):
        raise NonMonotone("phi must be strictly increasing on the trajectory")
    return Trajectory(sigma, traj.events, traj.velocities * dphi[:, None], gauge="custom", meta=dict(traj.meta))
