"""Invariant suites: every structural claim about homogeneous Lagrangians as a numbered check.

Each suite draws from its own generator seeded by ``(seed, suite index)``,
so running one suite alone reproduces exactly the numbers it produces
inside ``all``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import __version__
from . import autodiff as ad
from . import brane, catalog, dynamics, fields, geometry, lagrangian
from .geometry import MetricField, OneFormField, SymmetricTensorField
from .lagrangian import GaugeScalarField, LagrangianSpec, LagrangianTerm

CONVENTIONS = {
    "signature": "(+,-,-,-); timelike g(v,v) > 0",
    "geodesic_equation": "dv/dtau + Gamma^a_bc v^b v^c = 0",
    "christoffel": "Gamma^a_bc = 1/2 g^ar (d_b g_rc + d_c g_rb - d_r g_bc)",
    "riemann": "R^a_bcd = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma^a_cr Gamma^r_db - Gamma^a_dr Gamma^r_cb",
    "faraday": "F_mn = d_m A_n - d_n A_m",
    "brane_s_factor": "s = +1 Euclidean target, (-1)^(D-1) Lorentzian target",
    "brane_quadrature": "simplicial midpoint rule on a Kuhn triangulation",
    "em_action_normalization": fields.ACTION_NORMALIZATION,
    "em_action": "N * integral F_mn F^mn sqrt|g| d^n x",
    "source_density_index_convention": "ordered index tuples",
}


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    claim: str
    tolerance: float
    measured: float
    passed: bool
    comparison: str = "<="


def _le(suite, name, claim, measured, tol) -> Check:
    m = float(measured)
    return Check(suite, name, claim, float(tol), m, bool(m <= tol), "<=")


def _gt(suite, name, claim, measured, tol) -> Check:
    m = float(measured)
    return Check(suite, name, claim, float(tol), m, bool(m > tol), ">")


# -- random generators --------------------------------------------------------------------
def random_metric(rng: np.random.Generator, dim: int = 4, eps: float = 0.05) -> MetricField:
    """Minkowski plus a small random affine symmetric perturbation."""
    base = np.diag([1.0] + [-1.0] * (dim - 1))
    comps = {}
    for i in range(dim):
        for j in range(i, dim):
            c0 = eps * rng.uniform(-1, 1)
            lin = eps * rng.uniform(-1, 1, dim)
            terms = [(c0, [0] * dim)] + [(lin[k], [1 if m == k else 0 for m in range(dim)]) for k in range(dim)]
            comps[(i, j)] = terms
    return catalog.polynomial_metric(base.tolist(), [1] + [-1] * (dim - 1), comps)


def random_one_form(rng: np.random.Generator, dim: int = 4, scale: float = 0.3) -> OneFormField:
    comps = {}
    for k in range(dim):
        terms = [(scale * rng.uniform(-1, 1), [0] * dim)]
        for m in range(dim):
            e = [0] * dim
            e[m] = 1
            terms.append((scale * rng.uniform(-1, 1), e))
        e = [0] * dim
        e[rng.integers(dim)] += 1
        e[rng.integers(dim)] += 1
        terms.append((scale * rng.uniform(-1, 1), e))
        comps[k] = terms
    return catalog.polynomial_one_form(dim, comps)


def random_symmetric(rng: np.random.Generator, rank: int, dim: int = 4, scale: float = 0.3) -> SymmetricTensorField:
    comps = {}
    for key in geometry.multisets(dim, rank):
        if rng.random() < 0.5:
            e = [0] * dim
            e[rng.integers(dim)] = 1
            comps[key] = [(scale * rng.uniform(-1, 1), [0] * dim), (scale * rng.uniform(-1, 1), e)]
    comps[(0,) * rank] = [(1.0, [0] * dim)]
    return catalog.polynomial_symmetric(rank, dim, comps)


def random_canonical_spec(rng: np.random.Generator, dim: int = 4) -> LagrangianSpec:
    terms = [LagrangianTerm(2, random_metric(rng, dim), rng.uniform(0.5, 2.0))]
    if rng.random() < 0.8:
        terms.append(LagrangianTerm(1, random_one_form(rng, dim), rng.uniform(0.1, 0.5)))
    if rng.random() < 0.5:
        terms.append(LagrangianTerm(3, random_symmetric(rng, 3, dim), rng.uniform(0.05, 0.2)))
    return LagrangianSpec(tuple(terms))


def random_state(rng: np.random.Generator, dim: int = 4) -> tuple[np.ndarray, np.ndarray]:
    x = rng.uniform(-1, 1, dim)
    v = np.concatenate([[rng.uniform(1.5, 2.5)], rng.uniform(-0.5, 0.5, dim - 1)])
    return x, v


def random_gauge(rng: np.random.Generator, dim: int = 4) -> GaugeScalarField:
    k = rng.uniform(-1.5, 1.5, dim)
    a, b, c = rng.uniform(-0.5, 0.5, 3)
    i, j = rng.choice(dim, 2, replace=False)

    def lam(x):
        phase = sum(k[m] * x[m] for m in range(dim))
        return a * ad.sin(phase) + b * x[i] * x[j] + c * x[0]

    return GaugeScalarField(lam, dim, name="Lambda")


# -- suites ------------------------------------------------------------------------------------
def suite_homogeneity(rng) -> list[Check]:
    deg_err = euler = scale_err = 0.0
    for _ in range(100):
        L = random_canonical_spec(rng)
        x, v = random_state(rng)
        d, res = lagrangian.homogeneity_check(L, x, v, 2.5)
        l0 = abs(lagrangian.eval_lagrangian(L, x, v))
        deg_err = max(deg_err, abs(d - 1.0))
        euler = max(euler, res / l0)
        for alpha in (0.1, 1.0, 7.3):
            la = lagrangian.eval_lagrangian(L, x, alpha * v) / alpha
            scale_err = max(scale_err, abs(la - l0 * np.sign(la)) / l0)
    out = [
        _le("homogeneity", "degree_estimate_degree1", "log L(av)/L(v) / log a = 1 for canonical specs", deg_err, 1e-9),
        _le("homogeneity", "euler_residual_degree1", "v.dL/dv = L (relative to |L|)", euler, 1e-9),
        _le("homogeneity", "scale_invariance_degree1", "L(x, a v)/a = L(x, v) for a in {0.1, 1, 7.3}", scale_err, 1e-9),
    ]
    g = catalog.minkowski()
    d2, _ = lagrangian.homogeneity_check(lagrangian.quadratic(g), [0, 0, 0, 0], [2, 0.3, 0.1, 0], 3.0)
    out.append(_le("homogeneity", "degree_estimate_L2", "L2 = g(v,v) has degree 2", abs(d2 - 2.0), 1e-9))
    return out


def suite_hamiltonian(rng) -> list[Check]:
    h1 = 0.0
    for _ in range(100):
        L = random_canonical_spec(rng)
        x, v = random_state(rng)
        h1 = max(h1, abs(lagrangian.hamiltonian(L, x, v)) / abs(lagrangian.eval_lagrangian(L, x, v)))
    hn = {2: 0.0, 3: 0.0}
    for _ in range(50):
        g = random_metric(rng)
        x, v = random_state(rng)
        for n in (2, 3):
            L = lagrangian.power_of_length(g, n)
            val = lagrangian.eval_lagrangian(L, x, v)
            hn[n] = max(hn[n], abs(lagrangian.hamiltonian(L, x, v) - (n - 1) * val) / abs(val))
    return [
        _le("hamiltonian", "h_zero_degree1", "h = v.dL/dv - L vanishes for degree-1 specs (relative)", h1, 1e-9),
        _le("hamiltonian", "h_equals_L_degree2", "h = L for L2 = g(v,v)", hn[2], 1e-9),
        _le("hamiltonian", "h_equals_2L_degree3", "h = 2L for (L1)^3", hn[3], 1e-9),
    ]


def suite_degeneracy(rng) -> list[Check]:
    det_rel = null_rel = 0.0
    for _ in range(100):
        L = random_canonical_spec(rng)
        x, v = random_state(rng)
        H = lagrangian.hessian_vv(L, x, v)
        nh = np.linalg.norm(H, 2)
        det_rel = max(det_rel, abs(np.linalg.det(H)) / nh ** H.shape[0])
        null_rel = max(null_rel, np.linalg.norm(H @ v) / (nh * np.linalg.norm(v)))
    H2 = lagrangian.hessian_vv(lagrangian.quadratic(catalog.minkowski()), [0, 0, 0, 0], [1, 0, 0, 0])
    return [
        _le("degeneracy", "hessian_det_zero_degree1", "det(d2L/dv dv) = 0 (relative to |H|^dim)", det_rel, 1e-9),
        _le("degeneracy", "hessian_null_velocity", "H v = 0 (relative to |H||v|)", null_rel, 1e-9),
        _le("degeneracy", "hessian_L2_nondegenerate", "L2 Hessian is 2 eta with det -16", abs(np.linalg.det(H2) + 16), 1e-9),
    ]


def _schwarzschild_orbit(r0: float, boost: float, step: float, orbits: float, renormalize_every: int):
    g = catalog.schwarzschild(1.0)
    uphi = math.sqrt(1.0 / (r0 * r0 * (r0 - 3.0)))
    n = int(math.ceil(orbits * 2 * math.pi / uphi / step))
    v0 = [1.0, 0.0, 0.0, boost * math.sqrt(1.0 / r0**3)]
    return g, dynamics.integrate_geodesic(g, [0.0, r0, math.pi / 2, 0.0], v0, step, n, renormalize_every=renormalize_every)


def suite_s1s2(rng) -> list[Check]:
    out = []
    for label, boost in (("circular", 1.0), ("eccentric", 1.05)):
        g, traj = _schwarzschild_orbit(6.0, boost, 1e-2, 1.0, renormalize_every=0)
        L1 = lagrangian.particle(g)
        rep = dynamics.el_residual(L1, traj)
        l1 = dynamics.lagrangian_samples(L1, traj)
        drift = float(np.max(np.abs(l1 - l1[0])) / abs(l1[0]))
        out.append(_le("s1s2", f"el_residual_L1_{label}", "geodesics of the quadratic system solve L1's EL equations (rms)", rep.rms_norm, 1e-5))
        out.append(_le("s1s2", f"L1_constant_{label}", "L1 stays constant along the quadratic-system geodesic", drift, 1e-6))
    # L^a subset of L: affinely parametrized, not unit speed
    g = catalog.schwarzschild(1.0)
    ut, uphi = 1.0 / math.sqrt(1.0 - 3.0 / 8.0), 1.03 * math.sqrt(1.0 / (64.0 * 5.0))
    v0 = [2.0 * ut, 0.02, 0.0, 2.0 * uphi]
    traj = dynamics.integrate_geodesic(g, [0.0, 8.0, math.pi / 2, 0.0], v0, 1e-2, 3000, gauge="affine_quadratic")
    L1 = lagrangian.particle(g)
    l1 = dynamics.lagrangian_samples(L1, traj)
    out.append(_le("s1s2", "L2_solutions_keep_L1_constant", "solutions of L2 keep L1 constant", float(np.max(np.abs(l1 - l1[0])) / l1[0]), 1e-6))
    out.append(_le("s1s2", "L2_solutions_solve_L1", "solutions of L2 solve L1's EL equations (rms)", dynamics.el_residual(L1, traj).rms_norm, 1e-5))
    return out


def suite_gauge(rng) -> list[Check]:
    out = []
    g = catalog.minkowski()
    A = catalog.uniform_magnetic(1.0)
    traj = dynamics.integrate_charged(g, A, 1.0, 1.0, [0, 0.5, 0, 0], [math.sqrt(1.25), 0, 0.5, 0], 1e-2, 700)
    L = lagrangian.particle(g, A)
    base = dynamics.el_residual(L, traj)
    diff = 0.0
    for _ in range(5):
        lam = random_gauge(rng)
        shifted = dynamics.el_residual(lagrangian.gauge_shift(L, lam), traj)
        diff = max(diff, float(np.max(np.abs(shifted.residuals - base.residuals))))
    out.append(_le("gauge", "el_residual_total_derivative", "L -> L + dLambda/dtau leaves the EL residual unchanged", diff, 1e-7))
    far = 0.0
    for _ in range(20):
        Af = random_one_form(rng)
        f = random_gauge(rng)
        shifted = OneFormField(lambda x, Af=Af, f=f: [a + b for a, b in zip(Af.func(x), f.gradient(x))], 4)
        x = rng.uniform(-1, 1, 4)
        far = max(far, float(np.max(np.abs(geometry.faraday(shifted, x) - geometry.faraday(Af, x)))))
    out.append(_le("gauge", "faraday_gauge_invariance", "F(A + df) = F(A)", far, 1e-9))
    dom = fields.GridDomain(4, (1, 1, 1, 1), (8, 8, 8, 8), (True,) * 4, catalog.minkowski())
    Ab = _periodic_potential(dom, rng)
    s0 = fields.field_action_em(Ab, dom)
    p0 = fields.proca_mass_term(Ab, dom)
    rel = ctrl = 0.0
    for _ in range(20):
        fs = _periodic_scalar(dom, rng)
        At = fields.gauge_transform(Ab, fs, dom)
        rel = max(rel, abs(fields.field_action_em(At, dom) - s0) / abs(s0))
        ctrl = max(ctrl, abs(fields.proca_mass_term(At, dom) - p0))
    out.append(_le("gauge", "em_action_gauge_invariance", "integral F.F is gauge invariant on periodic grids (relative)", rel, 1e-9))
    out.append(_gt("gauge", "proca_term_not_invariant", "the A.A control integral changes under A -> A + df", ctrl, 1e-3))
    return out


def _periodic_potential(dom: fields.GridDomain, rng) -> fields.SampledOneForm:
    X = dom.coordinates()
    tp = [2 * math.pi / L for L in dom.extents]
    vals = np.zeros((dom.dim,) + dom.shape)
    # magnetic-type potential with spatial dependence only
    for nu in range(1, dom.dim):
        for mu in range(1, dom.dim):
            if mu != nu:
                vals[nu] += rng.uniform(0.5, 1.0) * np.sin(tp[mu] * X[mu] + rng.uniform(0, 2 * math.pi))
    return fields.SampledOneForm(vals)


def _periodic_scalar(dom: fields.GridDomain, rng) -> np.ndarray:
    X = dom.coordinates()
    f = np.zeros(dom.shape)
    for mu in range(dom.dim):
        k = 2 * math.pi * rng.integers(1, 3) / dom.extents[mu]
        f += rng.uniform(0.2, 1.0) * np.sin(k * X[mu] + rng.uniform(0, 2 * math.pi))
    return f


def suite_reparam(rng) -> list[Check]:
    g, traj = _schwarzschild_orbit(6.0, 1.05, 1e-2, 0.25, renormalize_every=100)
    L1, L2 = lagrangian.particle(g), lagrangian.quadratic(g)
    s1, s2 = dynamics.action(L1, traj), dynamics.action(L2, traj)
    worst = l2_change = 0.0
    T = float(traj.params[-1])
    for _ in range(20):
        a = rng.uniform(0.05, 0.4)
        k = 2 * math.pi * rng.integers(1, 4) / T
        c = rng.uniform(0, 2 * math.pi)
        amp = a / k

        def phi(s, amp=amp, k=k, c=c):
            return s + amp * (ad.sin(k * s + c) - math.sin(c))

        rp = dynamics.reparametrize(traj, phi=phi)
        worst = max(worst, abs(dynamics.action(L1, rp) - s1) / abs(s1))
        l2_change = max(l2_change, abs(dynamics.action(L2, rp) - s2))
    alpha = dynamics.reparametrize(traj, alpha=2.0)
    return [
        _le("reparam", "action_L1_invariant", "S1 is invariant under monotone reparametrization (relative)", worst, 1e-6),
        _gt("reparam", "action_L2_not_invariant", "S2 changes under a nonlinear reparametrization", l2_change, 1e-3),
        _le("reparam", "action_L1_scale", "S1 unchanged under tau -> tau/2", abs(dynamics.action(L1, alpha) - s1) / abs(s1), 1e-8),
    ]


def suite_brane(rng) -> list[Check]:
    out = []
    bad = 0
    for m in range(2, 7):
        for D in range(1, m + 1):
            idx = brane.multi_indices(m, D)
            bad += len(idx) != math.comb(m, D)
    out.append(_le("brane", "multi_index_count", "generalized velocities have C(dim M, D) components", bad, 0))
    # D = 1 reduces to the particle
    worst = 0.0
    for _ in range(10):
        L = random_canonical_spec(rng)
        x0, v = random_state(rng)
        z = np.linspace(0.0, 0.2, 5)
        patch = brane.WorldsheetPatch(x0[None, :] + z[:, None] * v[None, :], (z,))
        spec = brane.brane_spec_from_lagrangian(L)
        om = brane.generalized_velocity(patch, (2,))
        ref = lagrangian.eval_lagrangian(L, om.event, om.comps)
        worst = max(worst, abs(brane.brane_lagrangian_density(spec, om) - ref) / max(1.0, abs(ref)))
    out.append(_le("brane", "D1_degeneration", "a 1-brane density equals the particle Lagrangian", worst, 1e-9))
    z = np.linspace(0.0, 1.0, 65)
    flat = brane.WorldsheetPatch.from_function(lambda u, w: (u, w, 0 * u, 0 * u), [z, z])
    dng = brane.BraneFieldSpec(2, 4, catalog.minkowski())
    out.append(_le("brane", "flat_sheet_area", "DNG action of the unit (t,x) sheet is its area", abs(brane.brane_action(dng, flat) - 1.0), 1e-4))
    # string Y against the multi-index components
    amp = rng.uniform(0.05, 0.2, 4)
    zz = np.linspace(0, 1, 9)
    sheet = brane.WorldsheetPatch.from_function(
        lambda u, w: (2 * u + amp[0] * np.sin(w), u * w + w, amp[1] * np.cos(3 * u), amp[2] * u * u), [zz, zz]
    )
    mism = 0.0
    for node in [(2, 3), (4, 4), (6, 1)]:
        Y = brane.string_Y(sheet, node)
        om = brane.generalized_velocity(sheet, node)
        for (a, b), wv in om.as_dict().items():
            mism = max(mism, abs(Y[a, b] - wv), abs(Y[b, a] + wv))
    out.append(_le("brane", "string_Y_matches_omega", "Y^ab equals omega^(a<b) under antisymmetric expansion", mism, 0.0))
    # diffeomorphism invariance under regridding
    euc = brane.BraneFieldSpec(2, 3, catalog.euclidean(3))

    def surf(u, w):
        return (u, w, 0.2 * np.sin(np.pi * u) * np.cos(0.5 * np.pi * w))

    uni = np.linspace(0, 1, 129)
    ref = brane.brane_action(euc, brane.WorldsheetPatch.from_function(surf, [uni, uni]))
    p2 = brane.WorldsheetPatch.from_function(lambda a, b: surf(a + 0.1 * np.sin(np.pi * a) / np.pi, b), [uni, uni])
    out.append(
        _le("brane", "regrid_invariance", "brane action is invariant under a monotone regridding (relative)", abs(brane.brane_action(euc, p2) - ref) / ref, 1e-4)
    )
    # relaxation
    zb = np.linspace(0, 1, 17)
    bump = brane.WorldsheetPatch.from_function(lambda u, w: (u, w, 0.1 * np.sin(np.pi * u) * np.sin(np.pi * w)), [zb, zb])
    res = brane.relax_worldsheet(euc, bump, max_iters=5000, tol=1e-7)
    acts = [e["action"] for e in res.log]
    out.append(_le("brane", "relax_monotone", "every accepted relaxation step lowers the action", float(max(np.diff(acts), default=-1.0)), 0.0))
    out.append(_le("brane", "relax_bump_flattens", "a bumped sheet with planar boundary relaxes flat", float(np.max(np.abs(res.patch.embedding[..., 2]))), 1e-3))
    return out


def suite_fields(rng) -> list[Check]:
    out = []
    dom = fields.GridDomain(4, (1, 1, 1, 1), (6, 8, 8, 6), (True, False, False, True), catalog.minkowski())
    out.append(_le("fields", "zero_potential", "A = 0 has zero action", abs(fields.field_action_em(fields.SampledOneForm.zeros(dom), dom)), 0.0))
    A = fields.SampledOneForm.from_field(catalog.uniform_magnetic(1.0), dom)
    out.append(_le("fields", "uniform_B_action", "uniform B = 1 on a unit 4-volume gives integral F.F = 2", abs(fields.field_action_em(A, dom) - 2.0), 1e-12))
    pdom = fields.GridDomain(4, (1, 1, 1, 1), (8, 8, 8, 8), (True,) * 4, catalog.minkowski())
    Ap = _periodic_potential(pdom, rng)
    s = fields.field_action_em(Ap, pdom)
    lam = rng.uniform(0.5, 3.0)
    out.append(_le("fields", "quadratic_scaling", "S[lam A] = lam^2 S[A] (relative)", abs(fields.field_action_em(Ap.scaled(lam), pdom) - lam**2 * s) / abs(lam**2 * s), 1e-12))
    pure = fields.gauge_transform(fields.SampledOneForm.zeros(pdom), _periodic_scalar(pdom, rng), pdom)
    out.append(_le("fields", "pure_gauge_action", "a pure-gauge potential has zero action", abs(fields.field_action_em(pure, pdom)), 1e-10))
    out.append(_le("fields", "grid_convergence_order", "integral F.F converges at order 2 under refinement", abs(em_convergence_order() - 2.0), 0.2))
    return out


def em_convergence_order(shapes=(8, 16, 32), periodic: bool = True) -> float:
    """Observed order of integral F.F for a smooth 2D potential under grid refinement.

    Periodic grids of n nodes halve the spacing exactly for n -> 2n; open axes
    need n -> 2n - 1 for the same nesting.
    """
    vals, hs = [], []
    for n in shapes:
        dom = fields.GridDomain(2, (1.0, 1.0), (n, n), (periodic, periodic), catalog.euclidean(2))
        X = dom.coordinates()
        if periodic:
            tp = 2 * math.pi
            comps = [np.sin(tp * X[1]) + 0.3 * np.cos(tp * X[0]), np.cos(tp * X[0]) * (1 + 0.5 * np.sin(tp * X[1]))]
        else:
            comps = [np.sin(X[1]) * np.exp(X[0]), np.cos(2 * X[0]) * X[1] ** 2]
        vals.append(fields.field_action_em(fields.SampledOneForm(np.array(comps)), dom))
        hs.append(dom.spacing[0])
    e1, e2 = vals[0] - vals[1], vals[1] - vals[2]
    return float(math.log(abs(e1 / e2)) / math.log(hs[0] / hs[1]))


SUITES: dict[str, Callable] = {
    "homogeneity": suite_homogeneity,
    "hamiltonian": suite_hamiltonian,
    "degeneracy": suite_degeneracy,
    "s1s2": suite_s1s2,
    "gauge": suite_gauge,
    "reparam": suite_reparam,
    "brane": suite_brane,
    "fields": suite_fields,
}


def run_suites(names: list[str], seed: int) -> dict:
    """Run suites and assemble the report dictionary (deterministic given ``seed``)."""
    checks: list[Check] = []
    order = list(SUITES)
    for name in names:
        rng = np.random.default_rng([seed, order.index(name)])
        checks.extend(SUITES[name](rng))
    seen = set()
    for c in checks:
        key = (c.suite, c.name)
        if key in seen:
            raise RuntimeError(f"duplicate check {key}")
        seen.add(key)
    return build_report([asdict(c) for c in checks], seed=seed, suites=names)


def build_report(checks: list[dict], seed: int | None, suites: list[str] | None = None, extra: dict | None = None) -> dict:
    report = {
        "schema_version": 1,
        "tool": "repinv",
        "version": __version__,
        "seed": seed,
        "suites": suites or [],
        "conventions": CONVENTIONS,
        "checks": checks,
        "summary": {
            "total": len(checks),
            "passed": sum(1 for c in checks if c["passed"]),
            "failed": sum(1 for c in checks if not c["passed"]),
        },
    }
    if extra:
        report.update(extra)
    return report


def dump_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
