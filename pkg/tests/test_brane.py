import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repinv import brane, catalog, lagrangian
from repinv.brane import BraneFieldSpec, WorldsheetPatch
from repinv.checks import random_canonical_spec, random_state
from repinv.errors import BoundaryNode, DegenerateSheet, DimensionMismatch, DomainError, WrongBraneDim

EUC3 = catalog.euclidean(3)
CURVED = catalog.polynomial_metric(np.eye(3).tolist(), [1, 1, 1], {(0, 0): [(0.3, [0, 0, 1])], (1, 2): [(0.1, [1, 0, 0])]})


def graph_sheet(n, amp=0.2):
    z = np.linspace(0, 1, n)
    return WorldsheetPatch.from_function(lambda u, w: (u, w, amp * np.sin(np.pi * u) * np.cos(0.5 * np.pi * w)), [z, z])


def test_multi_indices():
    assert brane.multi_indices(4, 2) == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert brane.multi_indices(3, 3) == ((0, 1, 2),)
    assert len(brane.multi_indices(10, 4)) == math.comb(10, 4)


def test_patch_validation():
    with pytest.raises(ValueError):
        WorldsheetPatch(np.zeros((2, 3)), (np.array([0.0, 1.0]),))
    with pytest.raises(DimensionMismatch):
        WorldsheetPatch(np.zeros((4, 3)), (np.arange(3.0),))
    with pytest.raises(ValueError):
        WorldsheetPatch(np.zeros((3, 3)), (np.array([0.0, 2.0, 1.0]),))
    with pytest.raises(ValueError):
        WorldsheetPatch(np.zeros((3, 3)), (np.array([0.0, 1.0, 3.0]),), periodic=(True,))


def test_csv_round_trip(tmp_path):
    p = graph_sheet(5)
    path = tmp_path / "p.csv"
    p.to_csv(path)
    assert path.read_text().splitlines()[0] == "z1,z2,x0,x1,x2"
    back = WorldsheetPatch.from_csv(path)
    assert np.array_equal(back.embedding, p.embedding)
    assert all(np.array_equal(a, b) for a, b in zip(back.z_nodes, p.z_nodes))


def test_boundary_mask_and_periods():
    p = WorldsheetPatch.from_function(lambda a, b: (np.cos(a), np.sin(a), b), [2 * np.pi * np.arange(8) / 8, np.linspace(0, 1, 4)], periodic=[True, False])
    m = p.boundary_mask()
    assert m[:, 0].all() and m[:, -1].all() and not m[:, 1:-1].any()
    assert math.isclose(p.periods()[0], 2 * math.pi)


def test_flat_lorentzian_sheet():
    z = np.linspace(0, 1, 65)
    flat = WorldsheetPatch.from_function(lambda t, x: (t, x, 0 * t, 0 * t), [z, z])
    spec = BraneFieldSpec(2, 4, catalog.minkowski())
    assert spec.s == -1
    assert abs(brane.brane_action(spec, flat) - 1.0) <= 1e-4
    om = brane.generalized_velocity(flat, (10, 20))
    assert om.as_dict()[(0, 1)] == pytest.approx(1.0) and math.isclose(brane.brane_lagrangian_density(spec, om), 1.0)


def test_signature_factor_defaults():
    assert BraneFieldSpec(2, 3, EUC3).s == 1
    assert BraneFieldSpec(3, 4, catalog.minkowski()).s == 1
    assert BraneFieldSpec(1, 4, catalog.minkowski()).s == 1
    with pytest.raises(ValueError):
        BraneFieldSpec(2, 3, EUC3, s=2)


def test_spacelike_sheet_in_lorentzian_target_is_domain_error():
    z = np.linspace(0, 1, 5)
    spatial = WorldsheetPatch.from_function(lambda a, b: (0 * a, a, b, 0 * a), [z, z])
    with pytest.raises(DomainError):
        brane.brane_action(BraneFieldSpec(2, 4, catalog.minkowski()), spatial)


def test_induced_metric_is_cauchy_binet(rng):
    from repinv.checks import random_metric

    g = random_metric(rng, 4, eps=0.1)
    spec = BraneFieldSpec(2, 4, g)
    x = rng.uniform(-1, 1, 4)
    J = rng.normal(size=(2, 4))
    w = brane.minors(J, spec.indices)
    h = J @ g(x) @ J.T
    assert math.isclose(w @ spec.induced_metric(x) @ w, np.linalg.det(h), rel_tol=1e-12)


def test_string_Y_and_errors():
    p = graph_sheet(9)
    Y = brane.string_Y(p, (3, 4))
    assert np.array_equal(Y, -Y.T)
    om = brane.generalized_velocity(p, (3, 4))
    for (a, b), w in om.as_dict().items():
        assert Y[a, b] == w
    with pytest.raises(BoundaryNode):
        brane.generalized_velocity(p, (0, 4))
    with pytest.raises(BoundaryNode):
        brane.generalized_velocity(p, (3, 9))
    line = WorldsheetPatch(np.outer(np.linspace(0, 1, 5), [1.0, 0.5, 0.0]), (np.linspace(0, 1, 5),))
    with pytest.raises(WrongBraneDim):
        brane.string_Y(line, (2,))
    with pytest.raises(WrongBraneDim):
        brane.brane_action(BraneFieldSpec(2, 3, EUC3), line)


def test_nonuniform_node_jacobian_is_exact_for_quadratics():
    z = np.array([0.0, 0.1, 0.35, 0.5, 0.9])
    p = WorldsheetPatch(np.column_stack([z, z**2, 0 * z]), (z,))
    J = brane.node_jacobian(p, (2,))
    assert np.allclose(J, [[1.0, 0.7, 0.0]], atol=1e-13)


def test_zero_size_patch_has_zero_action():
    p = WorldsheetPatch(np.zeros((1, 5, 3)), (np.array([0.0]), np.linspace(0, 1, 5)))
    assert brane.brane_action(BraneFieldSpec(2, 3, EUC3), p) == 0.0


def test_collapsed_sheet_is_degenerate():
    z = np.linspace(0, 1, 5)
    p = WorldsheetPatch.from_function(lambda a, b: (a, 0 * a, 0 * a), [z, z])
    with pytest.raises(DegenerateSheet) as exc:
        brane.brane_action(BraneFieldSpec(2, 3, EUC3), p)
    assert exc.value.node is not None


def test_d1_degeneration(rng):
    for _ in range(10):
        L = random_canonical_spec(rng)
        x0, v = random_state(rng)
        z = np.linspace(0.0, 0.3, 7)
        patch = WorldsheetPatch(x0[None, :] + z[:, None] * v[None, :], (z,))
        spec = brane.brane_spec_from_lagrangian(L)
        for i in range(1, 6):
            om = brane.generalized_velocity(patch, (i,))
            ref = lagrangian.eval_lagrangian(L, om.event, om.comps)
            assert abs(brane.brane_lagrangian_density(spec, om) - ref) <= 1e-9 * max(1, abs(ref))


def test_area_converges_at_second_order():
    spec = BraneFieldSpec(2, 3, EUC3)
    a = [brane.brane_action(spec, graph_sheet(n)) for n in (17, 33, 65, 129)]
    ref = a[-1] + (a[-1] - a[-2]) / 3
    e = [abs(x - ref) for x in a[:3]]
    assert 1.8 <= math.log2(e[0] / e[1]) <= 2.2
    assert 1.8 <= math.log2(e[1] / e[2]) <= 2.2


def test_regridding_invariance():
    spec = BraneFieldSpec(2, 3, EUC3)
    z = np.linspace(0, 1, 129)

    def surf(u, w):
        return (u, w, 0.2 * np.sin(np.pi * u) * np.cos(0.5 * np.pi * w))

    a = brane.brane_action(spec, WorldsheetPatch.from_function(surf, [z, z]))
    warped = WorldsheetPatch.from_function(lambda s, w: surf(s + 0.1 * np.sin(np.pi * s) / np.pi, w), [z, z])
    assert abs(brane.brane_action(spec, warped) - a) <= 1e-4 * a


def _fd_gradient(spec, patch, nodes, h=1e-6):
    out = []
    for node in nodes:
        for a in range(patch.dim):
            X = patch.embedding.copy()
            X[node + (a,)] += h
            sp = brane.brane_action(spec, patch.with_embedding(X))
            X[node + (a,)] -= 2 * h
            sm = brane.brane_action(spec, patch.with_embedding(X))
            out.append((sp - sm) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize(
    "spec",
    [
        BraneFieldSpec(2, 3, EUC3),
        BraneFieldSpec(2, 3, CURVED),
        BraneFieldSpec(2, 3, EUC3, one_form=lambda x: {(0, 1): 0.5 * x[2], (1, 2): x[0] * x[1]}, charge=0.7),
    ],
    ids=["euclidean", "curved", "one_form"],
)
def test_action_gradient_matches_finite_difference(spec):
    p = graph_sheet(7)
    S, G = brane.action_gradient(spec, p)
    assert math.isclose(S, brane.brane_action(spec, p), rel_tol=1e-14)
    nodes = [(1, 1), (3, 2), (5, 5), (0, 3)]
    fd = _fd_gradient(spec, p, nodes)
    exact = np.array([G[n + (a,)] for n in nodes for a in range(3)])
    assert np.allclose(exact, fd, rtol=1e-6, atol=1e-8)


def test_relax_bump_flattens_and_logs():
    spec = BraneFieldSpec(2, 3, EUC3)
    z = np.linspace(0, 1, 17)
    bump = WorldsheetPatch.from_function(lambda u, w: (u, w, 0.1 * np.sin(np.pi * u) * np.sin(np.pi * w)), [z, z])
    res = brane.relax_worldsheet(spec, bump, max_iters=5000, tol=1e-7)
    patch, log = res
    assert res.converged
    assert np.max(np.abs(patch.embedding[..., 2])) <= 1e-3
    assert np.array_equal(patch.embedding[0], bump.embedding[0])
    acts = [e["action"] for e in log]
    assert all(b < a for a, b in zip(acts, acts[1:]))
    assert set(log[0]) == {"iter", "action", "grad_norm", "step_size"}


def test_relax_flat_sheet_is_immediate(tmp_path):
    z = np.linspace(0, 1, 9)
    flat = WorldsheetPatch.from_function(lambda u, w: (u, w, 0 * u), [z, z])
    res = brane.relax_worldsheet(BraneFieldSpec(2, 3, EUC3), flat)
    assert res.converged and len(res.log) == 1
    brane.write_log_jsonl(res.log, tmp_path / "log.jsonl")
    assert (tmp_path / "log.jsonl").read_text().count("\n") == 1


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 3.0))
def test_action_is_invariant_under_rigid_motion_and_scales_as_area(tx, ty, angle, lam):
    spec = BraneFieldSpec(2, 3, EUC3)
    p = graph_sheet(9)
    a = brane.brane_action(spec, p)
    c, s = math.cos(angle), math.sin(angle)
    Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    moved = p.with_embedding(p.embedding @ Rz.T + np.array([tx, ty, 0.0]))
    assert math.isclose(brane.brane_action(spec, moved), a, rel_tol=1e-12)
    assert math.isclose(brane.brane_action(spec, p.with_embedding(lam * p.embedding)), lam**2 * a, rel_tol=1e-12)
