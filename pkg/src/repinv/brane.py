"""Extended objects: discretized embeddings of a D-dimensional parameter grid.

The generalized velocities of a D-brane are the D x D minors of the
embedding Jacobian, one per strictly increasing multi-index Gamma of target
coordinates. The root term contracts them with the induced metric on
multi-indices, whose entries are the corresponding minors of the target
metric; by Cauchy-Binet that radicand equals det(J g J^T).

The discrete action integrates the density over a Kuhn triangulation of the
parameter grid (D! simplices per cell). Inside each simplex the embedding is
affine, so flat sheets are integrated exactly.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .dynamics import fornberg_weights
from .errors import BoundaryNode, DegenerateSheet, Diverged, DimensionMismatch, DomainError, NonFiniteField, WrongBraneDim
from .geometry import MetricField, SymmetricTensorField
from .lagrangian import LagrangianSpec, nth_root

RADICAND_TOL = 1e-12


def multi_indices(dim: int, D: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing index tuples of size D, in lexicographic order."""
    return tuple(itertools.combinations(range(dim), D))


@dataclass(frozen=True, eq=False)
class WorldsheetPatch:
    """Embedding ``x^a(z)`` sampled on a rectangular parameter grid.

    ``embedding`` has shape ``(*grid_shape, dim)``. ``z_nodes[k]`` are the
    parameter values along axis k (nonuniform spacing is allowed on open
    axes). A periodic axis wraps its last node onto the first; its spacing
    must be uniform. Nodes at either end of an open axis are Dirichlet
    boundary nodes. An axis with a single node has zero extent.
    """

    embedding: np.ndarray
    z_nodes: tuple[np.ndarray, ...]
    periodic: tuple[bool, ...] = ()

    def __post_init__(self):
        emb = np.array(self.embedding, dtype=float)
        if emb.ndim < 2:
            raise ValueError("embedding needs shape (*grid_shape, dim)")
        D = emb.ndim - 1
        nodes = tuple(np.asarray(z, dtype=float) for z in self.z_nodes)
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * D
        if len(nodes) != D or len(periodic) != D:
            raise DimensionMismatch(f"a {D}-dimensional grid needs {D} node arrays and periodic flags")
        for k, (z, n) in enumerate(zip(nodes, emb.shape[:-1])):
            if z.shape != (n,):
                raise DimensionMismatch(f"axis {k}: {z.size} node values for {n} grid nodes")
            if n != 1 and n < 3:
                raise ValueError(f"axis {k} has {n} nodes; need at least 3 (or 1 for a zero-size patch)")
            if n > 1 and np.any(np.diff(z) <= 0):
                raise ValueError(f"axis {k}: node parameters must be strictly increasing")
            if periodic[k] and n > 1 and not np.allclose(np.diff(z), z[1] - z[0], rtol=1e-12, atol=0):
                raise ValueError(f"periodic axis {k} must be uniformly spaced")
        if not np.all(np.isfinite(emb)):
            raise ValueError("embedding has non-finite entries")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "z_nodes", nodes)
        object.__setattr__(self, "periodic", periodic)

    @classmethod
    def uniform(
        cls, embedding: np.ndarray, z_spacing: Sequence[float], periodic: Sequence[bool] | None = None, origin=None
    ) -> "WorldsheetPatch":
        emb = np.asarray(embedding, dtype=float)
        shape = emb.shape[:-1]
        origin = np.zeros(len(shape)) if origin is None else np.asarray(origin, dtype=float)
        nodes = tuple(origin[k] + z_spacing[k] * np.arange(n) for k, n in enumerate(shape))
        return cls(emb, nodes, tuple(periodic) if periodic is not None else ())

    @classmethod
    def from_function(
        cls,
        func: Callable[..., Sequence],
        z_nodes: Sequence[Sequence[float]],
        periodic: Sequence[bool] | None = None,
    ) -> "WorldsheetPatch":
        """Sample ``func(z1, ..., zD) -> x`` (vectorized over node arrays)."""
        nodes = [np.asarray(z, dtype=float) for z in z_nodes]
        grids = np.meshgrid(*nodes, indexing="ij")
        comps = func(*grids)
        emb = np.stack([np.broadcast_to(np.asarray(c, dtype=float), grids[0].shape) for c in comps], axis=-1)
        return cls(emb, tuple(nodes), tuple(periodic) if periodic is not None else ())

    @property
    def brane_dim(self) -> int:
        return self.embedding.ndim - 1

    @property
    def dim(self) -> int:
        return self.embedding.shape[-1]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.embedding.shape[:-1]

    @property
    def z_spacing(self) -> tuple[float, ...]:
        """Per-axis spacing (the first step on nonuniform axes)."""
        return tuple(float(z[1] - z[0]) if z.size > 1 else 0.0 for z in self.z_nodes)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid_shape, dtype=bool)
        for k, n in enumerate(self.grid_shape):
            if n == 1:
                mask[...] = True
                continue
            if self.periodic[k]:
                continue
            idx = [slice(None)] * self.brane_dim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = n - 1
            mask[tuple(idx)] = True
        return mask

    def with_embedding(self, embedding: np.ndarray) -> "WorldsheetPatch":
        return WorldsheetPatch(embedding, self.z_nodes, self.periodic)

    def periods(self) -> tuple[float, ...]:
        return tuple(
            float(z.size * (z[1] - z[0])) if p and z.size > 1 else 0.0 for z, p in zip(self.z_nodes, self.periodic)
        )

    # -- CSV -----------------------------------------------------------------
    def to_csv(self, path) -> None:
        D, d = self.brane_dim, self.dim
        grids = np.meshgrid(*self.z_nodes, indexing="ij")
        cols = [g.ravel() for g in grids] + [self.embedding[..., a].ravel() for a in range(d)]
        header = ",".join([f"z{k + 1}" for k in range(D)] + [f"x{a}" for a in range(d)])
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, periodic: Sequence[bool] | None = None) -> "WorldsheetPatch":
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        D = sum(1 for h in header if h.startswith("z"))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        nodes = tuple(np.unique(data[:, k]) for k in range(D))
        shape = tuple(z.size for z in nodes)
        if int(np.prod(shape)) != data.shape[0]:
            raise ValueError("CSV rows do not form a full rectangular grid")
        order = np.lexsort(tuple(data[:, k] for k in reversed(range(D))))
        emb = data[order, D:].reshape(shape + (data.shape[1] - D,))
        return cls(emb, nodes, tuple(periodic) if periodic is not None else ())


@dataclass(frozen=True)
class GeneralizedVelocity:
    """Minors ``omega^Gamma`` at one node, with the node's event."""

    event: np.ndarray
    indices: tuple[tuple[int, ...], ...]
    comps: np.ndarray
    jacobian: np.ndarray  # (D, dim), rows d x / d z^k

    @property
    def brane_dim(self) -> int:
        return len(self.indices[0])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {G: float(c) for G, c in zip(self.indices, self.comps)}


@dataclass(frozen=True, eq=False)
class BraneFieldSpec:
    """Canonical brane Lagrangian ``q A_G w^G + m sqrt(s g_GH w^G w^H) + sum_n c_n (S_n(w..w))^(1/n)``.

    ``one_form(x)`` returns a mapping from increasing multi-indices to
    coefficients. ``extra`` terms are symmetric fields over multi-index
    positions (dimension C(dim, D)). ``s`` defaults to +1 for Euclidean
    targets and (-1)^(D-1) for Lorentzian ones, which makes the radicand
    positive on timelike sheets in signature (+,-,-,-).
    """

    brane_dim: int
    dim: int
    metric: MetricField | None = None
    mass: float = 1.0
    one_form: Callable[[list], Mapping[tuple[int, ...], Any]] | None = None
    charge: float = 1.0
    extra: tuple[tuple[int, SymmetricTensorField, float], ...] = ()
    s: int | None = None

    def __post_init__(self):
        if self.brane_dim < 1 or self.brane_dim > self.dim:
            raise ValueError(f"brane dimension must be in 1..{self.dim}")
        if self.metric is not None and self.metric.dim != self.dim:
            raise DimensionMismatch(f"metric has dim {self.metric.dim}, target has {self.dim}")
        if self.metric is None and self.one_form is None and not self.extra:
            raise ValueError("a brane Lagrangian needs at least one term")
        n = math.comb(self.dim, self.brane_dim)
        for order, S, _ in self.extra:
            if S.rank != order or S.dim != n:
                raise DimensionMismatch(f"extra term of order {order} needs a rank-{order} field over {n} multi-indices")
        if self.s is None:
            sig = self.metric.signature if self.metric is not None else (1,)
            lorentzian = any(x < 0 for x in sig) and any(x > 0 for x in sig)
            object.__setattr__(self, "s", (-1) ** (self.brane_dim - 1) if lorentzian else 1)
        elif self.s not in (1, -1):
            raise ValueError("signature factor s must be +1 or -1")

    @property
    def indices(self) -> tuple[tuple[int, ...], ...]:
        return multi_indices(self.dim, self.brane_dim)

    def induced_metric(self, x: Sequence[float]) -> np.ndarray:
        """``g_{G H} = det(g[G, H])`` over increasing multi-indices."""
        g = self.metric(x)
        idx = self.indices
        return np.array([[np.linalg.det(g[np.ix_(G, H)]) for H in idx] for G in idx])


def brane_spec_from_lagrangian(L: LagrangianSpec) -> BraneFieldSpec:
    """The D = 1 brane spec equivalent to a canonical particle Lagrangian."""
    if L.homogeneity != 1:
        raise ValueError("only canonical degree-1 specs have a brane form")
    dim = L.dim
    metric = one_form = None
    mass = charge = 1.0
    extra = []
    for t in L.terms:
        if t.order == 1:
            one_form, charge = t.field.func, t.coupling
        elif t.order == 2:
            S = t.field

            def gfunc(x, S=S):
                comps = S.func(x)
                return [[comps.get(tuple(sorted((a, b))), 0.0) for b in range(dim)] for a in range(dim)]

            metric = MetricField(gfunc, dim, (1,) * dim, name=S.name)
            mass = t.coupling
        else:
            extra.append((t.order, t.field, t.coupling))
    return BraneFieldSpec(1, dim, metric, mass, one_form, charge, tuple(extra), s=1)


# -- node-level operations ------------------------------------------------------------
def _node_tuple(patch: WorldsheetPatch, node) -> tuple[int, ...]:
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != patch.brane_dim:
        raise DimensionMismatch(f"node index {node} does not match a {patch.brane_dim}-dimensional grid")
    for k, (i, n) in enumerate(zip(node, patch.grid_shape)):
        if not 0 <= i < n:
            raise BoundaryNode(f"node {node} is outside the grid")
        if n == 1 or (not patch.periodic[k] and (i == 0 or i == n - 1)):
            raise BoundaryNode(f"node {node} is on the boundary of axis {k}; central stencils need an interior node")
    return node


def node_jacobian(patch: WorldsheetPatch, node) -> np.ndarray:
    """``d x^a / d z^k`` at an interior node by 2nd-order central differences; shape (D, dim)."""
    node = _node_tuple(patch, node)
    rows = []
    for k in range(patch.brane_dim):
        z = patch.z_nodes[k]
        n = z.size
        i = node[k]
        lo, hi = list(node), list(node)
        lo[k], hi[k] = (i - 1) % n, (i + 1) % n
        if patch.periodic[k]:
            h = z[1] - z[0]
            w = np.array([-0.5 / h, 0.0, 0.5 / h])
        else:
            w = fornberg_weights(z[i], z[i - 1 : i + 2])
        xs = patch.embedding
        rows.append(w[0] * xs[tuple(lo)] + w[1] * xs[node] + w[2] * xs[tuple(hi)])
    return np.array(rows)


def minors(J: np.ndarray, indices: Sequence[tuple[int, ...]]) -> np.ndarray:
    """``det J[:, G]`` for every multi-index G (J has shape (D, dim))."""
    D = J.shape[0]
    if D == 1:
        return np.array([J[0, G[0]] for G in indices])
    if D == 2:
        return np.array([J[0, a] * J[1, b] - J[0, b] * J[1, a] for a, b in indices])
    return np.array([np.linalg.det(J[:, list(G)]) for G in indices])


def generalized_velocity(patch: WorldsheetPatch, node) -> GeneralizedVelocity:
    J = node_jacobian(patch, node)
    idx = multi_indices(patch.dim, patch.brane_dim)
    event = patch.embedding[_node_tuple(patch, node)].copy()
    return GeneralizedVelocity(event, idx, minors(J, idx), J)


def string_Y(patch: WorldsheetPatch, node) -> np.ndarray:
    """Antisymmetric ``Y^{ab} = d_tau x^a d_sigma x^b - d_sigma x^a d_tau x^b``."""
    if patch.brane_dim != 2:
        raise WrongBraneDim(f"string_Y needs a 2-dimensional worldsheet, got D = {patch.brane_dim}")
    t, s = node_jacobian(patch, node)
    return np.outer(t, s) - np.outer(s, t)


def brane_lagrangian_density(spec: BraneFieldSpec, omega: GeneralizedVelocity) -> float:
    """Canonical density at one node, with the root term contracted on multi-indices."""
    if omega.brane_dim != spec.brane_dim or len(omega.indices) != math.comb(spec.dim, spec.brane_dim):
        raise DimensionMismatch("generalized velocity does not match the brane spec")
    x = omega.event
    w = omega.comps
    total = 0.0
    if spec.one_form is not None:
        A = spec.one_form(list(x))
        total += spec.charge * sum(float(A.get(G, 0.0)) * wG for G, wG in zip(omega.indices, w))
    if spec.metric is not None:
        rad = float(w @ spec.induced_metric(x) @ w)
        if abs(rad) <= RADICAND_TOL:
            raise DegenerateSheet(f"root-term radicand {rad:.3g} vanishes (collapsed Jacobian)")
        if spec.s * rad < 0:
            raise DomainError(f"s * radicand = {spec.s * rad:.6g} < 0; the sheet has the wrong causal character")
        total += spec.mass * math.sqrt(spec.s * rad)
    for order, S, c in spec.extra:
        total += c * float(nth_root(S.contract(list(x), list(w)), order))
    return float(total)


# -- simplicial discretization -------------------------------------------------------
@dataclass(frozen=True)
class _Simplices:
    verts: np.ndarray  # (n_simplex, D+1) flat node indices
    axes: np.ndarray  # (n_perm, D) axis order per permutation; rows repeat per simplex
    perm: np.ndarray  # (n_simplex,) permutation id
    spacing: np.ndarray  # (n_simplex, D) cell sizes along each axis
    volume: np.ndarray  # (n_simplex,)
    corner: np.ndarray  # (n_simplex, D) lower cell corner, for error reports
    edge_axis: np.ndarray  # (D, n_simplex) axis of the k-th edge
    edge_h: np.ndarray  # (D, n_simplex) its parameter length


def _triangulate(patch: WorldsheetPatch) -> _Simplices | None:
    if any(n == 1 for n in patch.grid_shape):
        return None
    key = (patch.grid_shape, patch.periodic, tuple(z.tobytes() for z in patch.z_nodes))
    return _triangulate_cached(key)


@lru_cache(maxsize=32)
def _triangulate_cached(key) -> _Simplices:
    shape, periodic, zb = key
    D = len(shape)
    z_nodes = [np.frombuffer(b, dtype=float) for b in zb]
    ranges = []
    steps = []
    for k, (z, n) in enumerate(zip(z_nodes, shape)):
        if periodic[k]:
            ranges.append(np.arange(n))
            steps.append(np.full(n, z[1] - z[0]))
        else:
            ranges.append(np.arange(n - 1))
            steps.append(np.diff(z))
    corners = np.stack([g.ravel() for g in np.meshgrid(*ranges, indexing="ij")], axis=1)
    h = np.stack([steps[k][corners[:, k]] for k in range(D)], axis=1)
    perms = list(itertools.permutations(range(D)))
    verts, perm_id = [], []
    for p, order in enumerate(perms):
        cur = corners.copy()
        vs = [np.ravel_multi_index(cur.T, shape)]
        for k in order:
            cur = cur.copy()
            cur[:, k] = (cur[:, k] + 1) % shape[k]
            vs.append(np.ravel_multi_index(cur.T, shape))
        verts.append(np.stack(vs, axis=1))
        perm_id.append(np.full(corners.shape[0], p))
    vol = np.prod(h, axis=1) / math.factorial(D)
    axes = np.array(perms, dtype=int)
    perm = np.concatenate(perm_id)
    spacing = np.tile(h, (len(perms), 1))
    n = perm.size
    edge_axis = axes[perm].T.copy()
    edge_h = np.stack([spacing[np.arange(n), edge_axis[k]] for k in range(D)])
    return _Simplices(
        verts=np.concatenate(verts),
        axes=axes,
        perm=perm,
        spacing=spacing,
        volume=np.tile(vol, len(perms)),
        corner=np.tile(corners, (len(perms), 1)),
        edge_axis=edge_axis,
        edge_h=edge_h,
    )


def _simplex_jacobians(X: np.ndarray, tri: _Simplices) -> tuple[np.ndarray, np.ndarray]:
    """Per-simplex Jacobians (n, D, dim) and centroids (n, dim)."""
    D = tri.axes.shape[1]
    n = tri.verts.shape[0]
    J = np.empty((n, D, X.shape[1]))
    P = [X[tri.verts[:, k]] for k in range(D + 1)]
    # simplices are stored in one contiguous block per axis permutation
    block = n // tri.axes.shape[0]
    for p, order in enumerate(tri.axes):
        sl = slice(p * block, (p + 1) * block)
        for k, ax in enumerate(order):
            J[sl, ax] = (P[k + 1][sl] - P[k][sl]) / tri.edge_h[k][sl, None]
    cent = sum(P) / (D + 1)
    return J, cent


def _batch_metric(g: MetricField, pts: np.ndarray) -> np.ndarray:
    """Metric at points (n, dim) as (n, dim, dim), or (dim, dim) when constant."""
    comps = g.func(list(pts.T))
    if all(np.ndim(e) == 0 for row in comps for e in row):
        out = np.array(comps, dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteField(f"{g.name} is not finite on the sheet")
        return out
    out = g.batch(pts.T)
    return np.moveaxis(out, (0, 1), (-2, -1))


def _batch_metric_jet(g: MetricField, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Metric (n, dim, dim) and position derivatives (n, dim, dim, dim), or None when constant."""
    n, d = pts.shape
    tag = ad.new_tag()
    basis = ad._basis(d)
    try:
        comps = g.func([ad.Dual(pts[:, k], basis[k], tag) for k in range(d)])
        if all(np.ndim(e) == 0 and type(e) is not ad.Dual for row in comps for e in row):
            val = np.array(comps, dtype=float)
            if not np.all(np.isfinite(val)):
                raise NonFiniteField(f"{g.name} is not finite on the sheet")
            return val, None
        val = np.empty((n, d, d))
        dg = None
        for i in range(d):
            for j in range(d):
                e = comps[i][j]
                if type(e) is ad.Dual and e.tag == tag:
                    val[:, i, j] = e.val
                    if dg is None:
                        dg = np.zeros((n, d, d, d))
                    for k in range(d):
                        dg[:, i, j, k] = e.eps[k]
                else:
                    val[:, i, j] = np.asarray(ad.primal(e), dtype=float)
    except (TypeError, AttributeError):
        val = np.broadcast_to(_batch_metric(g, pts), (n, d, d))
        dg = np.empty((n, d, d, d))
        for k in range(d):
            h = 1e-6 * np.maximum(1.0, np.abs(pts[:, k]))
            p, m = pts.copy(), pts.copy()
            p[:, k] += h
            m[:, k] -= h
            dg[..., k] = (_batch_metric(g, p) - _batch_metric(g, m)) / (2 * h)[:, None, None]
        if not np.any(dg):
            dg = None
    if not (np.all(np.isfinite(val)) and (dg is None or np.all(np.isfinite(dg)))):
        raise NonFiniteField(f"{g.name} is not finite on the sheet")
    return val, dg


def _sandwich(J: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``J g`` (n, D, dim) and ``J g J^T`` (n, D, D); ``g`` may be a single matrix."""
    n, D, d = J.shape
    if g.ndim == 2:
        Jg = (J.reshape(-1, d) @ g).reshape(n, D, d)
    else:
        Jg = np.matmul(J, g)
    h = np.empty((n, D, D))
    for a in range(D):
        for b in range(a, D):
            h[:, a, b] = np.sum(Jg[:, a] * J[:, b], axis=1)
            h[:, b, a] = h[:, a, b]
    return Jg, h


def _inv_small(h: np.ndarray, det: np.ndarray) -> np.ndarray:
    D = h.shape[-1]
    if D == 1:
        return 1.0 / h
    if D == 2:
        out = np.empty_like(h)
        out[:, 0, 0] = h[:, 1, 1] / det
        out[:, 1, 1] = h[:, 0, 0] / det
        out[:, 0, 1] = -h[:, 0, 1] / det
        out[:, 1, 0] = -h[:, 1, 0] / det
        return out
    return np.linalg.inv(h)


def _det_small(h: np.ndarray) -> np.ndarray:
    D = h.shape[-1]
    if D == 1:
        return h[..., 0, 0]
    if D == 2:
        return h[..., 0, 0] * h[..., 1, 1] - h[..., 0, 1] * h[..., 1, 0]
    return np.linalg.det(h)


def _batch_minors(J: np.ndarray, indices) -> np.ndarray:
    D = J.shape[1]
    if D == 1:
        return np.stack([J[:, 0, G[0]] for G in indices], axis=1)
    if D == 2:
        return np.stack([J[:, 0, a] * J[:, 1, b] - J[:, 0, b] * J[:, 1, a] for a, b in indices], axis=1)
    return np.stack([np.linalg.det(J[:, :, list(G)]) for G in indices], axis=1)


def _batch_one_form(spec: BraneFieldSpec, pts: np.ndarray) -> np.ndarray:
    comps = spec.one_form(list(pts.T))
    n = pts.shape[0]
    return np.stack([np.broadcast_to(np.asarray(comps.get(G, 0.0), dtype=float), (n,)) for G in spec.indices], axis=1)


def _batch_symmetric(S: SymmetricTensorField, pts: np.ndarray) -> dict:
    n = pts.shape[0]
    return {k: np.broadcast_to(np.asarray(v, dtype=float), (n,)) for k, v in S.stored(list(pts.T)).items()}


def _densities(spec: BraneFieldSpec, J: np.ndarray, cent: np.ndarray, tri: _Simplices, want_grad: bool):
    """Per-simplex densities and, optionally, their derivatives in J and the centroid."""
    n, D, d = J.shape
    rho = np.zeros(n)
    dJ = np.zeros_like(J) if want_grad else None
    dc = np.zeros((n, d)) if want_grad else None
    idx = spec.indices
    need_w = spec.one_form is not None or spec.extra
    w = _batch_minors(J, idx) if need_w else None
    if spec.metric is not None:
        if want_grad:
            g, dg = _batch_metric_jet(spec.metric, cent)
        else:
            g = _batch_metric(spec.metric, cent)
        Jg, h = _sandwich(J, g)
        rad = _det_small(h)
        bad = np.abs(rad) <= RADICAND_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            node = tuple(int(c) for c in tri.corner[i])
            raise DegenerateSheet(
                f"root-term radicand {rad[i]:.3g} vanishes in the cell at node {node} (collapsed Jacobian)", node=node
            )
        if np.any(spec.s * rad < 0):
            i = int(np.argmax(spec.s * rad < 0))
            raise DomainError(
                f"s * radicand < 0 in the cell at node {tuple(int(c) for c in tri.corner[i])}; wrong causal character"
            )
        root = np.sqrt(spec.s * rad)
        rho += spec.mass * root
        if want_grad:
            hinv = _inv_small(h, rad)
            dJ += spec.mass * root[:, None, None] * np.matmul(hinv, Jg)
            if dg is not None:
                tr = np.einsum("nab,nai,nijk,nbj->nk", hinv, J, dg, J)
                dc += spec.mass * 0.5 * root[:, None] * tr
    if spec.one_form is not None:
        A = _batch_one_form(spec, cent)
        rho += spec.charge * np.sum(A * w, axis=1)
        if want_grad:
            dJ += spec.charge * _minor_grad(J, idx, A)
            for k in range(d):
                hk = 1e-6 * np.maximum(1.0, np.abs(cent[:, k]))
                p, m = cent.copy(), cent.copy()
                p[:, k] += hk
                m[:, k] -= hk
                dA = (_batch_one_form(spec, p) - _batch_one_form(spec, m)) / (2 * hk)[:, None]
                dc[:, k] += spec.charge * np.sum(dA * w, axis=1)
    for order, S, c in spec.extra:
        comps = _batch_symmetric(S, cent)
        val, grad = ad.batch_gradient(
            lambda ww: nth_root(_contract(comps, ww), order), w.T
        )
        rho += c * val
        if want_grad:
            dJ += c * _minor_grad(J, idx, grad.T)
            for k in range(d):
                hk = 1e-6 * np.maximum(1.0, np.abs(cent[:, k]))
                p, m = cent.copy(), cent.copy()
                p[:, k] += hk
                m[:, k] -= hk
                vp = nth_root(_contract(_batch_symmetric(S, p), list(w.T)), order)
                vm = nth_root(_contract(_batch_symmetric(S, m), list(w.T)), order)
                dc[:, k] += c * (vp - vm) / (2 * hk)
    return rho, dJ, dc


def _contract(comps: Mapping, w: Sequence) -> Any:
    from .geometry import multiplicity

    total = 0.0
    for key, val in comps.items():
        term = multiplicity(key) * val
        for i in key:
            term = term * w[i]
        total = total + term
    return total


def _minor_grad(J: np.ndarray, indices, coef: np.ndarray) -> np.ndarray:
    """``sum_G coef_G d(det J[:, G]) / dJ`` for stacked J (n, D, dim)."""
    n, D, d = J.shape
    out = np.zeros_like(J)
    for gi, G in enumerate(indices):
        cG = coef[:, gi]
        if D == 1:
            out[:, 0, G[0]] += cG
        elif D == 2:
            a, b = G
            out[:, 0, a] += cG * J[:, 1, b]
            out[:, 1, b] += cG * J[:, 0, a]
            out[:, 0, b] -= cG * J[:, 1, a]
            out[:, 1, a] -= cG * J[:, 0, b]
        else:
            sub = J[:, :, list(G)]
            cof = np.linalg.det(sub)[:, None, None] * np.linalg.inv(sub).transpose(0, 2, 1)
            out[:, :, list(G)] += cG[:, None, None] * cof
    return out


def _unwrap(patch: WorldsheetPatch) -> np.ndarray:
    return patch.embedding.reshape(-1, patch.dim)


def brane_action(spec: BraneFieldSpec, patch: WorldsheetPatch) -> float:
    """Simplicial midpoint rule: density at each simplex centroid times its parameter volume."""
    _check_spec(spec, patch)
    tri = _triangulate(patch)
    if tri is None:
        return 0.0
    J, cent = _simplex_jacobians(_unwrap(patch), tri)
    rho, _, _ = _densities(spec, J, cent, tri, want_grad=False)
    return float(np.sum(rho * tri.volume))


def action_gradient(spec: BraneFieldSpec, patch: WorldsheetPatch) -> tuple[float, np.ndarray]:
    """Discrete action and its gradient in every node coordinate, shape ``embedding.shape``."""
    _check_spec(spec, patch)
    tri = _triangulate(patch)
    if tri is None:
        return 0.0, np.zeros_like(patch.embedding)
    X = _unwrap(patch)
    J, cent = _simplex_jacobians(X, tri)
    rho, dJ, dc = _densities(spec, J, cent, tri, want_grad=True)
    vol = tri.volume
    n, D, d = J.shape
    rows = np.arange(n)
    # per-vertex contributions, then one scatter per coordinate
    contrib = np.repeat((dc * vol[:, None] / (D + 1))[:, None, :], D + 1, axis=1)
    for k in range(D):
        gk = dJ[rows, tri.edge_axis[k]] * (vol / tri.edge_h[k])[:, None]
        contrib[:, k + 1] += gk
        contrib[:, k] -= gk
    flat_v = tri.verts.ravel()
    N = X.shape[0]
    grad = np.stack(
        [np.bincount(flat_v, weights=contrib[:, :, a].ravel(), minlength=N) for a in range(d)], axis=1
    )
    return float(np.sum(rho * vol)), grad.reshape(patch.embedding.shape)


def _check_spec(spec: BraneFieldSpec, patch: WorldsheetPatch) -> None:
    if spec.brane_dim != patch.brane_dim:
        raise WrongBraneDim(f"spec is for D = {spec.brane_dim}, patch has D = {patch.brane_dim}")
    if spec.dim != patch.dim:
        raise DimensionMismatch(f"spec target has dim {spec.dim}, patch embeds into dim {patch.dim}")


# -- relaxation -----------------------------------------------------------------------
@dataclass
class RelaxResult:
    patch: WorldsheetPatch
    log: list[dict] = field(default_factory=list)
    converged: bool = False

    def __iter__(self):
        # unpacks as (patch, log)
        return iter((self.patch, self.log))


def relax_worldsheet(
    spec: BraneFieldSpec,
    patch: WorldsheetPatch,
    max_iters: int = 1000,
    tol: float = 1e-8,
    initial_step: float = 1.0,
    armijo: float = 1e-4,
    max_failures: int = 50,
) -> RelaxResult:
    """Gradient descent on interior node coordinates with Armijo backtracking.

    Every accepted step strictly decreases the action. Stops when the
    interior gradient's max-norm is at most ``tol`` or after ``max_iters``
    steps. A trial step that degenerates the sheet counts as a rejected
    trial; ``max_failures`` consecutive rejections raise :class:`Diverged`.
    """
    interior = ~patch.boundary_mask()
    S, grad = action_gradient(spec, patch)
    grad[~interior] = 0.0
    X = patch.embedding.copy()
    t = initial_step
    log: list[dict] = []
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    log.append({"iter": 0, "action": S, "grad_norm": gnorm, "step_size": 0.0})
    converged = gnorm <= tol
    it = 0
    while not converged and it < max_iters:
        g2 = float(np.sum(grad * grad))
        failures = 0
        while True:
            trial = X - t * grad
            try:
                S_new = brane_action(spec, patch.with_embedding(trial))
                ok = S_new <= S - armijo * t * g2 and S_new < S
            except (DegenerateSheet, DomainError):
                ok = False
            if ok:
                break
            failures += 1
            if failures >= max_failures:
                raise Diverged(
                    f"line search rejected {failures} consecutive trial steps at iteration {it + 1} (step {t:.3g})"
                )
            t *= 0.5
        it += 1
        X = trial
        patch = patch.with_embedding(X)
        S, grad = action_gradient(spec, patch)
        grad[~interior] = 0.0
        gnorm = float(np.max(np.abs(grad)))
        log.append({"iter": it, "action": S, "grad_norm": gnorm, "step_size": t})
        converged = gnorm <= tol
        if failures == 0:
            t *= 2.0
    return RelaxResult(patch, log, converged)


def write_log_jsonl(log: Sequence[Mapping], path) -> None:
    with open(path, "w") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
