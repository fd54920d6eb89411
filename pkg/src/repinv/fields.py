"""Interaction-field actions on discretized domains.

The field strength and the gauge gradient share one discrete derivative, a
product of per-axis stencils. Those commute, so ``F(A + df) = F(A)`` holds
to round-off rather than to truncation error.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteField, NonPeriodicBoundary, SingularMetric
from .geometry import DET_TOL, MetricField
from .lagrangian import GaugeScalarField

# the overall constant in front of the action; recorded in reports
ACTION_NORMALIZATION = 1.0


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Tensor grid of ``shape`` nodes over ``[origin, origin + extents]``.

    Periodic axes place ``n`` nodes at spacing ``L / n`` (the endpoint is the
    first node again); open axes place them at ``L / (n - 1)`` including both
    ends.
    """

    dim: int
    extents: tuple[float, ...]
    shape: tuple[int, ...]
    periodic: tuple[bool, ...]
    metric: MetricField
    origin: tuple[float, ...] = field(default=())

    def __post_init__(self):
        ext = tuple(float(e) for e in self.extents)
        shape = tuple(int(n) for n in self.shape)
        periodic = tuple(bool(p) for p in self.periodic)
        origin = tuple(float(o) for o in self.origin) or (0.0,) * self.dim
        for name, seq in (("extents", ext), ("shape", shape), ("periodic", periodic), ("origin", origin)):
            if len(seq) != self.dim:
                raise DimensionMismatch(f"{name} has {len(seq)} entries for a {self.dim}-dimensional domain")
        if self.metric.dim != self.dim:
            raise DimensionMismatch(f"metric has dim {self.metric.dim}, domain has {self.dim}")
        if any(n < 4 for n in shape):
            raise ValueError(f"every axis needs at least 4 nodes, got {shape}")
        if any(not e > 0 for e in ext):
            raise ValueError(f"extents must be positive, got {ext}")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "origin", origin)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n if p else L / (n - 1) for L, n, p in zip(self.extents, self.shape, self.periodic))

    def axis_nodes(self, k: int) -> np.ndarray:
        return self.origin[k] + self.spacing[k] * np.arange(self.shape[k])

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        return np.array(np.meshgrid(*[self.axis_nodes(k) for k in range(self.dim)], indexing="ij"))

    def weights(self) -> np.ndarray:
        """Quadrature weights: rectangle rule on periodic axes, trapezoid on open ones."""
        w = np.ones(self.shape)
        for k, (h, p) in enumerate(zip(self.spacing, self.periodic)):
            wk = np.full(self.shape[k], h)
            if not p:
                wk[0] = wk[-1] = 0.5 * h
            shape = [1] * self.dim
            shape[k] = -1
            w = w * wk.reshape(shape)
        return w

    def metric_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``g``, ``g^{-1}`` with node axes first, and ``sqrt|det g|``."""
        g = self.metric.batch(self.coordinates())  # (dim, dim, *shape)
        g = np.moveaxis(g, (0, 1), (-2, -1))
        det = np.linalg.det(g)
        if np.any(np.abs(det) <= DET_TOL):
            bad = np.unravel_index(int(np.argmax(np.abs(det) <= DET_TOL)), self.shape)
            raise SingularMetric(f"{self.metric.name} is degenerate at grid node {tuple(int(i) for i in bad)}")
        return g, np.linalg.inv(g), np.sqrt(np.abs(det))


@dataclass(frozen=True, eq=False)
class SampledOneForm:
    """``values[mu]`` holds ``A_mu`` at every node, shape ``(dim, *shape)``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim < 2 or vals.shape[0] != vals.ndim - 1:
            raise DimensionMismatch(f"values need shape (dim, *shape) with dim axes, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteField("sampled one-form has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, dom: GridDomain) -> "SampledOneForm":
        return cls(np.zeros((dom.dim,) + dom.shape))

    @classmethod
    def from_field(cls, A, dom: GridDomain, check_periodic: bool = True) -> "SampledOneForm":
        """Sample an analytic one-form; on periodic axes it must actually wrap."""
        if A.dim != dom.dim:
            raise DimensionMismatch(f"one-form has dim {A.dim}, domain has {dom.dim}")
        pts = dom.coordinates()
        vals = A.batch(pts)
        if check_periodic:
            for k, p in enumerate(dom.periodic):
                if not p:
                    continue
                shifted = pts.copy()
                shifted[k] += dom.extents[k]
                if not np.allclose(A.batch(shifted), vals, rtol=1e-9, atol=1e-12):
                    raise NonPeriodicBoundary(f"{A.name} is not periodic along axis {k}; use an open axis")
        return cls(vals)

    def __add__(self, other: "SampledOneForm") -> "SampledOneForm":
        return SampledOneForm(self.values + other.values)

    def scaled(self, lam: float) -> "SampledOneForm":
        return SampledOneForm(lam * self.values)

    def to_csv(self, path) -> None:
        shape = self.values.shape[1:]
        idx = np.indices(shape).reshape(len(shape), -1)
        comps = self.values.reshape(self.dim, -1)
        header = [f"i{k}" for k in range(len(shape))] + [f"A{m}" for m in range(self.dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j in range(idx.shape[1]):
                w.writerow([int(i) for i in idx[:, j]] + [repr(float(c)) for c in comps[:, j]])

    @classmethod
    def from_csv(cls, path) -> "SampledOneForm":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = data.shape[1] // 2
        idx = data[:, :d].astype(int)
        shape = tuple(int(m) + 1 for m in idx.max(axis=0))
        vals = np.full((d,) + shape, np.nan)
        for m in range(d):
            vals[(m,) + tuple(idx.T)] = data[:, d + m]
        if np.any(np.isnan(vals)):
            raise ValueError("CSV does not cover every grid node")
        return cls(vals)


def derivative(f: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    """2nd-order ``d f / d x^axis``: centred, wrapped on periodic axes, one-sided at open ends."""
    n = f.shape[axis]
    if periodic:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)
    if n < 3:
        raise NonPeriodicBoundary(f"open axis {axis} has {n} nodes; one-sided stencils need 3")
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def exterior_derivative(A: SampledOneForm, dom: GridDomain) -> np.ndarray:
    """``F_{mu nu} = D_mu A_nu - D_nu A_mu`` at every node, shape ``(dim, dim, *shape)``."""
    _check(A, dom)
    d = dom.dim
    dA = np.array([[derivative(A.values[nu], mu, dom.spacing[mu], dom.periodic[mu]) for nu in range(d)] for mu in range(d)])
    return dA - dA.transpose(1, 0, *range(2, dA.ndim))


def _check(A: SampledOneForm, dom: GridDomain) -> None:
    if A.values.shape != (dom.dim,) + dom.shape:
        raise DimensionMismatch(f"one-form samples have shape {A.values.shape}, domain needs {(dom.dim,) + dom.shape}")


def _integrate(density: np.ndarray, dom: GridDomain) -> float:
    # fixed-order reduction so results are bit-stable
    return float(np.sum((density * dom.weights()).ravel()))


def field_action_em(A: SampledOneForm, dom: GridDomain) -> float:
    """``N * integral F_{mu nu} F^{mu nu} sqrt|g| d^n x`` with ``N = ACTION_NORMALIZATION``."""
    F = exterior_derivative(A, dom)
    _, ginv, vol = dom.metric_arrays()
    Fn = np.moveaxis(F, (0, 1), (-2, -1))
    # F^{mu nu} = g^{mu a} g^{nu b} F_{ab}
    Fup = np.matmul(np.matmul(ginv, Fn), np.swapaxes(ginv, -1, -2))
    density = np.sum(Fn * Fup, axis=(-2, -1)) * vol
    return ACTION_NORMALIZATION * _integrate(density, dom)


def proca_mass_term(A: SampledOneForm, dom: GridDomain) -> float:
    """``integral g^{mu nu} A_mu A_nu sqrt|g|``: the gauge-breaking control integral."""
    _check(A, dom)
    _, ginv, vol = dom.metric_arrays()
    a = np.moveaxis(A.values, 0, -1)
    density = np.einsum("...m,...mn,...n->...", a, ginv, a) * vol
    return _integrate(density, dom)


def sample_scalar(f: GaugeScalarField | np.ndarray, dom: GridDomain) -> np.ndarray:
    if isinstance(f, np.ndarray):
        if f.shape != dom.shape:
            raise DimensionMismatch(f"sampled gauge function has shape {f.shape}, domain has {dom.shape}")
        return f
    if f.dim != dom.dim:
        raise DimensionMismatch(f"gauge function has dim {f.dim}, domain has {dom.dim}")
    vals = np.broadcast_to(np.asarray(f.func(list(dom.coordinates())), dtype=float), dom.shape)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteField("gauge function is not finite on the grid")
    return np.array(vals)


def gauge_transform(A: SampledOneForm, f: GaugeScalarField | np.ndarray, dom: GridDomain) -> SampledOneForm:
    """``A'_mu = A_mu + D_mu f`` with the same stencil the field strength uses."""
    _check(A, dom)
    fs = sample_scalar(f, dom)
    grad = np.array([derivative(fs, mu, dom.spacing[mu], dom.periodic[mu]) for mu in range(dom.dim)])
    return SampledOneForm(A.values + grad)
