"""Background fields on the target manifold and their differential geometry.

Fields are closed-form coefficient functions ``func(x) -> components`` where
``x`` is a list of coordinates. Coefficient functions should use the
elementary functions from :mod:`repinv.autodiff` so they accept floats,
dual numbers and numpy arrays alike. Partials are taken by forward-mode
differentiation; a coefficient function that rejects dual inputs falls
back to central differences.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, NonFiniteField, SingularMetric

DET_TOL = 1e-10

Event = np.ndarray
Velocity = np.ndarray


def as_event(x: Sequence[float], dim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DimensionMismatch(f"event must be a vector of length >= 2, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise DimensionMismatch(f"event has {arr.size} coordinates, field expects {dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteField(f"event has non-finite coordinates: {arr}")
    return arr


def _check_finite(values: np.ndarray, what: str, x) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteField(f"{what} is not finite at x = {np.asarray(x).tolist()}")
    return values


def _broadcast(out: Any, batch_shape: tuple[int, ...]) -> np.ndarray:
    """Stack a nested coefficient list whose leaves are scalars or arrays."""
    if isinstance(out, (list, tuple)):
        return np.stack([_broadcast(o, batch_shape) for o in out])
    return np.broadcast_to(np.asarray(out, dtype=float), batch_shape)


@lru_cache(maxsize=None)
def multiplicity(key: tuple[int, ...]) -> int:
    """Number of distinct ordered tuples that sort to ``key``."""
    counts = [key.count(i) for i in set(key)]
    m = math.factorial(len(key))
    for c in counts:
        m //= math.factorial(c)
    return m


@lru_cache(maxsize=None)
def multisets(dim: int, rank: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations_with_replacement(range(dim), rank))


class _Field:
    dim: int
    func: Callable

    def components(self, x: Sequence) -> Any:
        """Raw, dual-capable coefficient evaluation."""
        return self.func(list(x))

    def jet(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Value and first partials; the derivative index is last."""
        x = as_event(x, self.dim)
        try:
            value, jac = ad.jacobian(self.func, x)
            value = np.asarray(value, dtype=float)
            jac = np.asarray(jac, dtype=float)
        except (TypeError, AttributeError):
            value = np.asarray(self.func(list(x)), dtype=float)
            jac = ad.central_difference(self.func, x)
        _check_finite(value, self.name, x)
        _check_finite(jac, f"derivative of {self.name}", x)
        return value, jac

    def batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on coordinate arrays ``points[k]`` of a common shape."""
        points = np.asarray(points, dtype=float)
        out = _broadcast(self.func(list(points)), points.shape[1:])
        return _check_finite(np.array(out), self.name, points[:, :1])


@dataclass(frozen=True, eq=False)
class MetricField(_Field):
    """Symmetric rank-2 field ``g_{mu nu}(x)``; ``func`` returns a dim x dim nested list."""

    func: Callable
    dim: int
    signature: tuple[int, ...]
    name: str = "metric"

    def __post_init__(self):
        if len(self.signature) != self.dim:
            raise DimensionMismatch(f"signature {self.signature} does not match dim {self.dim}")

    def __call__(self, x: Sequence[float]) -> np.ndarray:
        x = as_event(x, self.dim)
        return _check_finite(np.asarray(self.func(list(x)), dtype=float), self.name, x)

    def validate(self, x: Sequence[float]) -> np.ndarray:
        """Check symmetry, nondegeneracy and declared signature at ``x``."""
        g = self(x)
        if np.max(np.abs(g - g.T)) > 1e-12:
            raise ValueError(f"{self.name} is not symmetric at {list(x)}")
        if abs(np.linalg.det(g)) <= DET_TOL:
            raise SingularMetric(f"{self.name} is degenerate at {list(x)}")
        signs = np.sign(np.linalg.eigvalsh(g))
        if sorted(signs) != sorted(self.signature):
            raise ValueError(f"{self.name} has eigenvalue signs {signs}, declared {self.signature}")
        return g

    def norm2(self, x: Sequence[float], v: Sequence[float]) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self(x) @ v)

    def as_symmetric(self) -> SymmetricTensorField:
        f = self.func

        def comps(x):
            g = f(x)
            return {key: g[key[0]][key[1]] for key in multisets(self.dim, 2)}

        return SymmetricTensorField(rank=2, dim=self.dim, func=comps, name=self.name)


@dataclass(frozen=True, eq=False)
class OneFormField(_Field):
    """Components ``A_mu(x)``; ``func`` returns a length-dim list."""

    func: Callable
    dim: int
    name: str = "one_form"

    def __call__(self, x: Sequence[float]) -> np.ndarray:
        x = as_event(x, self.dim)
        return _check_finite(np.asarray(self.func(list(x)), dtype=float), self.name, x)

    def as_symmetric(self) -> SymmetricTensorField:
        f = self.func

        def comps(x):
            a = f(x)
            return {(k,): a[k] for k in range(self.dim)}

        return SymmetricTensorField(rank=1, dim=self.dim, func=comps, name=self.name)


@dataclass(frozen=True, eq=False)
class SymmetricTensorField:
    """Totally symmetric rank-n field stored once per sorted index multiset.

    ``func(x)`` returns a mapping from non-decreasing index tuples to values;
    absent keys are zero. Every ordered tuple carries the value of its sorted
    multiset, so a full contraction weights each stored entry by its
    multiplicity.
    """

    rank: int
    dim: int
    func: Callable[[list], Mapping[tuple[int, ...], Any]]
    name: str = "symmetric"

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")

    def stored(self, x: Sequence) -> dict[tuple[int, ...], Any]:
        comps = self.func(list(x))
        out = {}
        for key, val in comps.items():
            key = tuple(key)
            if len(key) != self.rank or list(key) != sorted(key):
                raise ValueError(f"{self.name}: key {key} is not a sorted rank-{self.rank} multiset")
            out[key] = val
        return out

    def expand(self, x: Sequence[float]) -> np.ndarray:
        """Full ordered-index array, permutation symmetric by construction."""
        full = np.zeros((self.dim,) * self.rank)
        for key, val in self.stored(x).items():
            for perm in set(itertools.permutations(key)):
                full[perm] = float(val)
        return full

    def contract(self, x: Sequence, v: Sequence) -> Any:
        """``S(v, ..., v)``; accepts dual-valued ``x`` and ``v``."""
        if len(v) != self.dim:
            raise DimensionMismatch(f"{self.name}: velocity has {len(v)} components, expected {self.dim}")
        total = 0.0
        for key, val in self.stored(x).items():
            term = multiplicity(key) * val
            for i in key:
                term = term * v[i]
            total = total + term
        return total


def as_symmetric(f: MetricField | OneFormField | SymmetricTensorField) -> SymmetricTensorField:
    return f if isinstance(f, SymmetricTensorField) else f.as_symmetric()


# -- derived quantities -----------------------------------------------------
def _inverse(g: np.ndarray, name: str, x) -> np.ndarray:
    if abs(np.linalg.det(g)) <= DET_TOL:
        raise SingularMetric(f"{name} is degenerate at x = {np.asarray(x).tolist()} (|det g| <= {DET_TOL})")
    return np.linalg.inv(g)


def _christoffel_from(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    # dg[i, j, k] = d_k g_ij; Gamma[a, b, c] = Gamma^a_{bc}
    lowered = dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1)
    return 0.5 * np.einsum("ar,rbc->abc", ginv, lowered)


def christoffel(g: MetricField, x: Sequence[float]) -> np.ndarray:
    """Levi-Civita connection coefficients ``Gamma^a_{bc}`` at ``x``."""
    gx, dg = g.jet(x)
    ginv = _inverse(gx, g.name, x)
    gamma = _christoffel_from(ginv, dg)
    # enforce exact lower-index symmetry against round-off in the einsum
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def metric_jet2(g: MetricField, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``g``, first and second partials (derivative indices last)."""
    x = as_event(x, g.dim)
    holder = {}

    def first(y):
        val, jac = ad.jacobian(g.func, y)
        holder.setdefault("g", ad.strip(val, y[0].tag))
        return jac.tolist()

    try:
        dg, d2g = ad.jacobian(first, x)
        gx = np.asarray(holder["g"], dtype=float)
        dg = np.asarray(dg, dtype=float)
        d2g = np.asarray(d2g, dtype=float)
    except (TypeError, AttributeError):
        gx = g(x)
        dg = ad.central_difference(g.func, x)
        d2g = ad.central_difference(lambda y: ad.central_difference(g.func, y, h=1e-4), x, h=1e-4)
    _check_finite(d2g, f"second derivative of {g.name}", x)
    return gx, dg, d2g


def riemann(g: MetricField, x: Sequence[float]) -> np.ndarray:
    """Riemann tensor ``R^a_{bcd}`` at ``x``.

    R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
                + Gamma^a_{cr} Gamma^r_{db} - Gamma^a_{dr} Gamma^r_{cb}
    """
    gx, dg, d2g = metric_jet2(g, x)
    ginv = _inverse(gx, g.name, x)
    lowered = dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1)
    dlowered = d2g.transpose(0, 2, 1, 3) + d2g - d2g.transpose(2, 0, 1, 3)
    dginv = -np.einsum("am,mns,nr->ars", ginv, dg, ginv)
    gamma = 0.5 * np.einsum("ar,rbc->abc", ginv, lowered)
    # dgamma[a, b, c, s] = d_s Gamma^a_{bc}
    dgamma = 0.5 * (np.einsum("ars,rbc->abcs", dginv, lowered) + np.einsum("ar,rbcs->abcs", ginv, dlowered))
    r = np.einsum("adbc->abcd", dgamma) - np.einsum("acbd->abcd", dgamma)
    r = r + np.einsum("acr,rdb->abcd", gamma, gamma) - np.einsum("adr,rcb->abcd", gamma, gamma)
    return r


def ricci(g: MetricField, x: Sequence[float]) -> np.ndarray:
    """``R_{bd} = R^a_{bad}``."""
    return np.einsum("abad->bd", riemann(g, x))


def faraday(A: OneFormField, x: Sequence[float]) -> np.ndarray:
    """``F_{mu nu} = d_mu A_nu - d_nu A_mu``; exactly antisymmetric."""
    _, dA = A.jet(x)
    return dA.T - dA


def symmetric_contract(S: SymmetricTensorField | MetricField | OneFormField, x: Sequence, v: Sequence) -> float:
    S = as_symmetric(S)
    if len(x) != S.dim:
        raise DimensionMismatch(f"{S.name}: event has {len(x)} coordinates, expected {S.dim}")
    return S.contract(x, v)


def raise_faraday(g: MetricField, A: OneFormField, x: Sequence[float]) -> np.ndarray:
    """Mixed Faraday tensor ``F^a_nu = g^{a mu} F_{mu nu}``."""
    return _inverse(g(x), g.name, x) @ faraday(A, x)


def geodesic_acceleration(g: MetricField, x: Sequence[float], v: Sequence[float]) -> np.ndarray:
    """``-Gamma^a_{bc} v^b v^c``, contracted before raising the index.

    Equivalent to contracting :func:`christoffel` with ``v`` twice, but cheaper
    on the integrator's hot path.
    """
    gx, dg = g.jet(x)
    if abs(np.linalg.det(gx)) <= DET_TOL:
        raise SingularMetric(f"{g.name} is degenerate at x = {np.asarray(x).tolist()} (|det g| <= {DET_TOL})")
    v = np.asarray(v, dtype=float)
    dgv = dg @ v  # [r, c] = d_b g_rc v^b
    lowered = dgv @ v - 0.5 * (v @ (v @ dg))
    return -np.linalg.solve(gx, lowered)
