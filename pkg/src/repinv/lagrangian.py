"""Canonical first-order homogeneous Lagrangians.

A degree-1 spec evaluates ``sum_n c_n * S_n(v, ..., v) ** (1/n)``; the n = 1
term is the pulled-back one-form ``A . v`` and the n = 2 term the metric
length. Specs with a declared degree k != 1 are test Lagrangians such as
``L2 = g(v, v)`` or ``(L1)**3``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, DomainError, NoSuchTerm, UndefinedDegree
from .geometry import MetricField, OneFormField, SymmetricTensorField, as_event, as_symmetric


@dataclass(frozen=True)
class GaugeScalarField:
    """Scalar ``Lambda(x)`` used for L -> L + dLambda/dtau and A -> A + df."""

    func: Callable
    dim: int
    name: str = "gauge"

    def __call__(self, x: Sequence[float]) -> float:
        return float(self.func(list(x)))

    def gradient(self, x: Sequence) -> list:
        """``d_a Lambda``; dual-valued when ``x`` is."""
        _, g = ad.jacobian(self.func, x)
        return g.tolist()


@dataclass(frozen=True)
class LagrangianTerm:
    order: int
    field: SymmetricTensorField
    coupling: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "field", as_symmetric(self.field))
        if self.order < 1:
            raise ValueError("term order must be >= 1")
        if self.field.rank != self.order:
            raise ValueError(f"term of order {self.order} needs a rank-{self.order} field, got rank {self.field.rank}")
        if not np.isfinite(self.coupling):
            raise ValueError("coupling must be finite")


@dataclass(frozen=True)
class LagrangianSpec:
    terms: tuple[LagrangianTerm, ...]
    homogeneity: int = 1
    name: str = field(default="L", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("a Lagrangian needs at least one term")
        orders = [t.order for t in self.terms]
        if len(set(orders)) != len(orders):
            raise ValueError(f"term orders must be distinct, got {orders}")
        dims = {t.field.dim for t in self.terms}
        if len(dims) != 1:
            raise DimensionMismatch(f"terms live in different dimensions: {sorted(dims)}")
        if self.homogeneity < 1:
            raise ValueError("homogeneity must be >= 1")

    @property
    def dim(self) -> int:
        return self.terms[0].field.dim

    def term(self, order: int) -> LagrangianTerm:
        for t in self.terms:
            if t.order == order:
                return t
        raise NoSuchTerm(f"{self.name} has no term of order {order}")

    @property
    def is_raw_polynomial(self) -> bool:
        """A single order-k term in a declared degree-k spec: evaluated as c * S_k(v)."""
        return self.homogeneity != 1 and len(self.terms) == 1 and self.terms[0].order == self.homogeneity

    def __call__(self, x: Sequence[float], v: Sequence[float]) -> float:
        return eval_lagrangian(self, x, v)


# -- convenience constructors ----------------------------------------------
def particle(g: MetricField | None = None, A: OneFormField | None = None, m: float = 1.0, q: float = 1.0) -> LagrangianSpec:
    """``q A.v + m sqrt(g(v, v))``; either part may be omitted."""
    terms = []
    if A is not None:
        terms.append(LagrangianTerm(1, A, q))
    if g is not None:
        terms.append(LagrangianTerm(2, g, m))
    return LagrangianSpec(tuple(terms), name="particle")


def quadratic(g: MetricField) -> LagrangianSpec:
    """``L2 = g(v, v)``, homogeneous of degree 2."""
    return LagrangianSpec((LagrangianTerm(2, g, 1.0),), homogeneity=2, name="L2")


def power_of_length(g: MetricField, k: int) -> LagrangianSpec:
    """``(sqrt(g(v, v)))**k``, homogeneous of degree k."""
    if k == 2:
        return quadratic(g)
    return LagrangianSpec((LagrangianTerm(2, g, 1.0),), homogeneity=k, name=f"L1^{k}")


# -- evaluation ---------------------------------------------------------------
def nth_root(s: Any, n: int) -> Any:
    """Real n-th root; principal positive root for even n, sign-preserving for odd n."""
    if n == 1:
        return s
    # p may be an array when evaluating many samples in one pass
    p = np.asarray(ad.primal(s))
    if n % 2 == 0:
        if not np.all(p > 0):
            raise DomainError(
                f"order-{n} radicand S(v,...,v) = {np.min(p):.6g} <= 0; a massive term needs a timelike velocity"
            )
        return ad.sqrt(s) if n == 2 else s ** (1.0 / n)
    if np.any(p == 0):
        raise DomainError(f"order-{n} radicand vanishes; the root has no derivative there")
    if np.all(p > 0):
        return s ** (1.0 / n)
    if np.all(p < 0):
        return -((-s) ** (1.0 / n))
    raise TypeError("mixed-sign odd radicands in one batch")


def _canonical_sum(spec: LagrangianSpec, x: Sequence, v: Sequence) -> Any:
    total = 0.0
    for t in spec.terms:
        total = total + t.coupling * nth_root(t.field.contract(x, v), t.order)
    return total


def lagrangian_value(spec: LagrangianSpec, x: Sequence, v: Sequence) -> Any:
    """Dual-capable evaluation used by every derivative below."""
    if spec.is_raw_polynomial:
        t = spec.terms[0]
        return t.coupling * t.field.contract(x, v)
    total = _canonical_sum(spec, x, v)
    return total if spec.homogeneity == 1 else total**spec.homogeneity


def _check(spec: LagrangianSpec, x, v) -> tuple[np.ndarray, np.ndarray]:
    x = as_event(x, spec.dim)
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.dim,):
        raise DimensionMismatch(f"velocity has shape {v.shape}, expected ({spec.dim},)")
    return x, v


def eval_lagrangian(spec: LagrangianSpec, x: Sequence[float], v: Sequence[float]) -> float:
    x, v = _check(spec, x, v)
    return float(lagrangian_value(spec, list(x), list(v)))


def velocity_gradient(spec: LagrangianSpec, x, v) -> tuple[float, np.ndarray]:
    """``(L, dL/dv)``."""
    x, v = _check(spec, x, v)
    xs = list(x)
    val, grad = ad.jacobian(lambda vv: lagrangian_value(spec, xs, vv), v)
    return float(val), grad


def phase_gradient(spec: LagrangianSpec, x, v) -> tuple[float, np.ndarray, np.ndarray]:
    """``(L, dL/dx, dL/dv)`` in one forward pass over (x, v)."""
    x, v = _check(spec, x, v)
    d = spec.dim
    val, grad = ad.jacobian(lambda z: lagrangian_value(spec, z[:d], z[d:]), np.concatenate([x, v]))
    return float(val), grad[:d], grad[d:]


def batch_phase_gradient(spec: LagrangianSpec, X: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(L, dL/dx, dL/dv)`` at N samples; ``X`` and ``V`` have shape ``(N, dim)``.

    Uses one array-valued forward pass when the field functions allow it and
    falls back to a per-sample loop otherwise.
    """
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if X.shape != V.shape or X.ndim != 2 or X.shape[1] != spec.dim:
        raise DimensionMismatch(f"samples have shapes {X.shape} and {V.shape}, expected (N, {spec.dim})")
    d = spec.dim
    try:
        val, grad = ad.batch_gradient(lambda z: lagrangian_value(spec, z[:d], z[d:]), np.concatenate([X, V], axis=1).T)
        if np.all(np.isfinite(val)) and np.all(np.isfinite(grad)):
            return val, grad[:d].T.copy(), grad[d:].T.copy()
    except (TypeError, AttributeError, ValueError, ZeroDivisionError):
        pass
    rows = [phase_gradient(spec, x, v) for x, v in zip(X, V)]
    return (
        np.array([r[0] for r in rows]),
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]),
    )


def hamiltonian(spec: LagrangianSpec, x, v) -> float:
    """Energy function ``h = v . dL/dv - L``."""
    val, p = velocity_gradient(spec, x, v)
    return float(np.dot(np.asarray(v, dtype=float), p) - val)


def hessian_vv(spec: LagrangianSpec, x, v) -> np.ndarray:
    """``d^2 L / dv^a dv^b``; singular for every degree-1 spec."""
    x, v = _check(spec, x, v)
    xs = list(x)
    _, _, h = ad.hessian(lambda vv: lagrangian_value(spec, xs, vv), v)
    return np.asarray(h, dtype=float)


def source_density(spec: LagrangianSpec, n: int, x, v) -> np.ndarray:
    """``dL/dS_{a1...an}`` per ordered index tuple (an n-index array).

    For a canonical term this is ``c/n * S(v..v)**((1-n)/n) * v^a1 ... v^an``.
    """
    x, v = _check(spec, x, v)
    t = spec.term(n)
    s = float(t.field.contract(list(x), list(v)))
    outer = v
    for _ in range(n - 1):
        outer = np.multiply.outer(outer, v)
    if spec.is_raw_polynomial:
        return t.coupling * outer
    root = nth_root(s, n)
    factor = t.coupling / n * root ** (1 - n)
    if spec.homogeneity != 1:
        factor *= spec.homogeneity * float(_canonical_sum(spec, list(x), list(v))) ** (spec.homogeneity - 1)
    return factor * outer


def gauge_shift(spec: LagrangianSpec, gauge: GaugeScalarField) -> LagrangianSpec:
    """``L -> L + dLambda/dtau`` by adding ``dLambda`` to the one-form term.

    With coupling q on the n = 1 term the one-form becomes ``A + dLambda / q`` so
    that ``L'(x, v) = L(x, v) + d_a Lambda(x) v^a`` exactly. A spec without an
    n = 1 term gains one with unit coupling.
    """
    if spec.homogeneity != 1:
        raise ValueError("gauge_shift applies to degree-1 specs")
    if gauge.dim != spec.dim:
        raise DimensionMismatch(f"gauge field has dim {gauge.dim}, Lagrangian has {spec.dim}")
    try:
        old = spec.term(1)
    except NoSuchTerm:
        old = None
    q = 1.0 if old is None or old.coupling == 0 else old.coupling
    old_func = old.field.func if old is not None else None
    scale = (old.coupling / q) if old is not None else 0.0
    dim = spec.dim

    def shifted(x):
        grad = gauge.gradient(x)
        base = old_func(x) if old_func is not None else {}
        return {(k,): scale * base.get((k,), 0.0) + grad[k] / q for k in range(dim)}

    new_term = LagrangianTerm(1, SymmetricTensorField(1, dim, shifted, name=f"A+d{gauge.name}"), q)
    terms = [new_term] + [t for t in spec.terms if t.order != 1]
    return LagrangianSpec(tuple(terms), homogeneity=1, name=f"{spec.name}+d{gauge.name}")


def homogeneity_check(spec: LagrangianSpec, x, v, alpha: float) -> tuple[float, float]:
    """``(log(L(alpha v)/L(v)) / log(alpha), |v . dL/dv - n L|)``."""
    if alpha <= 0 or alpha == 1:
        raise ValueError("alpha must be positive and different from 1")
    l1, p = velocity_gradient(spec, x, v)
    if l1 == 0:
        raise UndefinedDegree("L(x, v) = 0; the degree cannot be estimated")
    l2 = eval_lagrangian(spec, x, alpha * np.asarray(v, dtype=float))
    if l2 / l1 <= 0:
        raise UndefinedDegree("L changes sign under scaling; the degree cannot be estimated")
    degree = float(np.log(l2 / l1) / np.log(alpha))
    residual = abs(float(np.dot(np.asarray(v, dtype=float), p)) - spec.homogeneity * l1)
    return degree, residual


# -- the two-metric example ----------------------------------------------------
def two_metric_value(h: Any, g: Any, v: Sequence) -> Any:
    """``(h v v) (g v v)**(-1/2)`` for component arrays ``h``, ``g`` (dual friendly)."""
    n = len(v)
    hvv = sum(h[a][b] * v[a] * v[b] for a in range(n) for b in range(n))
    gvv = sum(g[a][b] * v[a] * v[b] for a in range(n) for b in range(n))
    if not ad.primal(gvv) > 0:
        raise DomainError("g(v, v) must be positive for the two-metric Lagrangian")
    return hvv / ad.sqrt(gvv)


def two_metric_sources(h: MetricField, g: MetricField, x, v) -> tuple[np.ndarray, np.ndarray]:
    """``(dL/dh_{ab}, dL/dg_{ab})`` by forward differentiation in each ordered component."""
    x = as_event(x, g.dim)
    v = list(np.asarray(v, dtype=float))
    hx, gx = h(x), g(x)
    n = g.dim

    def wrt(which):
        def f(flat):
            comps = [[flat[a * n + b] for b in range(n)] for a in range(n)]
            return two_metric_value(comps, gx, v) if which == "h" else two_metric_value(hx, comps, v)

        base = (hx if which == "h" else gx).ravel()
        _, grad = ad.jacobian(f, base)
        return grad.reshape(n, n)

    return wrt("h"), wrt("g")
