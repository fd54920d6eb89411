"""Forward-mode automatic differentiation with tagged dual numbers.

A ``Dual`` carries a primal value and a tuple of tangent components, so one
pass can push a whole basis through a function. Each pass gets a fresh tag:
when two duals with different tags meet, the newer one sits outside and the
older one is a constant at that level. That keeps nested passes (second
derivatives, gradients evaluated inside field functions) from confusing
their perturbations.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from operator import add, neg, sub
from typing import Any, Callable, Sequence

import numpy as np

_tags = itertools.count(1)


def new_tag() -> int:
    return next(_tags)


class Dual:
    __slots__ = ("val", "eps", "tag")
    # numpy must not broadcast duals into object arrays; mixing a scalar Dual
    # with an ndarray raises TypeError, which field evaluation treats as "not
    # dual friendly" and answers with finite differences instead. Batch duals
    # (array primal values) accept same-shape array constants.
    __array_ufunc__ = None

    def __init__(self, val: Any, eps: tuple, tag: int):
        self.val = val
        self.eps = eps
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    # A same-tag operand contributes its tangent; an older-tag Dual or plain
    # number is a constant here; a newer-tag Dual wraps ``self`` instead.
    def __add__(self, other):
        other = _unwrap(other)
        if type(other) is Dual:
            if other.tag == self.tag:
                return Dual(self.val + other.val, tuple(map(add, self.eps, other.eps)), self.tag)
            if other.tag > self.tag:
                return Dual(self + other.val, other.eps, other.tag)
        elif _refuse(self, other):
            return NotImplemented
        return Dual(self.val + other, self.eps, self.tag)

    __radd__ = __add__

    def __sub__(self, other):
        other = _unwrap(other)
        if type(other) is Dual:
            if other.tag == self.tag:
                return Dual(self.val - other.val, tuple(map(sub, self.eps, other.eps)), self.tag)
            if other.tag > self.tag:
                return Dual(self - other.val, tuple(map(neg, other.eps)), other.tag)
        elif _refuse(self, other):
            return NotImplemented
        return Dual(self.val - other, self.eps, self.tag)

    def __rsub__(self, other):
        other = _unwrap(other)
        if _refuse(self, other):
            return NotImplemented
        return Dual(other - self.val, tuple(map(neg, self.eps)), self.tag)

    def __mul__(self, other):
        other = _unwrap(other)
        if type(other) is Dual:
            if other.tag == self.tag:
                a, b = self.val, other.val
                return Dual(a * b, tuple([x * b + a * y for x, y in zip(self.eps, other.eps)]), self.tag)
            if other.tag > self.tag:
                return Dual(self * other.val, tuple([self * y for y in other.eps]), other.tag)
        elif _refuse(self, other):
            return NotImplemented
        return Dual(self.val * other, tuple([x * other for x in self.eps]), self.tag)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _unwrap(other)
        if type(other) is Dual:
            if other.tag == self.tag:
                b = other.val
                q = self.val / b
                return Dual(q, tuple([(x - q * y) / b for x, y in zip(self.eps, other.eps)]), self.tag)
            if other.tag > self.tag:
                b = other.val
                q = self / b
                return Dual(q, tuple([-q * y / b for y in other.eps]), other.tag)
        elif _refuse(self, other):
            return NotImplemented
        return Dual(self.val / other, tuple([x / other for x in self.eps]), self.tag)

    def __rtruediv__(self, other):
        other = _unwrap(other)
        if _refuse(self, other):
            return NotImplemented
        q = other / self.val
        c = -q / self.val
        return Dual(q, tuple([c * x for x in self.eps]), self.tag)

    def __neg__(self):
        return Dual(-self.val, tuple(map(neg, self.eps)), self.tag)

    def __pos__(self):
        return self

    def __abs__(self):
        return -self if primal(self) < 0 else self

    def __pow__(self, p):
        if type(p) is Dual and p.tag >= self.tag:
            return exp(p * log(self))
        if p == 0:
            return Dual(1.0, tuple(0.0 for _ in self.eps), self.tag)
        if p == 1:
            return self
        a = self.val
        if p == 2:
            c = 2.0 * a
            return Dual(a * a, tuple([c * x for x in self.eps]), self.tag)
        c = p * a ** (p - 1)
        return Dual(a**p, tuple([c * x for x in self.eps]), self.tag)

    def __rpow__(self, a):
        return exp(self * math.log(a))

    # comparisons act on the primal value
    def __lt__(self, other):
        return primal(self) < primal(other)

    def __le__(self, other):
        return primal(self) <= primal(other)

    def __gt__(self, other):
        return primal(self) > primal(other)

    def __ge__(self, other):
        return primal(self) >= primal(other)


def _unwrap(other: Any) -> Any:
    # np.asarray(dual) gives a 0-d object array; treat it as the dual itself
    if type(other) is np.ndarray and other.dtype == object and other.ndim == 0:
        return other.item()
    return other


def _refuse(d: Dual, other: Any) -> bool:
    """Scalar duals never mix with arrays, batch duals only with numeric ones."""
    if not isinstance(other, np.ndarray):
        return False
    return other.dtype == object or not _is_batch(d)


def _is_batch(d: Dual) -> bool:
    return type(primal(d)) is np.ndarray


def primal(x: Any) -> Any:
    """Strip every dual layer and return the plain value."""
    while type(x) is Dual:
        x = x.val
    return x


# -- elementary functions ---------------------------------------------------
def _unary(name: str, f: Callable, df: Callable) -> Callable:
    npf = getattr(np, name)

    def op(x):
        if type(x) is Dual:
            d = df(x.val)
            return Dual(op(x.val), tuple([d * e for e in x.eps]), x.tag)
        if isinstance(x, np.ndarray):
            if x.dtype == object:
                out = np.empty(x.size, dtype=object)
                out[:] = [op(e) for e in x.flat]
                return out.reshape(x.shape)
            return npf(x)
        return f(x)

    op.__name__ = name
    return op


sin = _unary("sin", math.sin, lambda u: cos(u))
cos = _unary("cos", math.cos, lambda u: -sin(u))
tan = _unary("tan", math.tan, lambda u: 1.0 / cos(u) ** 2)
exp = _unary("exp", math.exp, lambda u: exp(u))
log = _unary("log", math.log, lambda u: 1.0 / u)
sqrt = _unary("sqrt", math.sqrt, lambda u: 0.5 / sqrt(u))
sinh = _unary("sinh", math.sinh, lambda u: cosh(u))
cosh = _unary("cosh", math.cosh, lambda u: sinh(u))
tanh = _unary("tanh", math.tanh, lambda u: 1.0 - tanh(u) ** 2)


# -- extraction ---------------------------------------------------------------
def _flatten(out: Any) -> tuple[list, tuple[int, ...]]:
    if isinstance(out, (list, tuple)):
        if not out:
            return [], (0,)
        first = out[0]
        if not isinstance(first, (list, tuple, np.ndarray)):
            return list(out), (len(out),)
        if isinstance(first, (list, tuple)) and first and not isinstance(first[0], (list, tuple, np.ndarray)):
            return [leaf for row in out for leaf in row], (len(out), len(first))
        parts = [_flatten(o) for o in out]
        return [leaf for p in parts for leaf in p[0]], (len(out),) + parts[0][1]
    if isinstance(out, np.ndarray):
        return out.ravel().tolist(), out.shape
    return [out], ()


def _pack(flat: list, shape: tuple[int, ...]) -> np.ndarray:
    try:
        return np.array(flat, dtype=float).reshape(shape)
    except TypeError:
        # leaves that are duals of an outer pass
        arr = np.empty(len(flat), dtype=object)
        arr[:] = flat
        return arr.reshape(shape)


@lru_cache(maxsize=None)
def _basis(n: int) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(1.0 if i == k else 0.0 for i in range(n)) for k in range(n))


def _split_leaves(leaves: list, tag: int, n: int) -> tuple[list, list]:
    zero = (0.0,) * n
    vals = [r.val if type(r) is Dual and r.tag == tag else r for r in leaves]
    eps = [r.eps if type(r) is Dual and r.tag == tag else zero for r in leaves]
    return vals, eps


def strip(out: Any, tag: int) -> np.ndarray:
    """Primal part of ``out`` with respect to ``tag``; other layers are kept."""
    leaves, shape = _flatten(out)
    return _pack([r.val if type(r) is Dual and r.tag == tag else r for r in leaves], shape)


def jacobian(f: Callable, x: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(f(x), J)`` with ``J[..., k] = d f[...] / d x[k]``.

    ``f`` takes a list of coordinates and may return a scalar or a nested
    sequence. One forward pass carries the full basis as the tangent.
    """
    x = list(x)
    n = len(x)
    tag = new_tag()
    basis = _basis(n)
    leaves, shape = _flatten(f([Dual(xi, basis[k], tag) for k, xi in enumerate(x)]))
    vals, eps = _split_leaves(leaves, tag, n)
    try:
        jac = np.array(eps, dtype=float).reshape(shape + (n,))
    except TypeError:
        jac = _pack([e for row in eps for e in row], shape + (n,))
    return _pack(vals, shape), jac


def jvp(f: Callable, x: Sequence, direction: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Value and directional derivative of ``f`` at ``x`` along ``direction``."""
    tag = new_tag()
    leaves, shape = _flatten(f([Dual(xi, (di,), tag) for xi, di in zip(x, direction)]))
    vals, eps = _split_leaves(leaves, tag, 1)
    return _pack(vals, shape), _pack([e[0] for e in eps], shape)


def gradient(f: Callable, x: Sequence) -> tuple[Any, np.ndarray]:
    value, jac = jacobian(f, x)
    return value[()] if value.ndim == 0 else value, jac


def hessian(f: Callable, x: Sequence) -> tuple[Any, np.ndarray, np.ndarray]:
    """Return ``(f, grad f, Hess f)`` for a scalar ``f`` by nested forward passes."""
    holder = {}

    def grad_f(y):
        v, g = jacobian(f, y)
        holder.setdefault("v", strip(v, y[0].tag) if y else v)
        return g.tolist()

    g, h = jacobian(grad_f, x)
    v = holder["v"]
    return v[()] if v.ndim == 0 else v, g, h


def central_difference(f: Callable, x: Sequence, h: float | None = None) -> np.ndarray:
    """Central finite-difference Jacobian (derivative index last).

    Step defaults to ``1e-6 * max(1, |x|)``.
    """
    x = np.asarray([primal(xi) for xi in x], dtype=float)
    if h is None:
        h = 1e-6 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    cols = []
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        fp = np.asarray(f(list(xp)), dtype=float)
        fm = np.asarray(f(list(xm)), dtype=float)
        cols.append((fp - fm) / (2 * h))
    return np.stack(cols, axis=-1)


def batch_gradient(f: Callable, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of a scalar ``f`` at many points at once.

    ``X`` has shape ``(n, N)``; each coordinate is a dual whose primal is a
    length-N array, so one pass differentiates all N points. Returns values of
    shape ``(N,)`` and gradients of shape ``(n, N)``. ``f`` must not mix its
    inputs with plain ndarrays (that raises TypeError).
    """
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    tag = new_tag()
    basis = _basis(n)
    out = f([Dual(X[k], basis[k], tag) for k in range(n)])
    if type(out) is Dual and out.tag == tag:
        val = np.broadcast_to(np.asarray(primal(out.val), dtype=float), (N,))
        grad = np.array([np.broadcast_to(np.asarray(primal(e), dtype=float), (N,)) for e in out.eps])
        return np.array(val), grad
    return np.array(np.broadcast_to(np.asarray(primal(out), dtype=float), (N,))), np.zeros((n, N))
