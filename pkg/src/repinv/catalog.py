"""Built-in background fields, selectable by name from scenario configs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from .autodiff import sin
from .errors import ConfigError
from .geometry import MetricField, OneFormField, SymmetricTensorField


def _diag(entries: Sequence[Any]) -> list[list[Any]]:
    n = len(entries)
    return [[entries[i] if i == j else 0.0 for j in range(n)] for i in range(n)]


def minkowski(dim: int = 4) -> MetricField:
    """diag(1, -1, ..., -1)."""
    row = [1.0] + [-1.0] * (dim - 1)
    g = _diag(row)
    return MetricField(lambda x: g, dim, tuple(int(s) for s in row), name=f"minkowski{dim}")


def euclidean(dim: int = 3) -> MetricField:
    g = _diag([1.0] * dim)
    return MetricField(lambda x: g, dim, (1,) * dim, name=f"euclidean{dim}")


def schwarzschild(mass: float = 1.0) -> MetricField:
    """Schwarzschild exterior in (t, r, theta, phi), signature (+,-,-,-)."""
    M = float(mass)

    def g(x):
        r, th = x[1], x[2]
        f = 1.0 - 2.0 * M / r
        s = sin(th)
        return _diag([f, -1.0 / f, -(r * r), -(r * r) * s * s])

    return MetricField(g, 4, (1, -1, -1, -1), name="schwarzschild")


def polar() -> MetricField:
    """Flat plane in (r, theta): diag(1, r^2)."""
    return MetricField(lambda x: _diag([1.0, x[0] * x[0]]), 2, (1, 1), name="polar")


def spherical() -> MetricField:
    """Flat space in (r, theta, phi)."""

    def g(x):
        r, th = x[0], x[1]
        s = sin(th)
        return _diag([1.0, r * r, r * r * s * s])

    return MetricField(g, 3, (1, 1, 1), name="spherical")


def sphere(radius: float = 1.0) -> MetricField:
    """Round 2-sphere in (theta, phi): R^2 diag(1, sin^2 theta)."""
    R2 = float(radius) ** 2

    def g(x):
        s = sin(x[0])
        return _diag([R2, R2 * s * s])

    return MetricField(g, 2, (1, 1), name="sphere")


def constant_one_form(components: Sequence[float]) -> OneFormField:
    comps = [float(c) for c in components]
    return OneFormField(lambda x: comps, len(comps), name="constant_one_form")


def uniform_magnetic(B: float = 1.0, dim: int = 4) -> OneFormField:
    """Symmetric-gauge potential A = (0, -B y/2, B x/2, 0, ...) in (t, x, y, ...)."""
    B = float(B)

    def A(x):
        out = [0.0] * dim
        out[1] = -0.5 * B * x[2]
        out[2] = 0.5 * B * x[1]
        return out

    return OneFormField(A, dim, name="uniform_magnetic")


def _monomial(x, coef: float, exps: Sequence[int]):
    term = coef
    for xi, e in zip(x, exps):
        if e:
            term = term * xi**e
    return term


def _polynomial(x, terms: Sequence[Sequence]):
    total = 0.0
    for coef, exps in terms:
        total = total + _monomial(x, float(coef), exps)
    return total


def polynomial_one_form(dim: int, components: Mapping[int, Sequence]) -> OneFormField:
    """``components[k]`` is a list of ``(coef, exponents)`` monomials for A_k."""
    comps = {int(k): list(v) for k, v in components.items()}

    def A(x):
        return [_polynomial(x, comps.get(k, [])) for k in range(dim)]

    return OneFormField(A, dim, name="polynomial_one_form")


def polynomial_symmetric(rank: int, dim: int, components: Mapping[Sequence[int], Sequence]) -> SymmetricTensorField:
    """Rank-n symmetric field; keys are sorted index tuples, values monomial lists."""
    comps = {tuple(sorted(int(i) for i in k)): list(v) for k, v in components.items()}

    def S(x):
        return {k: _polynomial(x, terms) for k, terms in comps.items()}

    return SymmetricTensorField(rank, dim, S, name="polynomial_symmetric")


def polynomial_metric(
    base: Sequence[Sequence[float]], signature: Sequence[int], components: Mapping[Sequence[int], Sequence]
) -> MetricField:
    """Constant matrix ``base`` plus polynomial corrections on sorted index pairs."""
    dim = len(base)
    base = [[float(b) for b in row] for row in base]
    comps = {tuple(sorted(int(i) for i in k)): list(v) for k, v in components.items()}

    def g(x):
        out = [[base[i][j] for j in range(dim)] for i in range(dim)]
        for (i, j), terms in comps.items():
            p = _polynomial(x, terms)
            out[i][j] = out[i][j] + p
            if i != j:
                out[j][i] = out[j][i] + p
        return out

    return MetricField(g, dim, tuple(int(s) for s in signature), name="polynomial_metric")


@dataclass(frozen=True)
class CatalogEntry:
    kind: str  # "metric" | "one_form" | "symmetric"
    factory: Callable
    params: tuple[str, ...]
    summary: str


CATALOG: dict[str, CatalogEntry] = {
    "minkowski": CatalogEntry("metric", minkowski, ("dim",), "flat diag(1,-1,...,-1)"),
    "euclidean": CatalogEntry("metric", euclidean, ("dim",), "flat diag(1,...,1)"),
    "schwarzschild": CatalogEntry("metric", schwarzschild, ("mass",), "Schwarzschild in (t,r,theta,phi)"),
    "polar": CatalogEntry("metric", polar, (), "flat plane in (r,theta)"),
    "spherical": CatalogEntry("metric", spherical, (), "flat 3-space in (r,theta,phi)"),
    "sphere": CatalogEntry("metric", sphere, ("radius",), "round 2-sphere in (theta,phi)"),
    "polynomial_metric": CatalogEntry(
        "metric", polynomial_metric, ("base", "signature", "components"), "constant + polynomial metric"
    ),
    "constant_one_form": CatalogEntry("one_form", constant_one_form, ("components",), "constant A (pure gauge)"),
    "uniform_magnetic": CatalogEntry("one_form", uniform_magnetic, ("B", "dim"), "symmetric-gauge uniform B along z"),
    "polynomial_one_form": CatalogEntry(
        "one_form", polynomial_one_form, ("dim", "components"), "polynomial A_mu(x)"
    ),
    "polynomial_symmetric": CatalogEntry(
        "symmetric", polynomial_symmetric, ("rank", "dim", "components"), "polynomial rank-n symmetric tensor"
    ),
}


def build(name: str, params: Mapping[str, Any] | None = None):
    """Instantiate a catalog field; unknown names or parameters raise ConfigError."""
    if name not in CATALOG:
        raise ConfigError(f"unknown field {name!r}; known: {sorted(CATALOG)}")
    entry = CATALOG[name]
    params = dict(params or {})
    unknown = set(params) - set(entry.params)
    if unknown:
        raise ConfigError(f"field {name!r} does not take parameters {sorted(unknown)}")
    try:
        return entry.factory(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {name!r}: {exc}") from exc
