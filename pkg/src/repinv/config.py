"""Scenario configuration: TOML files validated into plain dataclasses.

Every table rejects unknown keys, and every error names the offending key
path such as ``integrator.step``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import catalog
from .errors import ConfigError

SCHEMA_VERSION = 1
KINDS = ("particle", "brane", "field", "check")

_TOP = {
    "particle": {"schema_version", "kind", "name", "seed", "background", "lagrangian", "initial", "integrator", "output"},
    "brane": {"schema_version", "kind", "name", "seed", "background", "brane", "relax", "output"},
    "field": {"schema_version", "kind", "name", "seed", "background", "domain", "field", "gauge", "output"},
    "check": {"schema_version", "kind", "name", "seed", "suites", "output"},
}


def _keys(table: Mapping, allowed: set, where: str, required: set = frozenset()) -> None:
    if not isinstance(table, Mapping):
        raise ConfigError(f"{where or 'config'} must be a table")
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {sorted(unknown)}; allowed {sorted(allowed)}")
    missing = set(required) - set(table)
    if missing:
        raise ConfigError(f"{where or 'config'}: missing required key(s) {sorted(missing)}")


def _num(value, where: str, positive: bool = False, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where} must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{where} must be positive, got {value!r}")
    return value


def _vector(value, where: str, length: int | None = None) -> list[float]:
    if not isinstance(value, list):
        raise ConfigError(f"{where} must be an array of numbers")
    out = [float(_num(v, f"{where}[{i}]")) for i, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise ConfigError(f"{where} has {len(out)} entries, the target space has dimension {length}")
    return out


def _convert_keys(params: dict) -> dict:
    # TOML keys are strings; "0,1" style index keys become tuples
    comps = params.get("components")
    if isinstance(comps, Mapping):
        conv = {}
        for k, v in comps.items():
            parts = [p for p in str(k).replace(" ", "").split(",") if p]
            try:
                idx = tuple(int(p) for p in parts)
            except ValueError:
                raise ConfigError(f"component key {k!r} is not a comma-separated index list") from None
            conv[idx[0] if len(idx) == 1 and "," not in str(k) else idx] = [tuple(t) for t in v]
        params = dict(params, components=conv)
    return params


@dataclass
class Background:
    label: str
    kind: str
    name: str
    field: Any


def _field_dim(obj) -> int:
    return int(obj.dim)


def load_background(table: Mapping) -> dict[str, Background]:
    if not isinstance(table, Mapping) or not table:
        raise ConfigError("background must define at least one field")
    out = {}
    for label, entry in table.items():
        where = f"background.{label}"
        _keys(entry, {"name", "params"}, where, {"name"})
        name = entry["name"]
        if name not in catalog.CATALOG:
            raise ConfigError(f"{where}.name: unknown field {name!r}; see `repinv catalog`")
        params = _convert_keys(dict(entry.get("params", {})))
        try:
            obj = catalog.build(name, params)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        out[label] = Background(label, catalog.CATALOG[name].kind, name, obj)
    return out


def _single(bg: dict[str, Background], kind: str, where: str, label: str | None = None) -> Background | None:
    if label is not None:
        if label not in bg:
            raise ConfigError(f"{where}: no background field named {label!r}")
        if bg[label].kind != kind:
            raise ConfigError(f"{where}: background.{label} is a {bg[label].kind}, expected a {kind}")
        return bg[label]
    found = [b for b in bg.values() if b.kind == kind]
    if len(found) > 1:
        raise ConfigError(f"{where}: several {kind} fields in background; name one explicitly")
    return found[0] if found else None


def _check_dims(bg: dict[str, Background]) -> int:
    dims = {label: _field_dim(b.field) for label, b in bg.items()}
    if len(set(dims.values())) > 1:
        raise ConfigError(f"background fields disagree on dimension: {dims}")
    return next(iter(dims.values()))


@dataclass
class TermConfig:
    order: int
    field: str
    coupling: float


@dataclass
class Config:
    kind: str
    name: str
    seed: int
    raw: dict
    path: Path | None = None
    background: dict[str, Background] = field(default_factory=dict)
    dim: int = 0
    output: dict = field(default_factory=dict)
    section: dict = field(default_factory=dict)


_OUTPUT_KEYS = {
    "particle": {"dir", "trajectory", "report"},
    "brane": {"dir", "patch", "log", "report"},
    "field": {"dir", "field", "report"},
    "check": {"dir", "report"},
}
_OUTPUT_DEFAULTS = {
    "particle": {"trajectory": "trajectory.csv", "report": "report.json"},
    "brane": {"patch": "patch.csv", "log": "relax.jsonl", "report": "report.json"},
    "field": {"field": "field.csv", "report": "report.json"},
    "check": {"report": "report.json"},
}


def load(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    cfg = parse(data)
    cfg.path = path
    return cfg


def parse(data: Mapping) -> Config:
    if "schema_version" not in data:
        raise ConfigError("schema_version: missing (expected 1)")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported value {data['schema_version']!r} (expected {SCHEMA_VERSION})")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {list(KINDS)}, got {kind!r}")
    _keys(data, _TOP[kind], "")
    seed = data.get("seed", 0)
    _num(seed, "seed", integer=True)
    name = str(data.get("name", kind))
    out = dict(data.get("output", {}))
    _keys(out, _OUTPUT_KEYS[kind], "output")
    output = dict(_OUTPUT_DEFAULTS[kind], dir="repinv-out")
    output.update({k: str(v) for k, v in out.items()})
    cfg = Config(kind, name, int(seed), dict(data), output=output)
    if kind == "check":
        _parse_check(cfg, data)
        return cfg
    cfg.background = load_background(data.get("background", {}))
    cfg.dim = _check_dims(cfg.background)
    {"particle": _parse_particle, "brane": _parse_brane, "field": _parse_field}[kind](cfg, data)
    return cfg


def _parse_check(cfg: Config, data: Mapping) -> None:
    from .checks import SUITES

    suites = data.get("suites", ["all"])
    if not isinstance(suites, list) or not all(isinstance(s, str) for s in suites):
        raise ConfigError("suites must be an array of suite names")
    if "all" in suites:
        suites = list(SUITES)
    bad = [s for s in suites if s not in SUITES]
    if bad:
        raise ConfigError(f"suites: unknown suite(s) {bad}; known {list(SUITES)}")
    cfg.section = {"suites": suites}


def _parse_particle(cfg: Config, data: Mapping) -> None:
    lag = data.get("lagrangian")
    _keys(lag if lag is not None else {}, {"terms"}, "lagrangian", {"terms"})
    terms = []
    orders = set()
    for i, t in enumerate(lag["terms"]):
        where = f"lagrangian.terms[{i}]"
        _keys(t, {"order", "field", "coupling"}, where, {"order", "field"})
        order = int(_num(t["order"], f"{where}.order", positive=True, integer=True))
        if order in orders:
            raise ConfigError(f"{where}.order: duplicate term of order {order}")
        orders.add(order)
        kind = {1: "one_form", 2: "metric"}.get(order, "symmetric")
        b = _single(cfg.background, kind, f"{where}.field", t["field"])
        if kind == "symmetric" and b.field.rank != order:
            raise ConfigError(f"{where}.field: background.{b.label} has rank {b.field.rank}, order is {order}")
        terms.append(TermConfig(order, t["field"], float(_num(t.get("coupling", 1.0), f"{where}.coupling"))))
    if 2 not in orders:
        raise ConfigError("lagrangian.terms: particle integration needs an order-2 (metric) term")
    if orders - {1, 2}:
        raise ConfigError(f"lagrangian.terms: integration supports orders 1 and 2 only, got {sorted(orders)}")
    ini = data.get("initial", {})
    _keys(ini, {"x", "v"}, "initial", {"x", "v"})
    x = _vector(ini["x"], "initial.x", cfg.dim)
    v = _vector(ini["v"], "initial.v", cfg.dim)
    integ = data.get("integrator", {})
    _keys(integ, {"step", "n_steps", "gauge", "renormalize_every", "check_every"}, "integrator", {"step", "n_steps"})
    gauge = integ.get("gauge", "proper_time")
    if gauge not in ("proper_time", "affine_quadratic"):
        raise ConfigError(f"integrator.gauge: must be proper_time or affine_quadratic, got {gauge!r}")
    if 1 in orders and gauge != "proper_time":
        raise ConfigError("integrator.gauge: charged motion is integrated in proper_time gauge only")
    cfg.section = {
        "terms": terms,
        "x": x,
        "v": v,
        "step": float(_num(integ["step"], "integrator.step", positive=True)),
        "n_steps": int(_num(integ["n_steps"], "integrator.n_steps", positive=True, integer=True)),
        "gauge": gauge,
        "renormalize_every": int(_num(integ.get("renormalize_every", 100), "integrator.renormalize_every", integer=True)),
        "check_every": int(_num(integ.get("check_every", 10), "integrator.check_every", integer=True)),
    }


_SHEETS = {
    "plane": {"shape", "extent", "bump"},
    "cylinder": {"shape", "radius", "radius_bottom", "radius_top", "half_height"},
    "csv": {"path", "periodic"},
}


def _parse_brane(cfg: Config, data: Mapping) -> None:
    br = data.get("brane", {})
    _keys(br, {"dim", "mass", "s", "metric", "sheet"}, "brane", {"dim", "sheet"})
    D = int(_num(br["dim"], "brane.dim", positive=True, integer=True))
    if D > cfg.dim:
        raise ConfigError(f"brane.dim: {D} exceeds the target dimension {cfg.dim}")
    metric = _single(cfg.background, "metric", "brane.metric", br.get("metric"))
    if metric is None:
        raise ConfigError("brane.metric: background needs a metric")
    s = br.get("s")
    if s is not None and s not in (1, -1):
        raise ConfigError(f"brane.s: must be +1 or -1, got {s!r}")
    sheet = br["sheet"]
    typ = sheet.get("type") if isinstance(sheet, Mapping) else None
    if typ not in _SHEETS:
        raise ConfigError(f"brane.sheet.type: must be one of {sorted(_SHEETS)}, got {typ!r}")
    _keys(sheet, _SHEETS[typ] | {"type"}, "brane.sheet")
    if typ in ("plane", "cylinder"):
        if D != 2:
            raise ConfigError(f"brane.sheet.type: {typ} sheets are 2-dimensional, brane.dim is {D}")
        shape = sheet.get("shape", [33, 33])
        if not isinstance(shape, list) or len(shape) != 2 or not all(isinstance(n, int) and n >= 3 for n in shape):
            raise ConfigError("brane.sheet.shape: need two integers >= 3")
        need = 3
        if cfg.dim < need:
            raise ConfigError(f"brane.sheet: {typ} sheets embed in at least 3 dimensions, target has {cfg.dim}")
        for k in sheet:
            if k not in ("type", "shape"):
                _num(sheet[k], f"brane.sheet.{k}")
    rel = data.get("relax", {})
    _keys(rel, {"max_iters", "tol", "initial_step"}, "relax")
    cfg.section = {
        "dim": D,
        "mass": float(_num(br.get("mass", 1.0), "brane.mass")),
        "s": s,
        "metric": metric.label,
        "sheet": dict(sheet),
        "max_iters": int(_num(rel.get("max_iters", 1000), "relax.max_iters", positive=True, integer=True)),
        "tol": float(_num(rel.get("tol", 1e-8), "relax.tol", positive=True)),
        "initial_step": float(_num(rel.get("initial_step", 1.0), "relax.initial_step", positive=True)),
    }


def _parse_field(cfg: Config, data: Mapping) -> None:
    dom = data.get("domain", {})
    _keys(dom, {"extents", "shape", "periodic", "origin", "metric"}, "domain", {"extents", "shape"})
    extents = _vector(dom["extents"], "domain.extents", cfg.dim)
    shape = dom["shape"]
    if not isinstance(shape, list) or len(shape) != cfg.dim or not all(isinstance(n, int) and n >= 4 for n in shape):
        raise ConfigError(f"domain.shape: need {cfg.dim} integers >= 4")
    periodic = dom.get("periodic", [False] * cfg.dim)
    if not isinstance(periodic, list) or len(periodic) != cfg.dim or not all(isinstance(p, bool) for p in periodic):
        raise ConfigError(f"domain.periodic: need {cfg.dim} booleans")
    origin = _vector(dom.get("origin", [0.0] * cfg.dim), "domain.origin", cfg.dim)
    metric = _single(cfg.background, "metric", "domain.metric", dom.get("metric"))
    if metric is None:
        raise ConfigError("domain.metric: background needs a metric")
    fl = data.get("field", {})
    _keys(fl, {"one_form", "scale"}, "field")
    A = _single(cfg.background, "one_form", "field.one_form", fl.get("one_form"))
    if A is None:
        raise ConfigError("field.one_form: background needs a one-form")
    gauge = data.get("gauge")
    if gauge is not None:
        _keys(gauge, {"amplitude", "wavenumbers"}, "gauge", {"amplitude", "wavenumbers"})
        _num(gauge["amplitude"], "gauge.amplitude")
        k = gauge["wavenumbers"]
        if not isinstance(k, list) or len(k) != cfg.dim or not all(isinstance(n, int) for n in k):
            raise ConfigError(f"gauge.wavenumbers: need {cfg.dim} integers")
        for i, (n, p) in enumerate(zip(k, periodic)):
            if n and not p:
                raise ConfigError(f"gauge.wavenumbers[{i}]: nonzero wavenumber along open axis {i}")
    cfg.section = {
        "extents": extents,
        "shape": shape,
        "periodic": periodic,
        "origin": origin,
        "metric": metric.label,
        "one_form": A.label,
        "scale": float(_num(fl.get("scale", 1.0), "field.scale")),
        "gauge": dict(gauge) if gauge else None,
    }
