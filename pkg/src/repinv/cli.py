"""Command-line front end: ``repinv run``, ``repinv check`` and ``repinv catalog``."""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, brane, catalog, checks, config, dynamics, fields, lagrangian
from .errors import ConfigError, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


def _outdir(cfg: config.Config, override: str | None) -> Path:
    out = Path(override if override is not None else cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario_report(cfg: config.Config, records: list[checks.Check], extra: dict) -> dict:
    extra = dict(extra, scenario={"kind": cfg.kind, "name": cfg.name})
    return checks.build_report([asdict(c) for c in records], seed=cfg.seed, extra=extra)


def run_particle(cfg: config.Config, out: Path) -> dict:
    sec = cfg.section
    bg = cfg.background
    terms = {t.order: t for t in sec["terms"]}
    g = bg[terms[2].field].field
    m = terms[2].coupling
    if 1 in terms:
        A, q = bg[terms[1].field].field, terms[1].coupling
        traj = dynamics.integrate_charged(
            g, A, q, m, sec["x"], sec["v"], sec["step"], sec["n_steps"], sec["renormalize_every"], sec["check_every"]
        )
        L = lagrangian.particle(g, A, m, q)
    else:
        traj = dynamics.integrate_geodesic(
            g, sec["x"], sec["v"], sec["step"], sec["n_steps"], sec["gauge"], sec["renormalize_every"], sec["check_every"]
        )
        L = lagrangian.particle(g, None, m)
    traj.to_csv(out / cfg.output["trajectory"])
    rep = dynamics.el_residual(L, traj)
    records = [
        checks._le("scenario", "el_residual_rms", "trajectory solves the Euler-Lagrange equations of L (rms)", rep.rms_norm, 1e-6),
    ]
    if sec["gauge"] == "proper_time":
        records.append(
            checks._le("scenario", "norm_drift", "g(v,v) drift before each renormalization", traj.meta["norm_drift_max"], 1e-6)
        )
    extra = {
        "trajectory": {
            "samples": len(traj),
            "gauge": traj.gauge,
            "action_L1": dynamics.action(L, traj),
            "el_residual": {"max_norm": rep.max_norm, "rms_norm": rep.rms_norm},
            "meta": {k: traj.meta[k] for k in sorted(traj.meta)},
        }
    }
    return _scenario_report(cfg, records, extra)


def _sheet(cfg: config.Config) -> brane.WorldsheetPatch:
    sh = cfg.section["sheet"]
    d = cfg.dim
    typ = sh["type"]
    if typ == "csv":
        path = Path(sh["path"])
        if not path.is_absolute() and cfg.path is not None:
            path = cfg.path.parent / path
        try:
            return brane.WorldsheetPatch.from_csv(path, sh.get("periodic"))
        except OSError as exc:
            raise ConfigError(f"brane.sheet.path: cannot read {path}: {exc.strerror}") from None
    n0, n1 = sh.get("shape", [33, 33])
    pad = [0.0] * (d - 3)
    if typ == "plane":
        e = float(sh.get("extent", 1.0))
        b = float(sh.get("bump", 0.0))
        z0, z1 = np.linspace(0, e, n0), np.linspace(0, e, n1)
        return brane.WorldsheetPatch.from_function(
            lambda u, w: [u, w, b * np.sin(np.pi * u / e) * np.sin(np.pi * w / e)] + [0 * u + p for p in pad], [z0, z1]
        )
    R = float(sh.get("radius", 1.0))
    rb, rt = float(sh.get("radius_bottom", R)), float(sh.get("radius_top", R))
    H = float(sh.get("half_height", 0.5))
    theta = 2 * np.pi * np.arange(n0) / n0
    h = np.linspace(-H, H, n1)

    def emb(th, z):
        r = rb + (rt - rb) * (z + H) / (2 * H)
        return [r * np.cos(th), r * np.sin(th), z] + [0 * z + p for p in pad]

    return brane.WorldsheetPatch.from_function(emb, [theta, h], periodic=[True, False])


def run_brane(cfg: config.Config, out: Path) -> dict:
    sec = cfg.section
    g = cfg.background[sec["metric"]].field
    spec = brane.BraneFieldSpec(sec["dim"], cfg.dim, g, mass=sec["mass"], s=sec["s"])
    patch = _sheet(cfg)
    if patch.dim != cfg.dim or patch.brane_dim != sec["dim"]:
        raise ConfigError(
            f"brane.sheet: patch is a {patch.brane_dim}-sheet in {patch.dim} dimensions, config says {sec['dim']} in {cfg.dim}"
        )
    res = brane.relax_worldsheet(spec, patch, sec["max_iters"], sec["tol"], sec["initial_step"])
    res.patch.to_csv(out / cfg.output["patch"])
    brane.write_log_jsonl(res.log, out / cfg.output["log"])
    acts = [e["action"] for e in res.log]
    records = [
        checks._le("scenario", "action_nonincreasing", "relaxation never increases the action", float(acts[-1] - acts[0]), 0.0),
    ]
    extra = {
        "relaxation": {
            "iterations": len(res.log) - 1,
            "converged": res.converged,
            "initial_action": acts[0],
            "final_action": acts[-1],
            "final_grad_norm": res.log[-1]["grad_norm"],
            "s": spec.s,
        }
    }
    return _scenario_report(cfg, records, extra)


def run_field(cfg: config.Config, out: Path) -> dict:
    sec = cfg.section
    g = cfg.background[sec["metric"]].field
    dom = fields.GridDomain(cfg.dim, sec["extents"], sec["shape"], sec["periodic"], g, sec["origin"])
    A = fields.SampledOneForm.from_field(cfg.background[sec["one_form"]].field, dom).scaled(sec["scale"])
    s0 = fields.field_action_em(A, dom)
    result = {"action_em": s0, "proca_control": fields.proca_mass_term(A, dom)}
    records = []
    if sec["gauge"] is not None:
        X = dom.coordinates()
        phase = sum(2 * math.pi * k * X[i] / dom.extents[i] for i, k in enumerate(sec["gauge"]["wavenumbers"]))
        f = float(sec["gauge"]["amplitude"]) * np.sin(phase)
        At = fields.gauge_transform(A, f, dom)
        s1 = fields.field_action_em(At, dom)
        result.update(action_em_gauged=s1, proca_control_gauged=fields.proca_mass_term(At, dom))
        if all(sec["periodic"]):
            rel = abs(s1 - s0) / abs(s0) if s0 else abs(s1)
            records.append(checks._le("scenario", "em_action_gauge_invariance", "integral F.F unchanged by A -> A + df", rel, 1e-9))
    A.to_csv(out / cfg.output["field"])
    return _scenario_report(cfg, records, {"field": result})


def cmd_run(args) -> int:
    try:
        cfg = config.load(args.config)
        out = _outdir(cfg, args.out)
        if cfg.kind == "check":
            return _do_check(cfg.section["suites"], cfg.seed, out, cfg.output["report"])
        report = {"particle": run_particle, "brane": run_brane, "field": run_field}[cfg.kind](cfg, out)
        checks.dump_report(report, out / cfg.output["report"])
    except ConfigError as exc:
        print(f"repinv: ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"repinv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {out / cfg.output['report']}")
    return EXIT_OK


def _do_check(suites: list[str], seed: int, out: Path, name: str = "report.json") -> int:
    report = checks.run_suites(suites, seed)
    path = out / name
    checks.dump_report(report, path)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['suite']}.{c['name']}: {c['measured']:.3g} {c['comparison']} {c['tolerance']:.3g}")
    s = report["summary"]
    print(f"{s['passed']}/{s['total']} checks passed; report at {path}")
    return EXIT_OK if s["failed"] == 0 else EXIT_CHECK


def cmd_check(args) -> int:
    names = list(checks.SUITES) if args.suite == "all" else [args.suite]
    if args.suite != "all" and args.suite not in checks.SUITES:
        print(f"repinv: ConfigError: unknown suite {args.suite!r}; known: all, {', '.join(checks.SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _do_check(names, args.seed, out)
    except NumericalFailure as exc:
        print(f"repinv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def cmd_catalog(args) -> int:
    for name in sorted(catalog.CATALOG):
        e = catalog.CATALOG[name]
        params = ", ".join(e.params) or "-"
        print(f"{name:22s} {e.kind:10s} params: {params:28s} {e.summary}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repinv", description="Homogeneous Lagrangian scenarios and invariant checks.")
    p.add_argument("--version", action="version", version=f"repinv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run invariant suites")
    c.add_argument("suite", help="suite name or 'all'")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="repinv-out")
    c.set_defaults(func=cmd_check)
    k = sub.add_parser("catalog", help="list built-in background fields")
    k.set_defaults(func=cmd_catalog)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
