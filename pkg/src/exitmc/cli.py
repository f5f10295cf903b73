"""Command-line front end: ``exitmc <subcommand> --config run.json``.

Configs are validated against ``schema/config.schema.json``.  Each run
appends one self-describing record to ``<out>/<subcommand>.jsonl`` and prints
a summary built from that record.  Exit codes: 0 success, 2 invalid input,
3 estimates tainted by truncated paths, 4 solver divergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__, oracles
from ._util import canonical_json, digest
from .conditions import (EstimatorConfig, Hypotheses, check_conditions, example2_inequality_report,
                         feasibility_sweep, find_feasible_constants, multiplicity_enumerate)
from .errors import InputError
from .estimators import expected_exit_time, expected_occupation, green_apply
from .geometry import Annulus, Ball, Mask, Partition, domain_from_json, lattice_nodes, ray_points
from .simulate import Integrand, SimParams
from .solver import Field, membership_B, picard_solve, radial_nodes, residual_check, seed_field

RECORD_SCHEMA = "exitmc.result/1"

EXIT_OK, EXIT_INPUT, EXIT_TAINTED, EXIT_DIVERGED = 0, 2, 3, 4

_POINT = {"anyOf": [{"required": ["x"]}, {"required": ["points"]}]}
REQUIRED = {
    "estimate-exit": (["domain"], _POINT),
    "estimate-occupation": (["domain", "region"], _POINT),
    "green-apply": (["domain", "source"], _POINT),
    "check-conditions": (["domain", "partition", "lambda", "p", "m", "M"], None),
    "find-constants": (["domain", "partition", "lambda", "p"], None),
    "example2-report": (["delta", "T", "p", "lambda"], None),
    "sweep": (["sweep"], None),
    "solve": (["domain", "lambda", "p"], None),
    "membership": (["domain", "partition", "lambda", "p", "m", "M"], None),
    "oracle-compare": (["domain"], None),
    "multiplicity": (["domain", "multiplicity", "lambda", "p"], None),
}


class ConfigError(InputError):
    pass


def load_schema() -> dict:
    text = resources.files("exitmc").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def validate_config(config: dict, subcommand: str) -> None:
    """Raise ``ConfigError`` naming the first offending config path."""
    if subcommand not in REQUIRED:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    required, extra = REQUIRED[subcommand]
    schema = {"allOf": [load_schema(), {"required": required}] + ([extra] if extra else [])}
    schema["$defs"] = schema["allOf"][0]["$defs"]
    errors = sorted(Draft202012Validator(schema).iter_errors(config),
                    key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {err.message}")


def _seeded(config: dict, seed: int | None) -> dict:
    config = json.loads(json.dumps(config))
    if seed is not None:
        config.setdefault("sim", {})["seed"] = seed
    return config


def config_digest(config: dict) -> str:
    return digest(config, length=64)


def make_record(subcommand: str, config: dict, payload: dict) -> dict:
    return {"schema": RECORD_SCHEMA, "digest": config_digest(config), "subcommand": subcommand,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__, "payload": payload}


def payload_bytes(record: dict) -> bytes:
    """Canonical bytes of a record without its timestamp."""
    return canonical_json({k: v for k, v in record.items() if k != "timestamp"}).encode()


# helpers

def _sim(config):
    return SimParams.from_json(config.get("sim", {}))


def _estimator(config, workers):
    est = dict(config.get("estimator", {}))
    return EstimatorConfig(params=_sim(config), workers=workers, **est)


def _points(config):
    pts = config["points"] if "points" in config else [config["x"]]
    return np.asarray(pts, dtype=np.float64)


def _n(config):
    return int(config.get("n_paths", 10_000))


def _partition(config, domain):
    return Partition(domain_from_json(config["partition"]["d1"]), domain)


def _tainted(truncated_fraction, config):
    return truncated_fraction > config.get("estimator", {}).get("truncation_threshold", 1e-6)


def _point_table(domain, points, estimate):
    rows = []
    for x in points:
        e = estimate(x)
        rows.append({"x": x.tolist(), **e.to_json()})
    return rows


# subcommands: each returns (payload, exit code)

def cmd_estimate_exit(config, workers):
    dom = domain_from_json(config["domain"])
    params = _sim(config)
    rows = _point_table(dom, _points(config),
                        lambda x: expected_exit_time(dom, x, params, _n(config), workers=workers))
    code = EXIT_TAINTED if any(_tainted(r["truncated_fraction"], config) for r in rows) else EXIT_OK
    return {"quantity": "exit_time", "rows": rows}, code


def cmd_estimate_occupation(config, workers):
    dom = domain_from_json(config["domain"])
    region = domain_from_json(config["region"])
    params = _sim(config)
    rows = _point_table(dom, _points(config), lambda x: expected_occupation(
        dom, region, x, params, _n(config), workers=workers))
    code = EXIT_TAINTED if any(_tainted(r["truncated_fraction"], config) for r in rows) else EXIT_OK
    return {"quantity": "occupation", "rows": rows}, code


def cmd_green_apply(config, workers):
    dom = domain_from_json(config["domain"])
    src = config["source"]
    if isinstance(src, (int, float)):
        f = float(src)
    else:
        f = Integrand(scale=float(src.get("scale", 1.0)),
                      mask=Mask(include=domain_from_json(src["indicator"])))
    params = _sim(config)
    rows = _point_table(dom, _points(config),
                        lambda x: green_apply(dom, f, x, params, _n(config), workers=workers))
    code = EXIT_TAINTED if any(_tainted(r["truncated_fraction"], config) for r in rows) else EXIT_OK
    return {"quantity": "green", "rows": rows}, code


def cmd_check_conditions(config, workers):
    dom = domain_from_json(config["domain"])
    hyp = Hypotheses(config["lambda"], config["p"], config["m"], config["M"],
                     _partition(config, dom))
    rep = check_conditions(hyp, _estimator(config, workers))
    return rep.to_json(), EXIT_TAINTED if rep.tainted else EXIT_OK


def cmd_find_constants(config, workers):
    dom = domain_from_json(config["domain"])
    res = find_feasible_constants(dom, _partition(config, dom), config["lambda"], config["p"],
                                  _estimator(config, workers))
    return res.to_json(), EXIT_TAINTED if res.report.tainted else EXIT_OK


def cmd_example2_report(config, workers):
    return example2_inequality_report(config["delta"], config["T"], config["p"],
                                      config["lambda"]), EXIT_OK


def cmd_sweep(config, workers, out_dir):
    sw = config["sweep"]
    store = Path(out_dir) / f"sweep-{config_digest(config)[:16]}.rows.jsonl"
    rows = feasibility_sweep(sw["family"], sw["ranges"], _estimator(config, workers), store)
    return {"family": sw["family"], "rows": rows}, EXIT_OK


def _solve_nodes(config, dom):
    s = config.get("solve", {})
    if "lattice_spacing" in s:
        return lattice_nodes(dom, s["lattice_spacing"])
    if dom.is_radial():
        return radial_nodes(dom, s.get("nodes", 32))
    raise ConfigError("config error at solve: non-radial domains need lattice_spacing")


def _field_kw(config, dom):
    s = config.get("solve", {})
    return {"interp": s.get("interp", "radial" if dom.is_radial() else "idw"),
            "k": s.get("k", 8), "absorb": s.get("absorb", 0.0)}


def cmd_solve(config, workers):
    dom = domain_from_json(config["domain"])
    s = config.get("solve", {})
    lam, p = config["lambda"], config["p"]
    u0 = Field.constant(dom, _solve_nodes(config, dom), s.get("u0", 1.0), **_field_kw(config, dom))
    u, trace = picard_solve(dom, lam, p, u0, _sim(config), tol=s.get("tol", 1e-6),
                            max_iter=s.get("max_iter", 50), n_per_node=s.get("n_per_node", 2000),
                            M_hint=s.get("M_hint"), workers=workers)
    payload = {"trace": trace.to_json(),
               "field": {"nodes": u.nodes.tolist(), "values": u.values.tolist(),
                         "digest": u.digest()}}
    if "residual_h" in s:
        try:
            res = residual_check(u, lam, p, s["residual_h"], factor=s.get("residual_factor", 2))
            payload["residual"] = {k: v for k, v in res.to_json().items() if k != "per_node"}
        except InputError as exc:
            payload["residual"] = {"error": str(exc)}
    return payload, EXIT_DIVERGED if trace.status == "diverged" else EXIT_OK


def cmd_membership(config, workers):
    dom = domain_from_json(config["domain"])
    part = _partition(config, dom)
    hyp = Hypotheses(config["lambda"], config["p"], config["m"], config["M"], part)
    u = seed_field(part, _solve_nodes(config, dom), config["m"], **_field_kw(config, dom))
    rep = membership_B(u, hyp, _estimator(config, workers))
    return {"field": "seed", **rep.to_json()}, EXIT_OK


def cmd_oracle_compare(config, workers):
    dom = domain_from_json(config["domain"])
    if isinstance(dom, Ball):
        lo, hi = 0.0, dom.radius
        oracle = lambda r: (dom.radius**2 - r * r) / dom.dim
    elif isinstance(dom, Annulus) and dom.dim == 3:
        spec = oracles.AnnulusSpec3D(dom.r_inner, dom.r_outer, tuple(dom.center))
        lo, hi = dom.r_inner, dom.r_outer
        oracle = lambda r: float(oracles.annulus_exit_time_radial(spec, r))
    else:
        raise ConfigError("config error at domain: oracle-compare needs a ball or 3-D annulus")
    radii = config.get("oracle", {}).get("radii")
    if radii is None:
        radii = (lo + (np.arange(8) + 0.5) * (hi - lo) / 8).tolist()
    params = _sim(config)
    rows = []
    for r, x in zip(radii, ray_points(dom.center, radii)):
        e = expected_exit_time(dom, x, params, _n(config), workers=workers)
        o = oracle(r)
        zscore = (e.mean - o) / e.std_error if e.std_error > 0 else 0.0
        rows.append({"radius": r, "mc_mean": e.mean, "std_error": e.std_error, "oracle": o,
                     "z": zscore, "truncated_fraction": e.truncated_fraction})
    code = EXIT_TAINTED if any(_tainted(r["truncated_fraction"], config) for r in rows) else EXIT_OK
    return {"quantity": "exit_time", "rows": rows}, code


def cmd_multiplicity(config, workers):
    dom = domain_from_json(config["domain"])
    mc = config["multiplicity"]
    comps = [domain_from_json(c) for c in mc["components"]]
    cfg = _estimator(config, workers) if mc.get("check", False) else None
    sets = multiplicity_enumerate(dom, comps, mc["m"], mc["M"], config["lambda"], config["p"], cfg)
    return {"sets": [s.to_json() for s in sets]}, EXIT_OK


COMMANDS = {
    "estimate-exit": cmd_estimate_exit,
    "estimate-occupation": cmd_estimate_occupation,
    "green-apply": cmd_green_apply,
    "check-conditions": cmd_check_conditions,
    "find-constants": cmd_find_constants,
    "example2-report": cmd_example2_report,
    "sweep": cmd_sweep,
    "solve": cmd_solve,
    "membership": cmd_membership,
    "oracle-compare": cmd_oracle_compare,
    "multiplicity": cmd_multiplicity,
}


# output

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return json.dumps(v) if isinstance(v, (list, dict)) else str(v)


def summarize(record: dict) -> list[str]:
    """Human-readable lines; every number comes from the record."""
    sub, pl = record["subcommand"], record["payload"]
    lines = [f"{sub} digest={record['digest'][:16]}"]
    if "rows" in pl and sub != "sweep":
        for r in pl["rows"]:
            lines.append("  " + " ".join(f"{k}={_fmt(v)}" for k, v in r.items()
                                         if k != "config_digest"))
    elif sub == "sweep":
        for r in pl["rows"]:
            lines.append(f"  {_fmt(r['params'])} feasible={_fmt(r['feasible'])} "
                         f"failed={_fmt(r['failed'])}")
    elif sub in ("check-conditions", "find-constants"):
        rep = pl["report"] if sub == "find-constants" else pl
        if sub == "find-constants":
            lines.append(f"  feasible={_fmt(pl['feasible'])}")
        lines.append(f"  m={_fmt(rep['m'])} M={_fmt(rep['M'])} m_le_M={rep['m_le_M']}")
        for n in ("cond1", "cond2", "cond3"):
            c = rep[n]
            lines.append(f"  {n}: lhs={_fmt(c['lhs'])} rhs={_fmt(c['rhs'])} "
                         f"margin={_fmt(c['margin'])} verdict={c['verdict']} "
                         f"conservative={c['conservative']} "
                         f"anti_conservative={c['anti_conservative']}")
        lines.append(f"  failed={_fmt(rep['failed'])} tainted={rep['tainted']}")
    elif sub == "solve":
        tr = pl["trace"]
        lines.append(f"  status={tr['status']} C={_fmt(tr['C'])} iterations={len(tr['sup_change'])}")
        for k, (ch, nm) in enumerate(zip(tr["sup_change"], tr["norm"])):
            lines.append(f"  iter {k + 1}: sup_change={_fmt(ch)} norm={_fmt(nm)}")
        if "residual" in pl:
            lines.append("  residual " + " ".join(f"{k}={_fmt(v)}"
                                                  for k, v in pl["residual"].items()))
    elif sub == "multiplicity":
        for s in pl["sets"]:
            lines.append(f"  I={s['index_set']} m_hat={_fmt(s['m_hat'])} M_hat={_fmt(s['M_hat'])}")
    else:
        lines.append("  " + " ".join(f"{k}={_fmt(v)}" for k, v in pl.items()))
    return lines


def _csv_rows(record):
    pl = record["payload"]
    if "rows" in pl:
        return [{k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()}
                for r in pl["rows"]]
    if "sets" in pl:
        return [{"index_set": json.dumps(s["index_set"]), "m_hat": s["m_hat"],
                 "M_hat": s["M_hat"]} for s in pl["sets"]]
    if "trace" in pl:
        tr = pl["trace"]
        return [{"iteration": k + 1, "sup_change": c, "norm": n}
                for k, (c, n) in enumerate(zip(tr["sup_change"], tr["norm"]))]
    return [{k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in pl.items()}]


def write_record(record: dict, out_dir, fmt: str = "json") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{record['subcommand']}.jsonl"
    with open(path, "a") as fh:
        fh.write(canonical_json(record) + "\n")
    if fmt == "csv":
        rows = _csv_rows(record)
        cpath = out / f"{record['subcommand']}-{record['digest'][:16]}.csv"
        keys = list(dict.fromkeys(k for r in rows for k in r))
        with open(cpath, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
    return path


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# plot data

def _plot_columns(records, kind):
    cols = []
    for rec in records:
        pl = rec["payload"]
        if kind == "radial-profile":
            for r in pl.get("rows", []):
                if "radius" in r:
                    cols.append((r["radius"], r["mc_mean"]))
                elif "x" in r:
                    cols.append((float(np.linalg.norm(r["x"])), r["mean"]))
        elif kind == "sweep-heatmap":
            for r in pl.get("rows", []):
                if r.get("error") is None:
                    cols.append((r["params"]["T"], r["params"]["p"], 1.0 if r["feasible"] else 0.0))
        elif kind == "convergence":
            tr = pl.get("trace", {})
            cols.extend((k + 1, c) for k, c in enumerate(tr.get("sup_change", [])))
        else:
            raise InputError(f"unknown plot kind {kind!r}")
    if not cols:
        raise InputError(f"records contain no {kind} data")
    return sorted(cols)


def _svg(cols, kind, width=480, height=320, pad=40) -> str:
    arr = np.asarray(cols, dtype=np.float64)
    x, y = arr[:, 0], arr[:, 1]
    if kind == "convergence":
        y = np.log10(np.maximum(y, 1e-300))

    def scale(v, lo, hi, a, b):
        return a + (b - a) * ((v - lo) / (hi - lo) if hi > lo else 0.5)

    xs = scale(x, x.min(), x.max(), pad, width - pad)
    ys = scale(y, y.min(), y.max(), height - pad, pad)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{pad}" y="20" font-size="12">{kind}</text>']
    if kind == "sweep-heatmap":
        for a, b, z in zip(xs, ys, arr[:, 2]):
            color = "#2a7" if z > 0 else "#c33"
            parts.append(f'<rect x="{a - 6:.1f}" y="{b - 6:.1f}" width="12" height="12" '
                         f'fill="{color}"/>')
    else:
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="black" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plotdata(records: list[dict], kind: str, out_dir) -> list[Path]:
    """Write ``<digest>-<kind>.dat`` (whitespace columns) and a matching SVG."""
    if not records:
        raise InputError("no records to plot")
    digests = {r["digest"] for r in records}
    if len(digests) != 1:
        raise InputError(f"records come from {len(digests)} different configs")
    cols = _plot_columns(records, kind)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{digests.pop()[:16]}-{kind}"
    dat, svg = out / f"{stem}.dat", out / f"{stem}.svg"
    with open(dat, "w") as fh:
        for row in cols:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    svg.write_text(_svg(cols, kind))
    return [dat, svg]


# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exitmc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"exitmc {__version__}")
    sub = ap.add_subparsers(dest="subcommand", metavar="subcommand")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="overrides sim.seed")
        sp.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
        sp.add_argument("--out", help="output directory (default $EXITMC_OUT or ./results)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--plot", choices=("radial-profile", "sweep-heatmap", "convergence"))
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 after --help/--version
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.subcommand is None:
        ap.print_help(sys.stderr)
        return EXIT_INPUT
    workers = args.workers
    if workers is None and os.environ.get("EXITMC_WORKERS"):
        workers = int(os.environ["EXITMC_WORKERS"])
    out_dir = args.out or os.environ.get("EXITMC_OUT") or "results"
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        validate_config(raw, args.subcommand)
        config = _seeded(raw, args.seed)
        fn = COMMANDS[args.subcommand]
        if args.subcommand == "sweep":
            payload, code = fn(config, workers, out_dir)
        else:
            payload, code = fn(config, workers)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    record = make_record(args.subcommand, config, payload)
    write_record(record, out_dir, args.format)
    if args.plot:
        try:
            emit_plotdata([record], args.plot, out_dir)
        except InputError as exc:
            print(f"warning: {exc}", file=sys.stderr)
    print("\n".join(summarize(record)))
    if code == EXIT_TAINTED:
        print("warning: truncated paths above threshold; estimates are tainted", file=sys.stderr)
    elif code == EXIT_DIVERGED:
        print("warning: fixed-point iteration diverged", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
