"""Command-line experiment runner.

Subcommands: ``constants``, ``functionals``, ``construct``, ``verify`` and
``report``.  Every subcommand accepts ``--config FILE`` (a JSON object whose
keys are flag names with dashes replaced by underscores); flags given on the
command line override the file.  CSV output uses the columns

    experiment, space, dim, m, quantity, value, witness_json

Exit codes: 0 pass, 2 usage or configuration error, 3 resource cap exceeded,
4 mathematical assertion failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import constructions as cons
from . import functionals as fn
from . import suites
from .constants import (GRID_CERT, GRID_SMALL, CapExceeded, SampleFamily, constants_report,
                        partial_democracy_witness)
from .spaces import parse_space, parse_vectors
from .tga import GreedySetCapExceeded, canonical_greedy_set, project_out

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_MATH = 0, 2, 3, 4
COLUMNS = ("experiment", "space", "dim", "m", "quantity", "value", "witness_json")
GRIDS = {"exhaustive-small": GRID_SMALL, "exhaustive-cert": GRID_CERT,
         "exhaustive-unit": (-1.0, -0.5, 0.0, 0.5, 1.0)}


class UsageError(Exception):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "to_json"):
        return _jsonable(obj.to_json())
    return obj


def _fmt_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(rows, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        wit = r.get("witness")
        w.writerow([r["experiment"], r["space"], r["dim"], r["m"], r["quantity"], _fmt_value(r["value"]),
                    "" if wit is None else json.dumps(_jsonable(wit), sort_keys=True)])


# ---------------------------------------------------------------------------
# argument handling

DEFAULTS = {
    "constants": {"space": None, "dim": 6, "grid": "random", "samples": 500, "seed": 0, "max_card": None,
                  "window": None, "workers": 1, "out": None, "uncond_samples": 2000, "partial_n": 4},
    "functionals": {"space": None, "vectors": None, "m": None, "out": None},
    "report": {"space": None, "vectors": None, "out": None},
    "construct": {"kind": None, "C": None, "m": 3, "depth": 4, "space": "summing", "p": 1.0, "q": 2.0,
                  "window": 64, "samples": 1000, "seed": 0, "budget": 200, "out": None},
    "verify": {"suite": None, "space": "lp:1", "dim": 6, "grid": "random", "samples": 1000, "seed": 0,
               "C": None, "window": 64, "max_card": None, "workers": 1, "out": None,
               "interval_samples": 200},
}


def _add(p, *names, **kw):
    p.add_argument(*names, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="greedylab", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        _add(p, "--config", help="JSON file with default values for the flags")
        _add(p, "--out", help="output CSV path (stdout when omitted)")

    p = sub.add_parser("constants", help="estimate greedy-type constants")
    common(p)
    _add(p, "--space", help="lp:P, mixed:P,Q, interval:BASE, summing or weighted:P:W1,W2,...")
    _add(p, "--dim", type=int)
    _add(p, "--grid", help="random, exhaustive-small, exhaustive-unit or exhaustive-cert")
    _add(p, "--samples", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--max-card", type=int, dest="max_card")
    _add(p, "--window", type=int, help="search bound for partial democracy")
    _add(p, "--workers", type=int)
    _add(p, "--uncond-samples", type=int, dest="uncond_samples")
    _add(p, "--partial-n", type=int, dest="partial_n")

    for name in ("functionals", "report"):
        p = sub.add_parser(name, help="benchmark functionals per vector" if name == "functionals"
                           else "plot data: every functional for m = 0..length")
        common(p)
        _add(p, "--space")
        _add(p, "--vectors", help="vector file, one vector per line")
        if name == "functionals":
            _add(p, "--m", type=int)

    p = sub.add_parser("construct", help="build and verify e1, mixed or t3 instances")
    common(p)
    _add(p, "kind", choices=("e1", "mixed", "t3"))
    _add(p, "--C", type=float, dest="C")
    _add(p, "--m", type=int)
    _add(p, "--depth", type=int)
    _add(p, "--space")
    _add(p, "--p", type=float)
    _add(p, "--q", type=float)
    _add(p, "--window", type=int)
    _add(p, "--samples", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--budget", type=int)

    p = sub.add_parser("verify", help="run a property suite")
    common(p)
    _add(p, "suite", choices=suites.SUITES)
    _add(p, "--space")
    _add(p, "--dim", type=int)
    _add(p, "--grid")
    _add(p, "--samples", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--C", type=float, dest="C")
    _add(p, "--window", type=int)
    _add(p, "--max-card", type=int, dest="max_card")
    _add(p, "--workers", type=int)
    _add(p, "--interval-samples", type=int, dest="interval_samples")
    return ap


def resolve_config(ns: argparse.Namespace) -> dict:
    args = vars(ns).copy()
    cmd = args.pop("command")
    cfg = dict(DEFAULTS[cmd])
    path = args.pop("config", None)
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    cfg.update(args)
    cfg["command"] = cmd
    return cfg


def _space(cfg):
    if not cfg.get("space"):
        raise UsageError("--space is required")
    try:
        return parse_space(cfg["space"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _family(cfg, dim=None):
    dim = dim or cfg["dim"]
    grid = cfg["grid"]
    if grid == "random":
        return SampleFamily(dim, "random", cfg["samples"], cfg["seed"])
    if grid not in GRIDS:
        raise UsageError(f"unknown grid {grid!r}")
    return SampleFamily(dim, "grid", seed=cfg["seed"], grid=GRIDS[grid])


def _read_vectors(cfg):
    if not cfg.get("vectors"):
        raise UsageError("--vectors is required")
    try:
        return parse_vectors(Path(cfg["vectors"]).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot parse vectors: {exc}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_constants(cfg, log):
    norm = _space(cfg)
    if cfg["dim"] < 1:
        raise UsageError("--dim must be positive")
    fam = _family(cfg)
    ufam = SampleFamily(fam.dim, "random", cfg["uncond_samples"], cfg["seed"])
    rep = constants_report(norm, fam, max_card=cfg["max_card"], workers=cfg["workers"], unconditional_family=ufam)
    rows = rep.rows()
    if cfg["window"]:
        n = cfg["partial_n"]
        wit = partial_democracy_witness(norm, n, cfg["window"])
        if wit is None:
            rows.append({"experiment": "constants", "space": rep.space, "dim": cfg["window"], "m": n,
                         "quantity": "partial_democracy_failure", "value": None, "witness": None})
        else:
            for r in wit.rows:
                rows.append({"experiment": "constants", "space": rep.space, "dim": cfg["window"], "m": n,
                             "quantity": "partial_democracy_ratio", "value": r["ratio"],
                             "witness": {"A": list(wit.A), **r}})
            rows.append({"experiment": "constants", "space": rep.space, "dim": cfg["window"], "m": n,
                         "quantity": "partial_democracy_min_ratio", "value": wit.min_ratio,
                         "witness": {"A": list(wit.A), "inconclusive": wit.inconclusive}})
    for e in rep.estimates.values():
        log(f"{e.name} >= {e.value!r}{'  (' + e.note + ')' if e.note else ''}")
    return rows, True


def _functional_rows(norm, x, m, idx):
    space = norm.describe()
    dim = len(x)
    vals = {
        "sigma_tilde": fn.sigma_tilde(x, m, norm),
        "sigma_check": fn.sigma_check(x, m, norm),
        "sigma_hathat": fn.sigma_hathat(x, m, norm),
        "partial_tail": fn.FunctionalValue(norm(x - fn.partial_sum(x, m)) if len(x) else 0.0, m),
        "prefix_tail": fn.best_prefix_tail(x, m, norm),
        "min_sigma_tilde": fn.min_sigma(x, m, "tilde", norm),
        "min_sigma_check": fn.min_sigma(x, m, "check", norm),
    }
    A = canonical_greedy_set(x, m)
    vals["greedy_residual"] = fn.FunctionalValue(norm(project_out(x, A)) if len(x) else 0.0, A)
    rows = [{"experiment": "functionals", "space": space, "dim": dim, "m": m, "quantity": k,
             "value": v.value, "witness": {"vector": idx, "witness": v.witness, "flagged": v.flagged}}
            for k, v in vals.items()]
    chain = [("sigma_tilde", "sigma_check"), ("sigma_check", "partial_tail"), ("sigma_hathat", "partial_tail")]
    bad = []
    for a, b in chain:
        if vals[a].value > vals[b].value + 1e-12 * max(1.0, vals[b].value):
            bad.append(f"{a}<={b}")
            rows.append({"experiment": "functionals", "space": space, "dim": dim, "m": m,
                         "quantity": "VIOLATION", "value": vals[a].value - vals[b].value,
                         "witness": {"vector": idx, "inequality": f"{a}<={b}"}})
    return rows, bad


def cmd_functionals(cfg, log):
    norm = _space(cfg)
    m = cfg["m"]
    if m is None:
        raise UsageError("--m is required")
    if m < 0:
        raise UsageError("--m must be nonnegative")
    rows, ok = [], True
    for i, x in enumerate(_read_vectors(cfg)):
        r, bad = _functional_rows(norm, x, m, i)
        rows.extend(r)
        for b in bad:
            ok = False
            log(f"VIOLATION vector {i}: {b}")
    return rows, ok


def cmd_report(cfg, log):
    """Plot-data mode: one row per (vector, m, functional)."""
    norm = _space(cfg)
    rows = []
    for i, x in enumerate(_read_vectors(cfg)):
        for m in range(len(x) + 1):
            r, _ = _functional_rows(norm, x, m, i)
            for row in r:
                row["experiment"] = "report"
            rows.extend(r)
    return rows, True


def cmd_construct(cfg, log):
    kind = cfg["kind"]
    rows, ok = [], True
    doc = {}

    def check(name, value, good, witness=None, m=""):
        nonlocal ok
        ok &= bool(good)
        log(f"{'PASS' if good else 'FAIL'} {name} = {value}")
        rows.append({"experiment": f"construct-{kind}", "space": space, "dim": dim, "m": m,
                     "quantity": name, "value": value, "witness": witness})

    if kind == "e1":
        from .spaces import LpNorm

        try:
            inst = cons.build_e1(2.0 if cfg["C"] is None else cfg["C"], cfg["m"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        norm, space, dim = LpNorm(1.0), "lp:1", len(inst.x)
        st = fn.sigma_tilde(inst.x, inst.m, norm)
        sc = fn.sigma_check(inst.x, inst.m, norm)
        doc = {"C": inst.C, "m": inst.m, "a": inst.a, "x": inst.x.tolist()}
        check("sigma_tilde", st.value, st.value <= 1 + 1e-12, st.witness, inst.m)
        check("sigma_check", sc.value, sc.value > inst.C, sc.witness, inst.m)
        check("ratio", sc.value / st.value, sc.value > inst.C * st.value, None, inst.m)
    elif kind == "mixed":
        space, dim = f"mixed:{cfg['p']:g},{cfg['q']:g}", cfg["window"]
        try:
            inst = cons.build_mixed_instance(cfg["p"], cfg["q"], cfg["window"], interval_samples=cfg["samples"],
                                             C=cfg["C"],
                                             seed=cfg["seed"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        rep = inst.report
        doc = rep
        check("spine_conditions", suites.json_list(rep["spine"]), rep["spine_conditions"])
        check("unconditionality", rep["unconditionality"], abs(rep["unconditionality"] - 1) <= 1e-9)
        if "democracy_spine_vs_offspine" in rep:
            check("democracy_spine_vs_offspine", rep["democracy_spine_vs_offspine"],
                  rep["democracy_spine_vs_offspine"] > 1)
        pd = rep.get("partial_democracy")
        check("partial_democracy_failure", None if pd is None else pd["min_ratio"],
              pd is not None and not pd["inconclusive"], pd)
        if "intervals_plus_1dim" in rep:
            ic = rep["intervals_plus_1dim"]
            check("intervals_plus_1dim", ic["worst_ratio"], ic["passed"], ic["witness"])
    else:
        try:
            norm = parse_space(cfg["space"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        space = norm.describe()
        try:
            asm = cons.assemble_t3(norm, cfg["depth"], budget=cfg["budget"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        dim = len(asm.x)
        doc = json.loads(asm.to_json())
        for blk in asm.blocks:
            for name, good in blk.get("checks", {}).items():
                check(f"block{blk['k']}:{name}", good, good, None, blk["m"])
        for lvl in asm.levels:
            for name, good in lvl["checks"].items():
                check(f"level{lvl['i']}:{name}", lvl["ratio"] if name == "final" else good, good, None, lvl["M"])
        if asm.failure:
            check("assembly", asm.failure, False)
        ok &= asm.valid
    if cfg["out"]:
        out = Path(cfg["out"])
        # the instance document sits next to the CSV
        doc_path = out.with_suffix(".json") if out.suffix != ".json" else out.with_name(out.name + ".json")
        doc_path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True))
    return rows, ok


def cmd_verify(cfg, log):
    suite = cfg["suite"]
    if suite == "example4":
        res = suites.example4(C=cfg["C"] or 4.0, window=cfg["window"], samples=cfg["samples"], seed=cfg["seed"])
    elif suite == "aabw":
        res = suites.aabw(_space(cfg), samples=cfg["samples"], dim=cfg["dim"], seed=cfg["seed"])
    else:
        norm = _space(cfg)
        fam = _family(cfg)
        if suite == "chain":
            res = suites.chain(norm, fam, workers=cfg["workers"])
        elif suite == "theorem-t1":
            res = suites.theorem_t1(norm, fam, workers=cfg["workers"])
        else:
            if cfg["C"] is None:
                raise UsageError("prop1dim needs --C")
            res = suites.prop1dim(norm, fam, cfg["C"], cfg["max_card"], cfg["interval_samples"], cfg["workers"])
    for line in res.lines:
        log(line)
    return res.rows, res.passed


COMMANDS = {"constants": cmd_constants, "functionals": cmd_functionals, "report": cmd_report,
            "construct": cmd_construct, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    def log(msg):
        print(msg, file=sys.stderr)

    try:
        cfg = resolve_config(ns)
        rows, ok = COMMANDS[cfg["command"]](cfg, log)
    except UsageError as exc:
        log(f"error: {exc}")
        return EXIT_USAGE
    except (CapExceeded, GreedySetCapExceeded) as exc:
        log(f"resource cap exceeded: {exc}")
        return EXIT_CAP
    buf = io.StringIO()
    write_csv(rows, buf)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    log("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
