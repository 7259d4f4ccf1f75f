"""Command-line front end.

    signalcraft design       --config inst.json [--out result.json]
    signalcraft design-lp    --config inst.json [--dump-lp prog.txt]
    signalcraft evaluate     --config inst.json [--mechanism result.json]
    signalcraft sweep        --config inst.json [--csv sweep.csv] [--jobs N]
    signalcraft convergence  --config inst.json [--csv conv.csv]
    signalcraft check        --mechanism m.json --prior p.json

Configs are JSON. Results go to ``--out`` (stdout by default) as JSON with
floats written to 17 significant digits; studies also write a CSV table.
Exit status: 0 success, 2 bad input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import dist
from .equilibrium import map_from_config
from .evaluate import (EvalReport, General, convergence_study, evaluate, preference_from_dict,
                       sweep_capacity, value_direct, value_full_info, value_mc, value_no_info)
from .lp import design_lipschitz, design_scaled_capacity, dump_lp
from .mechanism import DirectMechanism, IntervalMechanism, check_mpc, direct_of
from .set_designer import design

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
SEED_ENV = "SIGNALCRAFT_SEED"
LP_DESIGNERS = ("scaled_capacity", "lipschitz")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- output

def _fmt_float(v):
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    s = format(v, ".17g")
    return s if any(ch in s for ch in ".en") else s + ".0"


def dumps(obj, indent=2, _level=0):
    """JSON text with every float at 17 significant digits (stable across runs)."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _emit(payload, out):
    text = dumps(payload) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def write_csv(rows, columns, path):
    """CSV with a header row; floats at 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt_float(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c]
                    for c in columns])
    Path(path).write_text(buf.getvalue())


# --------------------------------------------------------------------------- config

def _load_json(path, what="config"):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {path} is not valid JSON: {e}")


def _need(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r}")
    return cfg[key]


def load_prior(cfg):
    return dist.from_dict(_need(cfg, "prior"))


def load_map(cfg, prior):
    if "equilibrium" not in cfg and ("value_dist" not in cfg or "cost" not in cfg):
        raise ConfigError("config needs value_dist and cost, or an equilibrium override")
    return map_from_config(cfg, theta_max=prior.M)


def load_preference(cfg, prior):
    vd = dist.from_dict(cfg["value_dist"]) if "value_dist" in cfg else None
    return preference_from_dict(_need(cfg, "preference"), vd, prior.M)


def resolve_seed(cfg):
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}")
    return int(cfg.get("seed", 0))


def _designer(cfg):
    d = cfg.get("designer")
    if d is None:
        kind = cfg.get("preference", {}).get("kind")
        d = {"set": "set", "scaled_capacity": "scaled_capacity"}.get(kind, "lipschitz")
    if d not in ("set",) + LP_DESIGNERS:
        raise ConfigError(f"unknown designer {d!r}")
    return d


def load_mechanism(obj):
    """Interval or direct mechanism from a mechanism dict or a saved design result."""
    if "mechanism" in obj or "direct" in obj:
        if obj.get("mechanism") is not None:
            return IntervalMechanism.from_dict(obj["mechanism"])
        return DirectMechanism.from_dict(obj["direct"])
    if "breakpoints" in obj:
        return IntervalMechanism.from_dict(obj)
    if "pairs" in obj:
        return DirectMechanism.from_dict(obj)
    raise ConfigError("mechanism needs breakpoints/rows, pairs, or a design result")


# --------------------------------------------------------------------------- commands

def _run_lp_designer(cfg, designer, prior, dump=None):
    solver = cfg.get("solver", {})
    method = solver.get("method", "auto")
    if designer == "scaled_capacity":
        if not prior.is_discrete:
            raise ConfigError("the scaled-capacity designer needs a discrete prior")
        pref = _need(cfg, "preference")
        res = design_scaled_capacity(prior, _need(pref, "gammas"), pref.get("weights"), method)
    else:
        eq_map = load_map(cfg, prior)
        pref = load_preference(cfg, prior)
        if not isinstance(pref, General):
            raise ConfigError("the lipschitz designer needs a smooth utility preference")
        eta1 = solver.get("eta1", pref.eta1)
        eta2 = solver.get("eta2", pref.eta2)
        kw = {k: solver[k] for k in ("eps", "delta", "tau", "cap", "allow_cap") if k in solver}
        res = design_lipschitz(prior, pref.h, eta1, eta2, eq_map=eq_map, method=method, **kw)
    if dump:
        dump_lp(res.extras["lp"], dump)
    return res


def cmd_design(args, cfg):
    prior = load_prior(cfg)
    designer = _designer(cfg)
    if designer == "set":
        pref = _need(cfg, "preference")
        if pref.get("kind") != "set":
            raise ConfigError("the set designer needs a preference of kind 'set'")
        eq_map = load_map(cfg, prior)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = design(prior, eq_map, _need(pref, "omegas"))
        out = res.to_dict()
        if caught:
            out["warnings"] = [str(w.message) for w in caught]
        return out
    return _run_lp_designer(cfg, designer, prior, args.dump_lp).to_dict()


def cmd_design_lp(args, cfg):
    designer = _designer(cfg)
    if designer not in LP_DESIGNERS:
        raise ConfigError(f"design-lp needs designer scaled_capacity or lipschitz, got {designer!r}")
    return _run_lp_designer(cfg, designer, load_prior(cfg), args.dump_lp).to_dict()


def cmd_evaluate(args, cfg):
    prior = load_prior(cfg)
    eq_map = load_map(cfg, prior)
    pref = load_preference(cfg, prior)
    if args.mechanism:
        mech = load_mechanism(_load_json(args.mechanism, "mechanism"))
    else:
        spec = _need(cfg, "mechanism")
        mech = load_mechanism(_load_json(spec, "mechanism") if isinstance(spec, str) else spec)
    if isinstance(mech, DirectMechanism):
        # a direct mechanism pins the value only when the state does not matter
        report = EvalReport(value_direct(mech, pref, eq_map), method={"path": "direct"})
        report.no_info = value_no_info(prior, pref, eq_map)
        report.full_info = value_full_info(prior, pref, eq_map)
        return report.to_dict()
    report = evaluate(prior, pref, mech, eq_map)
    mc = cfg.get("monte_carlo")
    if mc:
        seed = resolve_seed(cfg)
        est, se = value_mc(prior, pref, mech, eq_map, n=int(mc.get("samples", 1_000_000)),
                           seed=seed)
        report.method.update({"mc_value": est, "mc_stderr": se, "mc_seed": seed,
                              "mc_samples": int(mc.get("samples", 1_000_000))})
    out = report.to_dict()
    if prior.is_discrete:
        out["conditional_rows"] = [{"j": j, "nu": float(nu), "p": float(p), "Vj": float(v)}
                                   for j, (nu, p, v) in enumerate(zip(
                                       prior.nu, prior.p, report.conditional))]
    return out


def _csv_target(args, cfg):
    if args.csv:
        return args.csv
    if cfg.get("output", {}).get("csv"):
        return cfg["output"]["csv"]
    if args.out:
        return str(Path(args.out).with_suffix(".csv"))
    return None


def cmd_sweep(args, cfg):
    prior = load_prior(cfg)
    sw = cfg.get("sweep", {})
    if "b" in sw:
        grid = [float(b) for b in sw["b"]]
    else:
        grid = np.linspace(sw.get("start", 0.0), sw.get("stop", 1.0), int(sw.get("num", 21))).tolist()
    if any(not 0.0 <= b <= 1.0 for b in grid):
        raise ConfigError("capacity levels must lie in [0, 1]")
    rows = sweep_capacity(prior, dist.from_dict(_need(cfg, "value_dist")),
                          _cost(cfg), grid, jobs=args.jobs)
    target = _csv_target(args, cfg)
    if target:
        write_csv(rows, ["b", "V_opt", "V_ni", "V_fi"], target)
    return {"rows": rows, "csv": target}


def _cost(cfg):
    from .equilibrium import cost_from_dict
    return cost_from_dict(_need(cfg, "cost"))


def cmd_convergence(args, cfg):
    prior = load_prior(cfg)
    pref = load_preference(cfg, prior)
    if not isinstance(pref, General):
        raise ConfigError("convergence studies need a smooth utility preference")
    conv = cfg.get("convergence", {})
    levels = conv.get("levels") or [[n, n] for n in (10, 32, 100, 316, 1000)]
    rows = convergence_study(prior, dist.from_dict(_need(cfg, "value_dist")), _cost(cfg), pref,
                             levels, jobs=args.jobs, method=cfg.get("solver", {}).get("method", "auto"))
    target = _csv_target(args, cfg)
    if target:
        write_csv(rows, ["delta", "tau", "value", "gap"], target)
    return {"rows": rows, "csv": target}


def cmd_check(args, cfg):
    if args.mechanism is None:
        raise ConfigError("check needs --mechanism")
    if args.prior:
        prior = dist.from_dict(_load_json(args.prior, "prior"))
    elif cfg is not None:
        prior = load_prior(cfg)
    else:
        raise ConfigError("check needs --prior or --config with a prior")
    mech = load_mechanism(_load_json(args.mechanism, "mechanism"))
    direct = mech if isinstance(mech, DirectMechanism) else direct_of(mech, prior)
    report = check_mpc(direct.sorted(), prior, tol=args.tol)
    out = report.to_dict()
    out["pairs"] = direct.sorted().pairs
    return out


COMMANDS = {
    "design": cmd_design,
    "design-lp": cmd_design_lp,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
    "check": cmd_check,
}


def build_parser():
    p = argparse.ArgumentParser(prog="signalcraft", description="Design and evaluate public signals.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "check", help="instance config (JSON)")
        s.add_argument("--out", help="result JSON path (default: stdout)")
        s.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker threads for studies")
        if name in ("design", "design-lp"):
            s.add_argument("--dump-lp", help="write the design program as plain text")
        if name in ("evaluate", "check"):
            s.add_argument("--mechanism", help="mechanism or design result JSON")
        if name == "check":
            s.add_argument("--prior", help="prior JSON")
            s.add_argument("--tol", type=float, default=1e-8)
        if name in ("sweep", "convergence"):
            s.add_argument("--csv", help="CSV table path")
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_json(args.config) if args.config else None
        payload = COMMANDS[args.command](args, cfg)
        _emit(payload, args.out)
    except KeyError as e:
        print(f"signalcraft: error: missing field {e.args[0]!r}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, TypeError, ValueError) as e:
        print(f"signalcraft: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as e:
        print(f"signalcraft: solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None):
    try:
        code = run(argv)
    except SystemExit as e:  # argparse usage errors exit 2
        code = e.code if isinstance(e.code, int) else EXIT_CONFIG
    sys.exit(code)


if __name__ == "__main__":
    main()
