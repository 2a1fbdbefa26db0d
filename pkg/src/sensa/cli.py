"""Command-line front end: ``sensa <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import benchmark
from .bias import (IvBiasInputs, ProxBiasInputs, SooParams, bias_soo, iv_terms,
                   prox_terms, soo_sd_ratio)
from .bootstrap import PipelineStatistic, bootstrap
from .contour import GridSpec, build_contour, emit
from .errors import SensitivityError
from .estimators import STRATEGIES, estimate_all
from .io_ingest import load_dataset, load_schema, moments, partial_out, standardize
from .sigma import Rho, bias_at, sigma_from_rho
from .simulate import PRESETS, StructuralConfig, generate, population_oracle, preset
from .trv import TrvOptions, resolve_b, trv


class UsageError(Exception):
    pass


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("SENSA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"SENSA_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _clean(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def _meta(args, **options) -> dict:
    return {"version": __version__, "command": args.command, "seed": args.seed,
            "options": options}


def _write(args, payload: dict, rows: list[dict] | None = None):
    if args.format == "svg":
        raise UsageError("--format svg is only available for contour")
    if args.format == "csv":
        if rows is None:
            raise UsageError(f"--format csv is not available for {args.command}")
        buf = io.StringIO()
        keys = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in _clean(r).items()})
        text = buf.getvalue()
    else:
        text = json.dumps(_clean(payload), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _pipeline(args):
    schema = load_schema(args.schema)
    d = load_dataset(args.data, schema)
    ds = standardize(d)
    red = partial_out(ds)
    return d, ds, moments(red), estimate_all(red)


def _strategies(arg) -> list[str]:
    return list(STRATEGIES) if arg == "all" else [arg]


def _trv_options(args) -> TrvOptions:
    kw = {"seed": args.seed}
    if getattr(args, "starts", None):
        kw["starts"] = args.starts
    if getattr(args, "bound", None):
        kw["bound"] = args.bound
    return TrvOptions(**kw)


def _parse_b(text):
    try:
        return float(text)
    except ValueError:
        t = text.strip().lower()
        if t == "estimate" or (t.endswith("se") and (t[:-2] == "" or _isnum(t[:-2]))):
            return t
        raise argparse.ArgumentTypeError(f"--b must be a number, Nse or 'estimate', got {text!r}")


def _isnum(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------- commands

def cmd_estimate(args):
    d, ds, m, est = _pipeline(args)
    rows = [est[s].to_dict() for s in STRATEGIES]
    _write(args, {"metadata": _meta(args, standardize_yz=d.schema.standardize_yz),
                  "n": d.n, "scales": dict(ds.scales), "estimates": rows}, rows)


def cmd_bias_decompose(args):
    d, ds, m, est = _pipeline(args)
    rho = Rho.from_array(args.rho)
    s = sigma_from_rho(m, rho)
    taus = est.taus()
    sy, sz = soo_sd_ratio(m)
    out = {"soo": {"r_yu": rho.r4, "r_zu": rho.r3,
                   "bias": bias_soo(SooParams(rho.r4, rho.r3), sy, sz)},
           "iv": {"inputs": asdict(IvBiasInputs.from_sigma(s)),
                  "terms": iv_terms(IvBiasInputs.from_sigma(s))},
           "prox": {"inputs": asdict(ProxBiasInputs.from_sigma(s)),
                    "terms": prox_terms(ProxBiasInputs.from_sigma(s))}}
    for st in STRATEGIES:
        out[st]["exact"] = bias_at(st, m, taus, rho)
    rows = [{"strategy": st, "formula": out[st]["bias"] if st == "soo" else out[st]["terms"]["bias"],
             "exact": out[st]["exact"]} for st in STRATEGIES]
    _write(args, {"metadata": _meta(args, rho=asdict(rho)), "decomposition": out}, rows)


def cmd_trv(args):
    d, ds, m, est = _pipeline(args)
    opts = _trv_options(args)
    results = []
    for st in _strategies(args.strategy):
        b = resolve_b(args.b, est[st])
        results.append(trv(st, b, m, est, opts).to_dict())
    rows = [{"strategy": r["strategy"], "b": r["b"], "trv": r["trv"],
             **{f"ra_{k}": v for k, v in (r["allocations"] or {}).items()}} for r in results]
    _write(args, {"metadata": _meta(args, b=str(args.b), trv_options=asdict(opts)),
                  "estimates": [est[s].to_dict() for s in STRATEGIES], "trv": results}, rows)


def cmd_benchmark(args):
    schema = load_schema(args.schema)
    d = load_dataset(args.data, schema)
    res = benchmark(d)
    rows = []
    for r in res:
        row = {"covariate": r.covariate, "delta_tau": r.delta_tau, "error": r.error}
        row.update({f"norm_{k}": v for k, v in r.totals.items()})
        row.update(r.components)
        rows.append(row)
    _write(args, {"metadata": _meta(args), "benchmarks": [r.to_dict() for r in res]}, rows)


def cmd_bootstrap(args):
    d, ds, m, est = _pipeline(args)
    opts = _trv_options(args)
    bs = {st: resolve_b(args.b, est[st]) for st in _strategies(args.strategy)} if not args.no_trv else {}
    stat = PipelineStatistic(bs, opts, benchmarks=not args.no_benchmarks)
    res = bootstrap(d, {"pipeline": stat}, args.B, args.seed, weight_scheme=args.weights,
                    workers=_threads(args))
    rows = [r.to_dict() for r in res]
    _write(args, {"metadata": _meta(args, B=args.B, b=bs, weights=args.weights,
                                    trv_options=asdict(opts)), "summaries": rows}, rows)


def _parse_grid(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid expects NxN, got {text!r}") from None


def _parse_range(text):
    try:
        a, b = (float(v) for v in text.split(","))
        return a, b
    except ValueError:
        raise argparse.ArgumentTypeError(f"--range expects a,b, got {text!r}") from None


def cmd_contour(args):
    if args.format not in ("json", "csv", "svg"):
        raise UsageError("contour --format must be csv, json or svg")
    if args.format == "svg" and not args.out:
        raise UsageError("--format svg needs --out")
    try:
        spec = GridSpec(range_z=args.range, range_y=args.range, resolution=args.grid,
                        n_levels=args.levels)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    d, ds, m, est = _pipeline(args)
    rows = benchmark(d) if (d.schema.covariates and not args.no_benchmarks) else []
    g = build_contour(m, est, spec, ses=est.ses(), mse=args.mse, benchmarks=rows)
    meta = _meta(args, grid=list(args.grid), range=list(args.range), levels=args.levels,
                 mse=args.mse)
    if args.out:
        emit(g, args.format, args.out, metadata=meta)
    elif args.format == "json":
        sys.stdout.write(json.dumps(_clean({"metadata": meta, **g.to_dict()})) + "\n")
    else:
        tmp = io.StringIO()
        tmp.write("r_z,r_y,bias,tau_true,label\n")
        names = g.label_names()
        for i, ry in enumerate(g.r_y):
            for j, rz in enumerate(g.r_z):
                tmp.write(f"{rz!r},{ry!r},{g.bias[i, j]!r},{g.tau_true[i, j]!r},{names[i, j]}\n")
        sys.stdout.write(tmp.getvalue())


def _parse_set(items):
    out = {}
    fields = StructuralConfig.__dataclass_fields__
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        if k not in fields:
            raise UsageError(f"unknown config field {k!r}")
        out[k] = type(fields[k].default)(v) if not isinstance(fields[k].default, bool) \
            else v.lower() in ("1", "true", "yes")
    return out


def cmd_simulate(args):
    cfg = preset(args.preset, n=args.n, seed=args.seed, n_covariates=args.covariates,
                 **_parse_set(args.set))
    d = generate(cfg, with_u=args.keep_u)
    prefix = Path(args.out_prefix)
    csv_path = prefix.with_suffix(".csv")
    schema_path = prefix.with_suffix(".schema.json")
    names = list(d.columns)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        cols = [d.columns[k] for k in names]
        for i in range(d.n):
            w.writerow([repr(float(c[i])) for c in cols])
    schema_path.write_text(json.dumps(d.schema.to_dict(), indent=2) + "\n", encoding="utf-8")
    o = population_oracle(cfg)
    args.out = None
    args.format = "json"
    _write(args, {"metadata": _meta(args, preset=args.preset, config=cfg.to_dict()),
                  "data": str(csv_path), "schema": str(schema_path),
                  "population": {"tau": o.tau, "taus": o.taus, "bias": o.bias}})


# ---------------------------------------------------------------- parser

def _rho_arg(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("--rho expects r1,r2,r3,r4") from None
    if len(vals) != 4 or any(not -1 < v < 1 for v in vals):
        raise argparse.ArgumentTypeError("--rho expects four values in (-1, 1)")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sensa", description=__doc__)
    p.add_argument("--version", action="version", version=f"sensa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", default="json", choices=["json", "csv", "svg"])

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True)
    data.add_argument("--schema", required=True)

    trvopt = argparse.ArgumentParser(add_help=False)
    trvopt.add_argument("--strategy", default="all", choices=["soo", "iv", "prox", "all"])
    trvopt.add_argument("--b", type=_parse_b, default="2se",
                        help="bias threshold: number, Nse (e.g. 2se) or 'estimate'")
    trvopt.add_argument("--starts", type=int, default=None)
    trvopt.add_argument("--bound", type=float, default=None)

    sp = sub.add_parser("estimate", parents=[common, data], help="three point estimates")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("bias-decompose", parents=[common, data],
                        help="labeled bias terms at given sensitivity values")
    sp.add_argument("--rho", type=_rho_arg, required=True, help="r1,r2,r3,r4")
    sp.set_defaults(func=cmd_bias_decompose)

    sp = sub.add_parser("trv", parents=[common, data, trvopt], help="total robustness values")
    sp.set_defaults(func=cmd_trv)

    sp = sub.add_parser("benchmark", parents=[common, data], help="covariate benchmarks")
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("bootstrap", parents=[common, data, trvopt], help="Dirichlet bootstrap")
    sp.add_argument("--B", type=int, default=100)
    sp.add_argument("--weights", default="dirichlet", choices=["dirichlet", "equal"])
    sp.add_argument("--no-benchmarks", action="store_true")
    sp.add_argument("--no-trv", action="store_true")
    sp.set_defaults(func=cmd_bootstrap)

    sp = sub.add_parser("contour", parents=[common, data], help="bias/MSE contour grid")
    sp.add_argument("--grid", type=_parse_grid, default=(201, 201))
    sp.add_argument("--range", type=_parse_range, default=(-0.995, 0.995))
    sp.add_argument("--levels", type=int, default=8)
    sp.add_argument("--mse", action="store_true")
    sp.add_argument("--no-benchmarks", action="store_true")
    sp.set_defaults(func=cmd_contour)

    sp = sub.add_parser("simulate", parents=[common], help="draw data from the structural model")
    sp.add_argument("--preset", default="confounded", choices=sorted(PRESETS))
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--covariates", type=int, default=0)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--keep-u", action="store_true", help="write the hidden confounder column")
    sp.add_argument("--out-prefix", required=True)
    sp.set_defaults(func=cmd_simulate)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "bootstrap" and args.B < 2:
            raise UsageError("--B must be at least 2")
        if getattr(args, "format", None) == "svg" and args.command != "contour":
            raise UsageError("--format svg is only available for contour")
        if getattr(args, "starts", None) is not None and args.starts < 1:
            raise UsageError("--starts must be positive")
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sensa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SensitivityError as exc:
        print(json.dumps({"error": exc.kind, "type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
