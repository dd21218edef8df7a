"""Command line entry point: ``tfde run`` and ``tfde dump``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .allatonce import METHODS, NewtonConfig
from .harness import ExperimentConfig, dump_matrices, format_table, run_experiment, write_csv, write_json
from .linalg import ResourceLimitError
from .problems import CATALOG, catalog

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

FULL_MESHES = [64, 128, 256, 512]


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tfde", description="Tempered fractional diffusion solvers and experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an error, difference or solver-comparison sweep")
    r.add_argument("--config", type=Path, help="TOML file; flags given on the command line override it")
    r.add_argument("--problem", choices=sorted(CATALOG))
    r.add_argument("--alpha", type=_floats, help="comma separated list")
    r.add_argument("--lambda", dest="lams", type=_floats, help="comma separated list")
    r.add_argument("--mode", choices=["table1", "table2", "diff", "compare"])
    r.add_argument("--meshes", type=_ints, help="comma separated M (table1) or M=N sizes")
    r.add_argument("--ref", type=int, help="reference M = N")
    r.add_argument("--n-fixed", type=int, help="fixed N for time sweeps (default: reference size)")
    r.add_argument("--scheme", dest="schemes", action="append", choices=["L-IES", "NL-IES"])
    r.add_argument("--nl-solver", choices=["nlies_step", "all_at_once"])
    r.add_argument("--sweep", choices=["time", "diagonal"], help="diff mode mesh sweep")
    r.add_argument("--method", dest="methods", action="append", choices=list(METHODS))
    r.add_argument("--ell", type=int)
    r.add_argument("--krylov-tol", type=float)
    r.add_argument("--krylov-maxit", type=int)
    r.add_argument("--newton-maxit", type=int)
    r.add_argument("--jobs", type=int)
    r.add_argument("--paper-scale", action="store_true", help="reference 1024 and meshes 64..512")
    r.add_argument("--out", type=Path)
    r.add_argument("--format", dest="fmt", choices=["csv", "json"])

    d = sub.add_parser("dump", help="write dense J^0 and P_ell for M = N = size")
    d.add_argument("--problem", choices=sorted(CATALOG), required=True)
    d.add_argument("--alpha", type=float, default=1.5)
    d.add_argument("--lambda", dest="lam", type=float, default=0.0)
    d.add_argument("--size", type=int, required=True)
    d.add_argument("--ell", type=int, default=8)
    d.add_argument("--out", type=Path, required=True, help="Jacobian file; P_ell goes to <stem>.precond<suffix>")
    return p


_NEWTON_FLAGS = {"ell": "ell", "krylov_tol": "krylov_tol", "krylov_maxit": "krylov_maxit", "newton_maxit": "maxit"}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the optional TOML file with command-line flags (flags win)."""
    values: dict = {}
    newton: dict = {}
    if args.config is not None:
        with args.config.open("rb") as fh:
            data = tomllib.load(fh)
        newton.update(data.pop("newton", {}))
        if "lambda" in data:
            data["lams"] = data.pop("lambda")
        if "alpha" in data:
            data["alphas"] = data.pop("alpha")
        values.update(data)
    if args.paper_scale:
        values.setdefault("ref", 1024)
        values.setdefault("meshes", FULL_MESHES)
    flag_map = {
        "problem": "problem", "alpha": "alphas", "lams": "lams", "mode": "mode", "meshes": "meshes",
        "ref": "ref", "n_fixed": "n_fixed", "schemes": "schemes", "nl_solver": "nl_solver", "sweep": "sweep",
        "methods": "methods", "jobs": "jobs", "out": "out", "fmt": "fmt",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = v
    for flag, key in _NEWTON_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            newton[key] = v
    for k in ("alphas", "lams", "meshes"):
        if k in values and not isinstance(values[k], list):
            values[k] = [values[k]]
    if values.get("mode") == "compare" and "meshes" not in values:
        values["meshes"] = [129]
    values["newton"] = NewtonConfig(**newton)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if values.get("out") is not None:
        values["out"] = str(values["out"])
        if "fmt" not in values and str(values["out"]).endswith(".json"):
            values["fmt"] = "json"
    return ExperimentConfig(**values)


def _run(args) -> int:
    try:
        cfg = build_config(args)
    except (ValueError, TypeError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_experiment(cfg)
    print(format_table(rows))
    if cfg.out:
        (write_json if cfg.fmt == "json" else write_csv)(rows, cfg.out)
    failed = [r for r in rows if r.status.startswith("error")]
    return EXIT_PARTIAL if failed else EXIT_OK


def _dump(args) -> int:
    try:
        spec = catalog(args.problem, args.alpha, args.lam)
        out = args.out
        pre = out.with_name(f"{out.stem}.precond{out.suffix}")
        jac, pc = dump_matrices(spec, args.size, out, pre, ell=args.ell)
    except ResourceLimitError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {jac} and {pc}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return _run(args) if args.command == "run" else _dump(args)


if __name__ == "__main__":
    sys.exit(main())
