"""Experiment driver: error/order tables, scheme differences, solver comparisons, matrix dumps."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .allatonce import AllAtOnceSystem, NewtonConfig, Preconditioner, coarse_initial_guess, newton_solve
from .linalg import DENSE_CAP, ResourceLimitError, write_matrix
from .problems import CATALOG, ProblemSpec, build_mesh, catalog
from .schemes import SchemeSolution, liess_run, nlies_step_run

log = logging.getLogger(__name__)

MODES = ("table1", "table2", "diff", "compare")
SCHEMES = ("L-IES", "NL-IES")
CSV_FIELDS = ("problem", "alpha", "lambda", "M", "N", "scheme", "err", "order", "iter1", "iter2", "time_s", "status")

# status markers for the solver comparison tables
CAP_MARK = "‡"
RESOURCE_MARK = "†"


def compute_err(solution: SchemeSolution, reference: SchemeSolution) -> float:
    """``max_j max_i |U_i^j - U_ref(x_i, t_j)|`` sampled at coinciding nodes."""
    m, r = solution.mesh, reference.mesh
    if (m.a, m.b, m.T) != (r.a, r.b, r.T):
        raise ValueError("solution and reference live on different domains")
    if r.N % m.N or r.M % m.M:
        raise ValueError(f"reference mesh ({r.N}x{r.M}) does not refine ({m.N}x{m.M}) by integer ratios")
    sampled = reference.U[:: r.M // m.M, :: r.N // m.N]
    return float(np.max(np.abs(solution.U - sampled)))


def compute_order(err_coarse: float, err_fine: float) -> float:
    """``log2(err_coarse / err_fine)``; NaN when either error is not positive."""
    if not (err_coarse > 0.0 and err_fine > 0.0):
        return math.nan
    return math.log2(err_coarse / err_fine)


@dataclass
class Row:
    problem: str
    alpha: float
    lam: float
    M: int
    N: int
    scheme: str
    err: float = math.nan
    order: float = math.nan
    iter1: float = math.nan
    iter2: float = math.nan
    time_s: float = math.nan
    status: str = "ok"

    def as_record(self) -> dict:
        rec = dataclasses.asdict(self)
        rec["lambda"] = rec.pop("lam")
        return {k: rec[k] for k in CSV_FIELDS}


@dataclass
class ExperimentConfig:
    """One sweep.

    ``meshes`` means: number of time steps ``M`` at fixed ``N = n_fixed``
    for ``table1`` (and ``diff`` with ``sweep='time'``); ``M = N`` otherwise.
    ``n_fixed`` defaults to the reference size, so time-sweep errors carry
    temporal error only.
    """

    problem: str = "example1"
    mode: str = "table1"
    alphas: list = field(default_factory=lambda: [1.5])
    lams: list = field(default_factory=lambda: [1.0])
    meshes: list = field(default_factory=lambda: [32, 64, 128, 256])
    ref: int = 512
    n_fixed: Optional[int] = None
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    nl_solver: str = "nlies_step"
    sweep: str = "time"
    methods: list = field(default_factory=lambda: ["preconditioned"])
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    jobs: int = 1
    out: Optional[str] = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.problem not in CATALOG:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if any(int(m) <= 0 for m in self.meshes) or self.ref <= 0:
            raise ValueError("mesh sizes must be positive")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if self.nl_solver not in ("nlies_step", "all_at_once"):
            raise ValueError(f"unknown NL-IES solver {self.nl_solver!r}")
        if self.sweep not in ("time", "diagonal"):
            raise ValueError("sweep must be 'time' or 'diagonal'")
        if self.fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.mode in ("table1", "table2"):
            nf = self.n_fixed or self.ref
            for m in self.meshes:
                if m > self.ref:
                    raise ValueError(f"mesh {m} is finer than the reference {self.ref}")
            if self.mode == "table1" and nf > self.ref:
                raise ValueError("fixed N exceeds the reference size")

    @property
    def N_fixed(self) -> int:
        return self.n_fixed or self.ref


def solve_scheme(spec: ProblemSpec, N: int, M: int, scheme: str, nl_solver: str = "nlies_step",
                 newton: Optional[NewtonConfig] = None, tol: float = 1e-12) -> SchemeSolution:
    mesh = build_mesh(spec, N, M)
    if scheme == "L-IES":
        return liess_run(spec, mesh)
    if nl_solver == "all_at_once":
        sol, _ = newton_solve(AllAtOnceSystem(spec, mesh), newton)
        return sol
    return nlies_step_run(spec, mesh, tol=tol)


def _order_fill(rows: list[Row]) -> None:
    prev = None
    for row in rows:
        halved = prev is not None and 2 * prev.M == row.M and prev.N in (row.N, row.N // 2)
        if halved and row.status == "ok" and prev.status == "ok":
            row.order = compute_order(prev.err, row.err)
        prev = row


def _error_rows(cfg: ExperimentConfig, spec: ProblemSpec, alpha: float, lam: float) -> list[Row]:
    rows: list[Row] = []
    for scheme in cfg.schemes:
        try:
            ref = solve_scheme(spec, cfg.ref, cfg.ref, scheme, cfg.nl_solver, cfg.newton, tol=1e-13)
        except Exception as exc:  # noqa: BLE001 - recorded in-row
            log.warning("reference failed for %s (%s, %s): %s", scheme, alpha, lam, exc)
            ref = None
            ref_error = f"error: reference failed: {exc}"
        group = []
        for m in cfg.meshes:
            N, M = (cfg.N_fixed, m) if cfg.mode == "table1" else (m, m)
            row = Row(cfg.problem, alpha, lam, M, N, scheme)
            if ref is None:
                row.status = ref_error
            else:
                try:
                    sol = solve_scheme(spec, N, M, scheme, cfg.nl_solver, cfg.newton)
                    row.err = compute_err(sol, ref)
                except Exception as exc:  # noqa: BLE001
                    row.status = f"error: {exc}"
            group.append(row)
        _order_fill(group)
        rows.extend(group)
    return rows


def _diff_rows(cfg: ExperimentConfig, spec: ProblemSpec, alpha: float, lam: float) -> list[Row]:
    rows = []
    for m in cfg.meshes:
        N, M = (cfg.N_fixed, m) if cfg.sweep == "time" else (m, m)
        row = Row(cfg.problem, alpha, lam, M, N, "NL-IES vs L-IES")
        try:
            nl = solve_scheme(spec, N, M, "NL-IES", cfg.nl_solver, cfg.newton)
            li = solve_scheme(spec, N, M, "L-IES")
            row.err = compute_err(nl, li)
        except Exception as exc:  # noqa: BLE001
            row.status = f"error: {exc}"
        rows.append(row)
    _order_fill(rows)
    return rows


def _compare_rows(cfg: ExperimentConfig, spec: ProblemSpec, alpha: float, lam: float) -> list[Row]:
    rows = []
    for N in cfg.meshes:
        for method in cfg.methods:
            row = Row(cfg.problem, alpha, lam, N, N, method)
            try:
                mesh = build_mesh(spec, N, N)
                if method == "direct" and mesh.n > DENSE_CAP:
                    raise ResourceLimitError(f"direct solve needs dense blocks of size {mesh.n}")
                newton = dataclasses.replace(cfg.newton, method=method)
                _, rep = newton_solve(AllAtOnceSystem(spec, mesh), newton)
                row.iter1 = float(rep.iter1)
                # no inner Krylov iterations for the direct method
                row.iter2 = math.nan if method == "direct" else float(rep.iter2)
                row.time_s = round(rep.wall_time_seconds, 3)
                if rep.krylov_capped:
                    row.status = CAP_MARK
                elif not rep.converged:
                    row.status = "maxit"
            except (ResourceLimitError, MemoryError) as exc:
                row.status = RESOURCE_MARK
                log.info("%s: %s", method, exc)
            except Exception as exc:  # noqa: BLE001
                row.status = f"error: {exc}"
            rows.append(row)
    return rows


_RUNNERS = {"table1": _error_rows, "table2": _error_rows, "diff": _diff_rows, "compare": _compare_rows}


def run_experiment(cfg: ExperimentConfig) -> list[Row]:
    """Run the sweep for every ``(alpha, lam)`` pair; failures are kept in their rows."""
    if not cfg.meshes:
        return []
    runner = _RUNNERS[cfg.mode]
    cells = [(a, l) for a in cfg.alphas for l in cfg.lams]

    def work(cell):
        a, l = cell
        return runner(cfg, catalog(cfg.problem, a, l), float(a), float(l))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            groups = list(pool.map(work, cells))
    else:
        groups = [work(c) for c in cells]
    return [row for g in groups for row in g]


# ---- serialization ---------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(rows: list[Row], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for row in rows:
            rec = row.as_record()
            w.writerow([_fmt(rec[k]) for k in CSV_FIELDS])
    return path


def _parse_float(s: str) -> float:
    return math.nan if s == "" else float(s)


def _row_from_record(rec: dict) -> Row:
    return Row(
        problem=rec["problem"],
        alpha=float(rec["alpha"]),
        lam=float(rec["lambda"]),
        M=int(rec["M"]),
        N=int(rec["N"]),
        scheme=rec["scheme"],
        err=_parse_float(rec["err"]) if isinstance(rec["err"], str) else _nan(rec["err"]),
        order=_parse_float(rec["order"]) if isinstance(rec["order"], str) else _nan(rec["order"]),
        iter1=_parse_float(rec["iter1"]) if isinstance(rec["iter1"], str) else _nan(rec["iter1"]),
        iter2=_parse_float(rec["iter2"]) if isinstance(rec["iter2"], str) else _nan(rec["iter2"]),
        time_s=_parse_float(rec["time_s"]) if isinstance(rec["time_s"], str) else _nan(rec["time_s"]),
        status=rec["status"],
    )


def _nan(v):
    return math.nan if v is None else float(v)


def read_csv(path) -> list[Row]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [_row_from_record(rec) for rec in csv.DictReader(fh)]


def write_json(rows: list[Row], path) -> Path:
    path = Path(path)
    recs = []
    for row in rows:
        rec = row.as_record()
        recs.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in rec.items()})
    path.write_text(json.dumps(recs, indent=2, ensure_ascii=False), encoding="utf-8")
    return path


def read_json(path) -> list[Row]:
    return [_row_from_record(rec) for rec in json.loads(Path(path).read_text(encoding="utf-8"))]


def rows_equal(a: list[Row], b: list[Row]) -> bool:
    """Row-wise equality with NaN == NaN."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        for k in CSV_FIELDS:
            u, v = x.as_record()[k], y.as_record()[k]
            if isinstance(u, float) and isinstance(v, float) and math.isnan(u) and math.isnan(v):
                continue
            if u != v:
                return False
    return True


# ---- matrix dumps ------------------------------------------------------------


def dump_matrices(spec: ProblemSpec, size: int, jacobian_out, precond_out, ell: int = 8,
                  newton: Optional[NewtonConfig] = None) -> tuple[Path, Path]:
    """Write the dense initial Jacobian and dense ``P_ell`` for ``M = N = size``.

    The Jacobian is taken at the coarse-grid interpolated starting vector,
    i.e. the first matrix Newton's method works with.
    """
    cfg = newton or NewtonConfig()
    mesh = build_mesh(spec, size, size)
    system = AllAtOnceSystem(spec, mesh)
    if system.size > DENSE_CAP:
        raise ResourceLimitError(f"dense dump of size {system.size} exceeds cap {DENSE_CAP}")
    u0 = coarse_initial_guess(spec, mesh, cfg.coarse_N, cfg.coarse_M)
    J0 = system.jacobian(u0).to_dense()
    P = Preconditioner(system, ell).to_dense()
    return write_matrix(jacobian_out, J0), write_matrix(precond_out, P)


def format_table(rows: list[Row]) -> str:
    """Plain-text rendering for the terminal."""
    lines = [f"{'problem':<15}{'alpha':>6}{'lam':>6}{'M':>6}{'N':>6}  {'scheme':<18}{'err':>12}"
             f"{'order':>9}{'iter1':>7}{'iter2':>8}{'time_s':>9}  status"]
    for r in rows:
        def f(v, spec):
            return "--".rjust(len(format(0.0, spec))) if isinstance(v, float) and math.isnan(v) else format(v, spec)
        lines.append(
            f"{r.problem:<15}{r.alpha:>6g}{r.lam:>6g}{r.M:>6d}{r.N:>6d}  {r.scheme:<18}"
            f"{f(r.err, '12.4E')}{f(r.order, '9.4f')}{f(r.iter1, '7.1f')}{f(r.iter2, '8.1f')}"
            f"{f(r.time_s, '9.3f')}  {r.status}"
        )
    return "\n".join(lines)
