"""End-to-end acceptance criteria.

Each test prints one ``PASS``/``FAIL`` line with the measured quantities and
then asserts the criterion at its stated tolerance.  Criterion 6 runs at full
size and is skipped unless ``TFDE_FULL_SCALE=1``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from tfde.allatonce import AllAtOnceSystem, NewtonConfig, Preconditioner, gershgorin_check, newton_solve
from tfde.harness import ExperimentConfig, compute_err, compute_order, run_experiment
from tfde.linalg import LowerHessenbergToeplitz, banded_lu
from tfde.problems import build_mesh, catalog
from tfde.schemes import SchemeSolution, SpaceOperator, liess_run, nlies_step_run
from tfde.weights import check_lemma31, tempered_weights

pytestmark = pytest.mark.acceptance

ALPHAS = (1.1, 1.5, 1.9, 1.99)
LAMS = (0.0, 1.0, 5.0, 10.0)
PROBLEMS = ("example1", "example2")


@pytest.fixture
def report(capsys):
    def emit(label: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")

    return emit


def test_c01_weight_properties(report):
    t0 = time.perf_counter()
    bad, unresolved = [], 0
    for alpha in ALPHAS:
        for lam in LAMS:
            for p in range(4, 11):
                rep = check_lemma31(tempered_weights(alpha, lam, 2.0**-p, 4096))
                unresolved += rep.unresolved
                if not rep.ok:
                    bad.append((alpha, lam, p, rep.first_violation))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 5.0
    report("C1 weight properties", ok, f"112 sequences, violations={len(bad)}, "
           f"sums below rounding floor={unresolved}, {dt:.2f}s")
    assert not bad, bad
    assert dt < 5.0


def test_c02_structured_kernels(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)

    fft_worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 129))
        w = tempered_weights(float(rng.uniform(1.01, 1.99)), float(rng.uniform(0, 10)), 2.0 / (n + 1), n)
        G = LowerHessenbergToeplitz.from_weights(w, n)
        D = G.to_dense()
        x = rng.standard_normal(n)
        for tr, ref in ((False, D @ x), (True, D.T @ x)):
            fft_worst = max(fft_worst, np.linalg.norm(G.matvec(x, transpose=tr) - ref) / np.linalg.norm(ref))

    lu_worst = 0.0
    for name in PROBLEMS:
        for alpha, lam in ((1.1, 0.0), (1.5, 5.0), (1.9, 10.0)):
            for N in (16, 129, 513):
                spec = catalog(name, alpha, lam)
                op = SpaceOperator(spec, build_mesh(spec, N, N))
                Ab = op.banded(8)
                b = rng.standard_normal(op.n)
                x = banded_lu(Ab).solve(b)
                ref = np.linalg.solve(Ab.to_dense(), b)
                lu_worst = max(lu_worst, np.linalg.norm(x - ref) / np.linalg.norm(ref))

    pc_worst = 0.0
    for name in PROBLEMS:
        for N, M in ((4, 3), (9, 16), (16, 16), (16, 5)):
            spec = catalog(name, 1.5, 1.0)
            sys = AllAtOnceSystem(spec, build_mesh(spec, N, M))
            P = Preconditioner(sys, 8)
            r = rng.standard_normal(sys.size)
            ref = np.linalg.solve(P.to_dense(), r)
            pc_worst = max(pc_worst, np.linalg.norm(P(r) - ref) / np.linalg.norm(ref))
    dt = time.perf_counter() - t0
    ok = fft_worst <= 1e-12 and lu_worst <= 1e-10 and pc_worst <= 1e-10 and dt < 30
    report("C2 structured kernels", ok, f"fft {fft_worst:.1e}, banded LU {lu_worst:.1e}, "
           f"block substitution {pc_worst:.1e}, {dt:.2f}s")
    assert fft_worst <= 1e-12 and lu_worst <= 1e-10 and pc_worst <= 1e-10
    assert dt < 30


def test_c03_jacobian_finite_differences(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    eps = 1e-6
    for name in PROBLEMS:
        spec = catalog(name, 1.5, 1.0)
        sys = AllAtOnceSystem(spec, build_mesh(spec, 12, 12))
        for _ in range(20):
            u = rng.uniform(-1, 1, sys.size)
            x = rng.standard_normal(sys.size)
            fd = (sys.residual(u + eps * x) - sys.residual(u - eps * x)) / (2 * eps)
            Jx = sys.jacobian_apply(u, x)
            worst = max(worst, np.linalg.norm(Jx - fd) / np.linalg.norm(Jx))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 10
    report("C3 Jacobian vs finite differences", ok, f"worst relative {worst:.1e}, {dt:.2f}s")
    assert worst <= 1e-6 and dt < 10


def test_c04_cross_solver(report):
    t0 = time.perf_counter()
    worst = 0.0
    for name in PROBLEMS:
        for alpha, lam in ((1.1, 0.0), (1.5, 5.0), (1.9, 10.0)):
            for N in (8, 16, 32):
                spec = catalog(name, alpha, lam)
                sys = AllAtOnceSystem(spec, build_mesh(spec, N, N))
                aao, rep = newton_solve(sys)
                step = nlies_step_run(spec, sys.mesh)
                assert rep.converged
                worst = max(worst, float(np.max(np.abs(aao.U - step.U))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 60
    report("C4 all-at-once vs per-step NL-IES", ok, f"max difference {worst:.1e}, {dt:.2f}s")
    assert worst <= 1e-8 and dt < 60


def test_c05_desk_convergence_order(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(problem="example1", mode="table1", alphas=[1.5], lams=[1.0],
                           meshes=[32, 64, 128, 256], ref=512, n_fixed=512)
    rows = run_experiment(cfg)
    dt = time.perf_counter() - t0
    lines, ok = [], True
    for scheme in ("L-IES", "NL-IES"):
        grp = [r for r in rows if r.scheme == scheme]
        orders = [r.order for r in grp[1:]]
        in_range = all(0.6 <= o <= 1.6 for o in orders)
        ok &= in_range and orders[-1] >= 0.95 and all(r.status == "ok" for r in grp)
        lines.append(f"{scheme} err " + " ".join(f"{r.err:.4e}" for r in grp)
                     + " order " + " ".join(f"{o:.4f}" for o in orders))
    ok &= dt < 600
    report("C5 desk-scale Order1", ok, "; ".join(lines) + f"; {dt:.1f}s")
    for scheme in ("L-IES", "NL-IES"):
        orders = [r.order for r in rows if r.scheme == scheme][1:]
        assert all(0.6 <= o <= 1.6 for o in orders), (scheme, orders)
        assert orders[-1] >= 0.95, (scheme, orders)
    assert dt < 600


@pytest.mark.full_scale
def test_c06_full_scale_table(report):
    t0 = time.perf_counter()
    spec = catalog("example1", 1.1, 0.0)
    ref = liess_run(spec, build_mesh(spec, 1024, 1024))
    errs = [compute_err(liess_run(spec, build_mesh(spec, 1024, M)), ref) for M in (64, 128, 256, 512)]
    orders = [compute_order(a, b) for a, b in zip(errs, errs[1:])]
    target_orders = (1.0012, 1.1689, 1.5586)
    err_ok = f"{errs[0]:.2E}" == "8.03E-02"
    order_ok = all(abs(o - p) <= 0.02 for o, p in zip(orders, target_orders))
    dt = time.perf_counter() - t0
    report("C6 full-size table cell", err_ok and order_ok,
           f"Err(M=64) {errs[0]:.4e} (target 8.0277E-02 to 3 digits), orders "
           + " ".join(f"{o:.4f}" for o in orders) + f" (target {target_orders} +-0.02), {dt:.0f}s")
    assert err_ok, errs[0]
    assert order_ok, orders


def _iters(name, alpha=1.1, lam=0.0, N=129, method="preconditioned"):
    spec = catalog(name, alpha, lam)
    _, rep = newton_solve(AllAtOnceSystem(spec, build_mesh(spec, N, N)), NewtonConfig(method=method))
    return rep


def test_c07_iteration_counts(report):
    t0 = time.perf_counter()
    r1 = _iters("example1")
    r2 = _iters("example2")
    dt = time.perf_counter() - t0
    ok1 = r1.iter1 == 5 and 3 <= r1.iter2 <= 7
    ok2 = r2.iter1 == 5 and 2 <= r2.iter2 <= 6
    report("C7 iteration counts", ok1 and ok2 and dt < 60,
           f"example1 ({r1.iter1}, {r1.iter2:.1f}) target (5, [3,7]); "
           f"example2 ({r2.iter1}, {r2.iter2:.1f}) target (5, [2,6]); {dt:.1f}s")
    # informational: the cubic reading of the example1 source
    rc = _iters("example1_cubic")
    report("C7 (info) example1 with u - 3u^3", True, f"({rc.iter1}, {rc.iter2:.1f}), not a criterion")
    assert ok2, (r2.iter1, r2.iter2)
    assert ok1, (r1.iter1, r1.iter2)
    assert dt < 60


def test_c08_preconditioner_effectiveness(report):
    t0 = time.perf_counter()
    p = _iters("example1", N=257)
    u = _iters("example1", N=257, method="unpreconditioned")
    dt = time.perf_counter() - t0
    unpre_bad = u.iter2 > 100 or u.krylov_capped or not u.converged
    ok = p.iter2 <= 15 and unpre_bad and dt < 300
    report("C8 preconditioner effectiveness", ok,
           f"preconditioned ({p.iter1}, {p.iter2:.2f}) {p.wall_time_seconds:.2f}s; unpreconditioned "
           f"({u.iter1}, {u.iter2:.2f}, {u.status}) {u.wall_time_seconds:.2f}s")
    assert p.iter2 <= 15 and unpre_bad and dt < 300


def test_c09_gershgorin(report):
    t0 = time.perf_counter()
    worst, count = math.inf, 0
    for name in PROBLEMS:
        for alpha in ALPHAS:
            for lam in LAMS:
                for N in (64, 128):
                    spec = catalog(name, alpha, lam)
                    rep = gershgorin_check(Preconditioner(AllAtOnceSystem(spec, build_mesh(spec, N, N)), 8))
                    worst = min(worst, rep.min_margin)
                    count += 1
    dt = time.perf_counter() - t0
    ok = worst > 0 and dt < 5
    report("C9 Gershgorin margins", ok, f"{count} cases, smallest margin {worst:.3e}, {dt:.2f}s")
    assert worst > 0 and dt < 5


def test_c10_stability(report):
    t0 = time.perf_counter()
    spec = catalog("example2", 1.5, 1.0)
    mesh = build_mesh(spec, 64, 64)
    tauL = mesh.tau * spec.lipschitz_L
    delta = 1e-3
    bound = math.exp(spec.T * spec.lipschitz_L) * delta * (1 + 1e-6)
    shifted = spec.__class__(**{**spec.__dict__, "u0": lambda x: spec.u0(x) + delta,
                                "u0_boundary_tol": 1.0})
    growth = {}
    for label, run in (("L-IES", liess_run), ("NL-IES", nlies_step_run)):
        a: SchemeSolution = run(spec, mesh)
        b: SchemeSolution = run(shifted, mesh)
        assert np.max(np.abs(a.U[0] - b.U[0])) == pytest.approx(delta)
        growth[label] = float(np.max(np.abs(a.U - b.U)))
    dt = time.perf_counter() - t0
    ok = tauL < 1 and all(g <= bound for g in growth.values()) and dt < 30
    report("C10 stability", ok, f"tau*L={tauL:.3f}, max |E^j| " + ", ".join(f"{k} {v:.3e}" for k, v in growth.items())
           + f" <= {bound:.3e}, {dt:.2f}s")
    assert tauL < 1
    assert all(g <= bound for g in growth.values()), growth
    assert dt < 30
