"""All-at-once space-time system and its preconditioned Newton solver.

Stacking ``u = [u^1; ...; u^M]`` (time-major), the nonlinear implicit Euler
scheme becomes one block system

    F(u) = calA u - tau f(u) - v = 0,   calA = blktridiag(-I, A, 0),

with ``v = [u^0; 0; ...; 0]``.  Newton's method is started from a bilinear
interpolation of the linearized scheme on a coarse mesh and each Jacobian
system is solved by BiCGSTAB, right-preconditioned with
``P_ell = blktridiag(-I, A_ell, 0)`` where ``A_ell`` is the band truncation of
``A``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import RegularGridInterpolator

from .krylov import bicgstab
from .linalg import _check_cap, banded_lu
from .problems import Mesh, ProblemSpec, build_mesh, check_hypotheses
from .schemes import SchemeSolution, SpaceOperator, initial_interior, liess_run

log = logging.getLogger(__name__)

METHODS = ("preconditioned", "unpreconditioned", "direct")


class AllAtOnceSystem:
    """Residual, Jacobian action and dense assembly of the block system."""

    def __init__(self, spec: ProblemSpec, mesh: Mesh, op: SpaceOperator | None = None):
        self.spec = spec
        self.mesh = mesh
        self.op = op if op is not None else SpaceOperator(spec, mesh)
        self.M, self.n = mesh.M, mesh.n
        self.u0 = initial_interior(spec, mesh)
        self.xi = mesh.interior
        self.tau = mesh.tau

    @property
    def size(self) -> int:
        return self.M * self.n

    def _blocks(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.size != self.size:
            raise ValueError(f"stacked vector has length {u.size}, expected {self.size}")
        return u.reshape(self.M, self.n)

    @property
    def v(self) -> np.ndarray:
        v = np.zeros((self.M, self.n))
        v[0] = self.u0
        return v.ravel()

    def apply_A(self, u) -> np.ndarray:
        """``calA u``: ``A u^j - u^{j-1}`` block by block (``u^0`` term excluded)."""
        U = self._blocks(u)
        Y = self.op.matvec(U)
        Y[1:] -= U[:-1]
        return Y.ravel()

    def source(self, u) -> np.ndarray:
        U = self._blocks(u)
        out = np.empty_like(U)
        for j in range(self.M):
            out[j] = self.spec.f(U[j], self.xi, self.mesh.t[j + 1])
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("source term produced non-finite values")
        return out.ravel()

    def source_derivative(self, u) -> np.ndarray:
        U = self._blocks(u)
        out = np.empty_like(U)
        for j in range(self.M):
            out[j] = self.spec.jacobian_diag(U[j], self.xi, self.mesh.t[j + 1])
        return out.ravel()

    def residual(self, u) -> np.ndarray:
        """``F(u) = calA u - tau f(u) - v``."""
        return self.apply_A(u) - self.tau * self.source(u) - self.v

    def jacobian(self, u) -> "Jacobian":
        return Jacobian(self, self.tau * self.source_derivative(u))

    def jacobian_apply(self, u, x) -> np.ndarray:
        return self.jacobian(u).matvec(x)

    def to_dense(self, cap: int | None = None) -> np.ndarray:
        _check_cap(self.size, cap)
        A = self.op.to_dense()
        return np.kron(np.eye(self.M), A) - np.kron(np.eye(self.M, k=-1), np.eye(self.n))


class Jacobian:
    """``calA - diag(tau df/du)`` at a fixed linearization point."""

    def __init__(self, system: AllAtOnceSystem, shift: np.ndarray):
        self.system = system
        self.shift = shift

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.system.apply_A(x) - self.shift * x

    __call__ = matvec

    def to_dense(self, cap: int | None = None) -> np.ndarray:
        J = self.system.to_dense(cap)
        J[np.diag_indices_from(J)] -= self.shift
        return J

    def block_solve(self, rhs) -> np.ndarray:
        """Exact solve by block forward substitution with a dense LU per block."""
        sysm = self.system
        _check_cap(sysm.n, None)
        A = sysm.op.dense
        R = sysm._blocks(rhs)
        S = self.shift.reshape(sysm.M, sysm.n)
        Z = np.empty_like(R)
        prev = np.zeros(sysm.n)
        for j in range(sysm.M):
            Aj = A.copy()
            Aj[np.diag_indices(sysm.n)] -= S[j]
            prev = sla.solve(Aj, R[j] + prev, check_finite=False)
            Z[j] = prev
        return Z.ravel()


class Preconditioner:
    """``P_ell = blktridiag(-I, A_ell, 0)`` with one shared banded LU of ``A_ell``."""

    def __init__(self, system: AllAtOnceSystem, ell: int = 8):
        if ell <= 2:
            raise ValueError(f"band parameter ell must exceed 2, got {ell}")
        self.system = system
        self.ell = min(ell, system.n)
        self.A_ell = system.op.banded(self.ell)
        self.factor = banded_lu(self.A_ell)

    def apply(self, r) -> np.ndarray:
        """Solve ``P_ell z = r``: ``A_ell z^1 = r^1``, ``A_ell z^j = r^j + z^{j-1}``."""
        R = self.system._blocks(r)
        Z = np.empty_like(R)
        prev = np.zeros(self.system.n)
        # sequential in j by construction
        for j in range(self.system.M):
            prev = self.factor.solve(R[j] + prev)
            Z[j] = prev
        return Z.ravel()

    __call__ = apply

    def matvec(self, z) -> np.ndarray:
        Z = self.system._blocks(z)
        Y = self.A_ell.matvec(Z)
        Y[1:] -= Z[:-1]
        return Y.ravel()

    def to_dense(self, cap: int | None = None) -> np.ndarray:
        M, n = self.system.M, self.system.n
        _check_cap(M * n, cap)
        return np.kron(np.eye(M), self.A_ell.to_dense()) - np.kron(np.eye(M, k=-1), np.eye(n))


def precond_build(system: AllAtOnceSystem, ell: int = 8) -> Preconditioner:
    return Preconditioner(system, ell)


def precond_apply(P: Preconditioner, r) -> np.ndarray:
    return P.apply(r)


@dataclass(frozen=True)
class GershgorinReport:
    """Row margins of the Gershgorin bound on the symmetric part of ``A_ell``.

    ``margins[i] = center_i - radius_i - 1``; all positive means every
    eigenvalue of ``(A_ell + A_ell^T) / 2`` exceeds 1.  ``radius`` follows the
    row-local form (coefficients frozen at ``x_i``).  ``exact_margins`` uses
    the true off-diagonal row sums of the symmetric part and is reported for
    information only.
    """

    center: np.ndarray
    radius: np.ndarray
    margins: np.ndarray
    exact_margins: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.margins > 0.0))

    @property
    def min_margin(self) -> float:
        return float(self.margins.min())


def gershgorin_check(P: Preconditioner) -> GershgorinReport:
    op = P.system.op
    g = op.weights.g
    ell = P.ell
    s = op.d_plus + op.d_minus
    delta = op.d_plus - op.d_minus
    w1, w2 = op.w1, op.w2
    center = 1.0 - w1 * s * g[1] + w2 * delta
    radius = np.abs(-w1 * s * (g[0] + g[2]) - w2 * delta) + w1 * s * np.sum(g[3 : ell + 1])
    margins = center - radius - 1.0

    # full Gershgorin radii of the symmetric part, straight from the bands
    Ab = P.A_ell
    n = Ab.n
    exact_radius = np.zeros(n)
    for d in range(1, Ab.upper_bw + 1):
        if d >= n:
            break
        sym = 0.5 * (Ab.diagonal(d) + Ab.diagonal(-d))
        exact_radius[: n - d] += np.abs(sym)
        exact_radius[d:] += np.abs(sym)
    exact_margins = Ab.diagonal(0) - exact_radius - 1.0
    return GershgorinReport(center, radius, margins, exact_margins)


def coarse_initial_guess(
    spec: ProblemSpec, fine: Mesh, coarse_N: int = 16, coarse_M: int = 16
) -> np.ndarray:
    """Bilinear interpolation of the coarse L-IES solution onto the fine interior nodes.

    Returns the stacked vector ``[u^1; ...; u^M]`` on ``fine``.
    """
    coarse = build_mesh(spec, coarse_N, coarse_M)
    sol = liess_run(spec, coarse)
    # sol.U already holds the zero boundary columns and the initial row
    interp = RegularGridInterpolator((coarse.t, coarse.x), sol.U, method="linear")
    T, X = np.meshgrid(fine.t[1:], fine.interior, indexing="ij")
    pts = np.column_stack([T.ravel(), X.ravel()])
    # clip rounding excursions past the end points
    pts[:, 0] = np.clip(pts[:, 0], coarse.t[0], coarse.t[-1])
    pts[:, 1] = np.clip(pts[:, 1], coarse.x[0], coarse.x[-1])
    return interp(pts)


@dataclass(frozen=True)
class NewtonConfig:
    maxit: int = 100
    tol_out: float = 1e-12
    krylov_tol: float = 1e-6
    krylov_maxit: int = 1000
    coarse_N: int = 16
    coarse_M: int = 16
    ell: int = 8
    method: str = "preconditioned"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("maxit", "krylov_maxit", "coarse_N", "coarse_M"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tol_out <= 0 or self.krylov_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.ell <= 2:
            raise ValueError(f"ell must exceed 2, got {self.ell}")


@dataclass
class SolveReport:
    """Iteration statistics of one all-at-once solve.

    ``iter2`` is the mean inner Krylov count per outer step.  ``status`` is
    ``"converged"``, ``"maxit"`` (outer cap hit) or ``"krylov_cap"`` when
    some inner solve reached its cap without meeting the tolerance.
    """

    iter1: int = 0
    iter2: float = 0.0
    wall_time_seconds: float = 0.0
    converged: bool = False
    krylov_capped: bool = False
    inner_iterations: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    method: str = "preconditioned"

    @property
    def status(self) -> str:
        if self.krylov_capped:
            return "krylov_cap"
        return "converged" if self.converged else "maxit"


def newton_solve(
    system: AllAtOnceSystem, config: NewtonConfig | None = None, u_init=None
) -> tuple[SchemeSolution, SolveReport]:
    """Newton's method on ``F(u) = 0`` with PBiCGSTAB inner solves.

    Each outer step solves ``J z = -F(u)`` from a zero Krylov guess to
    ``||r|| <= krylov_tol ||r_0||`` and updates ``u += z``; iteration stops
    once ``||z||_2 <= tol_out``.  The wall time covers the coarse-grid start
    and the preconditioner factorization.
    """
    cfg = config or NewtonConfig()
    start = time.perf_counter()
    check_hypotheses(system.spec, system.mesh)
    report = SolveReport(method=cfg.method)

    if u_init is None:
        u = coarse_initial_guess(system.spec, system.mesh, cfg.coarse_N, cfg.coarse_M)
    else:
        u = np.array(u_init, dtype=float)
    P = Preconditioner(system, cfg.ell) if cfg.method == "preconditioned" else None

    for k in range(1, cfg.maxit + 1):
        F = system.residual(u)
        report.residual_norms.append(float(np.linalg.norm(F)))
        J = system.jacobian(u)
        if cfg.method == "direct":
            z = J.block_solve(-F)
            report.inner_iterations.append(0)
        else:
            z, inner = bicgstab(J, -F, M=P, tol=cfg.krylov_tol, maxit=cfg.krylov_maxit)
            report.inner_iterations.append(inner.iterations)
            if not inner.converged:
                report.krylov_capped = True
                log.info("outer step %d: inner solve stopped (%s)", k, inner.status)
        u = u + z
        step = float(np.linalg.norm(z))
        report.step_norms.append(step)
        report.iter1 = k
        log.debug("newton %d: |F|=%.3e |z|=%.3e inner=%s", k, report.residual_norms[-1], step,
                  report.inner_iterations[-1])
        if step <= cfg.tol_out:
            report.converged = True
            break

    report.iter2 = float(np.mean(report.inner_iterations)) if report.inner_iterations else 0.0
    report.wall_time_seconds = time.perf_counter() - start
    sol = SchemeSolution.from_interior(
        system.mesh, system.u0, u, "NL-IES", method=cfg.method, iter1=report.iter1, iter2=report.iter2
    )
    return sol, report
