"""Spatial operator and the two implicit Euler time-stepping schemes.

Both schemes advance

    A u^j = u^{j-1} + tau * f(.)

with ``A = I - w1 (D+ G + D- G^T) + w2 (D+ - D-) B``, ``w1 = tau / h^alpha``
and ``w2 = alpha lambda^(alpha-1) tau / h``.  The linearized scheme (L-IES)
evaluates the source at the previous level; the nonlinear one (NL-IES)
at the new level, which needs a Newton iteration per step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .krylov import KrylovError, bicgstab
from .linalg import DENSE_CAP, BandedMatrix, LowerHessenbergToeplitz, _check_cap, banded_lu
from .problems import Mesh, ProblemSpec, check_hypotheses
from .weights import tempered_weights

log = logging.getLogger(__name__)

DENSE_SOLVE_MAX = DENSE_CAP


class SolverError(RuntimeError):
    """A per-step solve failed to converge."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class SpaceOperator:
    """Matrix-free ``A`` on the ``n = N - 1`` interior nodes.

    ``matvec`` accepts a single vector or a stack shaped ``(..., n)`` and
    costs ``O(n log n)`` per vector.
    """

    def __init__(self, spec: ProblemSpec, mesh: Mesh):
        self.spec = spec
        self.mesh = mesh
        self.n = mesh.n
        h, tau, alpha, lam = mesh.h, mesh.tau, spec.alpha, spec.lam
        self.w1 = tau / h**alpha
        # lambda^(alpha-1) -> 0 as lambda -> 0 since alpha > 1
        self.w2 = 0.0 if lam == 0.0 else alpha * lam ** (alpha - 1.0) * tau / h
        self.weights = tempered_weights(alpha, lam, h, self.n)
        self.G = LowerHessenbergToeplitz.from_weights(self.weights, self.n)
        xi = mesh.interior
        self.d_plus = np.broadcast_to(np.asarray(spec.d_plus(xi), dtype=float), (self.n,)).copy()
        self.d_minus = np.broadcast_to(np.asarray(spec.d_minus(xi), dtype=float), (self.n,)).copy()
        self._skew = self.w2 * (self.d_plus - self.d_minus)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x - self.w1 * (self.d_plus * self.G.matvec(x) + self.d_minus * self.G.matvec(x, transpose=True))
        if self.w2 != 0.0:
            bx = x.copy()
            bx[..., 1:] -= x[..., :-1]
            y += self._skew * bx
        return y

    __call__ = matvec

    def banded(self, ell: int) -> BandedMatrix:
        """Band truncation ``A_ell`` (weights ``g_0..g_ell`` kept), half-bandwidth ``ell - 1``."""
        if ell <= 2:
            raise ValueError(f"band parameter ell must exceed 2, got {ell}")
        if ell > self.n:
            raise ValueError(f"ell={ell} exceeds interior size {self.n}")
        n, g = self.n, self.weights.g
        bw = ell - 1
        bands = np.zeros((2 * bw + 1, n))
        Ab = BandedMatrix(n, bw, bw, bands)
        for d in range(-bw, bw + 1):
            if abs(d) >= n:
                continue
            rows = np.arange(n - d) if d >= 0 else np.arange(-d, n)
            gp = self.d_plus[rows] * g[1 - d] if 0 <= 1 - d <= ell else 0.0
            gm = self.d_minus[rows] * g[1 + d] if 0 <= 1 + d <= ell else 0.0
            # same operation order as to_dense, so ell = n reproduces A bit for bit
            eye = 1.0 if d == 0 else 0.0
            b = {0: 1.0, -1: -1.0}.get(d, 0.0)
            diag = (eye - self.w1 * (gp + gm)) + self._skew[rows] * b
            row = bw - d
            if d >= 0:
                bands[row, d:] = diag
            else:
                bands[row, : n + d] = diag
        return Ab

    def to_dense(self, cap: int | None = None) -> np.ndarray:
        _check_cap(self.n, cap)
        G = self.G.to_dense(cap=cap)
        B = np.eye(self.n) - np.eye(self.n, k=-1)
        return (
            np.eye(self.n)
            - self.w1 * (self.d_plus[:, None] * G + self.d_minus[:, None] * G.T)
            + self._skew[:, None] * B
        )

    @cached_property
    def dense(self) -> np.ndarray:
        return self.to_dense()

    @cached_property
    def dense_lu(self):
        return sla.lu_factor(self.dense)


def assemble_space_operator(spec: ProblemSpec, mesh: Mesh) -> SpaceOperator:
    return SpaceOperator(spec, mesh)


@dataclass
class SchemeSolution:
    """Grid values ``U[j, i] ~ u(x_i, t_j)``, boundary columns zero."""

    mesh: Mesh
    U: np.ndarray
    scheme: str
    stats: dict = field(default_factory=dict)

    @property
    def interior(self) -> np.ndarray:
        """Rows ``j = 1..M`` of the interior values, shape ``(M, N - 1)``."""
        return self.U[1:, 1:-1]

    @classmethod
    def from_interior(cls, mesh: Mesh, u0_interior, blocks, scheme: str, **stats) -> SchemeSolution:
        U = np.zeros((mesh.M + 1, mesh.N + 1))
        U[0, 1:-1] = u0_interior
        U[1:, 1:-1] = np.asarray(blocks).reshape(mesh.M, mesh.n)
        return cls(mesh, U, scheme, dict(stats))


def initial_interior(spec: ProblemSpec, mesh: Mesh) -> np.ndarray:
    return np.asarray(spec.u0(mesh.interior), dtype=float) * np.ones(mesh.n)


class _LinearSolver:
    """``A x = b`` for the fixed spatial operator: dense LU or preconditioned BiCGSTAB."""

    def __init__(self, op: SpaceOperator, method: str = "auto", tol: float = 1e-12, ell: int = 8):
        if method == "auto":
            method = "dense" if op.n <= DENSE_SOLVE_MAX else "krylov"
        if method not in ("dense", "krylov"):
            raise ValueError(f"unknown linear solver {method!r}")
        self.op, self.method, self.tol = op, method, tol
        self.krylov_iterations = []
        if method == "krylov":
            self.factor = banded_lu(op.banded(min(ell, op.n)))

    def __call__(self, b: np.ndarray) -> np.ndarray:
        if self.method == "dense":
            return sla.lu_solve(self.op.dense_lu, b)
        x, rep = bicgstab(self.op, b, M=self.factor.solve, tol=self.tol, maxit=2000)
        self.krylov_iterations.append(rep.iterations)
        if not rep.converged:
            raise KrylovError(f"L-IES step solve stopped: {rep.status}", rep)
        return x


def liess_run(spec: ProblemSpec, mesh: Mesh, linear_solver: str = "auto", tol: float = 1e-12) -> SchemeSolution:
    """Linearized implicit Euler: ``A u^j = u^{j-1} + tau f(u^{j-1}, x, t_{j-1})``."""
    check_hypotheses(spec, mesh)
    op = SpaceOperator(spec, mesh)
    solve = _LinearSolver(op, linear_solver, tol)
    xi, tau = mesh.interior, mesh.tau
    u = initial_interior(spec, mesh)
    u_init = u.copy()
    blocks = np.empty((mesh.M, mesh.n))
    for j in range(1, mesh.M + 1):
        rhs = u + tau * spec.f(u, xi, mesh.t[j - 1])
        u = solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite values at step {j}")
        blocks[j - 1] = u
    return SchemeSolution.from_interior(
        mesh, u_init, blocks, "L-IES", linear_solver=solve.method, krylov_iterations=solve.krylov_iterations
    )


def nlies_step_run(
    spec: ProblemSpec,
    mesh: Mesh,
    tol: float = 1e-12,
    maxit: int = 50,
    linear_solver: str = "auto",
    ell: int = 8,
) -> SchemeSolution:
    """Nonlinear implicit Euler solved step by step.

    Each level solves ``A u - tau f(u, x, t_j) = u^{j-1}`` by Newton's method
    from ``u^{j-1}``; a step ends when ``||z||_2 <= tol`` or the residual has
    dropped to rounding level relative to the right-hand side.
    """
    check_hypotheses(spec, mesh)
    op = SpaceOperator(spec, mesh)
    n, xi, tau = mesh.n, mesh.interior, mesh.tau
    if linear_solver == "auto":
        linear_solver = "dense" if n <= DENSE_SOLVE_MAX else "krylov"
    factor = banded_lu(op.banded(min(ell, n))) if linear_solver == "krylov" else None
    A = op.dense if linear_solver == "dense" else None

    u = initial_interior(spec, mesh)
    u_init = u.copy()
    blocks = np.empty((mesh.M, n))
    newton_counts = []
    for j in range(1, mesh.M + 1):
        t = mesh.t[j]
        rhs = u
        w = u.copy()
        scale = max(np.linalg.norm(rhs), 1.0)
        trace = []
        for it in range(1, maxit + 1):
            F = op.matvec(w) - tau * spec.f(w, xi, t) - rhs
            if not np.all(np.isfinite(F)):
                raise SolverError(f"non-finite residual at step {j}", trace)
            jd = tau * spec.jacobian_diag(w, xi, t)
            if A is not None:
                J = A.copy()
                J[np.diag_indices(n)] -= jd
                z = -sla.solve(J, F, check_finite=False)
            else:
                z, rep = bicgstab(lambda v: op.matvec(v) - jd * v, -F, M=factor.solve, tol=1e-13, maxit=2000)
                if not rep.converged:
                    raise KrylovError(f"NL-IES step {j}: inner solve {rep.status}", rep)
            w = w + z
            step = np.linalg.norm(z)
            trace.append(step)
            if step <= tol:
                break
            res = op.matvec(w) - tau * spec.f(w, xi, t) - rhs
            if np.linalg.norm(res) <= 1e-14 * scale:
                break
        else:
            raise SolverError(f"NL-IES Newton did not converge at step {j} (steps {trace[-3:]})", trace)
        newton_counts.append(it)
        u = w
        blocks[j - 1] = u
    return SchemeSolution.from_interior(mesh, u_init, blocks, "NL-IES", newton_iterations=newton_counts)
