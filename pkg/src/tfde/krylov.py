"""Right-preconditioned BiCGSTAB."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Operator = Callable[[np.ndarray], np.ndarray]

_TINY = 1e-300


class KrylovError(RuntimeError):
    """Raised when a caller demands convergence and the iteration did not deliver it."""

    def __init__(self, message: str, report: "KrylovReport"):
        super().__init__(message)
        self.report = report


@dataclass
class KrylovReport:
    """Outcome of one BiCGSTAB solve.

    ``iterations`` counts half steps as 0.5, so an exit after the first
    half of a sweep (the ``s`` residual already small enough) gives ``k - 0.5``.
    ``residuals`` holds ``||r_k|| / ||r_0||`` after every half step, starting with 1.
    """

    iterations: float = 0.0
    converged: bool = False
    breakdown: bool = False
    residuals: list = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.converged:
            return "converged"
        return "breakdown" if self.breakdown else "maxit"


def bicgstab(
    A: Operator,
    b: np.ndarray,
    M: Optional[Operator] = None,
    tol: float = 1e-6,
    maxit: int = 1000,
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, KrylovReport]:
    """Solve ``A x = b`` by BiCGSTAB with right preconditioning.

    Parameters
    ----------
    A : callable
        ``x -> A x``.
    b : array
        Right-hand side.
    M : callable, optional
        Applies the inverse preconditioner, ``r -> P^{-1} r``.  The iteration
        works on ``A P^{-1} y = b`` and returns ``x = P^{-1} y``, so the
        monitored residual is the residual of the original system.
    tol : float
        Stop once ``||b - A x|| <= tol * ||b - A x0||``.
    maxit : int
        Cap on full iterations.
    x0 : array, optional
        Starting vector, zero by default.

    Returns
    -------
    x, report
    """
    b = np.asarray(b, dtype=float)
    precond = M if M is not None else (lambda r: r)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x) if x0 is not None else b.copy()

    report = KrylovReport()
    r0_norm = np.linalg.norm(r)
    report.residuals.append(1.0)
    if r0_norm == 0.0:
        report.converged = True
        return x, report

    r_hat = r.copy()
    rho_prev = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)

    for k in range(1, maxit + 1):
        rho = float(r_hat @ r)
        if abs(rho) < _TINY:
            report.breakdown = True
            report.iterations = k - 1
            break
        if k == 1:
            p = r.copy()
        else:
            beta = (rho / rho_prev) * (alpha / omega)
            p = r + beta * (p - omega * v)
        p_hat = precond(p)
        v = A(p_hat)
        denom = float(r_hat @ v)
        if abs(denom) < _TINY:
            report.breakdown = True
            report.iterations = k - 1
            break
        alpha = rho / denom
        s = r - alpha * v
        rel = np.linalg.norm(s) / r0_norm
        report.residuals.append(rel)
        if rel <= tol:
            x += alpha * p_hat
            report.iterations = k - 0.5
            report.converged = True
            return x, report

        s_hat = precond(s)
        t = A(s_hat)
        tt = float(t @ t)
        if tt < _TINY:
            # t == 0 means s is already in the null space of A P^{-1}; keep the half step
            x += alpha * p_hat
            report.breakdown = True
            report.iterations = k - 0.5
            break
        omega = float(t @ s) / tt
        x += alpha * p_hat + omega * s_hat
        r = s - omega * t
        rel = np.linalg.norm(r) / r0_norm
        report.residuals.append(rel)
        if rel <= tol:
            report.iterations = k
            report.converged = True
            return x, report
        if abs(omega) < _TINY:
            report.breakdown = True
            report.iterations = k
            break
        rho_prev = rho
    else:
        report.iterations = maxit

    return x, report
