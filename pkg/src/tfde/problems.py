"""Problem definitions, space-time meshes and the built-in problem catalog."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Coefficient = Callable[[np.ndarray], np.ndarray]
Source = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class HypothesisWarning(UserWarning):
    """A sufficient condition of the stability theory fails on this mesh."""


@dataclass(frozen=True)
class ProblemSpec:
    r"""Nonlinear tempered fractional diffusion problem on ``[a, b] x (0, T]``.

    .. math::

        u_t = d_+(x)\, {}_aD_x^{\alpha,\lambda} u + d_-(x)\, {}_xD_b^{\alpha,\lambda} u
              + f(u, x, t),

    with homogeneous Dirichlet data and ``u(x, 0) = u0(x)``.
    ``f`` and ``df_du`` take ``(u, x, t)`` with ``u`` and ``x`` arrays of the
    same shape and ``t`` a scalar.
    """

    name: str
    a: float
    b: float
    T: float
    alpha: float
    lam: float
    d_plus: Coefficient
    d_minus: Coefficient
    f: Source
    u0: Coefficient
    df_du: Optional[Source] = None
    lipschitz_L: float = 0.0
    u0_boundary_tol: float = 1e-12

    def __post_init__(self) -> None:
        if not self.a < self.b:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.lipschitz_L < 0:
            raise ValueError("Lipschitz constant must be >= 0")
        ends = np.abs(self.u0(np.array([self.a, self.b], dtype=float)))
        if np.any(ends > self.u0_boundary_tol):
            raise ValueError(f"u0 must vanish at the boundary, got {ends}")

    def with_params(self, alpha: float | None = None, lam: float | None = None) -> ProblemSpec:
        """Copy with a different ``alpha`` and/or ``lam``."""
        kw = {}
        if alpha is not None:
            kw["alpha"] = float(alpha)
        if lam is not None:
            kw["lam"] = float(lam)
        return _replace(self, **kw)

    def jacobian_diag(self, u: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
        """``df/du`` at ``(u, x, t)``; central differences if no derivative is given."""
        if self.df_du is not None:
            return np.asarray(self.df_du(u, x, t), dtype=float)
        delta = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(u))
        return (self.f(u + delta, x, t) - self.f(u - delta, x, t)) / (2.0 * delta)


def _replace(spec: ProblemSpec, **kw) -> ProblemSpec:
    return dataclasses.replace(spec, **kw)


@dataclass(frozen=True)
class Mesh:
    """Uniform space-time mesh: ``x_i = a + i h`` (i = 0..N), ``t_j = j tau`` (j = 0..M)."""

    a: float
    b: float
    T: float
    N: int
    M: int
    x: np.ndarray = field(repr=False, compare=False)
    t: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def tau(self) -> float:
        return self.T / self.M

    @property
    def n(self) -> int:
        """Number of interior nodes."""
        return self.N - 1

    @property
    def interior(self) -> np.ndarray:
        return self.x[1:-1]


def build_mesh(spec: ProblemSpec, N: int, M: int) -> Mesh:
    if N < 2 or M < 1:
        raise ValueError(f"need N >= 2 and M >= 1, got N={N}, M={M}")
    x = spec.a + (spec.b - spec.a) * np.arange(N + 1) / N
    x[-1] = spec.b
    t = spec.T * np.arange(M + 1) / M
    t[-1] = spec.T
    x.setflags(write=False)
    t.setflags(write=False)
    return Mesh(a=spec.a, b=spec.b, T=spec.T, N=int(N), M=int(M), x=x, t=t)


def check_hypotheses(spec: ProblemSpec, mesh: Mesh) -> dict:
    """Check the coefficient assumptions on the mesh before a solve.

    Non-positive diffusion coefficients are an error.  ``d_+ < d_-`` at some
    node and ``tau * L >= 1`` only warn: the schemes remain well defined, but
    the stability bounds no longer cover the run (``example1`` itself has
    ``d_+ < d_-`` for ``x > log(1.5) / 2``).
    """
    xi = mesh.interior
    dp = np.asarray(spec.d_plus(xi), dtype=float) * np.ones_like(xi)
    dm = np.asarray(spec.d_minus(xi), dtype=float) * np.ones_like(xi)
    if np.any(dm <= 0.0) or np.any(dp <= 0.0):
        i = int(np.flatnonzero((dp <= 0.0) | (dm <= 0.0))[0])
        raise ValueError(f"diffusion coefficients must be positive; x={xi[i]:.6g}")
    ordered = dp >= dm
    if not np.all(ordered):
        bad = xi[~ordered]
        warnings.warn(
            f"d_plus < d_minus on {bad.size} of {xi.size} nodes "
            f"(x in [{bad.min():.4g}, {bad.max():.4g}])",
            HypothesisWarning,
            stacklevel=2,
        )
    tau_L = mesh.tau * spec.lipschitz_L
    if tau_L >= 1.0:
        warnings.warn(
            f"tau*L = {tau_L:.3g} >= 1; stability bound not guaranteed",
            HypothesisWarning,
            stacklevel=2,
        )
    return {"d_ordered": bool(np.all(ordered)), "tau_L": tau_L}


# ---- catalog ---------------------------------------------------------------


def _sech(x):
    return 1.0 / np.cosh(x)


def _example1(alpha: float, lam: float) -> ProblemSpec:
    return ProblemSpec(
        name="example1",
        a=-1.0,
        b=1.0,
        T=1.0,
        alpha=alpha,
        lam=lam,
        d_plus=lambda x: 1.5 * np.exp(-x),
        d_minus=lambda x: np.exp(x),
        # printed as u - 3u
        f=lambda u, x, t: u - 3.0 * u,
        df_du=lambda u, x, t: np.full_like(np.asarray(u, dtype=float), -2.0),
        u0=lambda x: (np.cos(np.pi * x) - 1.0) * np.sin(np.pi * x),
        lipschitz_L=2.0,
    )


def _example1_cubic(alpha: float, lam: float) -> ProblemSpec:
    base = _example1(alpha, lam)
    return _replace(
        base,
        name="example1_cubic",
        f=lambda u, x, t: u - 3.0 * u**3,
        df_du=lambda u, x, t: 1.0 - 9.0 * u**2,
        # |1 - 9u^2| with |u| <= max|u0| ~ 1.3
        lipschitz_L=15.0,
    )


def _example2(alpha: float, lam: float) -> ProblemSpec:
    def d_plus(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.0, 1.5 * np.exp(-x), 2.0 * _sech(x))

    def d_minus(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.0, np.exp(x), 0.1 + _sech(-x))

    def u0(x):
        x = np.asarray(x, dtype=float)
        # 4 e^{10x} / (e^{10x} + 1)^2 == sech^2(5x)
        return _sech(5.0 * x) ** 2

    return ProblemSpec(
        name="example2",
        a=-1.0,
        b=1.0,
        T=1.0,
        alpha=alpha,
        lam=lam,
        d_plus=d_plus,
        d_minus=d_minus,
        f=lambda u, x, t: -u * (1.0 - u),
        df_du=lambda u, x, t: -1.0 + 2.0 * u,
        u0=u0,
        lipschitz_L=3.0,
        # sech^2(5) ~ 1.8e-4 at both ends; the Dirichlet data overrides it
        u0_boundary_tol=1e-3,
    )


CATALOG: dict[str, Callable[[float, float], ProblemSpec]] = {
    "example1": _example1,
    "example1_cubic": _example1_cubic,
    "example2": _example2,
}


def catalog(name: str, alpha: float = 1.5, lam: float = 0.0) -> ProblemSpec:
    """Look up a built-in problem by name."""
    try:
        make = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}") from None
    return make(float(alpha), float(lam))


def zero_source(spec: ProblemSpec) -> ProblemSpec:
    """Same problem with ``f = 0``."""
    return _replace(
        spec,
        name=spec.name + "_nosource",
        f=lambda u, x, t: np.zeros_like(np.asarray(u, dtype=float)),
        df_du=lambda u, x, t: np.zeros_like(np.asarray(u, dtype=float)),
        lipschitz_L=0.0,
    )
