"""Tempered Grünwald-Letnikov weights.

The shifted Grünwald formula for a tempered fractional derivative of order
``alpha`` uses the coefficients

.. math::

    g_1 = \\tilde g_1 - e^{h\\lambda}(1 - e^{-h\\lambda})^\\alpha, \\qquad
    g_k = \\tilde g_k e^{-(k-1)h\\lambda} \\quad (k \\ne 1),

where :math:`\\tilde g_k = (-1)^k \\binom{\\alpha}{k}`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def _check_alpha(alpha: float) -> None:
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")


def untempered_weights(alpha: float, K: int) -> np.ndarray:
    """Return ``(-1)^k binom(alpha, k)`` for ``k = 0..K``.

    Uses the recurrence ``g_k = g_{k-1} (1 - (alpha + 1) / k)``, which stays
    accurate for large ``k`` where the binomial itself would overflow.
    """
    _check_alpha(alpha)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    factors = np.empty(K + 1)
    factors[0] = 1.0
    k = np.arange(1, K + 1, dtype=float)
    factors[1:] = 1.0 - (alpha + 1.0) / k
    return np.cumprod(factors)


@dataclass(frozen=True, eq=False)
class TemperedWeights:
    """Weights ``g_0..g_K`` for one ``(alpha, lam, h)`` triple."""

    alpha: float
    lam: float
    h: float
    g: np.ndarray

    @property
    def K(self) -> int:
        return len(self.g) - 1

    def __len__(self) -> int:
        return len(self.g)


def _tempering_defect(alpha: float, lam: float, h: float) -> float:
    # e^{h lam} (1 - e^{-h lam})^alpha, written to avoid cancellation for small h*lam
    x = h * lam
    # x can underflow to zero for subnormal lam; the defect vanishes in that limit
    if x == 0.0:
        return 0.0
    return math.exp(x + alpha * math.log(-math.expm1(-x)))


@lru_cache(maxsize=64)
def _tempered(alpha: float, lam: float, h: float, K: int) -> np.ndarray:
    gt = untempered_weights(alpha, max(K, 1))[: K + 1]
    k = np.arange(K + 1, dtype=float)
    g = gt * np.exp(-(k - 1.0) * h * lam)
    if K >= 1:
        g[1] = gt[1] - _tempering_defect(alpha, lam, h)
    g.setflags(write=False)
    return g


def tempered_weights(alpha: float, lam: float, h: float, K: int) -> TemperedWeights:
    """Build the tempered weights ``g_0..g_K``.

    Results are cached per ``(alpha, lam, h, K)``; the returned array is
    read-only.  ``K = 0`` is accepted and yields only ``g_0 = exp(h*lam)``.
    """
    _check_alpha(alpha)
    if lam < 0.0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if h <= 0.0:
        raise ValueError(f"h must be positive, got {h}")
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    g = _tempered(float(alpha), float(lam), float(h), int(K))
    return TemperedWeights(alpha=float(alpha), lam=float(lam), h=float(h), g=g)


@dataclass(frozen=True)
class Lemma31Report:
    """Sign and partial-sum properties of a weight sequence.

    ``unresolved`` counts partial sums whose magnitude is below the rounding
    floor of the stored weights (a few ulps of ``sum |g_k|``).  With tempering
    the partial sums decay to that level quickly; their sign there carries no
    information, so they are excluded from ``partial_sums_negative``.
    """

    g1_negative: bool
    others_positive: bool
    partial_sums_negative: bool
    partial_sums_shrink: bool
    unresolved: int = 0
    first_violation: int | None = None

    @property
    def ok(self) -> bool:
        return (
            self.g1_negative
            and self.others_positive
            and self.partial_sums_negative
            and self.partial_sums_shrink
        )


def check_lemma31(w: TemperedWeights | np.ndarray) -> Lemma31Report:
    """Check ``g_1 < 0``, ``g_k > 0`` (k != 1) and ``sum_{k<=j} g_k < 0`` (j >= 1).

    Entries flushed to zero by underflow of the tempering factor are skipped
    in the positivity test, as are the partial sums from that point on.
    """
    g = np.asarray(w.g if isinstance(w, TemperedWeights) else w, dtype=float)
    if len(g) < 2:
        raise ValueError("need at least g_0 and g_1")

    g1_negative = bool(g[1] < 0.0)
    rest = np.delete(g, 1)
    live = rest != 0.0
    others_positive = bool(np.all(rest[live] > 0.0))

    # everything past the first underflowed entry is zero or meaningless
    zero = np.flatnonzero(g[2:] == 0.0)
    stop = len(g) if zero.size == 0 else int(zero[0]) + 2

    # extended-precision prefix sums, so the only uncertainty left is the
    # few-ulp rounding already present in each stored weight
    gl = g[:stop].astype(np.longdouble)
    S = np.cumsum(gl)[1:]
    floor = 4.0 * np.finfo(float).eps * np.cumsum(np.abs(gl))[1:]
    resolved = np.abs(S) > floor
    partial_sums_negative = bool(np.all(S[resolved] < 0.0))
    mags = np.abs(S[resolved])
    shrink = bool(np.all(np.diff(mags) <= 0.0))

    first = None
    if not g1_negative:
        first = 1
    elif not others_positive:
        first = int(np.flatnonzero((g != 0.0) & (g <= 0.0) & (np.arange(len(g)) != 1))[0])
    elif not partial_sums_negative:
        first = int(np.flatnonzero(resolved & (S >= 0.0))[0]) + 1

    return Lemma31Report(
        g1_negative=g1_negative,
        others_positive=others_positive,
        partial_sums_negative=partial_sums_negative,
        partial_sums_shrink=shrink,
        unresolved=int(np.count_nonzero(~resolved)),
        first_violation=first,
    )
