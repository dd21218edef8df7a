"""Structured matrix kernels.

* :class:`LowerHessenbergToeplitz` -- the Grünwald matrix ``G`` with an
  ``O(n log n)`` matvec through circulant embedding.
* :class:`BandedMatrix` / :class:`BandedFactor` -- band storage and a
  partially pivoted banded LU (LAPACK ``gbtrf``/``gbtrs``).
* dense assembly and a plain-text matrix dump used as oracles and for
  external spectral analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.linalg import lapack

DENSE_CAP = 2048


class ResourceLimitError(RuntimeError):
    """A dense representation was requested above the configured size cap."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Exactly zero pivot met during a banded factorization."""


def _check_cap(n: int, cap: int | None) -> None:
    cap = DENSE_CAP if cap is None else cap
    if n > cap:
        raise ResourceLimitError(f"dense assembly of size {n} exceeds cap {cap}")


def embedding_size(n: int) -> int:
    """Smallest power of two that is >= 2n."""
    return 1 << max(1, (2 * n - 1).bit_length())


class LowerHessenbergToeplitz:
    """Toeplitz matrix with entry ``(i, j) = c[i - j + 1]`` for ``i >= j - 1``, else 0.

    ``first_col`` holds ``c[1..n]`` (the first column), ``super_diag`` is
    ``c[0]``, the single nonzero superdiagonal.  With ``c = g`` this is the
    matrix ``G`` built from the tempered weights.

    Products are taken by embedding the matrix (or its transpose) in a
    circulant of size :func:`embedding_size` and applying real FFTs along the
    last axis, so a stack of vectors shaped ``(..., n)`` is handled in one call.
    """

    def __init__(self, first_col, super_diag: float):
        first_col = np.asarray(first_col, dtype=float)
        if first_col.ndim != 1 or first_col.size < 1:
            raise ValueError("first_col must be a non-empty 1-d array")
        self.first_col = first_col
        self.super_diag = float(super_diag)
        self.n = first_col.size
        self.m = embedding_size(self.n)

    @classmethod
    def from_weights(cls, g, n: int) -> LowerHessenbergToeplitz:
        g = np.asarray(getattr(g, "g", g), dtype=float)
        if g.size < n + 1:
            raise ValueError(f"need weights g_0..g_{n}, got {g.size} values")
        return cls(g[1 : n + 1], g[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def _circulant_column(self, transpose: bool) -> np.ndarray:
        c = np.zeros(self.m)
        if self.n == 1:
            c[0] = self.first_col[0]
            return c
        if not transpose:
            c[: self.n] = self.first_col
            c[self.m - 1] = self.super_diag
        else:
            c[0] = self.first_col[0]
            c[1] = self.super_diag
            # first row of G^T is the first column of G
            c[self.m - self.n + 1 :] = self.first_col[:0:-1]
        return c

    @cached_property
    def _symbol(self) -> np.ndarray:
        return sfft.rfft(self._circulant_column(False))

    @cached_property
    def _symbol_t(self) -> np.ndarray:
        return sfft.rfft(self._circulant_column(True))

    def matvec(self, x, transpose: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected trailing dimension {self.n}, got {x.shape}")
        symbol = self._symbol_t if transpose else self._symbol
        y = sfft.irfft(sfft.rfft(x, n=self.m, axis=-1) * symbol, n=self.m, axis=-1)
        # entries n..m-1 belong to the padding and are discarded
        return y[..., : self.n]

    def rmatvec(self, x) -> np.ndarray:
        return self.matvec(x, transpose=True)

    def to_dense(self, cap: int | None = None) -> np.ndarray:
        _check_cap(self.n, cap)
        i, j = np.indices(self.shape)
        k = i - j + 1
        c = np.concatenate(([self.super_diag], self.first_col))
        out = np.zeros(self.shape)
        mask = k >= 0
        out[mask] = c[k[mask]]
        return out


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """Square band matrix in LAPACK/``solve_banded`` storage.

    ``bands[upper_bw + i - j, j] == A[i, j]`` for entries inside the band.
    """

    n: int
    lower_bw: int
    upper_bw: int
    bands: np.ndarray

    def __post_init__(self):
        expected = (self.lower_bw + self.upper_bw + 1, self.n)
        if self.bands.shape != expected:
            raise ValueError(f"band array has shape {self.bands.shape}, expected {expected}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @classmethod
    def from_dense(cls, A, lower_bw: int, upper_bw: int) -> BandedMatrix:
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        bands = np.zeros((lower_bw + upper_bw + 1, n))
        for d in range(-lower_bw, upper_bw + 1):
            if abs(d) >= n:
                continue
            diag = np.diagonal(A, offset=d)
            if d >= 0:
                bands[upper_bw - d, d:] = diag
            else:
                bands[upper_bw - d, : n + d] = diag
        return cls(n, lower_bw, upper_bw, bands)

    def diagonal(self, offset: int) -> np.ndarray:
        """The ``offset``-th diagonal (positive = above the main one)."""
        row = self.upper_bw - offset
        if offset >= 0:
            return self.bands[row, offset:]
        return self.bands[row, : self.n + offset]

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected trailing dimension {self.n}, got {x.shape}")
        y = np.zeros_like(x)
        for d in range(-self.lower_bw, self.upper_bw + 1):
            if abs(d) >= self.n:
                continue
            diag = self.diagonal(d)
            if d >= 0:
                y[..., : self.n - d] += diag * x[..., d:]
            else:
                y[..., -d:] += diag * x[..., : self.n + d]
        return y

    def transpose(self) -> BandedMatrix:
        bands = np.zeros((self.lower_bw + self.upper_bw + 1, self.n))
        out = BandedMatrix(self.n, self.upper_bw, self.lower_bw, bands)
        for d in range(-self.lower_bw, self.upper_bw + 1):
            if abs(d) >= self.n:
                continue
            src = self.diagonal(d)
            row = out.upper_bw + d
            if d >= 0:
                bands[row, : self.n - d] = src
            else:
                bands[row, -d:] = src
        return out

    @property
    def T(self) -> BandedMatrix:
        return self.transpose()

    def to_dense(self, cap: int | None = None) -> np.ndarray:
        _check_cap(self.n, cap)
        A = np.zeros(self.shape)
        for d in range(-self.lower_bw, self.upper_bw + 1):
            if abs(d) >= self.n:
                continue
            A += np.diag(self.diagonal(d), k=d)
        return A


def band_truncate(G: LowerHessenbergToeplitz, ell: int) -> BandedMatrix:
    """Keep only ``c_0..c_ell`` of ``G``: lower bandwidth ``ell - 1``, upper 1."""
    if ell <= 2:
        raise ValueError(f"band parameter ell must exceed 2, got {ell}")
    if ell > G.n:
        raise ValueError(f"ell={ell} exceeds matrix size {G.n}")
    lower = ell - 1
    bands = np.zeros((lower + 2, G.n))
    bands[0, 1:] = G.super_diag
    for d in range(lower + 1):
        # subdiagonal d carries c_{d+1}
        bands[1 + d, : G.n - d] = G.first_col[d]
    return BandedMatrix(G.n, lower, 1, bands)


@dataclass(frozen=True, eq=False)
class BandedFactor:
    """``P A = L U`` of a band matrix, stored in LAPACK ``gbtrf`` layout."""

    matrix: BandedMatrix
    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.n

    def solve(self, b) -> np.ndarray:
        return banded_solve(self, b)


def banded_lu(Ab: BandedMatrix) -> BandedFactor:
    kl, ku = Ab.lower_bw, Ab.upper_bw
    work = np.zeros((2 * kl + ku + 1, Ab.n), order="F")
    # gbtrf wants kl spare rows on top for fill-in
    work[kl:, :] = Ab.bands
    lu, piv, info = lapack.dgbtrf(work, kl, ku, overwrite_ab=1)
    if info > 0:
        raise SingularMatrixError(f"zero pivot in column {info - 1}")
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    return BandedFactor(Ab, lu, piv)


def banded_solve(F: BandedFactor, b) -> np.ndarray:
    """Solve ``A x = b`` with a stored factorization; ``b`` is ``(n,)`` or ``(n, k)``."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.n:
        raise ValueError(f"right-hand side has leading dimension {b.shape[0]}, expected {F.n}")
    rhs = b.reshape(F.n, -1)
    x, info = lapack.dgbtrs(F.lu, F.matrix.lower_bw, F.matrix.upper_bw, rhs, F.piv)
    if info != 0:
        raise ValueError(f"dgbtrs: illegal argument {-info}")
    return x.reshape(b.shape)


def dense_assemble(op, cap: int | None = None) -> np.ndarray:
    """Explicit dense matrix of any operator exposing ``to_dense``."""
    return op.to_dense(cap=cap)


def write_matrix(path, A) -> Path:
    """Write ``A`` as text: one row per line, 17 significant digits, space separated."""
    path = Path(path)
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=float)), fmt="%.16e", delimiter=" ")
    return path


def read_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, dtype=float))
