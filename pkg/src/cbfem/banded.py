"""Square banded matrices in LAPACK diagonal-ordered storage."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import SingularSystemError


class BandedMatrix:
    """Square matrix with equal lower/upper bandwidth ``bw``.

    Storage follows LAPACK ``gbsv``/``scipy.linalg.solve_banded``:
    ``ab[bw + i - j, j] == A[i, j]``.
    """

    __slots__ = ("ab", "bw")

    def __init__(self, ab, bw):
        ab = np.asarray(ab, dtype=float)
        if ab.ndim != 2 or ab.shape[0] != 2 * bw + 1:
            raise ValueError(f"storage shape {ab.shape} does not match bandwidth {bw}")
        self.ab = ab
        self.bw = int(bw)

    @classmethod
    def zeros(cls, n, bw):
        return cls(np.zeros((2 * bw + 1, n)), bw)

    @classmethod
    def identity(cls, n, bw=1):
        out = cls.zeros(n, bw)
        out.ab[bw, :] = 1.0
        return out

    @classmethod
    def from_dense(cls, a, bw):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        out = cls.zeros(n, bw)
        for d in range(-bw, bw + 1):
            # d = j - i
            if d >= 0:
                out.ab[bw - d, d:] = np.diagonal(a, d)
            else:
                out.ab[bw - d, : n + d] = np.diagonal(a, d)
        outside = a.copy()
        for d in range(-bw, bw + 1):
            idx = np.arange(max(0, -d), min(n, n - d))
            outside[idx, idx + d] = 0.0
        if np.any(outside):
            raise ValueError(f"matrix has entries outside bandwidth {bw}")
        return out

    @property
    def n(self):
        return self.ab.shape[1]

    @property
    def shape(self):
        return (self.n, self.n)

    def diagonal(self, d=0):
        """The ``d``-th diagonal (``d = j - i``)."""
        if d >= 0:
            return self.ab[self.bw - d, d:].copy()
        return self.ab[self.bw - d, : self.n + d].copy()

    def to_dense(self):
        n = self.n
        a = np.zeros((n, n))
        for d in range(-self.bw, self.bw + 1):
            idx = np.arange(max(0, -d), min(n, n - d))
            a[idx, idx + d] = self.diagonal(d)
        return a

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        n, bw, ab = self.n, self.bw, self.ab
        y = ab[bw] * x
        for d in range(1, bw + 1):
            if d >= n:
                break
            # super-diagonal: A[i, i+d] = ab[bw-d, i+d]
            y[:-d] += ab[bw - d, d:] * x[d:]
            # sub-diagonal: A[i+d, i] = ab[bw+d, i]
            y[d:] += ab[bw + d, :-d] * x[:-d]
        return y

    __matmul__ = matvec

    def scale_columns(self, d):
        """Return ``A @ diag(d)``."""
        return BandedMatrix(self.ab * np.asarray(d, dtype=float)[None, :], self.bw)

    def _widen(self, bw):
        if bw == self.bw:
            return self.ab
        ab = np.zeros((2 * bw + 1, self.n))
        ab[bw - self.bw : bw + self.bw + 1] = self.ab
        return ab

    def __add__(self, other):
        if not isinstance(other, BandedMatrix):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        bw = max(self.bw, other.bw)
        return BandedMatrix(self._widen(bw) + other._widen(bw), bw)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return BandedMatrix(self.ab * float(scalar), self.bw)

    __rmul__ = __mul__

    def __neg__(self):
        return BandedMatrix(-self.ab, self.bw)

    def solve(self, b, step=None, iteration=None):
        return solve_banded(self, b, step=step, iteration=iteration)

    def __repr__(self):
        return f"BandedMatrix(n={self.n}, bw={self.bw})"


def solve_banded(a: BandedMatrix, b, step=None, iteration=None):
    """Solve ``a @ x = b`` by banded LU with partial pivoting (LAPACK gbsv)."""
    b = np.asarray(b, dtype=float)
    try:
        x = scipy.linalg.solve_banded((a.bw, a.bw), a.ab, b, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"singular banded system: {exc}", step, iteration) from exc
    except ValueError as exc:
        raise SingularSystemError(f"non-finite banded system: {exc}", step, iteration) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("banded solve produced non-finite values", step, iteration)
    return x
