"""Exact integer and Z[sqrt(k)] arithmetic plus fraction-free minors.

Python ints already give unbounded integers (small values stay on the
interpreter's fast path).  The batched kernel uses int64 when a Hadamard
bound shows that no intermediate value can overflow and falls back to
numpy object arrays of Python ints otherwise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

__all__ = [
    "Ordering",
    "QuadValue",
    "quad_arith",
    "quad_abs_cmp",
    "compare_sqrt_quad",
    "sign_rational_quad",
    "bareiss_det",
    "maximal_minors",
    "batch_maximal_minors",
    "int64_safe",
]


class Ordering(enum.IntEnum):
    LT = -1
    EQ = 0
    GT = 1


def _sgn(x: int) -> int:
    return (x > 0) - (x < 0)


@dataclass(frozen=True, slots=True)
class QuadValue:
    """The number ``rat + irr * sqrt(k)`` with integer coefficients.

    Values with a perfect-square radicand are normalized to ``irr == 0``.
    """

    rat: int = 0
    irr: int = 0
    k: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"radicand must be positive, got {self.k}")
        if self.irr:
            r = math.isqrt(self.k)
            if r * r == self.k:
                object.__setattr__(self, "rat", self.rat + self.irr * r)
                object.__setattr__(self, "irr", 0)

    @classmethod
    def sqrt_power(cls, m: int, k: int) -> "QuadValue":
        """Return ``k**(m/2)``."""
        if m < 0:
            raise ValueError("negative power")
        if m % 2 == 0:
            return cls(k ** (m // 2), 0, k)
        return cls(0, k ** (m // 2), k)

    def _coerce(self, other) -> "QuadValue":
        if isinstance(other, QuadValue):
            if other.k != self.k:
                raise ValueError(f"radicand mismatch: {self.k} vs {other.k}")
            return other
        if isinstance(other, (int, np.integer)):
            return QuadValue(int(other), 0, self.k)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return QuadValue(self.rat + o.rat, self.irr + o.irr, self.k)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return QuadValue(self.rat - o.rat, self.irr - o.irr, self.k)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o - self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        a, b, c, d = self.rat, self.irr, o.rat, o.irr
        return QuadValue(a * c + self.k * b * d, a * d + b * c, self.k)

    __rmul__ = __mul__

    def __neg__(self) -> "QuadValue":
        return QuadValue(-self.rat, -self.irr, self.k)

    def __abs__(self) -> "QuadValue":
        return -self if self.sign() < 0 else self

    def conjugate(self) -> "QuadValue":
        return QuadValue(self.rat, -self.irr, self.k)

    def norm(self) -> int:
        """Field norm ``rat**2 - k*irr**2``."""
        return self.rat * self.rat - self.k * self.irr * self.irr

    def __floordiv__(self, other):
        """Exact division; raises ``ArithmeticError`` if the quotient is not in Z[sqrt(k)]."""
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero QuadValue")
        num = self * o.conjugate()
        qr, rr = divmod(num.rat, n)
        qi, ri = divmod(num.irr, n)
        if rr or ri:
            raise ArithmeticError(f"inexact division {self} / {o}")
        return QuadValue(qr, qi, self.k)

    def __rfloordiv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o // self

    def sign(self) -> int:
        a, b = self.rat, self.irr
        if b == 0:
            return _sgn(a)
        if a == 0:
            return _sgn(b)
        if (a > 0) == (b > 0):
            return _sgn(a)
        d = _sgn(a * a - self.k * b * b)
        return d if a > 0 else -d

    def __bool__(self) -> bool:
        return bool(self.rat or self.irr)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, np.integer)):
            return self.irr == 0 and self.rat == other
        if isinstance(other, QuadValue):
            return (self.rat, self.irr, self.k) == (other.rat, other.irr, other.k)
        return NotImplemented

    def __hash__(self) -> int:
        if self.irr == 0:
            return hash(self.rat)
        return hash((self.rat, self.irr, self.k))

    def __lt__(self, other):
        return (self - other).sign() < 0

    def __le__(self, other):
        return (self - other).sign() <= 0

    def __gt__(self, other):
        return (self - other).sign() > 0

    def __ge__(self, other):
        return (self - other).sign() >= 0

    def __float__(self) -> float:
        a, b = self.rat, self.irr
        if b == 0:
            return float(a)
        r = math.sqrt(self.k)
        if (a >= 0) == (b >= 0):
            return float(a) + float(b) * r
        # opposite signs: evaluate as norm / conjugate to avoid cancellation
        return self.norm() / (float(a) - float(b) * r)

    def to_decimal(self, prec: int = 60) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = prec + 10
            v = Decimal(self.rat) + Decimal(self.irr) * Decimal(self.k).sqrt()
            ctx.prec = prec
            return +v

    def __repr__(self) -> str:
        return f"QuadValue({self.rat}, {self.irr}, k={self.k})"

    def __str__(self) -> str:
        if self.irr == 0:
            return str(self.rat)
        op = "-" if self.irr < 0 else "+"
        return f"{self.rat} {op} {abs(self.irr)}*sqrt({self.k})"


def quad_arith(x: QuadValue, y: QuadValue, op: str) -> QuadValue:
    """Ring operation ``op`` in {"add", "sub", "mul"}."""
    if x.k != y.k:
        raise ValueError(f"radicand mismatch: {x.k} vs {y.k}")
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    raise ValueError(f"unknown op {op!r}")


def quad_abs_cmp(x: QuadValue, y: QuadValue) -> Ordering:
    """Compare ``|x|`` with ``|y|`` exactly."""
    if x.k != y.k:
        raise ValueError(f"radicand mismatch: {x.k} vs {y.k}")
    return Ordering((abs(x) - abs(y)).sign())


def sign_rational_quad(alpha: Fraction, beta: Fraction, k: int) -> int:
    """Sign of ``alpha + beta*sqrt(k)`` for rationals alpha, beta."""
    alpha, beta = Fraction(alpha), Fraction(beta)
    den = alpha.denominator * beta.denominator // math.gcd(alpha.denominator, beta.denominator)
    q = QuadValue(int(alpha * den), int(beta * den), k)
    return q.sign()


def compare_sqrt_quad(p: int, q: QuadValue) -> Ordering:
    """Compare ``sqrt(p)`` with ``q`` for a nonnegative integer p.

    Squaring is only applied once both sides are known to be nonnegative,
    and the comparison of ``p`` with ``q**2`` is then exact in Z[sqrt(k)].
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    s = q.sign()
    if s < 0:
        return Ordering.GT
    if s == 0:
        return Ordering.GT if p > 0 else Ordering.EQ
    return Ordering((QuadValue(p, 0, q.k) - q * q).sign())


def bareiss_det(m) -> int | QuadValue:
    """Determinant by fraction-free (Bareiss) elimination with row pivoting.

    Works for any exact integral domain whose elements support ``+ - *``
    and exact ``//``.  The empty matrix has determinant 1.
    """
    a = [list(row) for row in m]
    n = len(a)
    if n == 0:
        return 1
    if any(len(row) != n for row in a):
        raise ValueError("matrix must be square")
    sign = 1
    prev = 1
    for c in range(n - 1):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return a[0][0] * 0
        if p != c:
            a[c], a[p] = a[p], a[c]
            sign = -sign
        piv = a[c][c]
        rc = a[c]
        for r in range(c + 1, n):
            rr = a[r]
            f = rr[c]
            for j in range(c + 1, n):
                rr[j] = (piv * rr[j] - f * rc[j]) // prev
            rr[c] = 0
        prev = piv
    det = a[n - 1][n - 1]
    return det if sign > 0 else -det


def maximal_minors(m) -> list:
    """All k+1 maximal minors of a k x (k+1) matrix in one elimination.

    Entry ``j`` of the result is the determinant of ``m`` with column ``j``
    deleted, so ``sum_j (-1)**j * out[j] * m[:, j] == 0``.  A single
    fraction-free Gauss-Jordan pass reduces the pivot columns to ``d*I``;
    the remaining column then holds the Cramer numerators, which are the
    other minors up to a permutation sign.
    """
    t = [list(row) for row in m]
    k = len(t)
    if k == 0:
        return [1]
    n = len(t[0])
    if n != k + 1 or any(len(row) != n for row in t):
        raise ValueError("expected a k x (k+1) matrix")
    zero = t[0][0] - t[0][0]
    sign = 1
    prev = 1
    r = 0
    pivcols: list[int] = []
    free: list[int] = []
    for c in range(n):
        if r == k:
            free.append(c)
            continue
        p = next((i for i in range(r, k) if t[i][c] != 0), None)
        if p is None:
            free.append(c)
            if len(free) > 1:
                return [zero] * n
            continue
        if p != r:
            t[r], t[p] = t[p], t[r]
            sign = -sign
        piv = t[r][c]
        prow = t[r]
        for i in range(k):
            if i == r:
                continue
            row = t[i]
            f = row[c]
            for j in range(n):
                if j != c:
                    row[j] = (piv * row[j] - f * prow[j]) // prev
            row[c] = zero
        prev = piv
        pivcols.append(c)
        r += 1
    if len(free) != 1:
        return [zero] * n
    f = free[0]
    out = [zero] * n
    out[f] = prev if sign > 0 else -prev
    below = sum(1 for pc in pivcols if pc < f)
    for i, pc in enumerate(pivcols):
        q = below - (1 if pc < f else 0)
        v = t[i][f]
        if (i - q + (sign < 0)) % 2:
            v = -v
        out[pc] = v
    return out


def int64_safe(stack: np.ndarray) -> bool:
    """True when every intermediate of the batched elimination fits in int64.

    Intermediates are minors of the input, bounded by the product of the
    largest column norms (Hadamard); a product of two such bounds plus a
    sum must stay below 2**62.
    """
    if stack.size == 0:
        return True
    k = stack.shape[1]
    norms = np.sqrt((stack.astype(np.float64) ** 2).sum(axis=1)).max(axis=0)
    norms = np.sort(np.maximum(norms, 1.0))[::-1][:k]
    log_h = float(np.log2(norms).sum())
    return 2 * log_h + 1 < 62


def batch_maximal_minors(stack: np.ndarray) -> np.ndarray:
    """Vectorized :func:`maximal_minors` over a stack of shape (N, k, k+1).

    Exact for integer input: int64 when :func:`int64_safe` holds,
    Python-int object arrays otherwise.  Returns an (N, k+1) array.
    """
    stack = np.asarray(stack)
    if stack.ndim != 3 or stack.shape[2] != stack.shape[1] + 1:
        raise ValueError("expected shape (N, k, k+1)")
    nb, k, n = stack.shape
    dtype = np.int64 if stack.dtype != object and int64_safe(stack) else object
    t = stack.astype(dtype, copy=True)
    if k == 0:
        return np.ones((nb, 1), dtype=dtype)
    idx = np.arange(nb)
    rows = np.arange(k)
    r = np.zeros(nb, dtype=np.int64)
    prev = np.ones(nb, dtype=dtype)
    sign = np.ones(nb, dtype=np.int64)
    nfree = np.zeros(nb, dtype=np.int64)
    freecol = np.full(nb, -1, dtype=np.int64)
    pivcols = np.zeros((nb, k), dtype=np.int64)
    for c in range(n):
        col = t[:, :, c]
        cand = (col != 0) & (rows[None, :] >= r[:, None])
        has = cand.any(axis=1) & (r < k)
        nopiv = ~has
        freecol = np.where(nopiv & (nfree == 0), c, freecol)
        nfree = nfree + nopiv
        sel = idx[has]
        if sel.size == 0:
            continue
        p = np.argmax(cand[sel], axis=1)
        rs = r[sel]
        swap = p != rs
        if swap.any():
            s_sel = sel[swap]
            a_rows = t[s_sel, rs[swap]].copy()
            t[s_sel, rs[swap]] = t[s_sel, p[swap]]
            t[s_sel, p[swap]] = a_rows
            sign[s_sel] = -sign[s_sel]
        sub = t[sel]
        prow = sub[np.arange(sel.size), rs]
        piv = prow[:, c]
        fcol = sub[:, :, c]
        new = (piv[:, None, None] * sub - fcol[:, :, None] * prow[:, None, :]) // prev[sel][:, None, None]
        new[np.arange(sel.size), rs] = prow
        t[sel] = new
        prev[sel] = piv
        pivcols[sel, rs] = c
        r[sel] = rs + 1

    out = np.zeros((nb, n), dtype=dtype)
    ok = (nfree == 1) & (r == k)
    sel = idx[ok]
    if sel.size:
        f = freecol[sel]
        pc = pivcols[sel]
        sg = sign[sel]
        d = prev[sel]
        out[sel, f] = d * sg
        tf = t[sel, :, :][np.arange(sel.size), :, f]
        below = (pc < f[:, None]).sum(axis=1)
        q = below[:, None] - (pc < f[:, None])
        parity = (np.arange(k)[None, :] - q + (sg < 0)[:, None]) % 2
        vals = np.where(parity == 1, -tf, tf)
        out[sel[:, None], pc] = vals
    return out
