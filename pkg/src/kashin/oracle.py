"""Geometric estimators of C_n(E) = sup ||x||_L2 / ||x||_L1 over a row span.

``section_oracle`` is exhaustive: the ratio is quasi-convex along lines, so
its sup over E is reached at a vector vanishing on a coordinate set Z
whose section {x in E : x_Z = 0} is a line.  Each section direction is
found from an exact rational left kernel of the integer frame (column
scaling by s does not change the kernel), never from minors.
``mc_ascent`` walks from random starts to such sections in floating point
and only ever claims a lower bound.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .certifier import BudgetExceeded, format_decimal, ratio_greater
from .exact import QuadValue
from .matrices import SplitSystem, apply_row, lp_norm

SECTION_BUDGET = 2_000_000


@dataclass
class DistortionReport:
    value: float
    maximizer: np.ndarray
    zero_set: tuple[int, ...]
    method: str
    lower_bound_only: bool
    side: str
    coefficients: np.ndarray = field(repr=False)
    value_str: str = ""
    exact: tuple[int, QuadValue] | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value_str or format_decimal(Decimal(self.value)),
            "maximizer": [float(v) for v in self.maximizer],
            "zero_set": list(self.zero_set),
            "method": self.method,
            "lower_bound_only": self.lower_bound_only,
            "side": self.side,
        }


def ratio_at(a, side: str, sys: SplitSystem) -> float:
    """||aM||_{L_2^{2k}} / ||aM||_{L_1^{2k}} for M = A or Abar."""
    x = apply_row(a, side, sys)
    l1 = lp_norm(x, 1)
    if l1 == 0:
        raise ValueError("aM = 0; the coefficient vector is zero or M is rank deficient")
    return lp_norm(x, 2) / l1


def _left_kernel(cols: list[list[int]], k: int) -> list[list[Fraction]]:
    """Basis of {a in Q^k : a . c = 0 for every column c}."""
    rows = [[Fraction(v) for v in c] for c in cols]
    pivots: list[int] = []
    r = 0
    for j in range(k):
        p = next((i for i in range(r, len(rows)) if rows[i][j] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        pv = rows[r][j]
        rows[r] = [v / pv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][j] != 0:
                f = rows[i][j]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(j)
        r += 1
        if r == len(rows):
            break
    basis = []
    for free in (j for j in range(k) if j not in pivots):
        v = [Fraction(0)] * k
        v[free] = Fraction(1)
        for i, pj in enumerate(pivots):
            v[pj] = -rows[i][free]
        basis.append(v)
    return basis


def _integral(v: list[Fraction]) -> list[int]:
    den = 1
    for x in v:
        den = den * x.denominator // math.gcd(den, x.denominator)
    ints = [int(x * den) for x in v]
    g = 0
    for x in ints:
        g = math.gcd(g, x)
    return [x // g for x in ints] if g else ints


def _section_exact(sys: SplitSystem, frame: np.ndarray, mask: np.ndarray, a: list[int]):
    """Exact (sum x_j^2, sum |x_j|) for x = a M, using x_j = (a . frame_j) * s^mask_j."""
    k = sys.k
    n = np.asarray(a, dtype=object) @ frame.astype(object)
    s = sys.scale_power(1)
    s2 = sys.scale_power(2).rat
    sum_sq = sum(int(v) * int(v) * (s2 if mask[j] else 1) for j, v in enumerate(n))
    plain = sum(abs(int(v)) for j, v in enumerate(n) if not mask[j])
    scaled = sum(abs(int(v)) for j, v in enumerate(n) if mask[j])
    return sum_sq, s * scaled + QuadValue(plain, 0, k), n


def _sections(sys: SplitSystem, frame, mask, zero: tuple[int, ...], seen: set):
    """Yield (zero set, integer coefficient vector) for each line section reachable from ``zero``."""
    k = sys.k
    key = frozenset(zero)
    if key in seen:
        return
    seen.add(key)
    basis = _left_kernel([[int(frame[i, j]) for i in range(k)] for j in zero], k)
    if len(basis) == 1:
        yield zero, _integral(basis[0])
    elif len(basis) > 1:
        for j in range(2 * k):
            if j not in key:
                yield from _sections(sys, frame, mask, tuple(sorted(zero + (j,))), seen)


def _oracle_block(sys: SplitSystem, side: str, start: int, stop: int):
    k = sys.k
    frame, mask = sys.integer_frame(side)
    seen: set = set()
    best = None
    for combo in itertools.islice(itertools.combinations(range(2 * k), k - 1), start, stop):
        for zero, a in _sections(sys, frame, mask, combo, seen):
            sum_sq, sum_abs, _ = _section_exact(sys, frame, mask, a)
            if not sum_abs:
                continue
            cand = (sum_sq, sum_abs)
            if best is None or ratio_greater(cand, best[0]) > 0:
                best = (cand, zero, a)
    return best


def section_oracle(side: str, sys: SplitSystem, max_subsets: int = SECTION_BUDGET,
                   workers: int = 1) -> DistortionReport:
    """Exhaustive max of the L2/L1 ratio over all line sections of the row span."""
    k = sys.k
    total = math.comb(2 * k, k - 1)
    if total > max_subsets:
        raise BudgetExceeded(f"section oracle needs {total} coordinate subsets at k={k} (budget {max_subsets})")
    step = max(1, -(-total // max(workers, 1)))
    jobs = [(sys, side, s, min(s + step, total)) for s in range(0, total, step)]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_oracle_job, jobs))
    else:
        results = [_oracle_block(*j) for j in jobs]
    best = None
    for r in results:
        if r is not None and (best is None or ratio_greater(r[0], best[0]) > 0):
            best = r
    if best is None:
        raise RuntimeError("no nonzero section found")
    (sum_sq, sum_abs), zero, a = best
    with localcontext() as ctx:
        ctx.prec = 60
        value = Decimal(2 * k * sum_sq).sqrt() / sum_abs.to_decimal(60)
    coeffs = np.array(a, dtype=np.float64)
    x = apply_row(coeffs, side, sys)
    x = x / lp_norm(x, 2)
    return DistortionReport(float(value), x, tuple(int(j) for j in np.nonzero(np.abs(x) < 1e-12)[0]),
                            "section-exhaustive", False, side, coeffs, format_decimal(value),
                            (sum_sq, sum_abs))


def _oracle_job(args):
    return _oracle_block(*args)


def _null_basis(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (columns) of {a : a m = 0}."""
    kdim = m.shape[0]
    if m.shape[1] == 0:
        return np.eye(kdim)
    u, s, _ = np.linalg.svd(m, full_matrices=True)
    rank = int((s > tol * max(1.0, s.max() if s.size else 1.0)).sum())
    return u[:, rank:]


def vertex_ascent(m: np.ndarray, numerator, a0: np.ndarray, rng: np.random.Generator,
                  max_steps: int | None = None):
    """Increase numerator(a) / ||a m||_1 by walking to coordinate sections.

    Along a line a + t d inside the current section the ratio is
    quasi-convex between consecutive zeros of a m, so the best breakpoint
    is at least as good as the current point; each move zeroes one more
    coordinate until the section is a line.  Returns the best point seen
    and its zero set.
    """
    kdim, n = m.shape
    score = lambda a: numerator(a) / np.abs(a @ m).sum()
    a = np.asarray(a0, dtype=np.float64)
    zero: list[int] = []
    best_a, best_v, best_z = a.copy(), score(a), ()
    steps = 0
    limit = max_steps if max_steps is not None else 4 * n
    while steps < limit:
        steps += 1
        basis = _null_basis(m[:, zero])
        if basis.shape[1] <= 1:
            break
        d = basis @ rng.standard_normal(basis.shape[1])
        d -= a * (d @ a) / (a @ a)
        if np.linalg.norm(d) < 1e-12:
            continue
        x0, y = a @ m, d @ m
        free = [j for j in range(n) if j not in zero and abs(y[j]) > 1e-12 * np.abs(y).max()]
        if not free:
            a = d
            continue
        ts = np.array([-x0[j] / y[j] for j in free])
        vals = [score(a + t * d) if np.abs((a + t * d) @ m).sum() > 1e-14 else -np.inf for t in ts]
        i = int(np.argmax(vals))
        if vals[i] < score(a) - 1e-15:
            # the ray toward infinity is better; move along it and retry
            a = d / np.linalg.norm(d)
        else:
            a = a + ts[i] * d
            zero.append(free[i])
            a = a / np.linalg.norm(a)
        v = score(a)
        if v > best_v:
            best_a, best_v, best_z = a.copy(), v, tuple(sorted(zero))
    return best_a, best_v, best_z


def mc_ascent(side: str, sys: SplitSystem, samples: int, seed: int) -> DistortionReport:
    """Best ratio over ``samples`` random unit starts followed by vertex ascent (lower bound)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    k = sys.k
    m = sys.float_matrix(side)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    num = lambda a: math.sqrt(2 * k) * np.linalg.norm(a @ m)
    best = None
    for _ in range(samples):
        a0 = rng.standard_normal(k)
        a0 /= np.linalg.norm(a0)
        a, v, z = vertex_ascent(m, num, a0, rng)
        if best is None or v > best[1]:
            best = (a, v, z)
    a, v, _ = best
    x = a @ m
    x = x / lp_norm(x, 2)
    value = ratio_at(a, side, sys)
    return DistortionReport(value, x, tuple(int(j) for j in np.nonzero(np.abs(x) < 1e-10)[0]),
                            "mc-ascent", True, side, a)


def subspace_residual(x: np.ndarray, side: str, sys: SplitSystem) -> float:
    """Distance from x to the row span of M, relative to ||x||_2."""
    m = sys.float_matrix(side)
    coef, *_ = np.linalg.lstsq(m.T, x, rcond=None)
    return float(np.linalg.norm(m.T @ coef - x) / max(np.linalg.norm(x), 1e-300))
