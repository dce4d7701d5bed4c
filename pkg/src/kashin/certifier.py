"""Exact splitting constants from determinants.

Two routes compute max{C_2k(E), C_2k(E^perp)} for E = rowspan[sI, B]:

* ``criterion_value`` enumerates the (l+1) x l submatrices D of B and B^T
  and the quantities Delta_1, Delta_2 built from the minors of D.
* ``anderson_constant`` enumerates the (k-1)-column subsets of the
  k x 2k matrix and uses its k+1 complementary maximal minors.

Every candidate is kept as an exact pair (sum of squares, sum of absolute
values) with the sum of absolute values in Z[sqrt(k)]; the constant is
``sqrt(2k * sum_sq) / sum_abs`` and all comparisons are exact.
"""
from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .exact import QuadValue, bareiss_det, batch_maximal_minors, maximal_minors, sign_rational_quad
from .matrices import SignMatrix, SplitSystem

DELTA_BUDGET = 500_000
ANDERSON_BUDGET = 6_000_000
CHUNK = 8192
DIGITS = 30


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SubmatrixSelector:
    """Row set, column set (0-based, sorted) and the matrix they index.

    ``target`` is ``B`` or ``Bstar`` for Delta selectors (|rows| = |cols| + 1)
    and ``A`` or ``Abar`` for Anderson selectors (all rows, k-1 columns).
    """

    rows: tuple[int, ...]
    cols: tuple[int, ...]
    target: str

    def check(self, k: int) -> None:
        if tuple(sorted(set(self.rows))) != tuple(self.rows) or tuple(sorted(set(self.cols))) != tuple(self.cols):
            raise ValueError("selector rows and cols must be sorted and distinct")
        if self.target in ("B", "Bstar"):
            l = len(self.cols)
            if not 1 <= l <= k - 1 or len(self.rows) != l + 1:
                raise ValueError(f"Delta selector must be (l+1) x l with 1 <= l <= k-1, got {len(self.rows)} x {l}")
            if max(self.rows + self.cols) >= k or min(self.rows + self.cols) < 0:
                raise ValueError("selector index out of range")
        elif self.target in ("A", "Abar"):
            if self.rows != tuple(range(k)) or len(self.cols) != k - 1:
                raise ValueError("Anderson selector must use all rows and k-1 columns")
            if self.cols and (self.cols[0] < 0 or self.cols[-1] >= 2 * k):
                raise ValueError("selector column out of range")
        else:
            raise ValueError(f"unknown selector target {self.target!r}")


def format_decimal(d: Decimal, digits: int = DIGITS) -> str:
    """Fixed-point rendering with exactly ``digits`` significant digits."""
    if d == 0:
        return "0." + "0" * (digits - 1)
    with localcontext() as ctx:
        ctx.prec = digits + 5
        q = d.quantize(Decimal(1).scaleb(d.adjusted() - digits + 1))
        if q.adjusted() != d.adjusted():  # rounding carried into a new digit
            q = q.quantize(Decimal(1).scaleb(q.adjusted() - digits + 1))
    return format(q, "f")


def constant_decimal(k: int, sum_sq: int, sum_abs: QuadValue, prec: int = 60) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = prec + 10
        v = Decimal(2 * k * sum_sq).sqrt() / sum_abs.to_decimal(prec + 10)
        ctx.prec = prec
        return +v


def ratio_greater(a: tuple[int, QuadValue], b: tuple[int, QuadValue]) -> int:
    """Sign of sqrt(a0)/a1 - sqrt(b0)/b1 for positive denominators, exactly."""
    n1, q1 = a
    n2, q2 = b
    return (q2 * q2 * n1 - q1 * q1 * n2).sign()


@dataclass
class Certificate:
    """Exact evidence for a splitting constant.

    ``sum_sq``/``sum_abs`` are Delta_2^2/Delta_1 for the Delta criterion and
    sum det^2 / sum |det| over the witness's maximal minors for the
    Anderson method.  The constant follows from these and ``k`` alone.
    """

    method: str
    k: int
    matrix_hash: str
    variant: str
    sum_sq: int
    sum_abs: QuadValue
    witness: SubmatrixSelector
    side: str
    ms: float | None = None

    @property
    def value(self) -> Decimal:
        return constant_decimal(self.k, self.sum_sq, self.sum_abs)

    @property
    def constant(self) -> str:
        return format_decimal(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def key(self) -> tuple[int, QuadValue]:
        return self.sum_sq, self.sum_abs

    def to_dict(self) -> dict:
        names = ("delta2_sq", "delta1") if self.method == "delta-criterion" else ("sum_det_sq", "sum_abs_det")
        return {
            "method": self.method,
            "k": self.k,
            "matrix_hash": self.matrix_hash,
            "variant": self.variant,
            "exact": {
                names[0]: str(self.sum_sq),
                names[1]: {"rat": str(self.sum_abs.rat), "irr": str(self.sum_abs.irr)},
            },
            "witness": {"rows": list(self.witness.rows), "cols": list(self.witness.cols),
                        "target": self.witness.target},
            "side": self.side,
            "constant": self.constant,
            "ms": self.ms,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Certificate":
        ex = doc["exact"]
        if doc["method"] == "delta-criterion":
            n, q = ex["delta2_sq"], ex["delta1"]
        else:
            n, q = ex["sum_det_sq"], ex["sum_abs_det"]
        w = doc["witness"]
        return cls(
            method=doc["method"], k=doc["k"], matrix_hash=doc["matrix_hash"], variant=doc["variant"],
            sum_sq=int(n), sum_abs=QuadValue(int(q["rat"]), int(q["irr"]), doc["k"]),
            witness=SubmatrixSelector(tuple(w["rows"]), tuple(w["cols"]), w["target"]),
            side=doc["side"], ms=doc.get("ms"),
        )


def _as_system(b, variant: str = "exact-sqrt") -> SplitSystem:
    if isinstance(b, SplitSystem):
        return b
    if not isinstance(b, SignMatrix):
        b = SignMatrix.from_rows(b)
    return SplitSystem(b, variant)


# --- Delta criterion -------------------------------------------------------

def _delta_parts(sel: SubmatrixSelector, m: list[list[int]], sys: SplitSystem, cache: dict | None = None):
    """Return (sum |det D_-i|^2, sum |det D_-i|, sum |det D^+j|^2, sum |det D^+j|)."""
    k = sys.k
    rows, cols = sel.rows, sel.cols

    def adet(r, c):
        key = (r, c)
        if cache is not None and key in cache:
            return cache[key]
        v = abs(bareiss_det([[m[i][j] for j in c] for i in r]))
        if cache is not None:
            cache[key] = v
        return v

    minus = [adet(rows[:t] + rows[t + 1:], cols) for t in range(len(rows))]
    colset = set(cols)
    plus = [adet(rows, tuple(sorted(cols + (j,)))) for j in range(k) if j not in colset]
    return (sum(v * v for v in minus), sum(minus), sum(v * v for v in plus), sum(plus))


def _delta_exact(parts, sys: SplitSystem) -> tuple[int, QuadValue]:
    m2, m1, p2, p1 = parts
    s = sys.scale_power(1)
    s2 = sys.scale_power(2).rat
    return s2 * m2 + p2, s * m1 + p1


def _target_matrix(b: SignMatrix, target: str) -> list[list[int]]:
    if target == "B":
        return b.rows
    if target == "Bstar":
        return b.transpose().rows
    raise ValueError(f"Delta target must be B or Bstar, got {target!r}")


def delta_p(sel: SubmatrixSelector, b, p: int, variant: str = "exact-sqrt"):
    """Delta_1 as a QuadValue (p=1) or the integer Delta_2^2 (p=2)."""
    sys = _as_system(b, variant)
    sel.check(sys.k)
    if sel.target not in ("B", "Bstar"):
        raise ValueError("delta_p needs a B or Bstar selector")
    n, q = _delta_exact(_delta_parts(sel, _target_matrix(sys.b, sel.target), sys), sys)
    if p == 1:
        return q
    if p == 2:
        return n
    raise ValueError("p must be 1 or 2")


def delta_selector_count(k: int) -> int:
    return 2 * sum(math.comb(k, l + 1) * math.comb(k, l) for l in range(1, k))


def criterion_value(b, variant: str = "exact-sqrt", max_selectors: int = DELTA_BUDGET,
                    budget_ms: float | None = None, timing: bool = False) -> tuple[Decimal, Certificate]:
    """Exact max over all (l+1) x l submatrices of B and B^T of sqrt(2k) Delta_2/Delta_1.

    Selectors with Delta_1 = 0 are skipped.  Ties keep the first selector in
    (l, rows, cols, target) order with B before Bstar.
    """
    sys = _as_system(b, variant)
    k = sys.k
    if k < 2:
        raise ValueError("the Delta criterion needs k >= 2")
    count = delta_selector_count(k)
    if count > max_selectors:
        raise BudgetExceeded(f"Delta criterion needs {count} selectors at k={k} (budget {max_selectors}); "
                             f"use the anderson method")
    t0 = time.perf_counter()
    mats = {"B": _target_matrix(sys.b, "B"), "Bstar": _target_matrix(sys.b, "Bstar")}
    caches: dict[str, dict] = {"B": {}, "Bstar": {}}
    best = None
    best_sel = None
    for l in range(1, k):
        for rows in itertools.combinations(range(k), l + 1):
            for cols in itertools.combinations(range(k), l):
                for target in ("B", "Bstar"):
                    sel = SubmatrixSelector(rows, cols, target)
                    cand = _delta_exact(_delta_parts(sel, mats[target], sys, caches[target]), sys)
                    if not cand[1]:
                        continue
                    if best is None or ratio_greater(cand, best) > 0:
                        best, best_sel = cand, sel
            if budget_ms is not None and (time.perf_counter() - t0) * 1e3 > budget_ms:
                raise BudgetExceeded(f"Delta criterion exceeded {budget_ms} ms")
    if best is None:
        raise RuntimeError("every Delta selector has a vanishing denominator")
    cert = Certificate("delta-criterion", k, sys.b.digest(), sys.variant, best[0], best[1], best_sel,
                       "E" if best_sel.target == "B" else "Eperp",
                       ms=(time.perf_counter() - t0) * 1e3 if timing else None)
    return cert.value, cert


# --- Anderson's formula ----------------------------------------------------

def _power_tables(sys: SplitSystem, obj: bool):
    k = sys.k
    pw = [sys.scale_power(c) for c in range(k + 1)]
    sq = [(p * p).rat for p in pw]
    rat = [p.rat for p in pw]
    irr = [p.irr for p in pw]
    dt = object if obj else np.int64
    return np.array(sq, dtype=dt), np.array(rat, dtype=dt), np.array(irr, dtype=dt)


def _combo_block(n: int, r: int, start: int, stop: int) -> np.ndarray:
    it = itertools.islice(itertools.combinations(range(n), r), start, stop)
    count = stop - start
    if r == 0:
        return np.zeros((count, 0), dtype=np.int64)
    return np.fromiter(itertools.chain.from_iterable(it), dtype=np.int64, count=count * r).reshape(count, r)


def _dual(side: str) -> str:
    return "Abar" if side == "A" else "A"


def _anderson_block(sys: SplitSystem, side: str, start: int, stop: int):
    """Exact best candidate among subsets ranked [start, stop) in lexicographic order.

    The rows of A and Abar span orthogonal complements with equal Gram
    determinants, so |det M[:, C + j]| equals the maximal minor of the
    other matrix on the complementary columns with j removed.  One
    elimination of that k x (k+1) matrix gives every D^{+j} for C.
    """
    k = sys.k
    frame, mask = sys.integer_frame(_dual(side))
    combos = _combo_block(2 * k, k - 1, start, stop)
    nb = combos.shape[0]
    keep = np.ones((nb, 2 * k), dtype=bool)
    keep[np.arange(nb)[:, None], combos] = False
    cols = np.nonzero(keep)[1].reshape(nb, k + 1)
    stack = frame[:, cols].transpose(1, 0, 2)
    minors = batch_maximal_minors(stack)
    obj = minors.dtype == object or k > 14
    if obj:
        minors = minors.astype(object)
    sq, prat, pirr = _power_tables(sys, obj)
    scaled = mask[cols]
    cnt = scaled.sum(axis=1)[:, None] - scaled
    am = np.abs(minors)
    sum_sq = (minors * minors * sq[cnt]).sum(axis=1)
    rat = (am * prat[cnt]).sum(axis=1)
    irr = (am * pirr[cnt]).sum(axis=1)
    den = rat.astype(np.float64) + irr.astype(np.float64) * math.sqrt(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(den > 0, sum_sq.astype(np.float64) / np.where(den > 0, den, 1.0) ** 2, -np.inf)
    fmax = f.max()
    if not np.isfinite(fmax):
        return None
    # float values are within ~1e-13 relative of the exact ones, so every exact
    # maximizer survives this filter; the final choice below is exact
    best = None
    for i in np.nonzero(f >= fmax * (1 - 1e-9))[0]:
        cand = (int(sum_sq[i]), QuadValue(int(rat[i]), int(irr[i]), k))
        if best is None or ratio_greater(cand, best[0]) > 0:
            best = (cand, start + int(i), tuple(int(c) for c in combos[i]))
    return best


def _anderson_block_job(args):
    return _anderson_block(*args)


def _anderson_quad(sys: SplitSystem, side: str):
    """Reference enumeration with QuadValue entries and the scalar kernel."""
    k = sys.k
    own = sys.quad_matrix(side)
    qm = sys.quad_matrix(_dual(side))
    frame, mask = sys.integer_frame(_dual(side))
    best = None
    for rank, combo in enumerate(itertools.combinations(range(2 * k), k - 1)):
        cset = set(combo)
        cols = [j for j in range(2 * k) if j not in cset]
        minors = maximal_minors([[row[j] for j in cols] for row in qm])
        nscaled = sum(bool(mask[j]) for j in cols)
        for t, m in enumerate(minors):
            power = nscaled - bool(mask[cols[t]])
            fm = bareiss_det([[int(frame[i][j]) for j in cols if j != cols[t]] for i in range(k)])
            if m != sys.scale_power(power) * fm:
                raise AssertionError(f"minor {m} is not {fm} * s^{power}")
            direct = bareiss_det([[row[j] for j in sorted(combo + (cols[t],))] for row in own])
            if abs(direct) != abs(m):
                raise AssertionError(f"complementary minor {m} differs from det D^+j = {direct}")
        sum_sq = sum((m * m for m in minors), QuadValue(0, 0, k))
        if sum_sq.irr:
            raise AssertionError("sum of squared minors is not an integer")
        sum_abs = sum((abs(m) for m in minors), QuadValue(0, 0, k))
        if not sum_abs:
            continue
        cand = (sum_sq.rat, sum_abs)
        if best is None or ratio_greater(cand, best[0]) > 0:
            best = (cand, rank, combo)
    return best


def _merge(results):
    best = None
    for r in results:
        if r is not None and (best is None or ratio_greater(r[0], best[0]) > 0):
            best = r
    return best


def anderson_constant(sys: SplitSystem, side: str = "E", max_subsets: int = ANDERSON_BUDGET,
                      workers: int = 1, engine: str = "batched", budget_ms: float | None = None,
                      timing: bool = False) -> tuple[Decimal, Certificate]:
    """C_2k of the row span of A (side E) or Abar (side Eperp).

    Subsets are split into contiguous lexicographic ranges; each range
    reports its exact local maximum (first one on ties) and the ranges are
    merged in order, so the certificate does not depend on ``workers``.
    """
    if side not in ("E", "Eperp"):
        raise ValueError(f"side must be E or Eperp, got {side!r}")
    k = sys.k
    total = math.comb(2 * k, k - 1)
    if total > max_subsets:
        raise BudgetExceeded(f"Anderson enumeration needs {total} column subsets at k={k} (budget {max_subsets})")
    t0 = time.perf_counter()
    mside = "A" if side == "E" else "Abar"
    if engine == "quad":
        best = _anderson_quad(sys, mside)
    elif engine == "batched":
        ranges = [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]
        jobs = [(sys, mside, s, e) for s, e in ranges]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                best = _merge(ex.map(_anderson_block_job, jobs))
        else:
            results = []
            for job in jobs:
                results.append(_anderson_block(*job))
                if budget_ms is not None and (time.perf_counter() - t0) * 1e3 > budget_ms:
                    raise BudgetExceeded(f"Anderson enumeration exceeded {budget_ms} ms")
            best = _merge(results)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if best is None:
        raise RuntimeError("all Anderson denominators vanish; A cannot have full rank")
    (n, q), _, combo = best
    cert = Certificate("anderson", k, sys.b.digest(), sys.variant, n, q,
                       SubmatrixSelector(tuple(range(k)), combo, mside), side,
                       ms=(time.perf_counter() - t0) * 1e3 if timing else None)
    return cert.value, cert


def split_constant(b, method: str = "anderson", variant: str = "exact-sqrt", *,
                   max_subsets: int | None = None, workers: int = 1, budget_ms: float | None = None,
                   timing: bool = False, engine: str = "batched") -> Certificate:
    """max{C_2k(E), C_2k(E^perp)} with its witness; E wins ties."""
    sys = _as_system(b, variant)
    t0 = time.perf_counter()
    if method in ("delta", "delta-criterion"):
        _, cert = criterion_value(sys, max_selectors=max_subsets or DELTA_BUDGET, budget_ms=budget_ms)
    elif method == "anderson":
        budget = max_subsets or ANDERSON_BUDGET
        if 2 * math.comb(2 * sys.k, sys.k - 1) > budget:
            raise BudgetExceeded(f"Anderson enumeration needs {2 * math.comb(2 * sys.k, sys.k - 1)} "
                                 f"column subsets at k={sys.k} (budget {budget})")
        _, ce = anderson_constant(sys, "E", budget, workers, engine, budget_ms)
        _, cp = anderson_constant(sys, "Eperp", budget, workers, engine, budget_ms)
        cert = cp if ratio_greater(cp.key(), ce.key()) > 0 else ce
    else:
        raise ValueError(f"unknown method {method!r}")
    cert.ms = (time.perf_counter() - t0) * 1e3 if timing else None
    return cert


def passes(cert: Certificate, threshold: float) -> bool:
    """Exact test of constant <= threshold (threshold taken as its exact binary value)."""
    t = Fraction(threshold)
    if t < 0:
        return False
    q2 = cert.sum_abs * cert.sum_abs
    t2 = t * t
    return sign_rational_quad(t2 * q2.rat - 2 * cert.k * cert.sum_sq, t2 * q2.irr, cert.k) >= 0


def certify_split(b, threshold: float, method: str = "anderson", variant: str = "exact-sqrt",
                  **kwargs) -> tuple[Certificate, bool]:
    cert = split_constant(b, method, variant, **kwargs)
    return cert, passes(cert, threshold)


def recompute(cert: Certificate, sys: SplitSystem) -> tuple[int, QuadValue]:
    """Exact fields of the candidate named by ``cert.witness`` (no maximality check)."""
    w = cert.witness
    w.check(sys.k)
    if cert.method == "delta-criterion":
        return _delta_exact(_delta_parts(w, _target_matrix(sys.b, w.target), sys), sys)
    frame, mask = sys.integer_frame(w.target)
    k = sys.k
    vals = []
    for j in range(2 * k):
        if j in w.cols:
            continue
        cols = sorted(w.cols + (j,))
        det = bareiss_det([[int(frame[i][c]) for c in cols] for i in range(k)])
        vals.append(sys.scale_power(sum(bool(mask[c]) for c in cols)) * det)
    sum_sq = sum((v * v for v in vals), QuadValue(0, 0, k))
    return sum_sq.rat, sum((abs(v) for v in vals), QuadValue(0, 0, k))


def verify_certificate(cert: Certificate, sys: SplitSystem) -> list[str]:
    """Problems found when recomputing ``cert`` from its witness; empty means valid.

    This proves the reported constant is attained (a lower bound); it does
    not re-establish maximality, which needs the full enumeration.
    """
    problems = []
    if cert.k != sys.k:
        problems.append(f"k mismatch: certificate {cert.k}, matrix {sys.k}")
        return problems
    if cert.matrix_hash != sys.b.digest():
        problems.append("matrix hash mismatch")
    if cert.variant != sys.variant:
        problems.append(f"variant mismatch: certificate {cert.variant}, matrix {sys.variant}")
    try:
        n, q = recompute(cert, sys)
    except ValueError as exc:
        problems.append(f"invalid witness: {exc}")
        return problems
    if (n, q) != (cert.sum_sq, cert.sum_abs):
        problems.append(f"exact fields differ: recomputed ({n}, {q}), certificate ({cert.sum_sq}, {cert.sum_abs})")
    return problems
