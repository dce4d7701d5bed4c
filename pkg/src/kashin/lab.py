"""Randomized experiments: success rates of random splittings, local search, restriction."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certifier import BudgetExceeded, Certificate, passes, ratio_greater, split_constant
from .matrices import SignMatrix, SplitSystem, random_sign_matrix, random_signs
from .oracle import vertex_ascent

CSV_COLUMNS = ("k", "sample_index", "seed", "method", "constant", "pass", "ms")
QUANTILES = (25, 50, 75, 95)
ANNEAL_DECAY = 0.995


def sample_seed(master: int, k: int, index: int) -> int:
    """64-bit seed of sample ``index`` at size ``k``, independent of run order."""
    words = np.random.SeedSequence(master, spawn_key=(k, index)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


@dataclass
class ExperimentRecord:
    k: int
    sample_index: int
    seed: int
    method: str
    constant: str
    passed: bool
    ms: float | None = None
    cert: Certificate | None = field(default=None, repr=False, compare=False)

    def row(self) -> list:
        return [self.k, self.sample_index, self.seed, self.method, self.constant,
                int(self.passed), "" if self.ms is None else f"{self.ms:.3f}"]


@dataclass
class KSummary:
    k: int
    samples: int
    success_fraction: float | None
    quantiles: dict[int, float]
    skipped: str | None = None

    def to_dict(self) -> dict:
        return {"k": self.k, "samples": self.samples, "success_fraction": self.success_fraction,
                "quantiles": {str(q): v for q, v in self.quantiles.items()}, "skipped": self.skipped}


def _certify_sample(args):
    k, index, seed, method, threshold, variant, budget, timing = args
    b = random_sign_matrix(k, seed)
    t0 = time.perf_counter()
    cert = split_constant(b, method, variant, max_subsets=budget)
    ms = (time.perf_counter() - t0) * 1e3 if timing else None
    return ExperimentRecord(k, index, seed, cert.method, cert.constant, passes(cert, threshold), ms, cert)


def _summarize(k: int, recs: list[ExperimentRecord]) -> KSummary:
    vals = np.array([float(r.constant) for r in recs])
    qs = {q: float(np.percentile(vals, q)) for q in QUANTILES}
    return KSummary(k, len(recs), sum(r.passed for r in recs) / len(recs), qs)


def mc_success_experiment(k_list, samples: int, threshold: float, seed: int, method: str = "anderson",
                          variant: str = "exact-sqrt", max_subsets: int | None = None, workers: int = 1,
                          timing: bool = False) -> tuple[list[KSummary], list[ExperimentRecord]]:
    """Certify ``samples`` random sign matrices per k and summarize the constants.

    Sample i at size k uses ``sample_seed(seed, k, i)``, so results do not
    depend on ``workers``.  A k over the method's budget is reported as skipped.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    summaries, records = [], []
    for k in k_list:
        jobs = [(k, i, sample_seed(seed, k, i), method, threshold, variant, max_subsets, timing)
                for i in range(samples)]
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as ex:
                    recs = list(ex.map(_certify_sample, jobs, chunksize=max(1, samples // (4 * workers))))
            else:
                recs = [_certify_sample(j) for j in jobs]
        except BudgetExceeded as exc:
            summaries.append(KSummary(k, 0, None, {}, skipped=str(exc)))
            continue
        records.extend(recs)
        summaries.append(_summarize(k, recs))
    return summaries, records


def rethreshold(records: list[ExperimentRecord], threshold: float) -> dict[int, float]:
    """Success fraction per k at a new threshold, decided exactly from the certificates."""
    out: dict[int, list[bool]] = {}
    for r in records:
        out.setdefault(r.k, []).append(passes(r.cert, threshold) if r.cert is not None
                                        else float(r.constant) <= threshold)
    return {k: sum(v) / len(v) for k, v in out.items()}


def records_csv(records: list[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def read_records_csv(text: str) -> list[ExperimentRecord]:
    rows = csv.DictReader(io.StringIO(text))
    return [ExperimentRecord(int(r["k"]), int(r["sample_index"]), int(r["seed"]), r["method"], r["constant"],
                             r["pass"] == "1", float(r["ms"]) if r["ms"] else None) for r in rows]


@dataclass
class EtaFit:
    eta: float | None
    intercept: float | None = None
    residual: float | None = None
    points: list[tuple[int, float]] = field(default_factory=list)
    marker: str | None = None
    caveat: str = "fitted diagnostic only; no numeric decay rate is known to compare against"

    def to_dict(self) -> dict:
        return {"eta": self.eta, "intercept": self.intercept, "residual": self.residual,
                "points": [list(p) for p in self.points], "marker": self.marker, "caveat": self.caveat}


def eta_fit(data) -> EtaFit:
    """Least-squares slope of log(failure fraction) against k, negated.

    ``data`` is either ExperimentRecords or (k, success_fraction) pairs.
    Needs at least three distinct k with some failure.
    """
    data = list(data)
    if data and isinstance(data[0], ExperimentRecord):
        by_k: dict[int, list[bool]] = {}
        for r in data:
            by_k.setdefault(r.k, []).append(r.passed)
        pairs = [(k, sum(v) / len(v)) for k, v in sorted(by_k.items())]
    else:
        pairs = sorted((int(k), float(s)) for k, s in data)
    if len({k for k, _ in pairs}) != len(pairs):
        raise ValueError("duplicate k in success fractions")
    if any(not 0.0 <= s <= 1.0 for _, s in pairs):
        raise ValueError("success fractions must lie in [0, 1]")
    fails = [(k, 1.0 - s) for k, s in pairs if s < 1.0]
    if not fails:
        return EtaFit(None, marker="no failures observed")
    if len(fails) < 3:
        return EtaFit(None, points=fails, marker="fewer than 3 k values with failures")
    ks = np.array([k for k, _ in fails], dtype=float)
    ys = np.log([f for _, f in fails])
    (slope, icpt), res, *_ = np.polyfit(ks, ys, 1, full=True)
    return EtaFit(float(-slope), float(icpt), float(res[0]) if len(res) else 0.0, fails)


@dataclass
class SearchState:
    current: SignMatrix
    current_cert: Certificate
    best: SignMatrix
    best_cert: Certificate
    step: int
    rng_state: dict
    best_history: list[float] = field(default_factory=list)
    accepted: int = 0
    visited: int = 1

    @property
    def best_constant(self) -> float:
        return float(self.best_cert)


def local_search(k: int, seed: int, steps: int, method: str = "anderson", mode: str = "first-improve",
                 variant: str = "exact-sqrt", max_subsets: int | None = None) -> SearchState:
    """Single-entry sign flips from ``random_sign_matrix(k, seed)``, minimizing the split constant.

    ``first-improve`` accepts strict improvements only; ``anneal`` accepts a
    worse move with probability exp(-increase / T), T = c0/10 * 0.995**step.
    Certificates are cached by matrix, so revisits cost nothing.
    """
    if mode not in ("first-improve", "anneal"):
        raise ValueError(f"unknown mode {mode!r}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    cache: dict[SignMatrix, Certificate] = {}

    def cert_of(b: SignMatrix) -> Certificate:
        if b not in cache:
            cache[b] = split_constant(b, method, variant, max_subsets=max_subsets)
        return cache[b]

    cur = random_sign_matrix(k, seed)
    cur_c = cert_of(cur)
    state = SearchState(cur, cur_c, cur, cur_c, 0, rng.bit_generator.state, [float(cur_c)])
    t0 = float(cur_c) / 10
    for step in range(1, steps + 1):
        i, j = (int(v) for v in rng.integers(k, size=2))
        cand = state.current.flipped(i, j)
        cc = cert_of(cand)
        better = ratio_greater(state.current_cert.key(), cc.key()) > 0
        if mode == "first-improve":
            accept = better
        else:
            temp = t0 * ANNEAL_DECAY ** step
            # always draw, so the stream does not depend on the comparison outcome
            u = rng.random()
            accept = better or u < math.exp(-(float(cc) - float(state.current_cert)) / temp)
        if accept:
            state.current, state.current_cert = cand, cc
            state.accepted += 1
            if ratio_greater(state.best_cert.key(), cc.key()) > 0:
                state.best, state.best_cert = cand, cc
        state.step = step
        state.best_history.append(float(state.best_cert))
    state.rng_state = rng.bit_generator.state
    state.visited = len(cache)
    return state


@dataclass
class RestrictionStats:
    lam: float
    n: int
    m: int
    constants: list[float]
    minima: list[float]
    maxima: list[float]
    heuristic: bool = True

    def summary(self) -> dict:
        c = np.array(self.constants)
        q25, q50, q75 = (float(v) for v in np.percentile(c, [25, 50, 75]))
        return {"lambda": self.lam, "n": self.n, "rows": self.m, "samples": len(c), "median": q50,
                "q25": q25, "q75": q75, "iqr": q75 - q25, "min": float(c.min()), "max": float(c.max()),
                "heuristic": self.heuristic}


def _l1_max(m: np.ndarray, a: np.ndarray, max_iter: int = 200) -> tuple[np.ndarray, float]:
    """Sign iteration for max ||a m||_1 on the unit sphere; never decreases."""
    a = a / np.linalg.norm(a)
    val = np.abs(a @ m).sum()
    for _ in range(max_iter):
        eps = np.sign(a @ m)
        eps[eps == 0] = 1
        nxt = m @ eps
        nrm = np.linalg.norm(nxt)
        if nrm == 0:
            break
        nxt /= nrm
        nv = np.abs(nxt @ m).sum()
        if nv <= val * (1 + 1e-15):
            break
        a, val = nxt, nv
    return a, val


def restriction_experiment(lam: float, n: int, samples: int, seed: int, starts: int = 8) -> RestrictionStats:
    """Estimated max/min of ||aM||_{L_1^n} over unit a for random [lam n] x n sign matrices M.

    Both extremes come from local searches (sign iteration for the max,
    vertex ascent on ||a||_2 / ||aM||_1 for the min), so the ratio is a
    heuristic estimate.  Every evaluated point enters both extremes, which
    keeps the reported ratio >= 1.
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    m = int(math.floor(lam * n))
    if m < 1:
        raise ValueError(f"[lambda n] = {m}; need at least one row")
    consts, mins, maxs = [], [], []
    for i in range(samples):
        s = sample_seed(seed, n, i)
        mat = random_signs((m, n), s).astype(np.float64)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(s)))
        lo, hi = math.inf, 0.0
        for _ in range(starts):
            a0 = rng.standard_normal(m)
            a0 /= np.linalg.norm(a0)
            a, v = _l1_max(mat, a0)
            a2, _, _ = vertex_ascent(mat, np.linalg.norm, a0, rng)
            for pt in (a0, a, a2):
                val = np.abs((pt / np.linalg.norm(pt)) @ mat).sum() / n
                lo, hi = min(lo, val), max(hi, val)
        mins.append(lo)
        maxs.append(hi)
        consts.append(hi / lo)
    return RestrictionStats(lam, n, m, consts, mins, maxs)
