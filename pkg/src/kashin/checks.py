"""Numerical checks of the averaging, concentration, rearrangement, covering and gauge statements."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .matrices import SignMatrix

EXACT_MAX_K = 20
INSIDE_EXACT_MAX_K = 4
SLACK = 1e-12


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _signs(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform +-1 float array from raw random bytes."""
    n = math.prod(shape)
    bits = np.unpackbits(np.frombuffer(rng.bytes(-(-n // 8)), dtype=np.uint8))[:n]
    return (1.0 - 2.0 * bits).reshape(shape)


def random_unit(k: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal(k)
    return a / np.linalg.norm(a)


def _sign_block(k: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return 1.0 - 2.0 * ((idx[:, None] >> np.arange(k)) & 1)


def _column_moments(a: np.ndarray, p: int) -> float:
    """2^-k sum over eps of |sum a_i eps_i|^p, summed with fsum."""
    k = a.size
    total = 2 ** k
    step = 1 << 16
    parts = []
    for s in range(0, total, step):
        v = np.abs(_sign_block(k, s, min(s + step, total)) @ a) ** p
        parts.append(math.fsum(v))
    return math.fsum(parts) / total


def e_p_exact(a, p: int, reading: str = "outside") -> float:
    """E_p(a) by enumerating signs.

    Every column of the sign matrix has the same law, so the average of
    k^-1 sum_j |sum_i a_i eps_ij|^p is a single-column average over 2^k
    sign vectors.  ``outside`` takes the p-th root after averaging, which
    makes E_2(a) = ||a||_2; ``inside`` averages the p-th root itself and
    needs all 2^(k^2) matrices (k <= 4).  For p = 1 the readings agree.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    k = a.size
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if reading not in ("outside", "inside"):
        raise ValueError(f"unknown reading {reading!r}")
    if p == 1 or reading == "outside":
        if k > EXACT_MAX_K:
            raise ValueError(f"exact enumeration limited to k <= {EXACT_MAX_K}; use e_p_mc")
        return _column_moments(a, p) ** (1.0 / p)
    if k > INSIDE_EXACT_MAX_K:
        raise ValueError(f"the inside reading is exact only for k <= {INSIDE_EXACT_MAX_K}; use e_p_mc")
    # all column values, then every k-tuple of columns
    col = (_sign_block(k, 0, 2 ** k) @ a) ** 2
    vals = [math.sqrt(math.fsum(col[list(c)]) / k) for c in itertools.product(range(2 ** k), repeat=k)]
    return math.fsum(vals) / len(vals)


def _functional(a: np.ndarray, eps: np.ndarray, p: int) -> np.ndarray:
    """k^-1 sum_j |sum_i a_i eps_ij|^p for a stack of sign matrices (t, k, k)."""
    s = np.einsum("i,tij->tj", a, eps)
    return (np.abs(s) ** p).mean(axis=1)


def _stacks(k: int, trials: int, rng: np.random.Generator, batch_entries: int = 1 << 22):
    per = max(1, batch_entries // (k * k))
    done = 0
    while done < trials:
        t = min(per, trials - done)
        yield _signs(rng, (t, k, k))
        done += t


def e_p_mc(a, p: int, trials: int, seed: int, reading: str = "outside") -> tuple[float, float]:
    """Monte Carlo E_p(a) over full k x k sign matrices, with its standard error.

    Under the outside reading the standard error of the mean is carried
    through the p-th root by the delta method.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    a = np.asarray(a, dtype=np.float64).ravel()
    k = a.size
    rng = _rng(seed)
    f = np.concatenate([_functional(a, eps, p) for eps in _stacks(k, trials, rng)])
    if reading == "inside":
        f = f ** (1.0 / p)
    mean = float(f.mean())
    se = float(f.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    if reading == "inside" or p == 1:
        return mean, se
    est = math.sqrt(mean)
    return est, se / (2 * est) if est > 0 else 0.0


@dataclass
class TailReport:
    which: str
    k: int
    c: float
    trials: int
    exceed: int
    tail: float
    center: float
    center_stderr: float
    center_method: str

    def to_dict(self) -> dict:
        return asdict(self)


def concentration_tail(a, c: float, trials: int, seed: int, which: str = "L1-form",
                       center_trials: int = 20_000) -> TailReport:
    """Empirical frequency of a large deviation of the column average.

    L1-form: |k^-1 sum_j |sum_i a_i eps_ij| - E_1(a)| > c E_1(a) (relative).
    L2-form: |(k^-1 sum_j |sum_i a_i eps_ij|^2)^(1/2) - E_2(a)| > c (absolute),
    with E_2(a) = ||a||_2.  E_1 is exact for k <= 20 and a Monte Carlo
    estimate on an independent stream otherwise.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    k = a.size
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ss = np.random.SeedSequence(seed)
    main, aux = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))
    if which == "L1-form":
        if k <= EXACT_MAX_K:
            center, cse, how = e_p_exact(a, 1), 0.0, "exact"
        else:
            center, cse = e_p_mc(a, 1, center_trials, int(aux.integers(2 ** 63)))
            how = "mc"
        f = np.concatenate([_functional(a, eps, 1) for eps in _stacks(k, trials, main)])
        exceed = int((np.abs(f - center) > c * center).sum())
    elif which == "L2-form":
        center, cse, how = float(np.linalg.norm(a)), 0.0, "closed-form"
        f = np.sqrt(np.concatenate([_functional(a, eps, 2) for eps in _stacks(k, trials, main)]))
        exceed = int((np.abs(f - center) > c).sum())
    else:
        raise ValueError(f"unknown form {which!r}")
    return TailReport(which, k, c, trials, exceed, exceed / trials, center, cse, how)


def _check_unit(a: np.ndarray) -> None:
    if abs(np.linalg.norm(a) - 1.0) > SLACK:
        raise ValueError(f"vector must have unit l2 norm, got {np.linalg.norm(a)!r}")


def flatness(a) -> float:
    """k^-1/2 sum |a_i|, the normalized l1 norm of a unit vector."""
    a = np.asarray(a, dtype=np.float64).ravel()
    return math.fsum(np.abs(a)) / math.sqrt(a.size)


def tail_bound(gamma: float, k: int, l: int) -> float:
    """l^-1 gamma sqrt(k(k-l+1)), the bound on the tail from the l-th largest coordinate on."""
    return gamma * math.sqrt(k * (k - l + 1)) / l


def tail_rearrangement_check(a, l: int) -> tuple[float, float, bool]:
    """(sum_{i>=l} (a*_i)^2)^(1/2) against tail_bound(flatness(a), k, l)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    _check_unit(a)
    k = a.size
    if not 1 <= l <= k:
        raise ValueError(f"need 1 <= l <= k, got l={l}, k={k}")
    desc = np.sort(np.abs(a))[::-1]
    lhs = math.sqrt(math.fsum(desc[l - 1:] ** 2))
    rhs = tail_bound(flatness(a), k, l)
    return lhs, rhs, lhs <= rhs + SLACK


def in_flat_class(a, gamma: float) -> bool:
    a = np.asarray(a, dtype=np.float64).ravel()
    return abs(np.linalg.norm(a) - 1.0) <= SLACK and flatness(a) <= gamma + SLACK


def in_sparse_class(a, l: int) -> bool:
    a = np.asarray(a, dtype=np.float64).ravel()
    return int(np.count_nonzero(a)) <= l and float(a @ a) <= 1.0 + SLACK


@dataclass
class FlatSplit:
    b: np.ndarray
    c: np.ndarray
    norm_c: float
    bound: float
    holds: bool


def flat_decompose(a, l: int, gamma: float | None = None) -> FlatSplit:
    """a = b + c with b the l largest coordinates in absolute value (ties to the lower index)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    k = a.size
    if gamma is None:
        gamma = flatness(a)
    if not in_flat_class(a, gamma):
        raise ValueError(f"vector is not a unit vector with normalized l1 norm <= {gamma}")
    if not 1 <= l <= k:
        raise ValueError(f"need 1 <= l <= k, got l={l}, k={k}")
    top = np.argsort(-np.abs(a), kind="stable")[:l]
    b = np.zeros_like(a)
    b[top] = a[top]
    c = a - b
    nc = float(np.linalg.norm(c))
    bound = tail_bound(gamma, k, l)
    return FlatSplit(b, c, nc, bound, nc <= bound + SLACK)


# --- covering --------------------------------------------------------------

def cover_log_bound(gamma: float, eps: float, k: int) -> float:
    """Logarithm of the covering bound exp((6 gamma k / eps)(log(eps / 2 gamma) + log(4 / eps)))."""
    return (6 * gamma * k / eps) * (math.log(eps / (2 * gamma)) + math.log(4 / eps))


def sparse_level(gamma: float, eps: float, k: int) -> int:
    """Smallest l whose tail beyond the top l coordinates is at most eps/2 on the flat class.

    Removing the top l coordinates leaves sum_{i>l} (a*_i)^2, bounded by
    tail_bound(gamma, k, l + 1) = gamma sqrt(k(k-l)) / (l+1).
    """
    for l in range(1, k + 1):
        if l == k or tail_bound(gamma, k, l + 1) <= eps / 2:
            return l
    return k


def ball_net(dim: int, delta: float, seed: int, sample_log2: int | None = None):
    """Greedy farthest-point delta-net of the unit ball in R^dim.

    Candidates are a scrambled Sobol sample of the ball.  Insertion stops at
    radius delta - rho, where rho is the sample's fill distance measured on
    an independent check sample, and the achieved radius on the check
    sample is returned with the net.
    """
    if dim == 0:
        return np.zeros((1, 0)), 0.0
    if sample_log2 is None:
        sample_log2 = min(18, max(12, 4 * dim + 2))
    rng = _rng(seed)
    sob = qmc.Sobol(dim, scramble=True, seed=rng)
    pts = 2 * sob.random_base2(sample_log2) - 1
    pts = pts[(pts * pts).sum(axis=1) <= 1]
    check = rng.standard_normal((1 << 14, dim))
    check *= (rng.random(len(check)) ** (1 / dim) / np.linalg.norm(check, axis=1))[:, None]
    rho = float(cKDTree(pts).query(check)[0].max())
    stop = delta - rho
    if stop <= 0:
        raise ValueError(f"Sobol sample too coarse for delta={delta} (fill distance {rho:.3g})")
    centers = [np.zeros(dim)]
    dist = np.linalg.norm(pts, axis=1)
    while True:
        i = int(np.argmax(dist))
        if dist[i] <= stop:
            break
        centers.append(pts[i])
        dist = np.minimum(dist, np.linalg.norm(pts - pts[i], axis=1))
    net = np.array(centers)
    radius = float(cKDTree(net).query(check)[0].max())
    return net, radius


@dataclass
class CoverResult:
    gamma: float
    eps: float
    k: int
    l: int
    delta: float
    net: np.ndarray = field(repr=False)
    net_radius: float
    cardinality: int
    log_bound: float
    within_bound: bool
    set_empty: bool
    flat_samples: int
    flat_valid: bool
    superset_samples: int
    superset_valid: bool
    worst_distance: float

    @property
    def valid(self) -> bool:
        return self.flat_valid and self.superset_valid

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound) if self.log_bound < 700 else math.inf

    def distance(self, x, exhaustive: bool = True) -> np.ndarray:
        """Distance from each row of x to the nearest center."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return _cover_distance(x, cKDTree(self.net), self.l, exhaustive)

    def centers(self, limit: int = 1_000_000) -> np.ndarray:
        """All centers; each coordinate subset of size l carries a copy of the net."""
        if self.cardinality > limit:
            raise MemoryError(f"{self.cardinality} centers exceed the limit {limit}")
        out = []
        for sub in itertools.combinations(range(self.k), self.l):
            block = np.zeros((len(self.net), self.k))
            block[:, list(sub)] = self.net
            out.append(block)
        return np.unique(np.vstack(out), axis=0)

    def to_dict(self) -> dict:
        d = {n: getattr(self, n) for n in ("gamma", "eps", "k", "l", "delta", "net_radius", "cardinality",
                                           "log_bound", "within_bound", "set_empty", "flat_samples",
                                           "flat_valid", "superset_samples", "superset_valid",
                                           "worst_distance")}
        d["net_size"] = len(self.net)
        d["valid"] = self.valid
        return d


def _cover_distance(x: np.ndarray, net_tree: cKDTree, l: int, exhaustive: bool) -> np.ndarray:
    """Distance from each row of x to the nearest center."""
    k = x.shape[1]
    sq = (x * x).sum(axis=1)

    def via(sub):
        xs = x[:, list(sub)]
        d, _ = net_tree.query(xs)
        return np.sqrt(np.maximum(sq - (xs * xs).sum(axis=1), 0) + d * d)

    top = np.sort(np.argsort(-np.abs(x), axis=1, kind="stable")[:, :l], axis=1)
    best = np.full(len(x), np.inf)
    for sub in {tuple(r) for r in top}:
        rows = np.all(top == np.array(sub), axis=1)
        best[rows] = via(sub)[rows]
    if exhaustive:
        for sub in itertools.combinations(range(k), l):
            best = np.minimum(best, via(sub))
    return best


def _flat_samples(gamma: float, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sample of unit vectors with flatness <= gamma: a few large coordinates plus noise."""
    out = []
    tries = 0
    while len(out) < n and tries < 50 * n:
        tries += 1
        s = int(rng.integers(1, max(2, k // 4) + 1))
        a = np.zeros(k)
        idx = rng.choice(k, size=s, replace=False)
        a[idx] = rng.standard_normal(s)
        a += rng.standard_normal(k) * rng.random() * 0.05
        a /= np.linalg.norm(a)
        if flatness(a) <= gamma:
            out.append(a)
    return np.array(out).reshape(-1, k)


def _superset_samples(k: int, l: int, tail: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """b + c with b in the unit ball on l coordinates and c of norm exactly ``tail`` off them."""
    x = np.zeros((n, k))
    for r in range(n):
        perm = rng.permutation(k)
        on, off = perm[:l], perm[l:]
        b = rng.standard_normal(l)
        b *= rng.random() ** (1 / l) / np.linalg.norm(b)
        x[r, on] = b
        if len(off):
            c = rng.standard_normal(len(off))
            if rng.random() < 0.5:  # concentrated tails as well as spread ones
                c[np.abs(c) < np.quantile(np.abs(c), 0.8)] = 0
            x[r, off] = c * tail / np.linalg.norm(c)
    return x


def cover_construct(gamma: float, eps: float, k: int, validation_sample: int = 10_000, seed: int = 0,
                    exhaustive: bool = False) -> CoverResult:
    """eps-cover of the flat class A_gamma^k built from delta-nets of l-sparse vectors, delta = eps/2.

    The flat class is empty when gamma < k^-1/2 (a unit vector has l1 norm
    at least 1).  Validity is then also checked on the larger set of
    b + c with b l-sparse in the unit ball and ||c||_2 at the tail bound,
    which contains the flat class whenever it is nonempty.
    """
    if not 0 < gamma or not 4 * gamma < eps < 1:
        raise ValueError(f"need 4*gamma < eps < 1, got gamma={gamma}, eps={eps}")
    if k < 1:
        raise ValueError("k must be positive")
    delta = eps / 2
    l = sparse_level(gamma, eps, k)
    tail = tail_bound(gamma, k, l + 1) if l < k else 0.0
    ss = np.random.SeedSequence(seed)
    s_net, s_flat, s_sup = ss.spawn(3)
    net, radius = ball_net(l, delta, int(s_net.generate_state(1)[0]))
    tree = cKDTree(net)
    card = math.comb(k, l) * len(net)
    logb = cover_log_bound(gamma, eps, k)
    empty = gamma * math.sqrt(k) < 1
    worst = 0.0
    flat = np.zeros((0, k))
    if not empty:
        flat = _flat_samples(gamma, k, validation_sample, np.random.Generator(np.random.PCG64(s_flat)))
    flat_ok = True
    if len(flat):
        d = _cover_distance(flat, tree, l, exhaustive)
        worst = max(worst, float(d.max()))
        flat_ok = bool(np.all(d <= eps))
    sup = _superset_samples(k, l, tail, validation_sample, np.random.Generator(np.random.PCG64(s_sup)))
    d = _cover_distance(sup, tree, l, exhaustive)
    worst = max(worst, float(d.max()))
    return CoverResult(gamma, eps, k, l, delta, net, radius, card, logb, math.log(card) <= logb,
                       empty, len(flat), flat_ok, len(sup), bool(np.all(d <= eps)), worst)


@dataclass
class GaugeReport:
    min_gauge: float
    max_gauge: float
    ratio: float
    argmin: np.ndarray = field(repr=False)
    argmax: np.ndarray = field(repr=False)
    coordinate_gauge: float = 0.0

    def to_dict(self) -> dict:
        return {"min_gauge": self.min_gauge, "max_gauge": self.max_gauge, "ratio": self.ratio,
                "coordinate_gauge": self.coordinate_gauge,
                "argmin": [float(v) for v in self.argmin], "argmax": [float(v) for v in self.argmax]}


def gauge(b: SignMatrix, u) -> np.ndarray:
    """max(||u||_1, ||Bu||_1) / sqrt(k) for each row of u."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    m = b.entries.astype(np.float64)
    return np.maximum(np.abs(u).sum(axis=1), np.abs(u @ m.T).sum(axis=1)) / math.sqrt(b.k)


def gauge_check(b: SignMatrix, samples: int, seed: int) -> GaugeReport:
    """Extremes of the gauge of {x : Bx in sqrt(k) B_1} intersected with sqrt(k) B_1 on random unit vectors."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = _rng(seed)
    u = rng.standard_normal((samples, b.k))
    u /= np.linalg.norm(u, axis=1)[:, None]
    g = gauge(b, u)
    lo, hi = int(np.argmin(g)), int(np.argmax(g))
    coord = float(gauge(b, np.eye(b.k)).max())
    return GaugeReport(float(g[lo]), float(g[hi]), float(g[hi] / g[lo]), u[lo], u[hi], coord)


@dataclass
class CheckReport:
    check: str
    params: dict
    seed: int | None
    passed: bool
    payload: dict

    def to_dict(self) -> dict:
        return {"check": self.check, "params": self.params, "seed": self.seed, "pass": self.passed,
                "payload": self.payload}


def rearrangement_sweep(count: int, seed: int, k_range=(2, 64)) -> CheckReport:
    """tail_rearrangement_check on ``count`` random (a, l) pairs, with a mix of spread and sparse a."""
    rng = _rng(seed)
    worst = -math.inf
    fails = 0
    for _ in range(count):
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        a = rng.standard_normal(k)
        if rng.random() < 0.5:
            a[rng.random(k) < rng.random()] = 0
            if not a.any():
                a[int(rng.integers(k))] = 1
        a /= np.linalg.norm(a)
        l = int(rng.integers(1, k + 1))
        lhs, rhs, ok = tail_rearrangement_check(a, l)
        worst = max(worst, lhs - rhs)
        fails += not ok
    return CheckReport("tail-rearrangement", {"count": count, "k_range": list(k_range)}, seed, fails == 0,
                       {"violations": fails, "max_lhs_minus_rhs": worst})


def khinchine_sweep(count: int, seed: int, k_max: int = 12) -> CheckReport:
    """E_2 = ||a||_2 and 2^-1/2 <= E_1 <= E_2 on random unit directions with exact enumeration."""
    rng = _rng(seed)
    worst_e2 = 0.0
    fails = 0
    for _ in range(count):
        k = int(rng.integers(1, k_max + 1))
        a = random_unit(k, rng)
        e1, e2 = e_p_exact(a, 1), e_p_exact(a, 2)
        worst_e2 = max(worst_e2, abs(e2 - 1.0))
        fails += not (2 ** -0.5 - SLACK <= e1 <= e2 + SLACK)
    return CheckReport("khinchine", {"count": count, "k_max": k_max}, seed, fails == 0 and worst_e2 <= SLACK,
                       {"sandwich_violations": fails, "max_abs_e2_minus_norm": worst_e2})
