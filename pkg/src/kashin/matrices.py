"""Sign matrices, the split system [sI, B] / [-B^T, sI], Walsh matrices and norms."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exact import QuadValue

VARIANTS = ("exact-sqrt", "floor-sqrt")
MAX_WALSH_T = 12


def _side(side: str) -> str:
    if side in ("A", "E"):
        return "A"
    if side in ("Abar", "Eperp"):
        return "Abar"
    raise ValueError(f"unknown side {side!r}; expected A/E or Abar/Eperp")


@dataclass(frozen=True, eq=False)
class SignMatrix:
    """A k x k matrix with entries in {-1, +1}, stored as a read-only int8 array."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        e = np.array(self.entries, dtype=np.int8, copy=True)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 1:
            raise ValueError(f"sign matrix must be square and non-empty, got shape {e.shape}")
        if not np.all(np.abs(e) == 1):
            raise ValueError("sign matrix entries must be +1 or -1")
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_rows(cls, rows) -> "SignMatrix":
        return cls(np.asarray(rows))

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def rows(self) -> list[list[int]]:
        return self.entries.astype(int).tolist()

    def transpose(self) -> "SignMatrix":
        return SignMatrix(self.entries.T)

    def flipped(self, i: int, j: int) -> "SignMatrix":
        e = self.entries.copy()
        e[i, j] = -e[i, j]
        return SignMatrix(e)

    def digest(self) -> str:
        """sha256 of the compact JSON ``{"k": k, "rows": rows}``."""
        payload = json.dumps({"k": self.k, "rows": self.rows}, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(np.all(self.entries == other.entries))

    def __hash__(self) -> int:
        return hash((self.k, self.entries.tobytes()))

    def __repr__(self) -> str:
        return f"SignMatrix(k={self.k}, rows={self.rows})"


@dataclass(frozen=True)
class SplitSystem:
    """The pair A = [sI, B] and Abar = [-B^T, sI], kept implicit as (k, B, variant).

    ``s`` is sqrt(k) for ``exact-sqrt`` and floor(sqrt(k)) for ``floor-sqrt``.
    """

    b: SignMatrix
    variant: str = "exact-sqrt"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def k(self) -> int:
        return self.b.k

    @property
    def scale(self) -> float:
        return math.sqrt(self.k) if self.variant == "exact-sqrt" else float(math.isqrt(self.k))

    def scale_power(self, m: int) -> QuadValue:
        """Exact ``s**m`` as an element of Z[sqrt(k)]."""
        if self.variant == "exact-sqrt":
            return QuadValue.sqrt_power(m, self.k)
        return QuadValue(math.isqrt(self.k) ** m, 0, self.k)

    def integer_frame(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """The k x 2k matrix with s replaced by 1, and a mask of the scaled columns.

        Any minor of the true matrix is the same minor of the frame times
        ``s**(number of scaled columns used)``.
        """
        k = self.k
        b = self.b.entries.astype(np.int64)
        eye = np.eye(k, dtype=np.int64)
        mask = np.zeros(2 * k, dtype=bool)
        if _side(side) == "A":
            frame = np.hstack([eye, b])
            mask[:k] = True
        else:
            frame = np.hstack([-b.T, eye])
            mask[k:] = True
        return frame, mask

    def float_matrix(self, side: str) -> np.ndarray:
        frame, mask = self.integer_frame(side)
        out = frame.astype(np.float64)
        out[:, mask] *= self.scale
        return out

    def quad_matrix(self, side: str) -> list[list[QuadValue]]:
        frame, mask = self.integer_frame(side)
        s = self.scale_power(1)
        k = self.k
        return [[s * int(v) if mask[j] else QuadValue(int(v), 0, k) for j, v in enumerate(row)]
                for row in frame]


def lp_norm(x, p: int, mode: str = "normalized") -> float:
    """``(n^-1 sum |x_i|^p)^(1/p)`` when normalized, the plain l_p norm otherwise."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty vector")
    if p == 1:
        s = float(np.abs(x).sum())
    elif p == 2:
        top = float(np.abs(x).max())
        # scale first so tiny or huge entries neither underflow nor overflow
        s = top * math.sqrt(float(np.dot(x / top, x / top))) if top > 0 else 0.0
    else:
        raise ValueError(f"p must be 1 or 2, got {p}")
    if mode == "plain":
        return s
    if mode != "normalized":
        raise ValueError(f"unknown mode {mode!r}")
    return s / x.size ** (1.0 / p)


def build_split(b: SignMatrix, variant: str = "exact-sqrt") -> SplitSystem:
    return SplitSystem(b, variant)


def apply_row(a, side: str, sys: SplitSystem) -> np.ndarray:
    """Row vector ``a`` times A (side A/E) or Abar (side Abar/Eperp)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size != sys.k:
        raise ValueError(f"coefficient vector has length {a.size}, expected {sys.k}")
    return a @ sys.float_matrix(side)


def walsh_matrix(t: int) -> SignMatrix:
    """The 2^t x 2^t Walsh matrix W[sigma, eps] = prod_{i in sigma} eps_i.

    Row index bit i set means i is in sigma; column index bit i set means
    eps_i = -1.  So the entry is (-1)**popcount(row & col).
    """
    if t < 1:
        raise ValueError("t must be positive")
    if t > MAX_WALSH_T:
        raise MemoryError(f"2^{t} x 2^{t} Walsh matrix exceeds the limit t <= {MAX_WALSH_T}")
    h = np.array([[1, 1], [1, -1]], dtype=np.int8)
    w = np.ones((1, 1), dtype=np.int8)
    for _ in range(t):
        w = np.kron(h, w)
    return SignMatrix(w)


def walsh_bad_vector(t: int) -> np.ndarray:
    """Indicator of the rows sigma contained in {1, ..., t/2}."""
    if t < 1 or t % 2:
        raise ValueError("t must be a positive even integer")
    a = np.zeros(2 ** t)
    a[: 2 ** (t // 2)] = 1.0
    return a


def random_signs(shape, seed: int) -> np.ndarray:
    """Deterministic i.i.d. uniform +-1 int8 array of the given shape.

    Bits come from ``PCG64(SeedSequence(seed)).random_raw()``: word w,
    bit j (least significant first) fills entry ``64*w + j`` in row-major
    order, and a set bit means -1.  Both generators are fixed algorithms,
    so the output does not depend on platform or numpy version.
    """
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    shape = tuple(int(d) for d in np.atleast_1d(shape))
    n = math.prod(shape)
    bg = np.random.PCG64(np.random.SeedSequence(seed))
    words = np.atleast_1d(bg.random_raw(max(1, -(-n // 64)))).astype("<u8")
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")[:n]
    return (1 - 2 * bits.astype(np.int8)).reshape(shape)


def random_sign_matrix(k: int, seed: int) -> SignMatrix:
    """Uniform random k x k sign matrix; see ``random_signs`` for the bit layout."""
    if k < 1:
        raise ValueError("k must be positive")
    return SignMatrix(random_signs((k, k), seed))


def matrix_to_dict(sys: SplitSystem) -> dict:
    return {"k": sys.k, "variant": sys.variant, "rows": sys.b.rows}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_matrix(path, sys: SplitSystem, run_config: dict | None = None) -> None:
    doc = matrix_to_dict(sys)
    if run_config is not None:
        doc["run_config"] = run_config
    Path(path).write_text(dumps_json(doc))


def read_matrix(path) -> SplitSystem:
    doc = json.loads(Path(path).read_text())
    return matrix_from_dict(doc)


def matrix_from_dict(doc: dict) -> SplitSystem:
    b = SignMatrix.from_rows(doc["rows"])
    if b.k != doc["k"]:
        raise ValueError(f"declared k={doc['k']} but matrix is {b.k} x {b.k}")
    return SplitSystem(b, doc.get("variant", "exact-sqrt"))
