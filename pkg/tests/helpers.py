"""Independent reference computations used only by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np


def cofactor_det(m) -> int:
    """Laplace expansion along the first row."""
    n = len(m)
    if n == 0:
        return 1
    if n == 1:
        return m[0][0]
    total = 0
    for j in range(n):
        if m[0][j]:
            minor = [row[:j] + row[j + 1:] for row in m[1:]]
            total += (-1) ** j * m[0][j] * cofactor_det(minor)
    return total


def all_sign_matrices(k: int):
    for bits in itertools.product((1, -1), repeat=k * k):
        yield [list(bits[i * k:(i + 1) * k]) for i in range(k)]


def float_anderson(m: np.ndarray) -> float:
    """max over (k-1)-column sets C of sqrt(2k) ||d||_2 / ||d||_1, d_j = det m[:, C + j], in floats."""
    k, n = m.shape
    best = 0.0
    for c in itertools.combinations(range(n), k - 1):
        d = np.array([np.linalg.det(m[:, sorted(c + (j,))]) for j in range(n) if j not in c])
        s1 = np.abs(d).sum()
        if s1 > 1e-9:
            best = max(best, math.sqrt(2 * k) * np.linalg.norm(d) / s1)
    return best


def float_section_ratio(m: np.ndarray, zero) -> float | None:
    """Ratio at the line {a : a m[:, zero] = 0} if it is a line, via SVD."""
    k, n = m.shape
    sub = m[:, list(zero)]
    u, s, _ = np.linalg.svd(sub, full_matrices=True)
    rank = int((s > 1e-9).sum())
    if k - rank != 1:
        return None
    x = u[:, -1] @ m
    return math.sqrt(n) * np.linalg.norm(x) / np.abs(x).sum()
