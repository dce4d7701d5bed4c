from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from helpers import all_sign_matrices, float_section_ratio
from kashin.certifier import BudgetExceeded, anderson_constant
from kashin.matrices import SignMatrix, SplitSystem, lp_norm, random_sign_matrix, walsh_bad_vector, walsh_matrix
from kashin.oracle import mc_ascent, ratio_at, section_oracle, subspace_residual

HAD = SplitSystem(SignMatrix.from_rows([[1, 1], [1, -1]]))
FOUR_MINUS = 4 - 2 * math.sqrt(2)


def _check_report(rep, sys):
    x = rep.maximizer
    assert lp_norm(x, 2) == pytest.approx(1, abs=1e-12)
    assert subspace_residual(x, rep.side, sys) < 1e-10
    assert lp_norm(x, 2) / lp_norm(x, 1) == pytest.approx(rep.value, abs=1e-10)
    assert ratio_at(rep.coefficients, rep.side, sys) == pytest.approx(rep.value, abs=1e-10)
    assert all(abs(x[j]) < 1e-10 for j in rep.zero_set)


def test_ratio_at_examples():
    one = SplitSystem(SignMatrix.from_rows([[1]]))
    assert ratio_at([1], "A", one) == pytest.approx(1)
    assert ratio_at([1, -1], "A", HAD) == pytest.approx(FOUR_MINUS, abs=1e-15)
    w = SplitSystem(walsh_matrix(2))
    assert ratio_at(walsh_bad_vector(2), "A", w) == pytest.approx(math.sqrt(2), abs=1e-15)
    with pytest.raises(ValueError):
        ratio_at([0, 0], "A", HAD)


def test_section_oracle_hadamard():
    for side in ("A", "Abar"):
        rep = section_oracle(side, HAD)
        assert rep.value == pytest.approx(FOUR_MINUS, abs=1e-12)
        assert rep.value_str == "1.17157287525380990239662255158"
        assert not rep.lower_bound_only and rep.method == "section-exhaustive"
        _check_report(rep, HAD)


def test_section_oracle_k1():
    rep = section_oracle("E", SplitSystem(SignMatrix.from_rows([[1]])))
    assert rep.value == 1 and rep.zero_set == ()


def test_oracle_matches_anderson_all_k2():
    for rows in all_sign_matrices(2):
        s = SplitSystem(SignMatrix.from_rows(rows))
        for side in ("E", "Eperp"):
            assert section_oracle(side, s).value == pytest.approx(float(anderson_constant(s, side)[0]), abs=1e-9)


def _float_exhaustive(m):
    """Max over every coordinate zero set (any size) whose section is a line, in floats."""
    k, n = m.shape
    best = 0.0
    for size in range(k - 1, n):
        for z in itertools.combinations(range(n), size):
            r = float_section_ratio(m, z)
            if r is not None:
                best = max(best, r)
    return best


@pytest.mark.parametrize("rows", [
    [[1, 1, 1], [1, 1, 1], [1, 1, 1]],
    [[1, 1, 1], [1, 1, 1], [1, -1, 1]],
    [[1, -1, 1, 1], [-1, 1, -1, -1], [1, 1, 1, -1], [1, 1, 1, -1]],
])
def test_degenerate_sections_recurse(rows):
    s = SplitSystem(SignMatrix.from_rows(rows))
    for side in ("A", "Abar"):
        rep = section_oracle(side, s)
        assert rep.value == pytest.approx(_float_exhaustive(s.float_matrix(side)), abs=1e-9)
        _check_report(rep, s)


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_oracle_matches_anderson_random(k):
    for seed in range(3):
        s = SplitSystem(random_sign_matrix(k, 1000 * k + seed))
        for side in ("E", "Eperp"):
            rep = section_oracle(side, s)
            _, cert = anderson_constant(s, side)
            assert rep.exact is not None
            assert rep.value == pytest.approx(float(cert), abs=1e-9)
            _check_report(rep, s)


def test_oracle_parallel_deterministic():
    s = SplitSystem(random_sign_matrix(5, 3))
    a = section_oracle("E", s, workers=1)
    b = section_oracle("E", s, workers=2)
    assert a.to_dict() == b.to_dict()


def test_oracle_budget():
    with pytest.raises(BudgetExceeded):
        section_oracle("E", SplitSystem(random_sign_matrix(6, 1)), max_subsets=10)


def test_mc_ascent_hadamard():
    rep = mc_ascent("A", HAD, 100, 1)
    assert rep.lower_bound_only and rep.method == "mc-ascent"
    assert rep.value == pytest.approx(FOUR_MINUS, abs=1e-9)


def test_mc_ascent_walsh_finds_bad_section():
    rep = mc_ascent("A", SplitSystem(walsh_matrix(2)), 50, 3)
    assert rep.value >= math.sqrt(2) - 1e-9


@pytest.mark.parametrize("k", [3, 4, 5])
def test_mc_ascent_is_a_lower_bound(k):
    for seed in range(3):
        s = SplitSystem(random_sign_matrix(k, seed))
        for side in ("A", "Abar"):
            exact = section_oracle(side, s).value
            rep = mc_ascent(side, s, 20, seed)
            assert rep.value <= exact + 1e-9
            assert subspace_residual(rep.maximizer, side, s) < 1e-10


def test_mc_ascent_rejects_zero_samples():
    with pytest.raises(ValueError):
        mc_ascent("A", HAD, 0, 1)


def test_report_json_fields():
    d = section_oracle("E", HAD).to_dict()
    assert set(d) == {"value", "maximizer", "zero_set", "method", "lower_bound_only", "side"}
    assert len(d["value"].replace(".", "").lstrip("0")) == 30
    assert np.isfinite(d["maximizer"]).all()
