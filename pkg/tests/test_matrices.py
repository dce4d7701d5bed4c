from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kashin.exact import QuadValue
from kashin.matrices import (MAX_WALSH_T, SignMatrix, SplitSystem, apply_row, build_split, dumps_json,
                             lp_norm, matrix_from_dict, random_sign_matrix, random_signs, read_matrix,
                             walsh_bad_vector, walsh_matrix, write_matrix)

HAD = SignMatrix.from_rows([[1, 1], [1, -1]])


def test_lp_norm_examples():
    assert lp_norm([1, 1, 1, 1], 1) == 1
    assert lp_norm([2, 2, 0, 0, 2, 2, 0, 0], 2) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert lp_norm([3, 4], 2, "plain") == 5
    assert lp_norm([3, -4], 1, "plain") == 7
    with pytest.raises(ValueError):
        lp_norm([], 1)
    with pytest.raises(ValueError):
        lp_norm([1], 3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_normalized_l1_at_most_l2(x):
    assert lp_norm(x, 1) <= lp_norm(x, 2) * (1 + 1e-12) + 1e-300
    n = len(x)
    assert lp_norm(x, 2) == pytest.approx(lp_norm(x, 2, "plain") / math.sqrt(n), rel=1e-12, abs=1e-300)


def test_sign_matrix_validation():
    with pytest.raises(ValueError):
        SignMatrix.from_rows([[1, 0], [1, 1]])
    with pytest.raises(ValueError):
        SignMatrix.from_rows([[1, 1, 1], [1, 1, 1]])
    b = SignMatrix.from_rows([[1, -1], [-1, -1]])
    with pytest.raises(ValueError):
        b.entries[0, 0] = -1
    assert b.flipped(0, 0).rows == [[-1, -1], [-1, -1]]
    assert b.rows == [[1, -1], [-1, -1]]
    assert b.transpose().transpose() == b
    assert len({b, SignMatrix.from_rows(b.rows)}) == 1


def test_build_split_examples():
    one = build_split(SignMatrix.from_rows([[1]]))
    assert one.float_matrix("A").tolist() == [[1.0, 1.0]]
    assert one.float_matrix("Abar").tolist() == [[-1.0, 1.0]]
    s = build_split(HAD)
    r2 = math.sqrt(2)
    assert np.allclose(s.float_matrix("A"), [[r2, 0, 1, 1], [0, r2, 1, -1]])
    q = s.quad_matrix("A")
    assert q[0][0] == QuadValue(0, 1, 2) and q[1][3] == QuadValue(-1, 0, 2)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("variant", ["exact-sqrt", "floor-sqrt"])
def test_rows_orthogonal_exactly(k, variant):
    s = SplitSystem(random_sign_matrix(k, 100 + k), variant)
    a, abar = s.quad_matrix("A"), s.quad_matrix("Abar")
    zero = QuadValue(0, 0, k)
    for ra in a:
        for rb in abar:
            assert sum((x * y for x, y in zip(ra, rb)), zero) == zero


def test_integer_frame_scaling():
    s = SplitSystem(random_sign_matrix(5, 3))
    for side in ("A", "Abar"):
        frame, mask = s.integer_frame(side)
        m = s.float_matrix(side)
        assert np.allclose(m[:, ~mask], frame[:, ~mask])
        assert np.allclose(m[:, mask], math.sqrt(5) * frame[:, mask])
    f = SplitSystem(random_sign_matrix(5, 3), "floor-sqrt")
    assert f.scale == 2.0 and f.scale_power(3) == QuadValue(8, 0, 5)


def test_apply_row_examples():
    s = build_split(HAD)
    r2 = math.sqrt(2)
    assert np.allclose(apply_row([1, 0], "A", s), [r2, 0, 1, 1])
    assert np.allclose(apply_row(np.array([1, -1]) / r2, "A", s), [1, -1, 0, r2])
    assert np.allclose(apply_row([1], "Abar", build_split(SignMatrix.from_rows([[1]]))), [-1, 1])
    with pytest.raises(ValueError):
        apply_row([1, 2, 3], "A", s)
    with pytest.raises(ValueError):
        apply_row([1, 2], "C", s)


def test_walsh_small():
    assert walsh_matrix(1).rows == [[1, 1], [1, -1]]
    w2 = walsh_matrix(2)
    assert w2.rows[0] == [1, 1, 1, 1]
    assert w2.k == 4


@pytest.mark.parametrize("t", range(1, 9))
def test_walsh_orthogonality(t):
    w = walsh_matrix(t).entries.astype(np.int64)
    assert np.array_equal(w @ w.T, (2 ** t) * np.eye(2 ** t, dtype=np.int64))


def test_walsh_entry_is_character():
    t = 3
    w = walsh_matrix(t).entries
    for sigma in range(2 ** t):
        for col in range(2 ** t):
            eps = [-1 if (col >> i) & 1 else 1 for i in range(t)]
            assert w[sigma, col] == math.prod(eps[i] for i in range(t) if (sigma >> i) & 1)


def test_walsh_limits():
    with pytest.raises(ValueError):
        walsh_matrix(0)
    with pytest.raises(MemoryError):
        walsh_matrix(MAX_WALSH_T + 1)
    with pytest.raises(ValueError):
        walsh_bad_vector(3)


def test_walsh_bad_vector_norms_t2():
    a = walsh_bad_vector(2)
    assert a.tolist() == [1, 1, 0, 0]
    b = walsh_matrix(2)
    k = b.k
    ab = a @ b.entries
    assert lp_norm(math.sqrt(k) * a, 1) == pytest.approx(1, abs=1e-15)
    assert lp_norm(ab, 1) == pytest.approx(1, abs=1e-15)
    assert lp_norm(math.sqrt(k) * a, 2) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert lp_norm(ab, 2) == pytest.approx(math.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("t", [2, 4, 6, 8])
def test_walsh_ratio_and_parseval(t):
    b = walsh_matrix(t)
    k = b.k
    a = walsh_bad_vector(t)
    assert int(a.sum()) == 2 ** (t // 2)
    s = SplitSystem(b)
    x = apply_row(a, "A", s)
    assert lp_norm(x, 2) / lp_norm(x, 1) == pytest.approx(k ** 0.25, abs=1e-12)
    ab = a @ b.entries.astype(np.int64)
    assert int(ab @ ab) == k * int(a @ a)


def test_random_sign_matrix_determinism():
    a = random_sign_matrix(6, 12345)
    assert a == random_sign_matrix(6, 12345)
    assert a != random_sign_matrix(6, 12346)
    with pytest.raises(ValueError):
        random_sign_matrix(0, 1)
    with pytest.raises(ValueError):
        random_sign_matrix(3, -1)


def test_random_sign_matrix_pinned_bits():
    # pins the documented bit layout: PCG64(SeedSequence(0)) words, LSB first, set bit -> -1
    word = int(np.random.PCG64(np.random.SeedSequence(0)).random_raw())
    expect = [[-1 if (word >> (3 * i + j)) & 1 else 1 for j in range(3)] for i in range(3)]
    assert random_sign_matrix(3, 0).rows == expect
    assert random_signs((2, 5), 9).shape == (2, 5)


@pytest.mark.parametrize("seed", range(5))
def test_random_sign_matrix_balanced(seed):
    assert abs(random_sign_matrix(64, seed).entries.mean()) < 0.1


def test_matrix_json_round_trip(tmp_path):
    s = SplitSystem(random_sign_matrix(7, 4), "floor-sqrt")
    p = tmp_path / "m.json"
    write_matrix(p, s, {"command": "gen"})
    back = read_matrix(p)
    assert back.b == s.b and back.variant == s.variant
    doc = json.loads(p.read_text())
    assert set(doc) == {"k", "variant", "rows", "run_config"}
    with pytest.raises(ValueError):
        matrix_from_dict({"k": 3, "rows": [[1, 1], [1, 1]]})
    assert dumps_json({"b": 1, "a": 2}) == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_digest_depends_on_entries():
    a = random_sign_matrix(4, 1)
    assert a.digest() == SignMatrix.from_rows(a.rows).digest()
    assert a.digest() != a.flipped(2, 3).digest()
