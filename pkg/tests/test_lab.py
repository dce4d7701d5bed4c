from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from kashin.certifier import split_constant
from kashin.lab import (CSV_COLUMNS, eta_fit, local_search, mc_success_experiment, read_records_csv,
                        records_csv, restriction_experiment, rethreshold, sample_seed)
from kashin.matrices import SignMatrix


def test_sample_seeds():
    assert sample_seed(1, 4, 0) == sample_seed(1, 4, 0)
    seeds = {sample_seed(1, k, i) for k in (4, 6) for i in range(100)}
    assert len(seeds) == 200
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_k1_always_succeeds():
    summaries, records = mc_success_experiment([1], 10, 1.0, 3)
    assert summaries[0].success_fraction == 1.0
    assert all(r.constant.startswith("1.000000") for r in records)


def test_experiment_is_deterministic_and_worker_independent():
    a = mc_success_experiment([3, 4], 12, 1.8, 5)
    b = mc_success_experiment([3, 4], 12, 1.8, 5)
    c = mc_success_experiment([3, 4], 12, 1.8, 5, workers=2)
    assert records_csv(a[1]) == records_csv(b[1]) == records_csv(c[1])
    assert [s.to_dict() for s in a[0]] == [s.to_dict() for s in c[0]]


def test_summary_invariants():
    summaries, records = mc_success_experiment([3, 4, 5], 30, 1.9, 8)
    for s in summaries:
        assert 0 <= s.success_fraction <= 1
        q = [s.quantiles[p] for p in (25, 50, 75, 95)]
        assert q == sorted(q)
    assert all(float(r.constant) >= 1 for r in records)


def test_budget_skip_reported():
    summaries, records = mc_success_experiment([3, 7], 3, 2.0, 1, max_subsets=500)
    assert summaries[0].skipped is None
    assert summaries[1].skipped and summaries[1].success_fraction is None
    assert {r.k for r in records} == {3}


def test_csv_round_trip():
    _, records = mc_success_experiment([3], 5, 1.5, 2)
    text = records_csv(records)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_records_csv(text)
    assert [(r.k, r.sample_index, r.seed, r.constant, r.passed) for r in back] == \
           [(r.k, r.sample_index, r.seed, r.constant, r.passed) for r in records]


def test_rethreshold_is_exact():
    _, records = mc_success_experiment([4], 20, 3.0, 4)
    fr = rethreshold(records, 2.0)
    assert fr[4] == sum(float(r.constant) <= 2.0 + 1e-15 for r in records) / 20


def test_eta_fit_markers():
    assert eta_fit([(4, 1.0), (6, 1.0), (8, 1.0)]).marker == "no failures observed"
    assert eta_fit([(4, 0.5), (6, 1.0), (8, 1.0)]).eta is None
    with pytest.raises(ValueError):
        eta_fit([(4, 1.5)])


def test_eta_fit_synthetic():
    fit = eta_fit([(k, 1 - math.exp(-0.5 * k)) for k in (2, 4, 6, 8, 10)])
    assert fit.eta == pytest.approx(0.5, abs=1e-6)
    assert "diagnostic" in fit.caveat


@pytest.mark.xfail(strict=True, reason="at k = 4, 6, 8 failure rates grow with k for every threshold; "
                                      "the exponential decay is not visible at desk scale")
def test_eta_fit_real_run_positive(mc_run):
    _, records = mc_run
    fit = eta_fit(list(rethreshold(records, 1.9).items()))
    assert fit.eta is not None and fit.eta > 0


def test_local_search_zero_steps():
    st = local_search(4, 11, 0)
    assert st.best == st.current and st.step == 0
    assert st.best_cert.to_dict() == split_constant(st.best).to_dict()


@pytest.mark.parametrize("mode", ["first-improve", "anneal"])
def test_local_search_deterministic_and_monotone(mode):
    a = local_search(4, 2, 60, mode=mode)
    b = local_search(4, 2, 60, mode=mode)
    assert a.best == b.best and a.best_history == b.best_history and a.rng_state == b.rng_state
    assert all(x >= y for x, y in zip(a.best_history, a.best_history[1:]))
    assert len(a.best_history) == 61


@pytest.mark.parametrize("mode", ["first-improve", "anneal"])
def test_local_search_k2_ground_truth(mode):
    floor = min(split_constant(SignMatrix.from_rows([list(b[:2]), list(b[2:])])).value
                for b in itertools.product((1, -1), repeat=4))
    for seed in range(6):
        st = local_search(2, seed, 100, mode=mode)
        assert st.best_cert.value >= floor
        if st.visited == 16:
            assert st.best_cert.value == floor
    # the Hadamard orbit is reachable from anywhere in one or two flips
    assert any(local_search(2, s, 100, mode=mode).best_cert.value == floor for s in range(6))


def test_local_search_rejects_bad_mode():
    with pytest.raises(ValueError):
        local_search(3, 1, 5, mode="tabu")


def test_restriction_single_row():
    rs = restriction_experiment(0.01, 100, 3, 1)
    assert rs.m == 1
    assert rs.constants == pytest.approx([1.0] * 3, abs=1e-12)
    assert rs.minima == pytest.approx([1.0] * 3, abs=1e-12)


def test_restriction_regression_values():
    rs = restriction_experiment(0.5, 64, 50, 1)
    s = rs.summary()
    assert all(c >= 1 for c in rs.constants)
    assert s["heuristic"] and s["rows"] == 32
    # values recorded at the first seed-pinned run
    assert s["median"] == pytest.approx(5.064454476378975, rel=1e-6)
    assert s["iqr"] == pytest.approx(0.5826446992159067, rel=1e-5)
    again = restriction_experiment(0.5, 64, 50, 1)
    assert again.constants == rs.constants


def test_restriction_rejects_bad_lambda():
    with pytest.raises(ValueError):
        restriction_experiment(1.5, 10, 1, 1)
    with pytest.raises(ValueError):
        restriction_experiment(0.01, 10, 1, 1)
