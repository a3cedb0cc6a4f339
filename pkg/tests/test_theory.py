import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from honeysim import theory as T


@pytest.mark.parametrize("k", [3, 4, 8])
@pytest.mark.parametrize("lam", [1, 2, 3, 4])
def test_return_count_matches_enumeration(k, lam):
    l = 2 * lam
    assert T.return_count(k, l) == T.enumerate_return_count(k, l)


def test_return_prob_small_cases():
    # l=2: out and straight back, 1/k of the walks
    assert T.return_prob_exact(4, 2) == pytest.approx(0.25)
    # k=4 l=4: 28 of the 256 walks return, 12 via depth 1 only and 16 via depth 2
    assert T.return_count(4, 4) == 28
    assert T.return_prob_exact(4, 4) == pytest.approx(float(Fraction(28, 256)))
    assert T.return_prob_catalan(4, 4) == pytest.approx(0.09375)


def test_odd_length_never_returns():
    for l in (1, 3, 5):
        assert T.return_count(5, l) == 0
        assert T.return_prob_catalan(5, l) == 0
        assert T.enumerate_return_count(3, l) == 0


@settings(max_examples=60, deadline=None)
@given(k=st.integers(3, 40), lam=st.integers(1, 8))
def test_catalan_form_is_a_lower_bound(k, lam):
    l = 2 * lam
    assert T.return_prob_catalan(k, l) <= T.return_prob_exact(k, l) + 1e-15


def test_catalan_numbers():
    assert [T.catalan(m) for m in range(7)] == [1, 1, 2, 5, 14, 42, 132]


def test_return_prob_mc_within_three_se():
    for l in (2, 4, 6):
        est = T.return_prob_mc(24, l, 10**5, seed=l)
        assert abs(est.z(T.return_prob_exact(24, l))) < 3
    assert T.return_prob_mc(24, 6, 10**5).value <= T.return_prob_mc(24, 4, 10**5).value


def test_tree_params_validation():
    with pytest.raises(ValueError):
        T.return_prob_mc(24, 4, trials=100)
    with pytest.raises(ValueError):
        T.return_count(2, 4)
    assert T.TreeWalkParams(4, 5).half is None


def test_eligible_count_rounds():
    assert T.eligible_count(1024, 0.1) == 102
    assert T.eligible_count(16384, 0.1) == 1638
    assert T.eligible_count(10, 0.01) == 1


def test_sampling_success_examples():
    assert T.sampling_success_exact(1024, 24, 1 / 1024) == 1.0
    assert T.sampling_success_bound(1024, 24, 0.1) == pytest.approx(1 - (0.1 - 1 / 1024) / 24)
    assert T.sampling_success_bound(1024, 24, 0.1) == pytest.approx(0.99588, abs=1e-5)


@pytest.mark.parametrize("n", [256, 1024, 16384])
@pytest.mark.parametrize("k", [8, 24])
@pytest.mark.parametrize("eta", [0.01, 0.1, 0.5])
def test_exact_success_above_bound(n, k, eta):
    assert T.sampling_success_exact(n, k, eta) >= T.sampling_success_bound(n, k, eta) - 1e-12


def test_sampling_success_monotone():
    etas = [0.01, 0.05, 0.1, 0.3, 0.6]
    vals = [T.sampling_success_bound(1024, 24, e) for e in etas]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    ks = [4, 8, 16, 24]
    vals = [T.sampling_success_bound(1024, k, 0.1) for k in ks]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_retention_examples():
    assert T.retention_bound(1.0, 24, 0.1) == pytest.approx(10.508, abs=1e-3)
    assert T.retention_bound(0.9, 24, 0.01) == pytest.approx(0.9 / 0.01, rel=0.01)
    with pytest.raises(ValueError):
        T.retention_bound(1.0, 24, 1.0)
    s = T.retention_sum(1.0, 1024, 24, 0.1)
    assert T.retention_bound(1.0, 24, 0.1) <= s * 1.01


def test_acceptance_game_against_bounds():
    game = T.acceptance_game_mc(1024, 24, 0.1, 2000, seed=1)
    sig, rho = game.sigma, game.rho
    assert sig.value >= T.sampling_success_bound(1024, 24, 0.1)
    assert rho.value >= T.retention_bound(sig.value, 24, 0.1) - 3 * rho.stderr
    assert abs(sig.z(T.sampling_success_exact(1024, 24, 0.1))) < 4
    with pytest.raises(ValueError):
        T.acceptance_game_mc(1024, 24, 0.1, 10, warmup_epochs=10)


def test_acceptance_game_is_seeded():
    a = T.acceptance_game_mc(256, 8, 0.1, 200, seed=3)
    b = T.acceptance_game_mc(256, 8, 0.1, 200, seed=3)
    assert a == b


def test_equivocation_bounds():
    missed, thr = T.equivocation_bounds(21, 3, 8)
    assert thr == pytest.approx(math.sqrt(384) + 1)
    assert thr == pytest.approx(20.596, abs=1e-3)
    assert missed <= 1 / math.e
    assert T.equivocation_bounds(10, 3, 8)[0] > T.equivocation_bounds(30, 3, 8)[0]
    with pytest.raises(ValueError):
        T.equivocation_bounds(1, 3, 8)


def test_regular_multigraph_degrees():
    nbr = T.regular_multigraph(128, 8, np.random.default_rng(0))
    assert nbr.shape == (128, 8)
    assert (np.bincount(nbr.ravel(), minlength=128) == 8).all()


def test_detection_mc_small():
    det = T.detection_mc(trials=60, seed=2)
    assert 0 <= det.detection.value <= 1
    assert 0 < det.visited.value <= 1
    assert det.threshold == pytest.approx(20.596, abs=1e-3)


def test_single_walker_model():
    trace = T.single_walker_model(1024, 24, 3000, seed=4)
    assert trace.degree == 12 and trace.walk_length == 6
    assert trace.failure_rate < 0.05
    assert trace.walker not in trace.samples
    checks = T.walker_checks(trace)
    assert checks["uniform"] and checks["independent"]
    with pytest.raises(ValueError):
        T.single_walker_model(64, 6, 10)


def test_theory_table_small_scale():
    rows = T.theory_checks(seed=0, scale=0.02)
    assert {r.check for r in rows} >= {"return_prob", "sampling_success", "retention_bound",
                                       "equivocation_detection", "walker_failure"}
    assert all(abs(r.z) < 3 for r in rows), [(r.check, r.z) for r in rows]
    text = T.checks_csv(rows)
    assert text.splitlines()[0] == ",".join(T.TABLE_FIELDS)
    assert len(text.splitlines()) == len(rows) + 1


def test_check_row_one_sided():
    assert T.CheckRow("x", "", "lower", 0.5, 0.9, 0.01).z == 0
    assert T.CheckRow("x", "", "lower", 0.5, 0.1, 0.01).z < -3
    assert T.CheckRow("x", "", "upper", 0.5, 0.1, 0.01).z == 0
    assert T.Estimate(0.2, 0.0, 1).z(0.2) == 0
