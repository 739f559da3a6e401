import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specgain import estimator as est
from specgain.estimator import (
    BanditContext,
    CellEstimator,
    DomainError,
    ImprovementFunction,
    bin_index,
    ftrl_step,
    hallucinated_loss,
    randomization_level,
)


# -- bin_index ---------------------------------------------------------------


@pytest.mark.parametrize("r, k", [(0.0, 1), (1.0, 100), (0.505, 51), (0.5, 51), (0.4999999, 50), (7.0, 100)])
def test_bin_index_examples(r, k):
    assert bin_index(r, 1.0, 100) == k


@pytest.mark.parametrize("args", [(-0.1, 1.0, 10), (0.1, 0.0, 10), (0.1, 1.0, 0), (float("nan"), 1.0, 10)])
def test_bin_index_domain(args):
    with pytest.raises(DomainError):
        bin_index(*args)


@given(st.floats(0, 2, allow_nan=False), st.integers(1, 200), st.floats(0.1, 5))
def test_bin_index_brackets_r(r, b, cap):
    k = bin_index(r, cap, b)
    assert 1 <= k <= b
    if r < cap:
        assert (k - 1) * cap / b <= r < k * cap / b


# -- query / update ----------------------------------------------------------


def test_fresh_table_is_identity():
    f = ImprovementFunction(3, 10)
    for s in range(3):
        for r in np.linspace(0, 1, 23):
            assert f.query(s, r) == pytest.approx(min(r, 1.0), abs=0)


def test_query_reads_updated_cell():
    f = ImprovementFunction(1, 100)
    k = bin_index(0.305, 1.0, 100)
    assert k == 31
    # drive cell 31 to 0.2 at r = 0.305 by setting the stored offset directly
    f.offsets[0, k - 1] = 0.2 - 0.305
    f.counts[0, k - 1] = 1
    assert est.query(f, 0, 0.305) == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("s", [-1, 2])
def test_query_position_out_of_range(s):
    with pytest.raises(DomainError):
        ImprovementFunction(2, 5).query(s, 0.3)


@pytest.mark.parametrize("c", [2.0, 4.0])
def test_first_update_moves_by_cap_over_c(c):
    f = ImprovementFunction(1, 10, gain_cap=1.0, coefficient=c)
    f.update(0, 0.3, 0.8)
    assert f.query(0, 0.3) == pytest.approx(0.3 + 1.0 / c, abs=1e-12)
    f2 = ImprovementFunction(1, 10, gain_cap=1.0, coefficient=c)
    f2.update(0, 0.3, 0.1)
    assert f2.query(0, 0.3) == pytest.approx(0.3 - 1.0 / c, abs=1e-12)


def test_exact_estimate_only_shrinks():
    f = ImprovementFunction(1, 10)
    f.update(0, 0.3, 0.8)  # offset +0.25, estimate 0.55
    before = f.offsets[0, 3]
    f.update(0, 0.3, 0.3 + before)
    assert f.offsets[0, 3] == pytest.approx(math.sqrt(1 / 2) * before, abs=1e-15)
    assert f.counts[0, 3] == 2


def test_update_matches_published_formula():
    rng = np.random.default_rng(3)
    f = ImprovementFunction(2, 5, gain_cap=1.0, coefficient=4.0)
    for _ in range(500):
        s = int(rng.integers(2))
        r, rs = rng.uniform(-0.2, 1.2, size=2)
        rc, rsc = min(max(r, 0), 1), min(max(rs, 0), 1)
        k = bin_index(rc, 1.0, 5)
        prev = int(f.counts[s, k - 1])
        now = prev + 1
        fv = rc + f.offsets[s, k - 1]
        sign = np.sign(fv - rsc)
        expected = rc + math.sqrt(prev / now) * (fv - rc) - sign / (4.0 * math.sqrt(now))
        f.update(s, r, rs)
        assert f.query(s, rc) == pytest.approx(expected, abs=1e-12)
        assert f.counts[s, k - 1] == now


def test_two_identical_updates_follow_ftrl_trajectory():
    f = ImprovementFunction(1, 4, coefficient=2.0)
    cell = CellEstimator()
    for _ in range(2):
        d = int(np.sign(0.9 - f.query(0, 0.1)))
        f.update(0, 0.1, 0.9)
        cell = ftrl_step(cell, d, 1.0, 2.0)
    assert f.offsets[0, 0] == pytest.approx(cell.offset, rel=1e-9)
    assert f.cell(0, 1).offset == pytest.approx(cell.offset, abs=1e-12)
    assert f.cell(0, 1).rate == pytest.approx(1 / math.sqrt(2))


def test_zero_weight_update_only_rescales():
    f = ImprovementFunction(1, 1)
    f.update(0, 0.5, 1.0)
    off = f.offsets[0, 0]
    f.update(0, 0.5, 0.0, weight=0.0)
    assert f.offsets[0, 0] == pytest.approx(off * math.sqrt(1 / 2))
    assert f.counts[0, 0] == 2


def test_values_track_offsets():
    f = ImprovementFunction(2, 4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        f.update(int(rng.integers(2)), rng.random(), rng.random())
    np.testing.assert_allclose(f.values - f.centers, f.offsets, atol=1e-12)


# -- ftrl_step ---------------------------------------------------------------


def test_ftrl_step_first_sign():
    cell = ftrl_step(CellEstimator(), +1, 1.0)
    assert (cell.offset, cell.count, cell.rate) == (0.5, 1, 1.0)


def test_ftrl_step_zero_sign_scales_only():
    cell = ftrl_step(ftrl_step(CellEstimator(), 1, 1.0), -1, 1.0)
    nxt = ftrl_step(cell, 0, 1.0)
    assert nxt.offset == pytest.approx(cell.offset * nxt.rate / cell.rate, abs=1e-15)


def test_ftrl_step_rejects_bad_sign():
    with pytest.raises(DomainError):
        ftrl_step(CellEstimator(), 2, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([-1, 0, 1]), min_size=1, max_size=2000), st.floats(0.1, 10))
def test_ftrl_step_closed_form(signs, cap):
    cell = CellEstimator()
    total = 0
    for a, d in enumerate(signs, 1):
        cell = ftrl_step(cell, d, cap)
        total += d
        closed = cap / math.sqrt(a) * total / 2
        assert math.isclose(cell.offset, closed, rel_tol=1e-9, abs_tol=1e-12)


def test_offsets_stay_bounded_under_adversary():
    rng = np.random.default_rng(7)
    f = ImprovementFunction(2, 9, gain_cap=1.0)
    s = rng.integers(2, size=100_000)
    r = rng.random(100_000)
    rs = rng.random(100_000)
    for a in range(100_000):
        f.update(int(s[a]), float(r[a]), float(rs[a]))
    v = f.values
    assert v.min() >= -(1 + math.sqrt(9)) and v.max() <= 2.0
    assert f.counts.sum() == 100_000


# -- bandit pieces -----------------------------------------------------------


def test_hallucinated_loss_examples():
    assert hallucinated_loss(0.5, 0.2, 0.1, True) == pytest.approx(3.0)
    assert hallucinated_loss(0.5, 0.2, 0.1, False) == 0.0
    with pytest.raises(DomainError):
        hallucinated_loss(0.5, 0.2, 0.001, True, floor=0.01)
    with pytest.raises(DomainError):
        hallucinated_loss(0.5, 0.2, 0.0, True)


def test_hallucinated_loss_unbiased():
    rng = np.random.default_rng(11)
    p, true = 0.2, abs(0.7 - 0.4)
    draws = np.array([hallucinated_loss(0.7, 0.4, p, e) for e in rng.random(100_000) < p])
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - true) <= 3 * se


@pytest.mark.parametrize("T, tau", [(256, 0.25), (1, 0.5 - 1e-6), (10000, 0.1)])
def test_randomization_level(T, tau):
    assert randomization_level(T) == pytest.approx(tau, rel=1e-12)


def test_randomization_level_domain():
    with pytest.raises(DomainError):
        randomization_level(0)


def test_bandit_context():
    ctx = BanditContext(0.25, 4, 2)
    assert ctx.path_probability_floor == pytest.approx(0.25 / 16)
    with pytest.raises(DomainError):
        BanditContext(0.5, 4, 2)


# -- text format -------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    f = ImprovementFunction(3, 7, gain_cap=1.5, coefficient=2.0)
    rng = np.random.default_rng(1)
    for _ in range(200):
        f.update(int(rng.integers(3)), 1.5 * rng.random(), 1.5 * rng.random())
    g = est.loads(est.dumps(f))
    # the file stores table values, so offsets come back to round-off
    np.testing.assert_allclose(g.offsets, f.offsets, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(g.counts, f.counts)
    assert (g.gain_cap, g.coefficient) == (1.5, 2.0)
    est.save(f, tmp_path / "f.txt")
    assert est.dumps(est.load(tmp_path / "f.txt")) == est.dumps(f)


def test_query_rejects_negative_gain():
    with pytest.raises(DomainError):
        ImprovementFunction(1, 3).query(0, -0.1)


def test_loads_rejects_bad_shape():
    text = est.dumps(ImprovementFunction(2, 3)).splitlines()
    with pytest.raises(DomainError):
        est.loads("\n".join(text[:-1]))
