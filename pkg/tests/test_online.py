import math

import numpy as np
import pytest
from conftest import chain_catalog, idx_of

from dagcache import AdaptiveState, Catalog, chain, estimator_moment_check, run_periods, supergradient
from dagcache.online import default_gamma0, default_period, job_contributions, second_moment_bound
from dagcache.workload import oracle_instances, simple_example_trace


def test_contributions_at_zero_state(chain_cat):
    t = job_contributions(chain_cat, "J", np.zeros(3))
    assert t[idx_of(chain_cat, "R1")] == 100
    assert t[idx_of(chain_cat, "R2")] == 110
    assert t[idx_of(chain_cat, "R0")] == 0


def test_contributions_vanish_through_saturated_terms(chain_cat):
    y = np.zeros(3)
    y[idx_of(chain_cat, "R2")] = 1.0
    y[idx_of(chain_cat, "R1")] = 0.1
    t = job_contributions(chain_cat, "J", y)
    # only the sink's own term (path sum exactly 1, a tie) stays active
    assert t[idx_of(chain_cat, "R1")] == 0
    assert t[idx_of(chain_cat, "R0")] == 0
    assert t[idx_of(chain_cat, "R2")] == 10


def test_observations_accumulate(chain_cat):
    state = AdaptiveState(chain_cat, 500.0, period=10.0, seed=0)
    state.observe_job("J")
    once = state.measurements.copy()
    state.observe_job(chain_cat.jobs["J"].dag)
    np.testing.assert_allclose(state.measurements, 2 * once)


def test_empty_period_keeps_state(chain_cat):
    state = AdaptiveState(chain_cat, 500.0, period=10.0, seed=0)
    y0 = state.y.copy()
    placement = state.end_period()
    np.testing.assert_allclose(state.y, y0, atol=1e-12)
    assert placement.used(chain_cat) <= 500.0
    assert state.k == 2 and not state.measurements.any()


def test_first_step_moves_mass_toward_high_measurements():
    cat = chain_catalog()
    state = AdaptiveState(cat, 500.0, period=10.0, seed=0)
    y0 = state.y.copy()
    state.observe_job("J")
    state.end_period()
    i0, i2 = idx_of(cat, "R0"), idx_of(cat, "R2")
    assert state.y[i2] - y0[i2] > state.y[i0] - y0[i0]
    assert state.y[i2] > y0[i2]


def test_state_stays_in_domain_and_placement_feasible():
    cat = simple_example_trace().catalog
    state = AdaptiveState(cat, 800.0, seed=1)
    rng = np.random.default_rng(0)
    for _ in range(40):
        for job_id, rec in cat.jobs.items():
            state.observe_job(job_id, int(rng.poisson(rec.rate * state.period_T)))
        placement = state.end_period()
        assert np.all((state.y >= 0) & (state.y <= 1))
        assert cat.sizes @ state.y == pytest.approx(800.0, abs=1e-6)
        assert np.all((state.ybar >= -1e-12) & (state.ybar <= 1 + 1e-12))
        assert placement.used(cat) <= 800.0


def test_simple_example_converges_to_r1():
    cat = simple_example_trace().catalog
    hits = 0
    for s in range(100):
        state = AdaptiveState(cat, 500.0, seed=s)
        rng = np.random.default_rng([9, s])
        for _ in range(50):
            for job_id, rec in cat.jobs.items():
                state.observe_job(job_id, int(rng.poisson(rec.rate * state.period_T)))
            placement = state.end_period()
        hits += placement.labels(cat) == ["R1"]
    assert hits >= 90


def test_estimator_chain_mean():
    cat = chain_catalog()
    rep = estimator_moment_check(cat, np.zeros(3), 10.0, 10_000, seed=0)
    i2 = idx_of(cat, "R2")
    assert abs(rep.mean_z[i2] - 110) <= 3 * rep.stderr[i2]
    assert rep.analytic[i2] == 110


def test_estimator_zero_rate_is_zero():
    cat = Catalog()
    cat.register_job(chain(["a", "b"], [3, 4], 1), 1e-12)
    rep = estimator_moment_check(cat, np.zeros(2), 1.0, 1000, seed=0)
    assert not rep.mean_z.any()


def test_estimator_unbiased_on_oracle_instances():
    rng = np.random.default_rng(5)
    for i, cat in enumerate(oracle_instances(5, seed=77)):
        y = rng.random(len(cat))
        rep = estimator_moment_check(cat, y, default_period(cat), 5000, seed=i)
        np.testing.assert_allclose(rep.analytic, supergradient(cat, y), rtol=1e-12)
        assert rep.unbiased(4.0)


def test_second_moment_bound_formula(chain_cat):
    bound = second_moment_bound(chain_cat, 10.0)
    assert bound == pytest.approx(100.0 ** 2 * 3 ** 2 * (1.0 + 1.0 / 10.0))


def test_second_moment_bound_is_not_universal():
    # equal-cost chain: E|z|^2 = (1 + 4 + 9)(lam^2 + lam/T) exceeds 3^2 (lam^2 + lam/T)
    cat = Catalog()
    cat.register_job(chain(["a", "b", "c"], [1, 1, 1], 1), 1.0)
    rep = estimator_moment_check(cat, np.zeros(3), 10.0, 20_000, seed=0)
    assert rep.mean_sq_norm == pytest.approx(14 * 1.1, rel=0.03)
    assert not rep.within_bound


def test_default_period_and_gamma():
    cat = simple_example_trace().catalog
    assert default_period(cat) == pytest.approx(20 / 0.5)
    y0 = np.full(len(cat), 500.0 / cat.sizes.sum())
    g = supergradient(cat, y0)
    assert default_gamma0(cat, y0) == pytest.approx(1.0 / g.max())


def test_run_periods_reaches_optimum_fraction():
    cat = oracle_instances(1, seed=3)[0]
    K = max(1, round(0.3 * len(cat))) * float(cat.sizes[0])
    from dagcache import brute_force_optimum
    _, opt = brute_force_optimum(cat, K)
    trace = run_periods(cat, K, 200, seed=1)
    assert trace.tail_mean(40) >= (1 - 1 / math.e) * opt
    assert len(trace.gains) == 200 and np.all(trace.relaxed >= 0)
