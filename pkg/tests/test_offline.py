import numpy as np
import pytest
from conftest import chain_catalog, idx_of
from oracles import E_FACTOR, brute_force_oracle, project_oracle

from dagcache import (FractionalState, Placement, ValidationError, brute_force_optimum, caching_gain,
                      greedy, maximize_relaxation, project_capacity, relaxed_gain, round_fractional)
from dagcache.offline import relaxation_ascent, solve
from dagcache.workload import oracle_instances, random_instance, simple_example_trace


def test_greedy_simple_example():
    cat = simple_example_trace().catalog
    assert greedy(cat, 500.0).labels(cat) == ["R1"]


def test_greedy_everything_fits_and_zero_capacity():
    cat = simple_example_trace().catalog
    assert len(greedy(cat, float(cat.sizes.sum()))) == len(cat)
    assert len(greedy(cat, 0.0)) == 0


def test_greedy_ratio_equal_sizes():
    for k in range(25):
        cat = random_instance([21, k], max_entries=12, equal_sizes=True)
        K = max(1, round(0.3 * len(cat))) * float(cat.sizes[0])
        placement = greedy(cat, K)
        assert placement.used(cat) <= K + 1e-9
        _, opt = brute_force_optimum(cat, K)
        assert caching_gain(cat, placement) >= E_FACTOR * opt - 1e-9


def test_greedy_deterministic_and_feasible():
    for k in range(10):
        cat = random_instance([22, k], max_entries=12)
        K = 0.35 * float(cat.sizes.sum())
        a, b = greedy(cat, K), greedy(cat, K)
        assert a == b
        assert a.used(cat) <= K + 1e-9


def test_projection_examples():
    out = project_capacity([1.0, 1.0], [1.0, 1.0], 1.0)
    np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)
    inside = np.array([0.2, 0.7, 0.1])
    sizes = np.array([1.0, 2.0, 3.0])
    K = float(sizes @ inside)
    np.testing.assert_allclose(project_capacity(inside, sizes, K), inside, atol=1e-9)


def test_projection_over_capacity_warns():
    with pytest.warns(RuntimeWarning):
        out = project_capacity([0.1, 0.2], [1.0, 1.0], 5.0)
    np.testing.assert_array_equal(out, [1.0, 1.0])


def test_projection_matches_exact_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        sizes = rng.uniform(0.1, 3.0, n)
        y_raw = rng.normal(0.5, 1.0, n)
        K = float(rng.uniform(0.0, sizes.sum()))
        got = project_capacity(y_raw, sizes, K)
        np.testing.assert_allclose(got, project_oracle(y_raw, sizes, K), atol=1e-6)
        assert np.all((got >= 0) & (got <= 1))
        assert sizes @ got == pytest.approx(K, abs=1e-9 * max(1.0, K))


def test_projection_kkt():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = 8
        sizes = rng.uniform(0.5, 2.0, n)
        y_raw = rng.normal(0.5, 1.0, n)
        K = float(rng.uniform(0.5, sizes.sum() - 0.5))
        y = project_capacity(y_raw, sizes, K)
        mu = (y_raw - y) / sizes
        interior = (y > 1e-9) & (y < 1 - 1e-9)
        if interior.any():
            m = mu[interior].mean()
            assert np.allclose(mu[interior], m, atol=1e-8)
            # clipped at 0: y_raw - m s <= 0; clipped at 1: y_raw - m s >= 1
            lo, hi = y <= 1e-9, y >= 1 - 1e-9
            assert np.all(y_raw[lo] / sizes[lo] <= m + 1e-8)
            assert np.all((y_raw[hi] - 1) / sizes[hi] >= m - 1e-8)


def test_relaxation_chain_example():
    cat = chain_catalog()
    state = maximize_relaxation(cat, 500.0, 300)
    assert relaxed_gain(cat, state) >= 110 - 1e-3
    zero = maximize_relaxation(cat, 0.0, 10)
    np.testing.assert_array_equal(zero.y, 0)


def test_relaxation_dominates_integral_optimum():
    for k in range(10):
        cat = random_instance([23, k], max_entries=10)
        K = 0.4 * float(cat.sizes.sum())
        res = relaxation_ascent(cat, K, 500)
        _, opt = brute_force_optimum(cat, K)
        assert res.value >= opt - 1e-6 * max(1.0, opt)


def _smoothed_tails():
    for k in range(5):
        cat = random_instance([24, k], max_entries=10, equal_sizes=True)
        K = max(1, round(0.3 * len(cat))) * float(cat.sizes[0])
        res = relaxation_ascent(cat, K, 200)
        yield res.smoothed_values[20:]


@pytest.mark.xfail(strict=True, reason="sliding averages of supergradient iterates oscillate near "
                                       "the optimum; see the decisions ledger")
def test_smoothed_sequence_non_decreasing_after_burn_in():
    for tail in _smoothed_tails():
        assert np.all(np.diff(tail) >= -1e-6 * max(1.0, tail.max()))


def test_smoothed_sequence_drift_is_small_after_burn_in():
    for tail in _smoothed_tails():
        assert np.all(np.diff(tail) >= -1e-3 * max(1.0, tail.max()))
        assert tail[-1] >= tail[0] - 1e-9


def test_rounding_integral_is_unchanged():
    cat = chain_catalog()
    x = np.array([0.0, 1.0, 0.0])
    out = round_fractional(cat, FractionalState(x, 500.0), 0)
    assert out.to_vector(cat).tolist() == x.tolist()


def test_rounding_half_half():
    cat = chain_catalog()
    i1, i2 = idx_of(cat, "R1"), idx_of(cat, "R2")
    y = np.zeros(3)
    y[[i1, i2]] = 0.5
    state = FractionalState(y, 500.0)
    rng = np.random.default_rng(7)
    picks = np.array([round_fractional(cat, state, rng).to_vector(cat) for _ in range(10_000)])
    assert np.all(picks.sum(axis=1) == 1)
    assert abs(picks[:, i1].mean() - 0.5) <= 0.02


def test_rounding_is_always_feasible():
    rng = np.random.default_rng(8)
    cat = random_instance(31, max_entries=12)
    sizes = cat.sizes
    K = 0.4 * float(sizes.sum())
    y = project_capacity(rng.random(len(cat)), sizes, K)
    state = FractionalState(y, K)
    for _ in range(10_000):
        x = round_fractional(cat, state, rng).to_vector(cat)
        assert sizes @ x <= K + 1e-9


def test_rounding_marginals_never_exceed_y():
    rng = np.random.default_rng(9)
    cat = random_instance(32, max_entries=8)
    sizes = cat.sizes
    K = 0.5 * float(sizes.sum())
    y = project_capacity(rng.random(len(cat)), sizes, K)
    xs = np.array([round_fractional(cat, FractionalState(y, K), rng).to_vector(cat) for _ in range(20_000)])
    se = np.sqrt(y * (1 - y) / len(xs)) + 1e-12
    assert np.all(xs.mean(axis=0) <= y + 4 * se)


def test_rounding_rejects_out_of_box():
    cat = chain_catalog()
    with pytest.raises(ValidationError):
        round_fractional(cat, np.array([0.0, 1.2, 0.0]), 0)


def test_end_to_end_pipeline_on_equal_size_instances():
    for cat in oracle_instances(50, seed=5):
        K = max(1, round(0.3 * len(cat))) * float(cat.sizes[0])
        state = maximize_relaxation(cat, K, 300)
        _, opt = brute_force_optimum(cat, K)
        rng = np.random.default_rng(0)
        mean = np.mean([caching_gain(cat, round_fractional(cat, state, rng)) for _ in range(200)])
        assert mean >= E_FACTOR * opt - 0.02 * opt


def test_oversized_entries_get_no_mass():
    cat = random_instance([7, 7], max_entries=12)
    K = 0.3 * float(cat.sizes.sum())
    state = maximize_relaxation(cat, K, 200)
    assert np.all(state.y[cat.sizes > K] == 0)


def test_solve_dispatch():
    cat = simple_example_trace().catalog
    assert solve(cat, 500.0, "greedy").labels(cat) == ["R1"]
    assert isinstance(solve(cat, 500.0, "relax", seed=1), Placement)
    with pytest.raises(ValidationError):
        solve(cat, 500.0, "magic")


def test_brute_force_oracle_agrees_with_solver_value():
    cat = random_instance(40, max_entries=8)
    K = 0.5 * float(cat.sizes.sum())
    assert brute_force_optimum(cat, K)[1] == pytest.approx(brute_force_oracle(cat, K))
