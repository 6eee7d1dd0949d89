"""Self-checks behind ``dagcache verify``. Each returns ``(passed, detail)``."""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .objective import brute_force_optimum
from .online import default_period, estimator_moment_check, run_periods
from .simulator import run
from .workload import oracle_instances, random_instance, simple_example_trace

E_FACTOR = 1.0 - 1.0 / math.e


def slot_capacity(catalog, fraction: float) -> float:
    """Whole number of (equal) entry slots, at least one."""
    return max(1.0, round(fraction * len(catalog))) * float(catalog.sizes[0])


def simple() -> tuple[bool, str]:
    trace = simple_example_trace()
    lru = run(trace, "lru", 500.0)
    ada = run(trace, "heuristic", 500.0, beta=0.6)
    contents = [r.cache_after for r in ada.per_job]
    ok = (lru.hits == 0 and lru.total_work == 1100.0
          and ada.hits == 8 and ada.accessed_rdds == 22 and ada.total_work == 300.0
          and contents[0] == ("R2",) and all(c == ("R1",) for c in contents[1:]))
    return ok, (f"lru hit={lru.hit_ratio_count:.3f} work={lru.total_work:g}; "
                f"heuristic hit={ada.hits}/{ada.accessed_rdds} work={ada.total_work:g}")


def sandwich(catalogs: int = 20, states: int = 20, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for c in range(catalogs):
        cat = random_instance([seed, c], max_entries=12)
        layout = cat.layout()
        for _ in range(states):
            y = rng.random(len(cat)) ** rng.choice([0.3, 1.0, 3.0])
            L, M = kernels.relaxed(layout, y), kernels.multilinear(layout, y)
            if M > L + 1e-9 or M < E_FACTOR * L - 1e-9:
                return False, f"catalog {c}: L={L} multilinear={M}"
            if L > 0:
                worst = min(worst, M / L)
    return True, f"min multilinear/L = {worst:.4f} >= {E_FACTOR:.4f}"


def estimator(instances: int = 5, trials: int = 5000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, cat in enumerate(oracle_instances(instances, seed=seed + 100)):
        y = rng.random(len(cat))
        rep = estimator_moment_check(cat, y, default_period(cat), trials, seed=[seed, i])
        worst = max(worst, rep.deviation)
        if not (rep.unbiased(4.0) and rep.within_bound):
            return False, f"instance {i}: deviation {rep.deviation:.2f} se, E|z|^2={rep.mean_sq_norm:.3g} bound={rep.bound:.3g}"
    return True, f"max deviation {worst:.2f} standard errors"


def convergence(instances: int = 3, seeds: int = 5, periods: int = 300, seed: int = 0) -> tuple[bool, str]:
    worst = math.inf
    for i in range(instances):
        cat = random_instance([seed, 200 + i], max_entries=10, equal_sizes=True)
        capacity = slot_capacity(cat, 0.4)
        _, opt = brute_force_optimum(cat, capacity)
        tail = np.mean([run_periods(cat, capacity, periods, seed=[seed, i, s]).tail_mean(periods // 5)
                        for s in range(seeds)])
        ratio = tail / opt if opt > 0 else 1.0
        worst = min(worst, ratio)
        if ratio < E_FACTOR:
            return False, f"instance {i}: tail F / F* = {ratio:.3f}"
    return True, f"min tail F / F* = {worst:.3f}"


SUITES = {"simple": simple, "sandwich": sandwich, "estimator": estimator, "convergence": convergence}
