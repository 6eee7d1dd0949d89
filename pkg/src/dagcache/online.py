"""Online cache adaptation from observed jobs.

Time is split into measurement periods of length ``T``. During a period each
arriving job adds its per-entry recomputation terms to an accumulator; at
the period boundary the accumulator, divided by ``T``, is an unbiased
estimate of a supergradient of the relaxed gain. The fractional state takes
one projected step along it, and the cache is set to a randomized rounding
of the sliding average of recent states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dag import Catalog, JobDag
from .errors import ValidationError
from .objective import FractionalState, Placement, as_vector
from .offline import SlidingAverage, project_capacity, project_placeable, uniform_state

__all__ = [
    "AdaptiveState", "MomentReport", "PeriodTrace", "default_gamma0", "default_period",
    "estimator_moment_check", "job_contributions", "project_capacity", "run_periods",
    "second_moment_bound",
]


def default_period(catalog: Catalog, arrivals_per_period: float = 20.0) -> float:
    total = sum(rec.rate for rec in catalog.jobs.values())
    if total <= 0:
        raise ValidationError("catalog has no arrival rate")
    return arrivals_per_period / total


def default_gamma0(catalog: Catalog, y0: np.ndarray, scale: float = 1.0) -> float:
    """Step constant ``scale / max_v g_v(y0)``, ``g`` the rate-weighted supergradient.

    The first step then moves the steepest coordinate by about ``scale``,
    independent of the units of cost and rate.
    """
    g = kernels.supergradient(catalog.layout(), y0)
    top = float(np.max(g, initial=0.0))
    return scale / top if top > 0 else scale


def second_moment_bound(catalog: Catalog, period: float) -> float:
    """``C^2 |V|^2 (lam^2 + lam/T)`` with ``C`` the largest cost and ``lam`` the largest entry rate."""
    c_max = float(np.max(catalog.costs, initial=0.0))
    lam = float(np.max(catalog.entry_rates(), initial=0.0))
    n = len(catalog)
    return c_max ** 2 * n ** 2 * (lam ** 2 + lam / period)


def job_contributions(catalog: Catalog, job_id: str, y: np.ndarray) -> np.ndarray:
    """Per-entry measurement ``t_w`` contributed by one run of ``job_id`` at state ``y``.

    ``t_w`` sums ``c_v`` over ``w`` and its predecessors ``v`` whose
    path sum of ``y`` (``v`` plus its successors) is at most one.
    """
    layout = catalog.job_layout(job_id)
    t = kernels.subtree_active(layout, y)
    return np.bincount(layout.gid, weights=t, minlength=len(catalog))


class AdaptiveState:
    """Fractional marginals plus the per-period measurement accumulators.

    Single writer: ``observe_job`` and ``end_period`` must be serialized by
    the caller.
    """

    def __init__(self, catalog: Catalog, capacity: float, period: float | None = None,
                 gamma0: float | None = None, y0=None, seed=None, gamma_scale: float = 1.0):
        if capacity < 0:
            raise ValidationError("capacity must be non-negative")
        self.catalog = catalog
        self.capacity = float(capacity)
        self.sizes = catalog.sizes
        self.period_T = float(period) if period is not None else default_period(catalog)
        if not self.period_T > 0:
            raise ValidationError("measurement period must be positive")
        start = uniform_state(self.sizes, capacity) if y0 is None else as_vector(catalog, y0)
        self.y = project_placeable(start, self.sizes, capacity)
        self.gamma0 = float(gamma0) if gamma0 is not None else \
            default_gamma0(catalog, self.y, gamma_scale)
        self.ybar = self.y.copy()
        self.k = 1
        self.rng = np.random.default_rng(seed)
        self.y_history = SlidingAverage(len(catalog))
        self.measurements = np.zeros(len(catalog))
        self.observed = 0
        self._cache: dict[str, np.ndarray] = {}
        self.x = kernels.pairwise_round(self.ybar, self.sizes, self.rng.random(2 * len(self.y) + 1))

    @property
    def state(self) -> FractionalState:
        return FractionalState(self.y.copy(), self.capacity)

    @property
    def placement(self) -> Placement:
        return Placement.from_vector(self.catalog, self.x, self.capacity)

    def observe_job(self, job: str | JobDag, count: int = 1) -> None:
        job_id = job if isinstance(job, str) else self.catalog.job_of_dag(job)
        if count <= 0:
            return
        t = self._cache.get(job_id)
        if t is None:
            t = job_contributions(self.catalog, job_id, self.y)
            self._cache[job_id] = t
        self.measurements += count * t
        self.observed += count

    def end_period(self) -> Placement:
        self.step()
        return self.placement

    def step(self) -> np.ndarray:
        """Close the period; returns the new integral cache vector."""
        z = self.measurements / self.period_T
        gamma = self.gamma0 / math.sqrt(self.k)
        self.ybar = self.y_history.push(gamma, self.y)
        self.y = project_placeable(self.y + gamma * z, self.sizes, self.capacity)
        self.x = kernels.pairwise_round(self.ybar, self.sizes, self.rng.random(2 * len(self.y) + 1))
        self.k += 1
        self.measurements = np.zeros_like(self.measurements)
        self.observed = 0
        self._cache.clear()
        return self.x


# -- Monte Carlo checks ----------------------------------------------------------

@dataclass
class MomentReport:
    mean_z: np.ndarray
    stderr: np.ndarray
    analytic: np.ndarray
    mean_sq_norm: float
    bound: float
    trials: int

    @property
    def deviation(self) -> float:
        """Largest |mean - analytic| in units of standard error (inf if a zero-variance coordinate is off)."""
        diff = np.abs(self.mean_z - self.analytic)
        exact = self.stderr <= 0
        if np.any(diff[exact] > 1e-9 * np.maximum(1.0, np.abs(self.analytic[exact]))):
            return math.inf
        ratio = np.zeros_like(diff)
        ratio[~exact] = diff[~exact] / self.stderr[~exact]
        return float(ratio.max(initial=0.0))

    def unbiased(self, n_se: float = 4.0) -> bool:
        return self.deviation <= n_se

    @property
    def within_bound(self) -> bool:
        return self.mean_sq_norm < self.bound


def estimator_moment_check(catalog: Catalog, y, period: float, trials: int = 10_000,
                           seed=None) -> MomentReport:
    """Sample ``trials`` Poisson measurement periods and compare the estimate's moments.

    The mean of ``z`` is compared with the analytic supergradient; the second
    moment with ``C^2 |V|^2 (lam^2 + lam/T)``, ``C`` the largest cost and
    ``lam`` the largest total rate through one entry.
    """
    vec = np.clip(as_vector(catalog, y), 0.0, 1.0)
    rng = np.random.default_rng(seed)
    job_ids = list(catalog.jobs)
    rates = np.array([catalog.jobs[j].rate for j in job_ids])
    per_job = np.stack([job_contributions(catalog, j, vec) for j in job_ids])
    counts = rng.poisson(rates * period, size=(trials, len(job_ids)))
    z = counts @ per_job / period
    analytic = rates @ per_job
    n = len(catalog)
    bound = second_moment_bound(catalog, period)
    stderr = z.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(n)
    return MomentReport(z.mean(axis=0), stderr, analytic, float(np.mean(np.sum(z * z, axis=1))),
                        bound, trials)


@dataclass
class PeriodTrace:
    gains: np.ndarray              # F(x^(k)) per period
    relaxed: np.ndarray            # L(ybar^(k)) per period
    final: FractionalState = field(repr=False)

    def tail_mean(self, last: int = 100) -> float:
        return float(self.gains[-last:].mean())


def run_periods(catalog: Catalog, capacity: float, periods: int = 500, period: float | None = None,
                seed=None, gamma0: float | None = None, gamma_scale: float = 1.0) -> PeriodTrace:
    """Drive :class:`AdaptiveState` with Poisson job counts for ``periods`` periods."""
    state = AdaptiveState(catalog, capacity, period, gamma0, seed=seed, gamma_scale=gamma_scale)
    arrivals = np.random.default_rng(state.rng.integers(2**63))
    job_ids = list(catalog.jobs)
    means = np.array([catalog.jobs[j].rate for j in job_ids]) * state.period_T
    layout = catalog.layout()
    gains = np.empty(periods)
    relaxed = np.empty(periods)
    for k in range(periods):
        for job_id, count in zip(job_ids, arrivals.poisson(means)):
            state.observe_job(job_id, int(count))
        x = state.step()
        gains[k] = kernels.multilinear(layout, x)
        relaxed[k] = kernels.relaxed(layout, state.ybar)
    return PeriodTrace(gains, relaxed, state.state)
