"""Offline MaxCachingGain: knapsack greedy, relaxation ascent and rounding."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dag import Catalog
from .errors import ConvergenceError, ValidationError
from .objective import FractionalState, Placement, as_vector, caching_gain

DIVERGENCE_WINDOW = 50


def _fingerprint_rank(catalog: Catalog) -> np.ndarray:
    fps = catalog.fingerprints
    rank = np.empty(len(fps), dtype=np.int64)
    rank[np.argsort(np.asarray(fps, dtype=object), kind="stable")] = np.arange(len(fps))
    return rank


def greedy(catalog: Catalog, capacity: float) -> Placement:
    """Better of density greedy (gain per MB) and plain greedy (raw gain).

    Ties go to the smaller entry, then the smaller fingerprint.
    """
    if capacity < 0:
        raise ValidationError("capacity must be non-negative")
    layout = catalog.layout()
    sizes = catalog.sizes
    rank = _fingerprint_rank(catalog)
    fps = catalog.fingerprints
    best, best_gain = None, -np.inf
    for by_density in (True, False):
        picked = kernels.greedy(layout, sizes, capacity, rank, by_density)
        placement = Placement(frozenset(fps[i] for i in picked), capacity)
        gain = caching_gain(catalog, placement)
        if gain > best_gain:
            best, best_gain = placement, gain
    return best


def project_capacity(y_raw, sizes, capacity: float) -> np.ndarray:
    """Euclidean projection onto ``{y in [0,1]^n : sizes . y = capacity}``.

    When the budget exceeds the total size the set is empty; the all-ones
    vector (the closest box point) is returned with a warning.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if capacity < 0:
        raise ValidationError("capacity must be non-negative")
    total = float(sizes.sum())
    if capacity >= total:
        if capacity > total:
            warnings.warn(f"capacity {capacity:g} exceeds total size {total:g}; caching everything",
                          RuntimeWarning, stacklevel=2)
        return np.ones_like(y_raw)
    return kernels.project(y_raw, sizes, capacity)


def project_placeable(y_raw, sizes, capacity: float) -> np.ndarray:
    """:func:`project_capacity` over the entries that fit alone; the rest are pinned to 0.

    An entry larger than the whole cache is in no feasible placement, so
    fractional mass on it could never survive rounding.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    out = np.zeros(len(sizes))
    fits = sizes <= capacity
    if fits.any():
        sub = sizes[fits]
        if capacity >= sub.sum():
            out[fits] = 1.0
        else:
            out[fits] = project_capacity(np.asarray(y_raw, dtype=np.float64)[fits], sub, capacity)
    return out


def uniform_state(sizes, capacity: float) -> np.ndarray:
    """Equal marginals on every entry that fits, filling the capacity where possible."""
    sizes = np.asarray(sizes, dtype=np.float64)
    fits = sizes <= capacity
    total = sizes[fits].sum()
    out = np.zeros_like(sizes)
    if total > 0:
        out[fits] = min(1.0, capacity / total)
    return out


class SlidingAverage:
    """Gain-weighted average of iterates ``floor(k/2)..k`` (1-based)."""

    def __init__(self, dim: int):
        self._cum = [np.zeros(dim)]
        self._wcum = [0.0]

    def push(self, gamma: float, y: np.ndarray) -> np.ndarray:
        self._cum.append(self._cum[-1] + gamma * y)
        self._wcum.append(self._wcum[-1] + gamma)
        k = len(self._cum) - 1
        lo = max(1, k // 2)
        weight = self._wcum[k] - self._wcum[lo - 1]
        return (self._cum[k] - self._cum[lo - 1]) / weight

    def __len__(self):
        return len(self._cum) - 1


@dataclass
class RelaxationResult:
    state: FractionalState
    value: float
    smoothed_values: np.ndarray = field(repr=False)
    raw_values: np.ndarray = field(repr=False)


def relaxation_ascent(catalog: Catalog, capacity: float, iterations: int = 500,
                      gamma0: float | None = None, y0=None) -> RelaxationResult:
    """Projected supergradient ascent of the relaxed gain over the capacity slice.

    Step ``k`` uses gain ``gamma0 / sqrt(k)``; the smoothed iterate is the
    gain-weighted mean of the last half of the trajectory. The best iterate
    seen (raw or smoothed) is returned. Entries larger than ``capacity``
    stay at zero.
    """
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    layout = catalog.layout()
    sizes = catalog.sizes
    y = uniform_state(sizes, capacity) if y0 is None else as_vector(catalog, y0)
    y = project_placeable(y, sizes, capacity)
    if gamma0 is None:
        z = kernels.supergradient(layout, y)
        top = float(np.max(z, initial=0.0))
        gamma0 = 1.0 / top if top > 0 else 1.0

    avg = SlidingAverage(len(sizes))
    smoothed, raw = [], []
    best_y, best_val = y, -np.inf
    falling = 0
    for k in range(1, iterations + 1):
        gamma = gamma0 / math.sqrt(k)
        ybar = avg.push(gamma, y)
        val_raw = kernels.relaxed(layout, y)
        val_bar = kernels.relaxed(layout, ybar)
        raw.append(val_raw)
        smoothed.append(val_bar)
        for cand, val in ((y, val_raw), (ybar, val_bar)):
            if val > best_val:
                best_y, best_val = cand, val
        if len(smoothed) > 1 and val_bar < smoothed[-2]:
            falling += 1
            if falling >= DIVERGENCE_WINDOW:
                raise ConvergenceError(
                    f"smoothed relaxation fell for {falling} consecutive iterations", np.asarray(smoothed))
        else:
            falling = 0
        z = kernels.supergradient(layout, y)
        y = project_placeable(y + gamma * z, sizes, capacity)
    return RelaxationResult(FractionalState(np.array(best_y), capacity), float(best_val),
                            np.asarray(smoothed), np.asarray(raw))


def maximize_relaxation(catalog: Catalog, capacity: float, iterations: int = 500,
                        gamma0: float | None = None) -> FractionalState:
    return relaxation_ascent(catalog, capacity, iterations, gamma0).state


def round_fractional(catalog: Catalog, y, rng=None) -> Placement:
    """Randomized pairwise rounding of fractional marginals to a feasible placement.

    Pairs of fractional entries trade size-weighted mass so each marginal is
    preserved in expectation; the final leftover fractional entry is dropped.
    """
    vec = as_vector(catalog, y)
    if np.any(vec < -1e-12) or np.any(vec > 1 + 1e-12) or not np.all(np.isfinite(vec)):
        raise ValidationError("fractional state must lie in [0, 1]")
    vec = np.clip(vec, 0.0, 1.0)
    capacity = y.capacity if isinstance(y, FractionalState) else float(catalog.sizes @ vec)
    rng = np.random.default_rng(rng)
    x = kernels.pairwise_round(vec, catalog.sizes, rng.random(2 * len(vec) + 1))
    return Placement.from_vector(catalog, x, capacity)


def solve(catalog: Catalog, capacity: float, method: str = "greedy", seed=None,
          iterations: int = 500) -> Placement:
    if method == "greedy":
        return greedy(catalog, capacity)
    if method == "relax":
        state = maximize_relaxation(catalog, capacity, iterations)
        return round_fractional(catalog, state, seed)
    raise ValidationError(f"unknown method {method!r}; expected 'greedy' or 'relax'")
