"""Total work, caching gain and its concave relaxation.

All vector-valued quantities are indexed in catalog order, i.e. position
``i`` refers to ``catalog.fingerprints[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .dag import Catalog, Fingerprint, JobDag
from .errors import CatalogTooLargeError, ValidationError

CAPACITY_RTOL = 1e-9


@dataclass(frozen=True)
class Placement:
    """Integral cache vector: the set of cached fingerprints and the budget."""
    cached: frozenset
    capacity: float = float("inf")

    def __post_init__(self):
        object.__setattr__(self, "cached", frozenset(self.cached))

    def __contains__(self, fp):
        return fp in self.cached

    def __len__(self):
        return len(self.cached)

    def used(self, catalog: Catalog) -> float:
        return float(sum(catalog.entries[fp].size for fp in self.cached))

    def check(self, catalog: Catalog) -> "Placement":
        unknown = [fp for fp in self.cached if fp not in catalog.entries]
        if unknown:
            raise ValidationError(f"placement references unknown fingerprint {unknown[0]}")
        used = self.used(catalog)
        if used > self.capacity * (1 + CAPACITY_RTOL) + CAPACITY_RTOL:
            raise ValidationError(f"placement uses {used:g} MB of a {self.capacity:g} MB cache")
        return self

    def to_vector(self, catalog: Catalog) -> np.ndarray:
        x = np.zeros(len(catalog))
        for fp in self.cached:
            x[catalog.index(fp)] = 1.0
        return x

    @classmethod
    def from_vector(cls, catalog: Catalog, x, capacity: float = float("inf")) -> "Placement":
        fps = catalog.fingerprints
        return cls(frozenset(fps[i] for i in np.flatnonzero(np.asarray(x) > 0.5)), capacity)

    def labels(self, catalog: Catalog) -> list[str]:
        return sorted(catalog.entries[fp].label for fp in self.cached)


@dataclass
class FractionalState:
    """Fractional marginals ``y`` in catalog order plus the cache budget."""
    y: np.ndarray
    capacity: float

    def as_dict(self, catalog: Catalog) -> dict[Fingerprint, float]:
        return dict(zip(catalog.fingerprints, map(float, self.y)))


def as_vector(catalog: Catalog, y) -> np.ndarray:
    """Coerce a Placement, FractionalState, mapping, fingerprint set or array."""
    if isinstance(y, FractionalState):
        vec = np.asarray(y.y, dtype=np.float64)
    elif isinstance(y, Placement):
        vec = y.to_vector(catalog)
    elif isinstance(y, Mapping):
        vec = np.zeros(len(catalog))
        for fp, val in y.items():
            vec[catalog.index(fp)] = val
    elif isinstance(y, (set, frozenset)):
        vec = Placement(frozenset(y)).to_vector(catalog)
    else:
        vec = np.asarray(y, dtype=np.float64)
    if vec.shape != (len(catalog),):
        raise ValidationError(f"expected a vector of length {len(catalog)}, got shape {vec.shape}")
    return vec


def _boxed(catalog, y):
    vec = as_vector(catalog, y)
    if np.any(vec < 0) or np.any(vec > 1) or not np.all(np.isfinite(vec)):
        raise ValidationError("fractional state must lie in [0, 1]")
    return vec


def total_work(dag: JobDag) -> float:
    return dag.total_cost()


def expected_total_work(catalog: Catalog) -> float:
    if not catalog.jobs:
        raise ValidationError("catalog has no jobs")
    return float(sum(rec.rate * rec.dag.total_cost() for rec in catalog.jobs.values()))


def job_work_under_placement(dag: JobDag, x: Placement | Iterable[Fingerprint]) -> float:
    """Work of one job when every node with a cached successor-or-self is skipped."""
    cached = x.cached if isinstance(x, Placement) else frozenset(x)
    fps = dag.fingerprints()
    work = 0.0
    for v, node in enumerate(dag.nodes):
        if fps[v] in cached or any(fps[u] in cached for u in dag.successors(v)):
            continue
        work += node.cost
    return work


def caching_gain(catalog: Catalog, x) -> float:
    """Reduction of expected total work under an integral placement."""
    if isinstance(x, Placement):
        x.check(catalog)
    vec = as_vector(catalog, x)
    if not np.all((vec == 0) | (vec == 1)):
        raise ValidationError("caching_gain expects an integral placement")
    return kernels.multilinear(catalog.layout(), vec)


def relaxed_gain(catalog: Catalog, y) -> float:
    return kernels.relaxed(catalog.layout(), _boxed(catalog, y))


def multilinear_gain(catalog: Catalog, y) -> float:
    """Expected caching gain when each entry is cached independently with probability ``y``."""
    return kernels.multilinear(catalog.layout(), _boxed(catalog, y))


def supergradient(catalog: Catalog, y) -> np.ndarray:
    """Upper supergradient of the relaxed gain; ties at a saturated term count as active."""
    return kernels.supergradient(catalog.layout(), _boxed(catalog, y))


# -- exhaustive oracle --------------------------------------------------------

class _ClosureEvaluator:
    """Batch evaluation of the caching gain straight from successor sets."""

    def __init__(self, catalog: Catalog):
        self.n = len(catalog)
        weights, closures = [], []
        for rec in catalog.jobs.values():
            dag = rec.dag
            for v, node in enumerate(dag.nodes):
                members = [v, *sorted(dag.successors(v))]
                weights.append(rec.rate * node.cost)
                closures.append([int(rec.gids[u]) for u in members])
        width = max((len(c) for c in closures), default=1)
        mat = np.full((len(closures), width), self.n, dtype=np.int64)  # pad -> never cached
        for row, c in enumerate(closures):
            mat[row, :len(c)] = c
        self.weights = np.asarray(weights)
        self.closures = mat

    def __call__(self, X: np.ndarray) -> np.ndarray:
        padded = np.zeros((X.shape[0], self.n + 1), dtype=bool)
        padded[:, :self.n] = X
        covered = padded[:, self.closures].any(axis=2)
        return covered.astype(np.float64) @ self.weights


def _subset_bits(start: int, stop: int, n: int) -> np.ndarray:
    masks = np.arange(start, stop, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def brute_force_optimum(catalog: Catalog, capacity: float, max_entries: int = 25,
                        chunk: int = 1 << 15) -> tuple[Placement, float]:
    """Exact MaxCachingGain by enumerating every feasible subset.

    Ties (within 1e-12 relative) prefer more cached entries, then the
    lexicographically smallest sorted fingerprint tuple.
    """
    n = len(catalog)
    if n > max_entries:
        raise CatalogTooLargeError(f"catalog has {n} entries; exhaustive search limited to {max_entries}")
    sizes = catalog.sizes
    limit = capacity * (1 + CAPACITY_RTOL) + CAPACITY_RTOL
    evaluate = _ClosureEvaluator(catalog)
    total = 1 << n

    best = -np.inf
    for start in range(0, total, chunk):
        bits = _subset_bits(start, min(total, start + chunk), n)
        ok = bits @ sizes <= limit
        if ok.any():
            best = max(best, float(evaluate(bits[ok]).max()))
    tol = 1e-12 * max(1.0, abs(best))

    fps = catalog.fingerprints
    choice = None
    for start in range(0, total, chunk):
        bits = _subset_bits(start, min(total, start + chunk), n)
        bits = bits[bits @ sizes <= limit]
        if not len(bits):
            continue
        vals = evaluate(bits)
        for row in bits[vals >= best - tol]:
            key = (-int(row.sum()), tuple(sorted(fps[i] for i in np.flatnonzero(row))))
            if choice is None or key < choice:
                choice = key
    placement = Placement(frozenset(choice[1]), capacity)
    return placement, best
