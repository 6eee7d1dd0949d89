"""Cache engines: NoCache, FIFO, LRU, LCS, the score-based heuristic and the gradient policy.

Every engine executes a job the same way unless it overrides
:meth:`CacheEngine.execute`: starting at the sink, a node is looked up; a hit
short-circuits its ancestors, a miss first materializes the parents, then
charges the node's cost and offers its output for admission.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels
from .dag import Catalog, Fingerprint, JobDag
from .errors import ConfigError, ValidationError
from .online import AdaptiveState

POLICIES = ("nocache", "fifo", "lru", "lcs", "heuristic", "adaptive-grad")
UPDATE_MODES = ("refresh", "evict-insert")
POLICY_OPTIONS = {
    "nocache": frozenset(), "fifo": frozenset(), "lru": frozenset(), "lcs": frozenset(),
    "heuristic": frozenset({"beta", "update_mode"}),
    "adaptive-grad": frozenset({"period", "gamma0", "gamma_scale", "seed", "start"}),
}
_EPS = 1e-9


@dataclass
class NodeAccess:
    node: int
    fingerprint: Fingerprint
    label: str
    hit: bool
    charged: float
    size: float


@dataclass
class JobExecutionRecord:
    job_id: str
    accesses: list[NodeAccess] = field(default_factory=list)
    arrival: float = 0.0
    start: float = 0.0
    completion: float = 0.0
    cache_after: tuple[str, ...] = ()

    @property
    def hits(self) -> int:
        return sum(a.hit for a in self.accesses)

    @property
    def accessed(self) -> int:
        return len(self.accesses)

    @property
    def computed(self) -> int:
        return sum(not a.hit for a in self.accesses)

    @property
    def charged(self) -> float:
        return float(sum(a.charged for a in self.accesses))

    @property
    def hit_bytes(self) -> float:
        return float(sum(a.size for a in self.accesses if a.hit))

    @property
    def accessed_bytes(self) -> float:
        return float(sum(a.size for a in self.accesses))

    @property
    def waiting(self) -> float:
        return self.completion - self.arrival

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "arrival": self.arrival,
            "start": self.start,
            "completion": self.completion,
            "charged": self.charged,
            "hits": self.hits,
            "accessed": self.accessed,
            "cache_after": list(self.cache_after),
            "accesses": [{"node": a.node, "label": a.label, "hit": a.hit, "charged": a.charged}
                         for a in self.accesses],
        }


class CacheEngine:
    """Byte-budgeted store of fingerprints with policy hooks.

    Not safe for concurrent mutation; one engine per simulation run.
    """

    name = "base"

    def __init__(self, capacity: float, catalog: Catalog | None = None):
        if not capacity >= 0:
            raise ValidationError("capacity must be non-negative")
        self.capacity = float(capacity)
        self.catalog = catalog
        self.contents: OrderedDict[Fingerprint, float] = OrderedDict()
        self.used = 0.0
        self._labels: dict[Fingerprint, str] = {}

    def __contains__(self, fp) -> bool:
        return fp in self.contents

    def __len__(self):
        return len(self.contents)

    def _fits(self, size: float) -> bool:
        return self.used + size <= self.capacity + _EPS * max(1.0, self.capacity)

    def lookup(self, fp: Fingerprint) -> bool:
        hit = fp in self.contents
        if hit:
            self._touch(fp)
        return hit

    def _touch(self, fp):
        pass

    def _insert(self, fp, size):
        self.contents[fp] = size
        self.used += size

    def evict(self, fp) -> None:
        self.used -= self.contents.pop(fp)
        if not self.contents:
            self.used = 0.0

    def _victim(self) -> Fingerprint:
        return next(iter(self.contents))

    def admit(self, fp: Fingerprint, size: float, context=None) -> tuple[bool, list]:
        """Insert ``fp``, evicting per policy until it fits."""
        if fp in self.contents:
            self._touch(fp)
            return True, []
        if size > self.capacity * (1 + _EPS):
            return False, []
        evicted = []
        while not self._fits(size):
            victim = self._victim()
            self.evict(victim)
            evicted.append(victim)
        self._insert(fp, size)
        return True, evicted

    def resident_labels(self) -> tuple[str, ...]:
        return tuple(sorted(self._labels.get(fp, fp) for fp in self.contents))

    # -- job execution ---------------------------------------------------------
    def begin_job(self, job_id: str, dag: JobDag, time: float) -> None:
        pass

    def end_job(self, record: JobExecutionRecord, dag: JobDag, time: float) -> None:
        pass

    def execute(self, dag: JobDag, record: JobExecutionRecord) -> None:
        fps = dag.fingerprints()
        stack = [(dag.sink_id, False)]
        while stack:
            v, expanded = stack.pop()
            node = dag.nodes[v]
            if not expanded:
                if self.lookup(fps[v]):
                    record.accesses.append(NodeAccess(v, fps[v], node.op_label, True, 0.0, node.size))
                    continue
                stack.append((v, True))
                stack.extend((p, False) for p in reversed(dag.parents[v]))
            else:
                record.accesses.append(NodeAccess(v, fps[v], node.op_label, False, node.cost, node.size))
                self._labels.setdefault(fps[v], node.op_label)
                self.admit(fps[v], node.size, (dag, v))

    def process_job(self, dag: JobDag, job_id: str = "", time: float = 0.0) -> JobExecutionRecord:
        record = JobExecutionRecord(job_id)
        self.begin_job(job_id, dag, time)
        self.execute(dag, record)
        self.end_job(record, dag, time)
        for fp in list(self._labels):
            if fp not in self.contents:
                del self._labels[fp]
        record.cache_after = self.resident_labels()
        return record


class NoCache(CacheEngine):
    """Ignores every persist request."""

    name = "nocache"

    def lookup(self, fp):
        return False

    def admit(self, fp, size, context=None):
        return False, []


class FIFO(CacheEngine):
    name = "fifo"


class LRU(CacheEngine):
    name = "lru"

    def _touch(self, fp):
        self.contents.move_to_end(fp)


def estimate_cost(dag: JobDag, v: int, cached, accessed: Iterable[int] = (),
                  counted: set | None = None) -> float:
    """``c_v`` plus the cost of the ancestors this estimate is first to reach.

    The walk stops at ancestors that are cached, already accessed this job or
    already in ``counted``. ``counted`` persists across the calls of one job,
    so each uncached ancestor is charged to the first estimate that reaches it.
    """
    fps = dag.fingerprints()
    accessed = accessed if isinstance(accessed, (set, frozenset)) else set(accessed)
    counted = set() if counted is None else counted
    cost = dag.nodes[v].cost
    stack = list(dag.parents[v])
    while stack:
        u = stack.pop()
        if fps[u] in cached or u in accessed or u in counted:
            continue
        counted.add(u)
        cost += dag.nodes[u].cost
        stack.extend(dag.parents[u])
    return cost


class LCS(CacheEngine):
    """Evicts the resident whose recomputation, given the rest of the cache, is cheapest."""

    name = "lcs"

    def __init__(self, capacity, catalog: Catalog):
        if catalog is None:
            raise ConfigError("LCS needs the catalog to estimate recovery costs")
        super().__init__(capacity, catalog)
        self._order: dict[Fingerprint, int] = {}
        self._tick = 0
        # memoized recovery costs, invalidated through the nodes each walk visited
        self._rec: dict[Fingerprint, float] = {}
        self._deps: dict[Fingerprint, set] = {}

    def _changed(self, fp):
        for r in self._deps.pop(fp, ()):
            self._rec.pop(r, None)

    def _insert(self, fp, size):
        super()._insert(fp, size)
        self._order[fp] = self._tick
        self._tick += 1
        self._changed(fp)

    def evict(self, fp):
        super().evict(fp)
        del self._order[fp]
        self._rec.pop(fp, None)
        self._changed(fp)

    def recovery_cost(self, fp: Fingerprint) -> float:
        """Own cost plus every ancestor not currently cached."""
        cached = self._rec.get(fp)
        if cached is not None:
            return cached
        entries = self.catalog.entries
        cost = entries[fp].cost
        stack = list(entries[fp].parents)
        seen = set()
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            if u in self.contents:
                continue
            cost += entries[u].cost
            stack.extend(entries[u].parents)
        if fp in self.contents:
            self._rec[fp] = cost
            for u in seen:
                self._deps.setdefault(u, set()).add(fp)
        return cost

    def _victim(self):
        return min(self.contents, key=lambda fp: (self.recovery_cost(fp), self._order[fp]))


class ScoreTable:
    """Exponentially weighted recomputation scores per fingerprint.

    Decay of entries absent from a job is applied lazily: a stored score is
    multiplied by ``(1 - beta)`` once per job elapsed since its last update.
    """

    def __init__(self, beta: float = 0.6):
        if not 0.0 < beta < 1.0:
            raise ValidationError("beta must lie in (0, 1)")
        self.beta = float(beta)
        self._hist: dict[Fingerprint, tuple[float, int]] = {}
        self.current_job: dict[Fingerprint, float] = {}
        self.jobs_seen = 0

    def score(self, fp) -> float:
        stored = self._hist.get(fp)
        if stored is None:
            return 0.0
        value, stamp = stored
        return value * (1.0 - self.beta) ** (self.jobs_seen - stamp)

    def set_score(self, fp, value: float) -> None:
        if value < 0:
            raise ValidationError("scores are non-negative")
        self._hist[fp] = (float(value), self.jobs_seen)

    @property
    def historical(self) -> dict[Fingerprint, float]:
        return {fp: self.score(fp) for fp in self._hist}

    def merge(self) -> None:
        """Fold the current job's record into the historical scores."""
        # read scores before advancing the clock so present entries decay only through beta
        previous = {fp: self.score(fp) for fp in self.current_job}
        self.jobs_seen += 1
        for fp, c in self.current_job.items():
            # unseen entries start at zero, so the first update is beta * c
            self._hist[fp] = ((1.0 - self.beta) * previous[fp] + self.beta * c, self.jobs_seen)
        # absent entries decay lazily through the stamp
        self.current_job = {}


class HeuristicAdaptive(CacheEngine):
    """Score-driven caching decided at job boundaries.

    During a job the cache is only read; afterwards the scores are merged and
    the cache is updated by density (score per MB) among the residents and the
    outputs this job materialized.
    """

    name = "heuristic"

    def __init__(self, capacity, catalog=None, beta: float = 0.6, update_mode: str = "evict-insert"):
        super().__init__(capacity, catalog)
        if update_mode not in UPDATE_MODES:
            raise ConfigError(f"update mode must be one of {UPDATE_MODES}")
        self.scores = ScoreTable(beta)
        self.update_mode = update_mode
        self._materialized: dict[Fingerprint, float] = {}

    def lookup(self, fp):
        return fp in self.contents

    def execute(self, dag, record):
        fps = dag.fingerprints()
        current = self.scores.current_job
        accessed: set[int] = set()
        counted: set[int] = set()
        to_access = [dag.sink_id]
        while to_access:
            v = to_access.pop()
            if v in accessed:
                continue
            fp = fps[v]
            node = dag.nodes[v]
            current[fp] = estimate_cost(dag, v, self.contents, accessed, counted)
            hit = self.lookup(fp)
            if not hit:
                to_access.extend(p for p in dag.parents[v] if p not in accessed)
                self._materialized[fp] = node.size
                self._labels.setdefault(fp, node.op_label)
            record.accesses.append(NodeAccess(v, fp, node.op_label, hit, 0.0 if hit else node.cost, node.size))
            accessed.add(v)

    def end_job(self, record, dag, time):
        self.scores.merge()
        self.update_cache()
        self._materialized = {}

    def _density(self, fp, size) -> float:
        s = self.scores.score(fp)
        if size <= 0:
            return math.inf if s > 0 else 0.0
        return s / size

    def update_cache(self) -> list[tuple[str, Fingerprint]]:
        """Re-rank residents and this job's outputs; returns the cache mutations."""
        sizes = dict(self.contents)
        sizes.update(self._materialized)
        ranked = sorted(sizes, key=lambda fp: (-self._density(fp, sizes[fp]), sizes[fp], fp))
        changes: list[tuple[str, Fingerprint]] = []
        if self.update_mode == "refresh":
            keep, room = [], self.capacity * (1 + _EPS)
            for fp in ranked:
                if self.scores.score(fp) > 0 and sizes[fp] <= room:
                    keep.append(fp)
                    room -= sizes[fp]
            keep_set = set(keep)
            for fp in [fp for fp in self.contents if fp not in keep_set]:
                self.evict(fp)
                changes.append(("evict", fp))
            for fp in keep:
                if fp not in self.contents:
                    self._insert(fp, sizes[fp])
                    changes.append(("insert", fp))
            return changes

        for fp in ranked:
            if fp in self.contents or self.scores.score(fp) <= 0:
                continue
            size = sizes[fp]
            if size > self.capacity * (1 + _EPS):
                continue
            density = self._density(fp, size)
            if not self._fits(size):
                weaker = sorted((r for r in self.contents if self._density(r, self.contents[r]) < density),
                                key=lambda r: (self._density(r, self.contents[r]), -self.contents[r], r))
                freed, victims = self.capacity - self.used, []
                for r in weaker:
                    if freed + _EPS * max(1.0, self.capacity) >= size:
                        break
                    victims.append(r)
                    freed += self.contents[r]
                if freed + _EPS * max(1.0, self.capacity) < size:
                    continue
                for r in victims:
                    self.evict(r)
                    changes.append(("evict", r))
            self._insert(fp, size)
            changes.append(("insert", fp))
        return changes


class AdaptiveGradient(CacheEngine):
    """Caches a rounded sliding average of the online gradient state.

    Periods close by arrival time. A target entry is admitted when it is
    computed; residents outside the current target are dropped when a period
    ends.
    """

    name = "adaptive-grad"

    def __init__(self, capacity, catalog: Catalog, period: float | None = None,
                 gamma0: float | None = None, gamma_scale: float = 1.0, seed=None, start: float = 0.0):
        if catalog is None:
            raise ConfigError("adaptive-grad needs the catalog")
        super().__init__(capacity, catalog)
        self.state = AdaptiveState(catalog, capacity, period, gamma0, seed=seed, gamma_scale=gamma_scale)
        self.period_end = start + self.state.period_T
        self.periods: list[dict] = []
        self._set_target()

    def _set_target(self):
        fps = self.catalog.fingerprints
        self.target = {fps[i] for i in np.flatnonzero(self.state.x > 0.5)}

    def advance(self, time: float) -> None:
        layout = self.catalog.layout()
        while time >= self.period_end:
            x = self.state.step()
            self._set_target()
            for fp in [fp for fp in self.contents if fp not in self.target]:
                self.evict(fp)
            self.periods.append({
                "k": self.state.k - 1,
                "end": self.period_end,
                "relaxed": kernels.relaxed(layout, self.state.ybar),
                "gain": kernels.multilinear(layout, x),
            })
            self.period_end += self.state.period_T

    def begin_job(self, job_id, dag, time):
        self.advance(time)
        self.state.observe_job(job_id or dag)

    def admit(self, fp, size, context=None):
        if fp not in self.target:
            return False, []
        return super().admit(fp, size, context)

    def _victim(self):
        outside = [fp for fp in self.contents if fp not in self.target]
        return outside[0] if outside else next(iter(self.contents))


def make_engine(policy: str, capacity: float, catalog: Catalog | None = None, **opts) -> CacheEngine:
    """Build an engine by CLI name; unknown options for a policy are rejected."""
    policy = policy.lower()
    allowed = POLICY_OPTIONS
    if policy not in allowed:
        raise ConfigError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    opts = {k: v for k, v in opts.items() if v is not None}
    extra = set(opts) - allowed[policy]
    if extra:
        raise ConfigError(f"policy {policy!r} does not accept option(s) {', '.join(sorted(extra))}")
    if policy == "nocache":
        return NoCache(capacity, catalog)
    if policy == "fifo":
        return FIFO(capacity, catalog)
    if policy == "lru":
        return LRU(capacity, catalog)
    if policy == "lcs":
        return LCS(capacity, catalog)
    if policy == "heuristic":
        return HeuristicAdaptive(capacity, catalog, **opts)
    return AdaptiveGradient(capacity, catalog, **opts)
