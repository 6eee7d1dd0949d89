"""Job DAGs, structural fingerprints and the deduplicated node catalog.

A job is a directed tree: every node except the unique sink has exactly one
child, and edges point from a parent (input) to the child that consumes it.
Nodes from different jobs that run the same operation over the same
ancestry share a fingerprint and collapse into one catalog entry.
"""
from __future__ import annotations

import hashlib
import json
import math
import uuid
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NewType, Sequence

import numpy as np

from .errors import ConsistencyError, ValidationError

Fingerprint = NewType("Fingerprint", str)

_DIGEST_BYTES = 16


@dataclass(frozen=True)
class NodeSpec:
    op_label: str
    cost: float
    size: float
    deterministic: bool = True

    def __post_init__(self):
        if not isinstance(self.op_label, str) or not self.op_label:
            raise ValidationError("op_label must be a non-empty string")
        for name in ("cost", "size"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be a finite non-negative number, got {value!r}")


class JobDag:
    """A directed tree of :class:`NodeSpec` with local integer ids.

    ``edges`` are ``(parent, child)`` pairs. Construction validates the
    directed-tree shape; an explicit ``sink_id`` is checked, not trusted.
    """

    def __init__(self, nodes: Sequence[NodeSpec], edges: Iterable[tuple[int, int]],
                 sink_id: int | None = None):
        nodes = tuple(nodes)
        if not nodes:
            raise ValidationError("a job needs at least one node")
        for node in nodes:
            if not isinstance(node, NodeSpec):
                raise ValidationError(f"expected NodeSpec, got {type(node).__name__}")
        n = len(nodes)
        edges = tuple((int(p), int(c)) for p, c in edges)
        if len(set(edges)) != len(edges):
            raise ValidationError("duplicate edge")
        parents: list[list[int]] = [[] for _ in range(n)]
        children: list[list[int]] = [[] for _ in range(n)]
        for p, c in edges:
            if not (0 <= p < n and 0 <= c < n):
                raise ValidationError(f"edge ({p}, {c}) references an unknown node")
            if p == c:
                raise ValidationError(f"self-loop on node {p}")
            parents[c].append(p)
            children[p].append(c)

        _check_acyclic(n, children)
        sinks = [v for v in range(n) if not children[v]]
        if len(sinks) != 1:
            raise ValidationError(f"not a directed tree: expected one sink, found {len(sinks)}")
        multi = [v for v in range(n) if len(children[v]) > 1]
        if multi:
            # with one sink and n-1 edges this is exactly the undirected-cycle case
            raise ValidationError(f"not a directed tree: node {multi[0]} feeds several children")
        if sink_id is not None and sink_id != sinks[0]:
            raise ValidationError(f"sink_id {sink_id} has outgoing edges")

        self.nodes = nodes
        self.edges = edges
        self.sink_id = sinks[0]
        self.parents = tuple(tuple(ps) for ps in parents)
        self.child = tuple(cs[0] if cs else -1 for cs in children)
        self._fingerprints: tuple[Fingerprint, ...] | None = None

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        labels = ",".join(n.op_label for n in self.nodes)
        return f"JobDag(n={len(self.nodes)}, sink={self.sink_id}, ops=[{labels}])"

    def __eq__(self, other):
        if not isinstance(other, JobDag):
            return NotImplemented
        return self.nodes == other.nodes and sorted(self.edges) == sorted(other.edges)

    def __hash__(self):
        return hash((self.nodes, tuple(sorted(self.edges))))

    def _check_id(self, v: int):
        if not isinstance(v, (int, np.integer)) or not 0 <= v < len(self.nodes):
            raise ValidationError(f"unknown node id {v!r}")

    def predecessors(self, v: int) -> set[int]:
        self._check_id(v)
        out: set[int] = set()
        stack = list(self.parents[v])
        while stack:
            u = stack.pop()
            if u not in out:
                out.add(u)
                stack.extend(self.parents[u])
        return out

    def successors(self, v: int) -> set[int]:
        self._check_id(v)
        out: set[int] = set()
        u = self.child[v]
        while u != -1:
            out.add(u)
            u = self.child[u]
        return out

    def topological_order(self) -> list[int]:
        """Parents before children."""
        return self.preorder()[::-1]

    def preorder(self) -> list[int]:
        """Depth-first order from the sink along parent edges.

        Every node's predecessors form a contiguous block right after it.
        """
        order = []
        stack = [self.sink_id]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(self.parents[v]))
        return order

    def total_cost(self) -> float:
        return float(sum(node.cost for node in self.nodes))

    def fingerprints(self) -> tuple[Fingerprint, ...]:
        if self._fingerprints is None:
            fps: list[Fingerprint | None] = [None] * len(self.nodes)
            for v in self.topological_order():
                node = self.nodes[v]
                parent_fps = [fps[p] for p in self.parents[v]]
                fps[v] = _digest(node, parent_fps)
            self._fingerprints = tuple(fps)  # type: ignore[arg-type]
        return self._fingerprints

    def fingerprint(self, v: int) -> Fingerprint:
        self._check_id(v)
        return self.fingerprints()[v]


def _check_acyclic(n: int, children: list[list[int]]):
    indeg = [0] * n
    for cs in children:
        for c in cs:
            indeg[c] += 1
    queue = deque(v for v in range(n) if indeg[v] == 0)
    seen = 0
    while queue:
        v = queue.popleft()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen != n:
        raise ValidationError("edge relation contains a cycle")


def _digest(node: NodeSpec, parent_fps: list) -> Fingerprint:
    if not node.deterministic:
        payload = ["nondeterministic", uuid.uuid4().hex]
    else:
        payload = ["op", node.op_label, sorted(parent_fps)]
    raw = json.dumps(payload, separators=(",", ":")).encode()
    return Fingerprint(hashlib.blake2b(raw, digest_size=_DIGEST_BYTES).hexdigest())


def predecessors(dag: JobDag, v: int) -> set[int]:
    return dag.predecessors(v)


def successors(dag: JobDag, v: int) -> set[int]:
    return dag.successors(v)


def fingerprint(dag: JobDag, v: int) -> Fingerprint:
    """Digest of the node's generating chain.

    Non-deterministic nodes, and everything downstream of them, get a fresh
    digest that never matches another node.
    """
    return dag.fingerprint(v)


@dataclass
class CatalogEntry:
    fingerprint: Fingerprint
    label: str
    cost: float
    size: float
    parents: tuple[Fingerprint, ...]
    member_jobs: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    dag: JobDag
    rate: float
    gids: np.ndarray  # catalog index of each local node


@dataclass(frozen=True)
class Layout:
    """Flat arrays over every (job, node) occurrence, ordered for the kernels.

    Within each job, nodes appear in sink-first preorder, so ``child[i] < i``
    and node ``i`` together with its predecessors occupies ``[i, end[i])``.
    """
    gid: np.ndarray
    child: np.ndarray
    end: np.ndarray
    rate: np.ndarray
    cost: np.ndarray
    weight: np.ndarray
    job_ptr: np.ndarray
    levels: tuple
    occ_ptr: np.ndarray
    occ_idx: np.ndarray
    n_entries: int

    @property
    def n_occurrences(self) -> int:
        return len(self.gid)


def build_layout(jobs: Sequence[tuple[JobDag, np.ndarray, float]], costs: np.ndarray,
                 n_entries: int) -> Layout:
    gid, child, end, rate, depth = [], [], [], [], []
    job_ptr = [0]
    for dag, gids, lam in jobs:
        base = len(gid)
        order = dag.preorder()
        pos = {v: base + i for i, v in enumerate(order)}
        sizes = _subtree_sizes(dag, order)
        d: dict[int, int] = {}
        for v in order:
            c = dag.child[v]
            d[v] = 0 if c == -1 else d[c] + 1
            gid.append(int(gids[v]))
            child.append(pos[c] if c != -1 else -1)
            end.append(pos[v] + sizes[v])
            rate.append(lam)
            depth.append(d[v])
        job_ptr.append(len(gid))
    gid_a = np.asarray(gid, dtype=np.int64)
    depth_a = np.asarray(depth, dtype=np.int64)
    levels = tuple(np.flatnonzero(depth_a == k) for k in range(int(depth_a.max(initial=-1)) + 1))
    cost = np.asarray(costs, dtype=np.float64)[gid_a] if len(gid_a) else np.zeros(0)
    rate_a = np.asarray(rate, dtype=np.float64)
    order = np.argsort(gid_a, kind="stable")
    occ_ptr = np.zeros(n_entries + 1, dtype=np.int64)
    np.cumsum(np.bincount(gid_a, minlength=n_entries), out=occ_ptr[1:])
    return Layout(
        gid=gid_a,
        child=np.asarray(child, dtype=np.int64),
        end=np.asarray(end, dtype=np.int64),
        rate=rate_a,
        cost=cost,
        weight=rate_a * cost,
        job_ptr=np.asarray(job_ptr, dtype=np.int64),
        levels=levels,
        occ_ptr=occ_ptr,
        occ_idx=order.astype(np.int64),
        n_entries=n_entries,
    )


def _subtree_sizes(dag: JobDag, order: list[int]) -> dict[int, int]:
    sizes = {v: 1 for v in order}
    for v in reversed(order):
        c = dag.child[v]
        if c != -1:
            sizes[c] += sizes[v]
    return sizes


class Catalog:
    """Union of all distinct nodes across a job family, plus per-job rates.

    Built by :meth:`register_job`; treat it as read-only once populated.
    """

    def __init__(self):
        self.entries: dict[Fingerprint, CatalogEntry] = {}
        self.jobs: dict[str, JobRecord] = {}
        self._index: dict[Fingerprint, int] = {}
        self._layout: Layout | None = None
        self._job_layouts: dict[str, Layout] = {}
        self._arrays: dict[str, np.ndarray] = {}

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f"Catalog(entries={len(self.entries)}, jobs={len(self.jobs)})"

    def register_job(self, dag: JobDag, rate: float, job_id: str | None = None) -> str:
        if not isinstance(dag, JobDag):
            raise ValidationError("register_job expects a JobDag")
        if not isinstance(rate, (int, float)) or not math.isfinite(rate) or rate <= 0:
            raise ValidationError(f"arrival rate must be positive, got {rate!r}")
        if job_id is None:
            job_id = f"J{len(self.jobs)}"
        job_id = str(job_id)
        if job_id in self.jobs:
            raise ValidationError(f"job id {job_id!r} already registered")

        fps = dag.fingerprints()
        # check every node before mutating anything
        pending: dict[Fingerprint, NodeSpec] = {}
        for v, fp in enumerate(fps):
            node = dag.nodes[v]
            known = self.entries.get(fp) or pending.get(fp)
            if known is not None and not (_same(known.cost, node.cost) and _same(known.size, node.size)):
                raise ConsistencyError(
                    f"node {node.op_label!r} disagrees with an identical node on cost/size")
            pending.setdefault(fp, node)

        gids = np.empty(len(dag), dtype=np.int64)
        for v, fp in enumerate(fps):
            entry = self.entries.get(fp)
            if entry is None:
                node = dag.nodes[v]
                entry = CatalogEntry(fp, node.op_label, float(node.cost), float(node.size),
                                     tuple(fps[p] for p in dag.parents[v]))
                self.entries[fp] = entry
                self._index[fp] = len(self._index)
            if job_id not in entry.member_jobs:
                entry.member_jobs.append(job_id)
            gids[v] = self._index[fp]
        gids.setflags(write=False)
        self.jobs[job_id] = JobRecord(job_id, dag, float(rate), gids)
        self._layout = None
        self._job_layouts.clear()
        self._arrays.clear()
        return job_id

    # -- lookups -------------------------------------------------------------
    @property
    def fingerprints(self) -> list[Fingerprint]:
        return list(self.entries)

    def index(self, fp: Fingerprint) -> int:
        return self._index[fp]

    def entry(self, fp: Fingerprint) -> CatalogEntry:
        return self.entries[fp]

    def resolve(self, key: str) -> Fingerprint:
        """Accept a fingerprint or an unambiguous entry label."""
        if key in self.entries:
            return Fingerprint(key)
        hits = [fp for fp, e in self.entries.items() if e.label == key]
        if len(hits) != 1:
            raise ValidationError(f"cannot resolve {key!r} to a single catalog entry")
        return hits[0]

    def _column(self, name: str) -> np.ndarray:
        arr = self._arrays.get(name)
        if arr is None:
            arr = np.array([getattr(e, name) for e in self.entries.values()], dtype=np.float64)
            arr.setflags(write=False)
            self._arrays[name] = arr
        return arr

    @property
    def costs(self) -> np.ndarray:
        return self._column("cost")

    @property
    def sizes(self) -> np.ndarray:
        return self._column("size")

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries.values()]

    def entry_rates(self) -> np.ndarray:
        """Total arrival rate of jobs containing each entry."""
        out = np.zeros(len(self.entries))
        for rec in self.jobs.values():
            out[np.unique(rec.gids)] += rec.rate
        return out

    def layout(self) -> Layout:
        if self._layout is None:
            self._layout = build_layout(
                [(r.dag, r.gids, r.rate) for r in self.jobs.values()], self.costs, len(self.entries))
        return self._layout

    def job_layout(self, job_id: str) -> Layout:
        """Layout of a single job with unit rate."""
        lay = self._job_layouts.get(job_id)
        if lay is None:
            rec = self.jobs[job_id]
            lay = build_layout([(rec.dag, rec.gids, 1.0)], self.costs, len(self.entries))
            self._job_layouts[job_id] = lay
        return lay

    def job_of_dag(self, dag: JobDag) -> str:
        for job_id, rec in self.jobs.items():
            if rec.dag is dag:
                return job_id
        fps = dag.fingerprints()
        for job_id, rec in self.jobs.items():
            if rec.dag.fingerprints() == fps:
                return job_id
        raise ValidationError("dag is not registered in this catalog")


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def chain(labels: Sequence[str], costs: Sequence[float], sizes: Sequence[float] | float) -> JobDag:
    """Convenience constructor for a linear job ``labels[0] -> ... -> labels[-1]``."""
    if isinstance(sizes, (int, float)):
        sizes = [sizes] * len(labels)
    nodes = [NodeSpec(l, float(c), float(s)) for l, c, s in zip(labels, costs, sizes)]
    return JobDag(nodes, [(i, i + 1) for i in range(len(nodes) - 1)])
