"""Job-arrival traces: built-in micro-benchmark, synthetic generators and file I/O.

Trace files are JSON lines. The first record is a header, followed by one
``job`` record per distinct job and then the ``arrival`` records in time
order::

    {"type": "header", "format": "dagcache-trace", "version": 1, "jobs": 5, "arrivals": 10}
    {"type": "job", "id": "J0", "rate": 0.1, "sink": 2,
     "nodes": [{"op": "R0", "cost": 0.0, "size": 500.0, "deterministic": true}, ...],
     "edges": [[0, 1], [1, 2]]}
    {"type": "arrival", "time": 0.0, "job": "J0"}

Fingerprints are never stored; they are re-derived from the job structure
on load.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .dag import Catalog, JobDag, NodeSpec, chain
from .errors import TraceFormatError, ValidationError

TRACE_FORMAT = "dagcache-trace"
TRACE_VERSION = 1


@dataclass
class Trace:
    arrivals: list[tuple[float, str]]
    catalog: Catalog

    def __post_init__(self):
        last = -math.inf
        for t, job_id in self.arrivals:
            if t < last:
                raise ValidationError("arrival times must be non-decreasing")
            if job_id not in self.catalog.jobs:
                raise ValidationError(f"arrival references unregistered job {job_id!r}")
            last = t

    def __len__(self):
        return len(self.arrivals)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        if self.arrivals != other.arrivals or list(self.catalog.jobs) != list(other.catalog.jobs):
            return False
        for job_id, rec in self.catalog.jobs.items():
            theirs = other.catalog.jobs[job_id]
            if rec.dag != theirs.dag or rec.rate != theirs.rate:
                return False
        return True

    @property
    def horizon(self) -> float:
        return self.arrivals[-1][0] if self.arrivals else 0.0

    def mean_interarrival(self) -> float:
        if len(self.arrivals) < 2:
            return 1.0
        return (self.arrivals[-1][0] - self.arrivals[0][0]) / (len(self.arrivals) - 1)


# -- built-in micro-benchmark -------------------------------------------------

def simple_example_trace() -> Trace:
    """Five chains R0 -> R1 -> R(i+2), submitted twice, 10 s apart.

    R0 is a free source read, R1 costs 100 s, every sink 10 s; all outputs
    are 500 MB.
    """
    catalog = Catalog()
    for i in range(5):
        dag = chain(["R0", "R1", f"R{i + 2}"], [0.0, 100.0, 10.0], 500.0)
        catalog.register_job(dag, rate=0.1, job_id=f"J{i}")
    arrivals = [(10.0 * k, f"J{k % 5}") for k in range(10)]
    return Trace(arrivals, catalog)


BUILTIN_TRACES = {"simple": simple_example_trace}


# -- synthetic overlap-heavy generator ------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    num_jobs: int = 1000
    stages_per_job: int = 6
    rdds_per_stage: int = 6
    mean_size_mb: float = 50.0
    overlap_pool: int = 200
    overlap_prob: float = 0.6
    arrival: str = "exponential"
    interarrival: float = 10.0
    seed: int = 0
    cost_min: float = 1.0
    cost_max: float = 100.0
    pool_skew: float = 1.0
    template_stages: int = 4

    def __post_init__(self):
        for name in ("num_jobs", "stages_per_job", "rdds_per_stage", "overlap_pool", "template_stages"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {value!r}")
        if not 0.0 <= self.overlap_prob <= 1.0:
            raise ValidationError("overlap_prob must lie in [0, 1]")
        if not self.mean_size_mb > 0:
            raise ValidationError("mean_size_mb must be positive")
        if self.arrival not in ("exponential", "fixed"):
            raise ValidationError("arrival must be 'exponential' or 'fixed'")
        if not self.interarrival > 0:
            raise ValidationError("interarrival must be positive")
        if not 0 < self.cost_min <= self.cost_max:
            raise ValidationError("need 0 < cost_min <= cost_max")
        if self.pool_skew < 0:
            raise ValidationError("pool_skew must be non-negative")


    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown generator option(s): {', '.join(sorted(unknown))}")
        return cls(**data)


def _count_range(mean: int) -> tuple[int, int]:
    lo = max(1, math.ceil(mean / 2))
    return lo, 2 * mean - lo


class _DagBuilder:
    def __init__(self):
        self.nodes: list[NodeSpec] = []
        self.edges: list[tuple[int, int]] = []

    def add(self, node: NodeSpec, parents=()) -> int:
        v = len(self.nodes)
        self.nodes.append(node)
        self.edges.extend((p, v) for p in parents)
        return v

    def build(self) -> JobDag:
        return JobDag(self.nodes, self.edges)


class _SyntheticSource:
    """Jobs are 1-3 source branches joined by a chain of fresh tail stages.

    With probability ``overlap_prob`` a branch is a whole shared template (a
    fixed source-rooted chain of up to ``template_stages`` stages, drawn with
    Zipf popularity); its nodes then fingerprint-match every earlier use of the
    template, wherever the branch sits in the job. Otherwise the branch is a
    fresh single stage.
    """

    def __init__(self, config: GeneratorConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.fresh = 0
        self.stage_lo, self.stage_hi = _count_range(config.stages_per_job)
        self.rdd_lo, self.rdd_hi = _count_range(config.rdds_per_stage)
        weights = 1.0 / np.arange(1, config.overlap_pool + 1) ** config.pool_skew
        self.pool_p = weights / weights.sum()
        self.templates = [self._template(p) for p in range(config.overlap_pool)]

    def _cost(self) -> float:
        lo, hi = math.log(self.config.cost_min), math.log(self.config.cost_max)
        return float(math.exp(self.rng.uniform(lo, hi)))

    def _size(self) -> float:
        return float(self.config.mean_size_mb * self.rng.uniform(0.5, 1.5))

    def _template(self, p: int) -> list[list[NodeSpec]]:
        n_stages = int(self.rng.integers(1, min(self.config.template_stages, self.stage_hi) + 1))
        stages = []
        for s in range(n_stages):
            r = int(self.rng.integers(self.rdd_lo, self.rdd_hi + 1))
            stages.append([NodeSpec(f"t{p}.s{s}.r{k}", self._cost(), self._size()) for k in range(r)])
        return stages

    def _fresh_stage(self) -> list[NodeSpec]:
        r = int(self.rng.integers(self.rdd_lo, self.rdd_hi + 1))
        out = []
        for _ in range(r):
            out.append(NodeSpec(f"op{self.fresh}", self._cost(), self._size()))
            self.fresh += 1
        return out

    @staticmethod
    def _add_chain(b: _DagBuilder, stages, first_parents=()) -> int:
        last = None
        for stage in stages:
            for node in stage:
                last = b.add(node, first_parents if last is None else (last,))
        return last

    def job(self) -> JobDag:
        b = _DagBuilder()
        n_stages = int(self.rng.integers(self.stage_lo, self.stage_hi + 1))
        if n_stages == 1:
            self._add_chain(b, [self._fresh_stage()])
            return b.build()
        n_branches = int(self.rng.integers(1, min(3, n_stages - 1) + 1))
        tips, used = [], 0
        for _ in range(n_branches):
            stages = None
            if self.rng.random() < self.config.overlap_prob:
                template = self.templates[int(self.rng.choice(len(self.templates), p=self.pool_p))]
                if used + len(template) <= n_stages - 1:
                    stages = template
            if stages is None:
                stages = [self._fresh_stage()]
            used += len(stages)
            tips.append(self._add_chain(b, stages))
        tail = [self._fresh_stage() for _ in range(max(1, n_stages - used))]
        self._add_chain(b, tail, tuple(tips))
        return b.build()


def _arrival_times(rng, n: int, kind: str, mean_gap: float) -> list[float]:
    if kind == "fixed":
        return [mean_gap * k for k in range(n)]
    gaps = rng.exponential(mean_gap, size=n - 1) if n > 1 else np.zeros(0)
    return [0.0, *np.cumsum(gaps).tolist()]


def generate(config: GeneratorConfig) -> Trace:
    """Synthetic trace of multi-stage jobs whose source branches recur across jobs.

    A branch drawn from the shared template pool repeats that template's
    stages exactly, so its nodes fingerprint-match earlier uses.
    """
    src = _SyntheticSource(config)
    catalog = Catalog()
    rate = 1.0 / (config.num_jobs * config.interarrival)
    job_ids = [catalog.register_job(src.job(), rate, f"G{i}") for i in range(config.num_jobs)]
    times = _arrival_times(src.rng, config.num_jobs, config.arrival, config.interarrival)
    return Trace(list(zip(times, job_ids)), catalog)


# -- ridge-regression-shaped stress workload -------------------------------------

def _regression_job(rng, target: int, sources: tuple[int, ...], job_no: int) -> JobDag:
    k = len(sources)
    key_s = ",".join(map(str, sources))
    key = f"y={target}|X={key_s}"
    b = _DagBuilder()
    read = b.add(NodeSpec("read_table", 20.0, 1000.0))
    parse = b.add(NodeSpec("parse_rows", 40.0, 800.0), (read,))
    proj = b.add(NodeSpec(f"project[{key_s}]", 2.0 * k, 40.0 * k), (parse,))
    std = b.add(NodeSpec(f"standardize[{key_s}]", 4.0 * k, 40.0 * k), (proj,))
    poly = b.add(NodeSpec(f"expand[{key_s}]", 3.0 * k, 60.0 * k), (std,))
    tgt = b.add(NodeSpec(f"read_target[{key}]", 10.0, 30.0))
    clean = b.add(NodeSpec(f"clean_target[{key}]", 8.0, 30.0), (tgt,))
    normal = b.add(NodeSpec(f"normal_equations[{key}]", 20.0 + 6.0 * k, 2.0 + k), (poly, clean))
    alpha = float(rng.uniform(1e-3, 10.0))
    solve = b.add(NodeSpec(f"ridge_solve[{key}|alpha={alpha!r}|job={job_no}]", 10.0, 1.0), (normal,))
    pred = b.add(NodeSpec("predict", 20.0, 30.0), (solve,))
    score = b.add(NodeSpec("score", 3.0, 0.1), (pred,))
    b.add(NodeSpec("report", 1.0, 0.1), (score,))
    return b.build()


def generate_regression_workload(num_features: int = 12, num_jobs: int = 100,
                                 repeat_prob: float = 0.19, seed: int = 0,
                                 interarrival: float = 10.0) -> Trace:
    """Ridge-regression-shaped jobs over one feature table.

    Each job regresses a random target column on a random subset of the
    other columns. With probability ``repeat_prob`` a job reuses an earlier
    (target, sources) choice and so shares its whole preprocessing chain.
    """
    if num_features < 2:
        raise ValidationError("num_features must be >= 2")
    if num_jobs < 1:
        raise ValidationError("num_jobs must be >= 1")
    if not 0.0 <= repeat_prob <= 1.0:
        raise ValidationError("repeat_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    used: list[tuple[int, tuple[int, ...]]] = []
    catalog = Catalog()
    rate = 1.0 / (num_jobs * interarrival)
    job_ids = []
    for j in range(num_jobs):
        if used and rng.random() < repeat_prob:
            choice = used[int(rng.integers(len(used)))]
        else:
            target = int(rng.integers(num_features))
            others = [f for f in range(num_features) if f != target]
            while True:
                mask = rng.random(len(others)) < 0.5
                if mask.any():
                    break
            choice = (target, tuple(f for f, m in zip(others, mask) if m))
            if choice not in used:
                used.append(choice)
        job_ids.append(catalog.register_job(_regression_job(rng, *choice, j), rate, f"R{j}"))
    times = _arrival_times(rng, num_jobs, "exponential", interarrival)
    return Trace(list(zip(times, job_ids)), catalog)


def repeat_fraction(trace: Trace) -> float:
    """Fraction of node executions whose fingerprint already ran in an earlier job."""
    seen: set = set()
    repeated = total = 0
    for _, job_id in trace.arrivals:
        fps = trace.catalog.jobs[job_id].dag.fingerprints()
        repeated += sum(fp in seen for fp in fps)
        total += len(fps)
        seen.update(fps)
    return repeated / total if total else 0.0


# -- small random instances for exhaustive checks -----------------------------------

def random_instance(seed, max_entries: int = 12, equal_sizes: bool = False,
                    max_jobs: int = 5) -> Catalog:
    """Small catalog whose jobs are predecessor-closed subtrees of one random forest.

    Jobs rooted at related forest nodes share entries; some jobs get a private
    sink on top. The catalog never exceeds ``max_entries`` entries.
    """
    rng = np.random.default_rng(seed)
    while True:
        n_forest = int(rng.integers(2, max_entries + 1))
        child = [-1] + [int(rng.integers(-1, i)) if rng.random() > 0.15 else -1
                        for i in range(1, n_forest)]
        cost = rng.uniform(0.0, 10.0, n_forest)
        size = np.ones(n_forest) if equal_sizes else rng.integers(1, 6, n_forest).astype(float)
        n_jobs = int(rng.integers(1, max_jobs + 1))
        catalog = Catalog()
        for j in range(n_jobs):
            root = int(rng.integers(n_forest))
            members = [v for v in range(n_forest) if _reaches(child, v, root)]
            local = {v: i for i, v in enumerate(members)}
            nodes = [NodeSpec(f"n{v}", float(cost[v]), float(size[v])) for v in members]
            edges = [(local[v], local[child[v]]) for v in members if v != root]
            if rng.random() < 0.4:
                nodes.append(NodeSpec(f"tail{j}", float(rng.uniform(0, 10)),
                                      1.0 if equal_sizes else float(rng.integers(1, 6))))
                edges.append((local[root], len(nodes) - 1))
            catalog.register_job(JobDag(nodes, edges), float(rng.uniform(0.1, 1.0)), f"J{j}")
        if len(catalog) <= max_entries:
            return catalog


def oracle_instances(count: int = 10, seed: int = 0, max_entries: int = 12,
                     min_entries: int = 4, equal_sizes: bool = True) -> list[Catalog]:
    """The first ``count`` random instances with at least ``min_entries`` entries."""
    out, k = [], 0
    while len(out) < count:
        cat = random_instance([seed, k], max_entries=max_entries, equal_sizes=equal_sizes)
        k += 1
        if len(cat) >= min_entries:
            out.append(cat)
    return out


def _reaches(child: list[int], v: int, root: int) -> bool:
    while v != -1:
        if v == root:
            return True
        v = child[v]
    return False


# -- file I/O ------------------------------------------------------------------

def _job_record(job_id: str, rec) -> dict:
    dag = rec.dag
    return {
        "type": "job",
        "id": job_id,
        "rate": rec.rate,
        "sink": dag.sink_id,
        "nodes": [{"op": n.op_label, "cost": n.cost, "size": n.size,
                   "deterministic": n.deterministic} for n in dag.nodes],
        "edges": [list(e) for e in dag.edges],
    }


def dumps_trace(trace: Trace) -> str:
    lines = [json.dumps({"type": "header", "format": TRACE_FORMAT, "version": TRACE_VERSION,
                         "jobs": len(trace.catalog.jobs), "arrivals": len(trace.arrivals)})]
    for job_id, rec in trace.catalog.jobs.items():
        lines.append(json.dumps(_job_record(job_id, rec)))
    for t, job_id in trace.arrivals:
        lines.append(json.dumps({"type": "arrival", "time": t, "job": job_id}))
    return "\n".join(lines) + "\n"


def save_trace(trace: Trace, path) -> None:
    Path(path).write_text(dumps_trace(trace))


def _node_from(raw: Any, line: int) -> NodeSpec:
    if not isinstance(raw, dict):
        raise TraceFormatError("node must be an object", line)
    try:
        op, cost, size = raw["op"], raw["cost"], raw["size"]
    except KeyError as exc:
        raise TraceFormatError(f"node is missing field {exc.args[0]!r}", line) from None
    try:
        return NodeSpec(op, cost, size, bool(raw.get("deterministic", True)))
    except ValidationError as exc:
        raise ValidationError(f"line {line}: {exc}") from None


def loads_trace(text: str) -> Trace:
    catalog = Catalog()
    arrivals: list[tuple[float, str]] = []
    header = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(rec, dict):
            raise TraceFormatError("record must be a JSON object", line_no)
        kind = rec.get("type")
        if header is None:
            if kind != "header" or rec.get("format") != TRACE_FORMAT:
                raise TraceFormatError("first record must be a dagcache-trace header", line_no)
            if rec.get("version") != TRACE_VERSION:
                raise TraceFormatError(f"unsupported trace version {rec.get('version')!r}", line_no)
            header = rec
        elif kind == "job":
            if arrivals:
                raise TraceFormatError("job records must precede arrivals", line_no)
            nodes = [_node_from(n, line_no) for n in rec.get("nodes", [])]
            try:
                edges = [tuple(e) for e in rec.get("edges", [])]
                if any(len(e) != 2 for e in edges):
                    raise TraceFormatError("edges must be [parent, child] pairs", line_no)
                dag = JobDag(nodes, edges, rec.get("sink"))
            except TraceFormatError:
                raise
            except (ValidationError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"job {rec.get('id')!r}: {exc}", line_no) from None
            try:
                catalog.register_job(dag, rec.get("rate"), rec.get("id"))
            except ValidationError as exc:
                raise type(exc)(f"line {line_no}: {exc}") from None
        elif kind == "arrival":
            t, job_id = rec.get("time"), rec.get("job")
            if not isinstance(t, (int, float)) or job_id not in catalog.jobs:
                raise TraceFormatError("arrival needs a numeric time and a known job id", line_no)
            if arrivals and t < arrivals[-1][0]:
                raise TraceFormatError("arrival times must be non-decreasing", line_no)
            arrivals.append((float(t), job_id))
        else:
            raise TraceFormatError(f"unknown record type {kind!r}", line_no)
    if header is None:
        raise TraceFormatError("empty trace file")
    return Trace(arrivals, catalog)


def load_trace(path) -> Trace:
    """Load a trace from a file path or a ``builtin:<name>`` reference."""
    path = str(path)
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        if name not in BUILTIN_TRACES:
            raise ValidationError(f"unknown builtin trace {name!r}")
        return BUILTIN_TRACES[name]()
    return loads_trace(Path(path).read_text())


def config_to_dict(config: GeneratorConfig) -> dict:
    return asdict(config)
