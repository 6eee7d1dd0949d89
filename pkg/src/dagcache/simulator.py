"""Trace replay against a cache policy on a single FCFS server.

Jobs start at ``max(arrival, previous completion)`` and run for their charged
work; waiting time is completion minus arrival.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Sequence

from .errors import DagCacheError
from .policies import POLICY_OPTIONS, JobExecutionRecord, make_engine
from .workload import Trace

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "policy", "capacity", "seed", "hit_ratio_count", "hit_ratio_bytes", "hits", "accessed_rdds",
    "hit_bytes", "accessed_bytes", "total_work", "makespan", "avg_waiting", "jobs", "error",
)


@dataclass
class RunReport:
    policy: str
    capacity: float
    seed: int
    hit_ratio_count: float
    hit_ratio_bytes: float
    hits: int
    accessed_rdds: int
    hit_bytes: float
    accessed_bytes: float
    total_work: float
    makespan: float
    avg_waiting: float
    per_job: list[JobExecutionRecord] = field(default_factory=list, repr=False)
    periods: list[dict] = field(default_factory=list, repr=False)

    def row(self) -> dict[str, Any]:
        out = {c: getattr(self, c) for c in CSV_COLUMNS if hasattr(self, c)}
        out["jobs"] = len(self.per_job)
        out["error"] = ""
        return out

    def to_dict(self) -> dict[str, Any]:
        out = self.row()
        del out["error"]
        out["per_job"] = [r.to_dict() for r in self.per_job]
        if self.periods:
            out["periods"] = self.periods
        return out


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else 0.0


def run(trace: Trace, policy: str, capacity: float, seed: int = 0, **opts) -> RunReport:
    """Replay ``trace``; deterministic in (trace, policy, capacity, seed, opts)."""
    if policy == "adaptive-grad":
        opts.setdefault("seed", seed)
        if trace.arrivals:
            opts.setdefault("start", trace.arrivals[0][0])
        opts.setdefault("period", 20.0 * trace.mean_interarrival())
    engine = make_engine(policy, capacity, trace.catalog, **opts)
    clock = 0.0
    records = []
    for arrival, job_id in trace.arrivals:
        dag = trace.catalog.jobs[job_id].dag
        start = max(arrival, clock)
        rec = engine.process_job(dag, job_id, arrival)
        rec.arrival, rec.start = arrival, start
        rec.completion = clock = start + rec.charged
        records.append(rec)
    hits = sum(r.hits for r in records)
    accessed = sum(r.accessed for r in records)
    hit_bytes = sum(r.hit_bytes for r in records)
    accessed_bytes = sum(r.accessed_bytes for r in records)
    return RunReport(
        policy=policy,
        capacity=float(capacity),
        seed=int(seed),
        hit_ratio_count=_ratio(hits, accessed),
        hit_ratio_bytes=_ratio(hit_bytes, accessed_bytes),
        hits=hits,
        accessed_rdds=accessed,
        hit_bytes=float(hit_bytes),
        accessed_bytes=float(accessed_bytes),
        total_work=float(sum(r.charged for r in records)),
        makespan=records[-1].completion if records else 0.0,
        avg_waiting=_ratio(sum(r.waiting for r in records), len(records)),
        per_job=records,
        periods=list(getattr(engine, "periods", [])),
    )


def _cell(args) -> dict[str, Any]:
    trace, policy, capacity, seed, opts = args
    try:
        report = run(trace, policy, capacity, seed, **opts)
    except DagCacheError as exc:
        row = dict.fromkeys(CSV_COLUMNS, "")
        row.update(policy=policy, capacity=float(capacity), seed=int(seed), error=str(exc))
        return row
    return report.row()


def sweep(trace: Trace, policies: Sequence[str], capacities: Sequence[float],
          seeds: Sequence[int], jobs: int = 1, **opts) -> list[dict[str, Any]]:
    """One tidy row per (policy, capacity, seed). Errors are kept per row."""
    if not policies or not capacities or not seeds:
        raise DagCacheError("sweep needs non-empty policy, capacity and seed lists")
    cells = []
    for policy, capacity, seed in product(policies, capacities, seeds):
        allowed = POLICY_OPTIONS.get(policy, frozenset())
        cells.append((trace, policy, capacity, seed, {k: v for k, v in opts.items() if k in allowed}))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_cell, cells))
    return [_cell(c) for c in cells]


def rows_to_csv(rows: Sequence[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k, "")) for k in CSV_COLUMNS})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def report_to_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
