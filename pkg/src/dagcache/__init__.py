"""Cache placement for multi-stage job DAGs that share intermediate results."""
from .dag import Catalog, CatalogEntry, JobDag, NodeSpec, chain, fingerprint, predecessors, successors
from .errors import (CatalogTooLargeError, ConfigError, ConsistencyError, ConvergenceError,
                     DagCacheError, TraceFormatError, ValidationError)
from .objective import (FractionalState, Placement, brute_force_optimum, caching_gain,
                        expected_total_work, job_work_under_placement, multilinear_gain,
                        relaxed_gain, supergradient, total_work)
from .offline import greedy, maximize_relaxation, project_capacity, round_fractional, solve
from .online import AdaptiveState, estimator_moment_check, run_periods
from .policies import (FIFO, LCS, LRU, AdaptiveGradient, CacheEngine, HeuristicAdaptive,
                       JobExecutionRecord, NoCache, ScoreTable, estimate_cost, make_engine)
from .simulator import RunReport, run, sweep
from .workload import (GeneratorConfig, Trace, generate, generate_regression_workload, load_trace,
                       save_trace, simple_example_trace)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveGradient", "AdaptiveState", "CacheEngine", "Catalog", "CatalogEntry",
    "CatalogTooLargeError", "ConfigError", "ConsistencyError", "ConvergenceError", "DagCacheError",
    "FIFO", "FractionalState", "GeneratorConfig", "HeuristicAdaptive", "JobDag",
    "JobExecutionRecord", "LCS", "LRU", "NoCache", "NodeSpec", "Placement", "RunReport",
    "ScoreTable", "Trace", "TraceFormatError", "ValidationError", "brute_force_optimum",
    "caching_gain", "chain", "estimate_cost", "estimator_moment_check", "expected_total_work",
    "fingerprint", "generate", "generate_regression_workload", "greedy",
    "job_work_under_placement", "load_trace", "make_engine", "maximize_relaxation",
    "multilinear_gain", "predecessors", "project_capacity", "relaxed_gain", "round_fractional",
    "run", "run_periods", "save_trace", "simple_example_trace", "solve", "successors",
    "supergradient", "sweep", "total_work",
]
