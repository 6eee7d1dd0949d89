"""Time the numba and pure-numpy kernel backends on a generated catalog.

    python benchmarks/bench_kernels.py --jobs 300 --repeat 20
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from dagcache import GeneratorConfig, generate
from dagcache.kernels import get_backend


def _best(fn, repeat: int) -> float:
    fn()  # warm-up, includes compilation for the jit backend
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--jobs", type=int, default=300, help="jobs in the generated trace")
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    catalog = generate(GeneratorConfig(num_jobs=args.jobs, seed=args.seed)).catalog
    layout, sizes = catalog.layout(), catalog.sizes
    rng = np.random.default_rng(args.seed)
    capacity = 0.1 * float(sizes.sum())
    y = rng.random(len(catalog)) * 0.2
    y_raw = rng.normal(0.3, 0.5, len(catalog))
    u = rng.random(2 * len(catalog) + 1)
    rank = np.argsort(np.argsort(catalog.fingerprints)).astype(np.int64)
    small = generate(GeneratorConfig(num_jobs=min(args.jobs, 40), seed=args.seed)).catalog
    small_rank = np.argsort(np.argsort(small.fingerprints)).astype(np.int64)

    cases = {
        "relaxed": lambda k: k.relaxed(layout, y),
        "multilinear": lambda k: k.multilinear(layout, y),
        "supergradient": lambda k: k.supergradient(layout, y),
        "project": lambda k: k.project(y_raw, sizes, capacity),
        "pairwise_round": lambda k: k.pairwise_round(np.clip(y, 0, 1), sizes, u),
        "greedy(small)": lambda k: k.greedy(small.layout(), small.sizes, 0.1 * float(small.sizes.sum()),
                                            small_rank, True),
    }
    backends = {name: get_backend(name) for name in ("numpy", "numba")}
    print(f"catalog: {len(catalog)} entries, {len(layout.gid)} occurrences; greedy on {len(small)} entries")
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, case in cases.items():
        t_np = _best(lambda: case(backends["numpy"]), args.repeat)
        t_jit = _best(lambda: case(backends["numba"]), args.repeat)
        print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_jit:>12.3f}{t_np / t_jit:>10.1f}x")


if __name__ == "__main__":
    main()
