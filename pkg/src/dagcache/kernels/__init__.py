"""Hot numeric kernels with a compiled and a pure-numpy implementation.

The numba path is used when numba imports cleanly, unless the environment
variable ``DAGCACHE_DISABLE_JIT`` is set to a truthy value. Both modules
expose the same functions; :func:`get_backend` returns either by name.
"""
from __future__ import annotations

import importlib
import os

_TRUTHY = {"1", "true", "yes", "on"}


def jit_disabled() -> bool:
    return os.environ.get("DAGCACHE_DISABLE_JIT", "").strip().lower() in _TRUTHY


def get_backend(name: str | None = None):
    """Return the kernel module ``"numba"`` or ``"numpy"`` (default: active)."""
    if name is None:
        return backend
    if name == "numpy":
        return importlib.import_module("._numpy", __name__)
    if name == "numba":
        return importlib.import_module("._jit", __name__)
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if not jit_disabled():
        try:
            return importlib.import_module("._jit", __name__)
        except ImportError:
            pass
    return importlib.import_module("._numpy", __name__)


backend = _select()
BACKEND = backend.NAME

path_sum = backend.path_sum
path_survival = backend.path_survival
relaxed = backend.relaxed
multilinear = backend.multilinear
subtree_sum = backend.subtree_sum
subtree_active = backend.subtree_active
supergradient = backend.supergradient
greedy = backend.greedy
project = backend.project
pairwise_round = backend.pairwise_round

__all__ = [
    "BACKEND", "backend", "get_backend", "jit_disabled",
    "path_sum", "path_survival", "relaxed", "multilinear", "subtree_sum",
    "subtree_active", "supergradient", "greedy", "project", "pairwise_round",
]
