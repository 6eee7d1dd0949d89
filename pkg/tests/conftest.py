import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dagcache import Catalog, chain, simple_example_trace  # noqa: E402
from dagcache.kernels import get_backend  # noqa: E402


def chain_catalog(rate=1.0, size=500.0):
    """R0 -> R1 -> R2 with costs 0, 100, 10."""
    cat = Catalog()
    cat.register_job(chain(["R0", "R1", "R2"], [0, 100, 10], size), rate, "J")
    return cat


@pytest.fixture
def chain_cat():
    return chain_catalog()


@pytest.fixture
def simple_trace():
    return simple_example_trace()


def fp_of(catalog, label):
    return catalog.resolve(label)


def idx_of(catalog, label):
    return catalog.index(catalog.resolve(label))


def _backends():
    out = [pytest.param("numpy", id="numpy")]
    try:
        get_backend("numba")
        out.append(pytest.param("numba", id="numba"))
    except ImportError:
        out.append(pytest.param("numba", id="numba", marks=pytest.mark.skip("numba unavailable")))
    return out


BACKENDS = _backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return get_backend(request.param)
