import time

import pytest

from lumpedvem.harness import run_convergence

ACCEPTANCE_LEVELS = [6, 12, 24]
ACCEPTANCE_SEED = 7


def _timed_table(family, integrator, **kw):
    start = time.perf_counter()
    table = run_convergence(family, ACCEPTANCE_LEVELS, k=1, integrator=integrator,
                            seed=ACCEPTANCE_SEED, **kw)
    return table, time.perf_counter() - start


@pytest.fixture(scope="session")
def distorted_rk3():
    return _timed_table("distorted-quad", "ssprk3")


@pytest.fixture(scope="session")
def distorted_rk54():
    return _timed_table("distorted-quad", "ssprk54")


@pytest.fixture(scope="session")
def serendipity_rk3():
    return _timed_table("serendipity-q8", "ssprk3")


@pytest.fixture(scope="session")
def voronoi_rk3():
    # heavier Lloyd relaxation keeps h_max tracking 1/n so the refinement
    # levels land near h_max = 0.25, 0.125, 0.0625
    return _timed_table("voronoi", "ssprk3", lloyd_iters=25)
