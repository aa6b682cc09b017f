import os

import pytest
from hypothesis import HealthCheck, settings

from mixedlap import OperatorCache, ProblemParams, solve_ground_state
from mixedlap.verify import _operator

# kernel quadrature makes single examples slow; disable the deadline
settings.register_profile(
    "kernels", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("kernels")


@pytest.fixture(scope="session")
def opcache(tmp_path_factory):
    """Shared operator cache; point MIXEDLAP_TEST_CACHE at a directory to
    keep assemblies warm across runs while iterating locally."""
    root = os.environ.get("MIXEDLAP_TEST_CACHE")
    if not root:
        root = tmp_path_factory.mktemp("opcache")
    return OperatorCache(root)


@pytest.fixture(scope="session")
def op_factory(opcache):
    def build(dim, s, sector=0, m=64, grading=2.0, rmax=4.0, quad=96):
        return _operator(dim, s, sector, m, grading, opcache, quad, rmax)
    return build


@pytest.fixture(scope="session")
def gs_factory(op_factory):
    """Memoized ground states so spectral/extension tests share solves."""
    solved = {}

    def solve(dim=2, s=0.5, p=3.0, lam=0.0, m=64, tol=1e-8):
        key = (dim, s, p, lam, m, tol)
        if key not in solved:
            op = op_factory(dim, s, m=m)
            params = ProblemParams(dim=dim, s=s, p=p, lam=lam)
            solved[key] = (op, solve_ground_state(op, params, tol=tol))
        return solved[key]

    return solve
