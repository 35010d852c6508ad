import numpy as np
import pytest

from faultrom import cases, snapshots as snaps


def small_case1(**kw):
    defaults = dict(nx_left=4, nx_right=5, ny=20, snapshot_count=60,
                    sizes=(40, 10, 10))
    defaults.update(kw)
    return cases.case1(**defaults)


@pytest.fixture(scope="session")
def case1_small():
    return small_case1()


@pytest.fixture(scope="session")
def case1_small_pipeline(case1_small):
    return cases.CasePipeline(case1_small)


@pytest.fixture(scope="session")
def case1_small_snapshots(case1_small, case1_small_pipeline):
    space = case1_small.parameter_space()
    return snaps.generate(space, case1_small_pipeline, 60, seed=11,
                          sizes=(40, 10, 10))


@pytest.fixture(scope="session")
def case3_pipeline():
    pipe = cases.CasePipeline(cases.case3())
    pipe._ensure()
    return pipe


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
