import warnings

import pytest

from siltlab.model import ModelParams, build_jump_law, project_to_torus


@pytest.fixture(scope="session")
def critical_law():
    """d=1, alpha=0.5, q=2 (critical): the reference model of the whole suite."""
    return build_jump_law(ModelParams(1, 0.5, 2.0), 10_000)


@pytest.fixture(scope="session")
def supercritical_law_2d():
    """d=2, alpha=1, q=3 (supercritical)."""
    return build_jump_law(ModelParams(2, 1.0, 3.0), 60)


def make_torus(law, R, method="fold"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return project_to_torus(law, R, method=method)


@pytest.fixture(scope="session")
def torus16(critical_law):
    return make_torus(critical_law, 16)


@pytest.fixture(scope="session")
def torus8(critical_law):
    return make_torus(critical_law, 8)


@pytest.fixture(scope="session")
def torus32(critical_law):
    return make_torus(critical_law, 32)
