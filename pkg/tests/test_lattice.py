import numpy as np
import pytest
from hypothesis import given, strategies as st

from siltlab.lattice import (
    LatticeFunction,
    box_function,
    conjugate_exponent,
    delta,
    p_norm,
    two_q_conjugate,
)


def test_conjugate_exponent_values():
    assert conjugate_exponent(2.0) == 2.0
    assert conjugate_exponent(1.0) == np.inf
    assert conjugate_exponent(4.0) == pytest.approx(4.0 / 3.0)
    with pytest.raises(ValueError):
        conjugate_exponent(0.5)


@given(st.floats(min_value=1.01, max_value=50.0))
def test_conjugate_exponent_identity(p):
    pp = conjugate_exponent(p)
    assert 1.0 / p + 1.0 / pp == pytest.approx(1.0, abs=1e-12)


def test_two_q_conjugate():
    # (2q)' = 2q/(2q-1); q=2 gives 4/3
    assert two_q_conjugate(2.0) == pytest.approx(4.0 / 3.0)
    assert two_q_conjugate(1.0) == pytest.approx(2.0)


def test_p_norm_examples():
    v = np.array([3.0, -4.0])
    assert p_norm(v, 2.0) == pytest.approx(5.0)
    assert p_norm(v, 1.0) == pytest.approx(7.0)
    assert p_norm(v, np.inf) == pytest.approx(4.0)
    # real exponent
    assert p_norm(np.array([2.0, 1.0]), 2.5) == pytest.approx((2 ** 2.5 + 1) ** (1 / 2.5))


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=8))
def test_p_norms_decrease_in_p(vals):
    v = np.asarray(vals)
    assert p_norm(v, 3.0) <= p_norm(v, 2.0) + 1e-12
    assert p_norm(v, 2.0) <= p_norm(v, 1.0) + 1e-12


def test_lattice_function_sites_and_norms():
    f = box_function(np.arange(6.0).reshape(2, 3), origin=(-1, 2))
    sites = f.sites()
    assert sites.shape == (6, 2)
    assert tuple(sites[0]) == (-1, 2)
    assert f.norm(2.0) == pytest.approx(np.sqrt(np.sum(np.arange(6.0) ** 2)))
    g = f.normalized(2.0)
    assert g.norm(2.0) == pytest.approx(1.0)


def test_delta_and_torus_validation():
    d0 = delta(0, 1)
    assert d0.norm(17.0) == 1.0
    t = delta((3,), 1, space="torus", R=8)
    assert t.values[3] == 1.0
    with pytest.raises(ValueError):
        LatticeFunction(np.ones(5), space="torus", R=8)
    with pytest.raises(ValueError):
        LatticeFunction(np.ones(3), space="weird")
