import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from toricat.noise import ValidationError
from toricat.staggered import (
    StaggeredVertexParams,
    anyon_constants,
    exact_correlation_length,
    finite_correlation_length,
    order_parameter,
    small_r,
    transfer_element,
)


@pytest.mark.parametrize("big_r,r", [(0.0, 0.0), (1.0, 1.0), (0.5, 1 / 3), (2 / 3, 0.5)])
def test_small_r(big_r, r):
    assert small_r(big_r) == pytest.approx(r)


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_small_r_rejects(bad):
    with pytest.raises(ValidationError):
        small_r(bad)


@given(st.integers(1, 12), st.floats(0.01, 0.99))
def test_transfer_element_cosh_form(lx, r):
    params = StaggeredVertexParams(r, lx=lx)
    for p in range(-lx, lx + 1):
        expected = 2 * r ** (2 * lx) * (1 + math.cosh(2 * p * math.log(r)))
        assert transfer_element(p, params) == pytest.approx(expected, rel=1e-12)


def test_transfer_element_epsilon_and_range():
    params = StaggeredVertexParams(0.5, epsilon=1.1, lx=4)
    assert transfer_element(2, params) == pytest.approx(1.1**4 * transfer_element(2, StaggeredVertexParams(0.5, lx=4)))
    with pytest.raises(ValidationError):
        transfer_element(5, params)


def test_transfer_element_r_zero():
    params = StaggeredVertexParams(0.0, lx=3)
    assert transfer_element(3, params) == 1.0 and transfer_element(0, params) == 0.0


@pytest.mark.parametrize("big_r", [0.3, 0.6])
def test_finite_width_converges(big_r):
    assert finite_correlation_length(big_r, 32) == pytest.approx(exact_correlation_length(big_r), rel=1e-8)


def test_finite_width_from_transfer_ratio():
    big_r, lx = 0.5, 6
    params = StaggeredVertexParams.from_big_r(big_r, lx=lx)
    ratio = transfer_element(lx - 1, params) / transfer_element(lx, params)
    assert finite_correlation_length(big_r, lx) == pytest.approx(-1 / math.log(ratio), rel=1e-12)


def test_divergence_near_one():
    eps = 1e-4
    assert exact_correlation_length(1 - eps) * 4 * eps == pytest.approx(1, abs=1e-3)


def test_correlation_length_limits():
    assert exact_correlation_length(0.0) == 0.0
    assert exact_correlation_length(1.0) == math.inf
    assert finite_correlation_length(1.0, 4) == math.inf
    xs = [exact_correlation_length(r) for r in np.linspace(0.1, 0.99, 20)]
    assert np.all(np.diff(xs) > 0)


def test_order_parameter_symmetric_without_field():
    assert order_parameter(StaggeredVertexParams(0.4, lx=6, ly=6)) == pytest.approx(0, abs=1e-14)


@pytest.mark.parametrize("ly", [200, 2000, 20000])
def test_order_parameter_locks_to_maximal_imbalance(ly):
    # r < 1 and long strips: only p = +-lx survive, so <O>/2lx = tanh(2 ly lx log eps)
    lx, eps = 8, 1 + 1e-6
    ordered = order_parameter(StaggeredVertexParams(0.3, epsilon=eps, lx=lx, ly=ly))
    assert ordered == pytest.approx(math.tanh(2 * ly * lx * math.log(eps)), rel=1e-3)
    # at r = 1 all sectors compete and the response is much weaker
    free = order_parameter(StaggeredVertexParams(1.0, epsilon=eps, lx=lx, ly=ly))
    assert free < ordered / 10


def test_order_parameter_r_zero():
    lx, ly, eps = 4, 4, 1.01
    got = order_parameter(StaggeredVertexParams(0.0, epsilon=eps, lx=lx, ly=ly))
    assert got == pytest.approx(math.tanh(2 * ly * lx * math.log(eps)), rel=1e-12)


def test_params_validation():
    for kw in ({"r": 1.5}, {"r": 0.5, "epsilon": 0.9}, {"r": 0.5, "lx": 0}):
        with pytest.raises(ValidationError):
            StaggeredVertexParams(**kw)


def test_anyon_constants():
    assert anyon_constants(0.5) == (0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        anyon_constants(1.0)
