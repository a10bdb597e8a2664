import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from toricat.couplings import (
    ATCouplings,
    BoltzmannCouplings,
    DegenerateWeightError,
    amp_damp_couplings,
    boltzmann_form,
    cross_term_bound,
    rotation_couplings,
    self_duality_residual,
    weight_oracle_ampdamp,
    weight_oracle_rotation,
)
from toricat.noise import RotationAxis, ValidationError

unit = st.floats(0.0, 1.0)
thetas = st.floats(0.0, math.pi)
phis = st.floats(0.0, 2 * math.pi, exclude_max=True)
SQ2 = math.sqrt(2)


def close(at, ref, tol=1e-12):
    return all(abs(complex(x) - complex(y)) <= tol for x, y in zip((at.j1, at.j2, at.k), ref))


@pytest.mark.parametrize(
    "r, axis, ref",
    [
        (0.0, RotationAxis(1.1, 2.2), (0, 0, 1)),
        (2 - SQ2, RotationAxis.named("z"), (SQ2 - 1, SQ2 - 1, 1)),
        (0.5, RotationAxis.named("y"), (1 / 3, -1 / 3, 1)),
    ],
)
def test_rotation_couplings_examples(r, axis, ref):
    assert close(rotation_couplings(r, axis), ref, 1e-14)


@pytest.mark.parametrize("r", [-0.1, 1.1])
def test_rotation_couplings_domain(r):
    with pytest.raises(ValidationError):
        rotation_couplings(r, RotationAxis.named("z"))


@given(unit, thetas, phis)
def test_rotation_coupling_bounds(r, theta, phi):
    at = rotation_couplings(r, RotationAxis(theta, phi))
    assert at.j1 >= abs(at.j2) - 1e-14
    assert -1e-14 <= at.k <= 1 + 1e-14


def test_pure_y_weight_is_negative():
    # (1 + u/3 - v/3 + uv) at u = -1, v = +1
    w = rotation_couplings(0.5, RotationAxis.named("y")).weights()
    assert w[2] == pytest.approx(-2 / 3, abs=1e-15)


@pytest.mark.parametrize(
    "gamma, ref",
    [(0.0, (0, 0, 1)), (1.0, (1, 0, 0)), (0.3, (0.39 / 1.79, -0.21 / 1.79, 1.19 / 1.79))],
)
def test_amp_damp_examples(gamma, ref):
    assert close(amp_damp_couplings(gamma), ref, 1e-14)


@given(unit)
def test_amp_damp_gamma_swap(g):
    a, b = amp_damp_couplings(g), amp_damp_couplings(1 - g)
    assert abs(a.j1 - b.k) <= 1e-14 and abs(a.j2 - b.j2) <= 1e-14 and abs(a.k - b.j1) <= 1e-14


def test_amp_damp_forbids_minus_plus():
    for g in np.linspace(0, 1, 11):
        assert abs(amp_damp_couplings(g).weights()[2]) <= 1e-15


def test_weights_roundtrip():
    at = ATCouplings(0.2, -0.3, 0.4)
    back = ATCouplings.from_weights(3.0 * at.weights())
    assert close(back, (0.2, -0.3, 0.4), 1e-15)


@pytest.mark.parametrize(
    "at, ref",
    [
        (ATCouplings(0, 0, 1), (0, 0, 1)),
        (ATCouplings(1, 0, 0), (1, 0, 0)),
        (amp_damp_couplings(1.0), (1, 0, 0)),
        (amp_damp_couplings(0.3), (1, -1, 1)),  # W(-,+) = 0 forces the limits
        (ATCouplings(0, 0, 0), (0, 0, 0)),
    ],
)
def test_boltzmann_limits(at, ref):
    b = boltzmann_form(at)
    assert close(ATCouplings(b.t1, b.t2, b.tk), ref, 1e-15)


@pytest.mark.parametrize("gamma", [0.1, 0.3, 0.5, 0.9])
def test_boltzmann_ampdamp_tanh_system_real(gamma):
    # the tanh system written with +J_- (tau channel sign flipped) has
    # finite real solutions for 0 < gamma < 1
    at = amp_damp_couplings(gamma)
    b = boltzmann_form(ATCouplings(at.j1, -at.j2, at.k))
    for t in (b.t1, b.t2, b.tk):
        assert isinstance(t, float) and abs(t) < 1
    assert close(b.to_at(), (at.j1, -at.j2, at.k), 1e-12)


def test_boltzmann_limit_has_no_reconstruction():
    with pytest.raises(DegenerateWeightError):
        boltzmann_form(amp_damp_couplings(0.3)).to_at()


def test_boltzmann_pure_y_is_complex():
    b = boltzmann_form(rotation_couplings(0.5, RotationAxis.named("y")))
    assert any(abs(complex(t).imag) > 1e-3 for t in (b.t1, b.t2, b.tk))


def test_boltzmann_all_zero_raises():
    with pytest.raises(DegenerateWeightError):
        boltzmann_form(_ZeroTable(0, 0, 0))


class _ZeroTable(ATCouplings):
    # the constant term makes an all-zero table unreachable from (j1, j2, k)
    def weights(self):
        return np.zeros(4)


@given(unit, thetas, phis)
def test_boltzmann_reconstruction(r, theta, phi):
    at = rotation_couplings(r, RotationAxis(theta, phi))
    w = at.weights()
    if np.min(np.abs(w)) < 1e-6 * np.max(np.abs(w)):
        return  # zero weights use the limit rule, covered separately
    back = boltzmann_form(at).to_at()
    assert close(back, (at.j1, at.j2, at.k), 1e-10)


@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-1, 1), st.floats(-1, 1))
def test_boltzmann_reconstruction_complex(j1, j2, k, a, b):
    at = ATCouplings(j1 + 0.3j * a, j2, k - 0.2j * b)
    w = at.weights()
    if np.min(np.abs(w)) < 1e-3:
        return
    back = boltzmann_form(at).to_at()
    assert close(back, (at.j1, at.j2, at.k), 1e-10)


@pytest.mark.parametrize("r", np.linspace(0.0, 1.0, 11))
def test_self_duality_diagonal_axis(r):
    b = boltzmann_form(rotation_couplings(r, RotationAxis(math.pi / 2, math.pi / 4)))
    assert self_duality_residual(b) <= 1e-12


def test_self_duality_generic_axis():
    b = boltzmann_form(rotation_couplings(0.5, RotationAxis.named("z")))
    assert self_duality_residual(b) > 0.1


def test_self_duality_rejects_anisotropic():
    with pytest.raises(ValidationError):
        self_duality_residual(BoltzmannCouplings(0.1, 0.2, 0.3))


# --- brute-force weight oracles -----------------------------------------------------


@pytest.mark.parametrize(
    "r, axis",
    [(0.0, RotationAxis.named("z")), (2 - SQ2, RotationAxis.named("z")),
     (1.0, RotationAxis(math.pi / 2, math.pi / 4)), (0.7, RotationAxis(0.3, 2.0))],
)
def test_rotation_oracle_examples(r, axis):
    np.testing.assert_allclose(weight_oracle_rotation(r, axis), rotation_couplings(r, axis).weights(), atol=1e-12)


def test_rotation_oracle_noiseless_pattern():
    np.testing.assert_allclose(weight_oracle_rotation(0.0, RotationAxis.named("x")), [2, 0, 0, 2], atol=1e-15)


@given(unit, thetas, phis)
def test_rotation_oracle_property(r, theta, phi):
    axis = RotationAxis(theta, phi)
    np.testing.assert_allclose(weight_oracle_rotation(r, axis), rotation_couplings(r, axis).weights(), atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 0.5, 0.7, 1.0])
def test_ampdamp_oracle(gamma):
    out = weight_oracle_ampdamp(gamma)
    assert close(out["at"], [amp_damp_couplings(gamma).__dict__[k] for k in ("j1", "j2", "k")])
    assert out["dropped_coeff"] == pytest.approx(gamma * (1 - gamma) / (gamma**2 - gamma + 2), abs=1e-14)


def test_ampdamp_oracle_values():
    assert weight_oracle_ampdamp(0.0)["dropped_coeff"] == 0.0
    assert weight_oracle_ampdamp(0.5)["dropped_coeff"] == pytest.approx(0.25 / 1.75, abs=1e-14)
    a, b = weight_oracle_ampdamp(0.3)["at"], weight_oracle_ampdamp(0.7)["at"]
    assert a.j1 == pytest.approx(b.k, abs=1e-14) and a.j2 == pytest.approx(b.j2, abs=1e-14)


@pytest.mark.parametrize(
    "r, axis, ref",
    [(0.8, RotationAxis.named("x"), 0.0), (1.0, RotationAxis(math.pi / 2, math.pi / 4), 0.5),
     (0.5, RotationAxis(math.pi / 4, math.pi / 2), 1 / 6)],
)
def test_cross_term_bound_examples(r, axis, ref):
    assert cross_term_bound(r, axis) == pytest.approx(ref, abs=1e-15)


@given(unit, thetas, phis)
def test_cross_term_bound_at_most_half(r, theta, phi):
    assert cross_term_bound(r, RotationAxis(theta, phi)) <= 0.5 + 1e-14
