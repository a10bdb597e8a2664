"""Effective Ashkin-Teller couplings of coherent noise channels.

An edge weight is ``W(u, v) = 1 + j1*u + j2*v + k*u*v`` with ``u = s s'`` and
``v = tau tau'``.  Weight tables are always ordered
``(W(+,+), W(+,-), W(-,+), W(-,-))``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .noise import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    AmplitudeDamping,
    RotationAxis,
    ValidationError,
    channel_superoperator,
)

__all__ = [
    "UV",
    "DegenerateWeightError",
    "ATCouplings",
    "BoltzmannCouplings",
    "rotation_couplings",
    "amp_damp_couplings",
    "boltzmann_form",
    "self_duality_residual",
    "weight_oracle_rotation",
    "weight_oracle_ampdamp",
    "cross_term_bound",
]

UV = ((1, 1), (1, -1), (-1, 1), (-1, -1))
_ZERO_REL = 1e-14


class DegenerateWeightError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ATCouplings:
    j1: complex
    j2: complex
    k: complex

    def weights(self) -> np.ndarray:
        return np.array([1 + self.j1 * u + self.j2 * v + self.k * u * v for u, v in UV])

    @classmethod
    def from_weights(cls, w) -> "ATCouplings":
        """Inverse of :meth:`weights` after normalizing the mean to one."""
        w = np.asarray(w, dtype=complex)
        mean = w.mean()
        if mean == 0:
            raise DegenerateWeightError("weight table has zero mean")
        w = w / mean
        u = np.array([p[0] for p in UV])
        v = np.array([p[1] for p in UV])
        return cls(
            *(_real_if_close(np.mean(w * basis)) for basis in (u, v, u * v))
        )

    def swap_s_stau(self) -> "ATCouplings":
        """Exchange the roles of the s and s*tau channels."""
        return ATCouplings(self.k, self.j2, self.j1)

    def to_dict(self) -> dict:
        return {key: _jsonable(val) for key, val in asdict(self).items()}


@dataclass(frozen=True)
class BoltzmannCouplings:
    """Hyperbolic tangents of the exponential-form couplings."""

    t1: complex
    t2: complex
    tk: complex

    def to_at(self) -> ATCouplings:
        """Reconstruct the linear form from ``(1+u t1)(1+v t2)(1+uv tk)``."""
        t1, t2, tk = self.t1, self.t2, self.tk
        norm = 1 + t1 * t2 * tk
        if norm == 0:
            raise DegenerateWeightError("tanh values do not define a weight")
        return ATCouplings(
            _real_if_close((t1 + t2 * tk) / norm),
            _real_if_close((t2 + t1 * tk) / norm),
            _real_if_close((tk + t1 * t2) / norm),
        )

    def to_dict(self) -> dict:
        return {key: _jsonable(val) for key, val in asdict(self).items()}


def _real_if_close(x, tol: float = 1e-13):
    x = complex(x)
    if abs(x.imag) <= tol * max(1.0, abs(x.real)):
        return x.real
    return x


def _jsonable(x):
    x = complex(x)
    return x.real if x.imag == 0 else [x.real, x.imag]


def _check_unit(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValidationError(f"{name}={x} outside [0, 1]")


def rotation_couplings(r: float, axis: RotationAxis) -> ATCouplings:
    _check_unit("R", r)
    st2 = math.sin(axis.theta) ** 2
    ct2 = math.cos(axis.theta) ** 2
    sp2 = math.sin(axis.phi) ** 2
    cp2 = math.cos(axis.phi) ** 2
    den = 2 - r + r * st2 * sp2
    return ATCouplings(
        r * (st2 * cp2 + ct2) / den,
        r * (st2 * cp2 - ct2) / den,
        (2 - r - r * st2 * sp2) / den,
    )


def amp_damp_couplings(gamma: float) -> ATCouplings:
    _check_unit("gamma", gamma)
    g = gamma
    d = g * g - g + 2
    return ATCouplings(g * (1 + g) / d, -g * (1 - g) / d, (g * g - 3 * g + 2) / d)


def _limit_tanh(p: list, q: list) -> complex:
    """``(prod p - prod q) / (prod p + prod q)`` with zeros replaced by a
    vanishing common shift of the weights (``sqrt(W + delta)``)."""
    pz = sum(1 for x in p if x == 0)
    qz = sum(1 for x in q if x == 0)
    p0 = np.prod([x for x in p if x != 0]) if len(p) > pz else 1.0
    q0 = np.prod([x for x in q if x != 0]) if len(q) > qz else 1.0
    if pz < qz:
        return 1.0
    if pz > qz:
        return -1.0
    if p0 + q0 == 0:
        raise DegenerateWeightError("coupling pole: weights give tanh = inf")
    return (p0 - q0) / (p0 + q0)


def boltzmann_form(at: ATCouplings) -> BoltzmannCouplings:
    """Exponential-form couplings, stored as tanh values.

    Square roots of the weights are principal; the three ratios ``ab/cd``,
    ``ac/bd``, ``ad/bc`` then equal ``exp(2J1), exp(2J2), exp(2K)`` for one
    consistent branch, so the tanh values rebuild the weight table exactly.
    """
    w = at.weights().astype(complex)
    scale = np.max(np.abs(w))
    if scale == 0:
        raise DegenerateWeightError("all four weights vanish")
    w = np.where(np.abs(w) <= _ZERO_REL * scale, 0, w)
    a, b, c, d = np.sqrt(w)
    t1 = _limit_tanh([a, b], [c, d])
    t2 = _limit_tanh([a, c], [b, d])
    tk = _limit_tanh([a, d], [b, c])
    return BoltzmannCouplings(*(_real_if_close(t) for t in (t1, t2, tk)))


def self_duality_residual(b: BoltzmannCouplings, tol: float = 1e-12) -> float:
    """``|exp(-2K) - sinh(2J)|`` for isotropic real couplings."""
    vals = [complex(x) for x in (b.t1, b.t2, b.tk)]
    if any(abs(x.imag) > tol for x in vals):
        raise ValidationError("self-duality needs real couplings")
    t1, t2, tk = (x.real for x in vals)
    if abs(t1 - t2) > tol:
        raise ValidationError(f"anisotropic couplings t1={t1}, t2={t2}")
    t = 0.5 * (t1 + t2)
    exp_m2k = (1 - tk) / (1 + tk)
    if abs(t) >= 1:
        return math.inf
    return abs(exp_m2k - 2 * t / (1 - t * t))


# --- brute-force oracles ------------------------------------------------------

_SPINS = (1, -1)  # basis index 0 <-> z = +1


def _z_sum_table(m: np.ndarray) -> dict:
    """Evaluate ``omega(A, C, B, D) = sum_z M[(z', zb'), (z, zb)] *
    (1 + zA)(1 + zb C)(1 + z'B)(1 + zb' D)`` for all sixteen arguments."""
    table = {}
    for a, c, b, d in itertools.product(_SPINS, repeat=4):
        total = 0j
        for (i, z), (j, zb), (k, zp), (l, zbp) in itertools.product(
            enumerate(_SPINS), repeat=4
        ):
            coeff = m[2 * k + l, 2 * i + j]
            if coeff != 0:
                total += coeff * (1 + z * a) * (1 + zb * c) * (1 + zp * b) * (1 + zbp * d)
        table[(a, c, b, d)] = total
    return table


def _reduce(table: dict) -> tuple[np.ndarray, complex, float]:
    """Collapse the z-sum table to (u, v) weights.

    Returns the A-averaged weights ordered as ``UV``, the part odd in A at
    ``u = v = +1`` and the largest entry with ``D != ABC``.
    """
    off = max(
        (abs(val) for (a, c, b, d), val in table.items() if d != a * b * c), default=0.0
    )
    weights = []
    odd = 0j
    for u, v in UV:
        vals = {}
        for a in _SPINS:
            c = u * a
            b = v * c
            vals[a] = table[(a, c, b, a * b * c)]
        weights.append(0.5 * (vals[1] + vals[-1]))
        if (u, v) == (1, 1):
            odd = 0.5 * (vals[1] - vals[-1])
    return np.array(weights), odd, off


def weight_oracle_rotation(r: float, axis: RotationAxis) -> np.ndarray:
    """Normalized weight table from the cross-term-free superoperator."""
    _check_unit("R", r)
    lam = r / (2 - r)
    nx, ny, nz = axis.vector
    m = np.eye(4, dtype=complex) + lam * (
        nx**2 * np.kron(PAULI_X, PAULI_X)
        - ny**2 * np.kron(PAULI_Y, PAULI_Y)
        + nz**2 * np.kron(PAULI_Z, PAULI_Z)
    )
    weights, _, off = _reduce(_z_sum_table(m))
    if off > 1e-12:
        raise DegenerateWeightError(f"weight off the D = ABC shell: {off}")
    return np.real_if_close(weights / weights.mean(), tol=1000)


def weight_oracle_ampdamp(gamma: float) -> dict:
    """Couplings and dropped-term coefficient from ``E^dagger E``."""
    e = channel_superoperator(AmplitudeDamping(gamma))
    weights, odd, off = _reduce(_z_sum_table(e.conj().T @ e))
    if off > 1e-12:
        raise DegenerateWeightError(f"weight off the D = ABC shell: {off}")
    mean = weights.mean()
    # the odd part is c*(A + B + C + ABC) = 4*c*A at u = v = +1
    return {
        "at": ATCouplings.from_weights(weights),
        "dropped_coeff": float((odd / (4 * mean)).real),
    }


def cross_term_bound(r: float, axis: RotationAxis) -> float:
    _check_unit("R", r)
    lam = r / (2 - r)
    nx, ny, nz = np.abs(axis.vector)
    return float(lam * max(nx * ny, ny * nz, nz * nx))

