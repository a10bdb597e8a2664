"""Single-qubit coherent noise: rotation axes, angle distributions, channels.

Channels are represented in the doubled (Choi) basis ``|i, j>>`` with the
ordering ``(0,0), (0,1), (1,0), (1,1)``; a channel with Kraus operators
``K_a`` becomes ``sum_a kron(K_a, conj(K_a))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy import special

__all__ = [
    "QUAD_NODES",
    "ValidationError",
    "QuadratureError",
    "RotationAxis",
    "Delta",
    "Uniform",
    "VonMises",
    "DoubleVonMises",
    "Tabulated",
    "AngleDistribution",
    "RandomRotation",
    "AmplitudeDamping",
    "NoiseChannelSpec",
    "bessel_ratio",
    "second_fourier_moment",
    "r_parameter",
    "channel_superoperator",
    "rotation_superoperator_quadrature",
    "stochastic_superoperator",
    "stochastic_reduction_check",
    "distribution_from_config",
    "pauli_dot",
]

QUAD_NODES = 4096
_NORM_TOL = 1e-10
_RENORM_TOL = 1e-3

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


class ValidationError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


class QuadratureError(ArithmeticError):
    """Raised when the fixed-node quadrature cannot reach its tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved {achieved:.3e})")
        self.achieved = achieved


def pauli_dot(n) -> np.ndarray:
    """Return ``n . sigma`` for a real 3-vector ``n``."""
    return n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z


@dataclass(frozen=True)
class RotationAxis:
    """Rotation axis in spherical coordinates with Y as the polar axis."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi + 1e-12):
            raise ValidationError(f"theta={self.theta} outside [0, pi]")
        if not np.isfinite(self.phi):
            raise ValidationError("phi must be finite")

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array(
            [st * math.sin(self.phi), math.cos(self.theta), st * math.cos(self.phi)]
        )

    @classmethod
    def named(cls, name: str) -> "RotationAxis":
        name = name.lower()
        if name == "x":
            return cls(math.pi / 2, math.pi / 2)
        if name == "y":
            return cls(0.0, 0.0)
        if name == "z":
            return cls(math.pi / 2, 0.0)
        raise ValidationError(f"unknown axis name {name!r}")


def bessel_ratio(n: int, kappa: float) -> float:
    """``I_n(kappa) / I_0(kappa)`` without overflow at large ``kappa``."""
    if kappa < 0:
        raise ValidationError("kappa must be nonnegative")
    if kappa == 0:
        return 1.0 if n == 0 else 0.0
    if kappa > _ASYMPTOTIC_KAPPA:
        return _asymptotic_ive(n, kappa) / _asymptotic_ive(0, kappa)
    return float(special.ive(n, kappa) / special.ive(0, kappa))


_ASYMPTOTIC_KAPPA = 1e6


def _asymptotic_ive(n: int, x: float, terms: int = 6) -> float:
    """``I_n(x) e^{-x} sqrt(2 pi x)`` by the large-argument series."""
    mu = 4.0 * n * n
    total, term = 1.0, 1.0
    for k in range(1, terms):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total += term
    return total


def _nodes(n: int = QUAD_NODES) -> np.ndarray:
    return -math.pi + 2 * math.pi * np.arange(n) / n


# --- distributions -----------------------------------------------------------


class _Distribution:
    """Mixin shared by every angle distribution."""

    even: bool = False

    def density(self, phi):  # pragma: no cover - overridden
        raise NotImplementedError

    def fourier_moment(self, n: int) -> complex:
        return _trapezoid_moment(self.density, n)

    def shifted(self, c: float):
        """Distribution of ``phi + c``; used to check mean invariance."""
        return _Shifted(self, c)


def _trapezoid_moment(density, n: int) -> complex:
    # Periodic trapezoid; compare against half the nodes as an error estimate.
    fine = _nodes(QUAD_NODES)
    coarse = fine[::2]
    m_fine = np.mean(density(fine) * np.exp(1j * n * fine)) * 2 * math.pi
    m_coarse = np.mean(density(coarse) * np.exp(1j * n * coarse)) * 2 * math.pi
    err = abs(m_fine - m_coarse)
    if err > 1e-8:
        raise QuadratureError("Fourier moment did not converge", err)
    return complex(m_fine)


@dataclass(frozen=True)
class Delta(_Distribution):
    """Point mass at ``eps``."""

    eps: float = 0.0

    @property
    def even(self) -> bool:
        return math.sin(self.eps) == 0.0 and math.cos(self.eps) > 0

    def density(self, phi):
        raise ValidationError("Delta has no density; use fourier_moment")

    def fourier_moment(self, n: int) -> complex:
        return complex(np.exp(1j * n * self.eps))


@dataclass(frozen=True)
class Uniform(_Distribution):
    even = True

    def density(self, phi):
        return np.full_like(np.asarray(phi, dtype=float), 1 / (2 * math.pi))

    def fourier_moment(self, n: int) -> complex:
        return 1.0 + 0j if n == 0 else 0j


@dataclass(frozen=True)
class VonMises(_Distribution):
    kappa: float
    mean: float = 0.0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValidationError("kappa must be nonnegative")

    @property
    def even(self) -> bool:
        return self.mean == 0.0 or self.kappa == 0.0

    def density(self, phi):
        phi = np.asarray(phi, dtype=float)
        # exp(kappa*(cos-1)) / (2 pi ive0) avoids overflow for large kappa
        return np.exp(self.kappa * (np.cos(phi - self.mean) - 1)) / (
            2 * math.pi * special.ive(0, self.kappa)
        )

    def fourier_moment(self, n: int) -> complex:
        return bessel_ratio(abs(n), self.kappa) * complex(np.exp(1j * n * self.mean))


@dataclass(frozen=True)
class DoubleVonMises(_Distribution):
    """Mixture ``q * vM(kappa, 0) + (1 - q) * vM(kappa, delta_phi)``."""

    q: float
    kappa: float
    delta_phi: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValidationError("q must lie in [0, 1]")
        if not self.kappa >= 0:
            raise ValidationError("kappa must be nonnegative")

    @property
    def components(self) -> tuple[VonMises, VonMises]:
        return VonMises(self.kappa, 0.0), VonMises(self.kappa, self.delta_phi)

    @property
    def even(self) -> bool:
        return self.q == 1.0 or self.kappa == 0.0 or self.delta_phi == 0.0

    def density(self, phi):
        a, b = self.components
        return self.q * a.density(phi) + (1 - self.q) * b.density(phi)

    def fourier_moment(self, n: int) -> complex:
        a, b = self.components
        return self.q * a.fourier_moment(n) + (1 - self.q) * b.fourier_moment(n)


@dataclass(frozen=True)
class Tabulated(_Distribution):
    """Density given on a grid; linearly interpolated, periodic on [-pi, pi).

    Densities whose integral is off by less than 1e-3 are renormalized;
    anything worse is rejected.
    """

    angles: tuple
    values: tuple
    _scale: float = field(default=1.0, repr=False, compare=False)

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if ang.ndim != 1 or ang.shape != val.shape or ang.size < 3:
            raise ValidationError("tabulated density needs >= 3 (angle, value) pairs")
        if np.any(val < 0) or not np.all(np.isfinite(val)):
            raise ValidationError("tabulated density must be finite and nonnegative")
        if np.any(np.diff(ang) <= 0):
            raise ValidationError("tabulated angles must be strictly increasing")
        closed = np.concatenate([val, [val[0]]])
        widths = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
        if ang[-1] - ang[0] >= 2 * math.pi:
            raise ValidationError("tabulated angles must span less than one period")
        total = float(np.sum(0.5 * (closed[1:] + closed[:-1]) * widths))
        if abs(total - 1.0) > _RENORM_TOL:
            raise ValidationError(f"tabulated density integrates to {total:.6g}, not 1")
        object.__setattr__(self, "_scale", 1.0 / total)

    @classmethod
    def from_function(cls, f, n: int = 1024) -> "Tabulated":
        ang = _nodes(n)
        return cls(tuple(ang), tuple(np.asarray(f(ang), dtype=float)))

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError) as exc:
                    raise ValidationError(f"bad CSV row {row!r} in {path}") from exc
        rows.sort()
        a, v = zip(*rows)
        return cls(tuple(a), tuple(v))

    def _raw(self, phi):
        ang = np.asarray(self.angles, dtype=float)
        val = np.asarray(self.values, dtype=float)
        return np.interp(np.asarray(phi, dtype=float), ang, val, period=2 * math.pi)

    def density(self, phi):
        return self._raw(phi) * self._scale

    def _closed_grid(self):
        # nodes of the periodic interpolant on one full period, closed
        ang = np.asarray(self.angles, dtype=float)
        val = np.asarray(self.values, dtype=float) * self._scale
        start = ang[0]
        ang = np.concatenate([ang, [start + 2 * math.pi]])
        val = np.concatenate([val, [val[0]]])
        return ang, val

    def fourier_moment(self, n: int) -> complex:
        # exact integral of the piecewise-linear interpolant against exp(i n phi)
        a, f = self._closed_grid()
        if n == 0:
            return complex(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(a)))
        e = np.exp(1j * n * a)
        slope = np.diff(f) / np.diff(a)
        boundary = (f[1:] * e[1:] - f[:-1] * e[:-1]) / (1j * n)
        correction = slope * (e[1:] - e[:-1]) / n**2
        return complex(np.sum(boundary + correction))

    @property
    def even(self) -> bool:
        ph = _nodes(256)
        return bool(np.allclose(self.density(ph[1:]), self.density(-ph[1:]), atol=1e-12))


@dataclass(frozen=True)
class _Shifted(_Distribution):
    base: _Distribution
    c: float

    def density(self, phi):
        return self.base.density(np.asarray(phi) - self.c)

    def fourier_moment(self, n: int) -> complex:
        return self.base.fourier_moment(n) * complex(np.exp(1j * n * self.c))


AngleDistribution = Union[Delta, Uniform, VonMises, DoubleVonMises, Tabulated]


# --- channels ----------------------------------------------------------------


@dataclass(frozen=True)
class RandomRotation:
    axis: RotationAxis
    dist: AngleDistribution


@dataclass(frozen=True)
class AmplitudeDamping:
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma={self.gamma} outside [0, 1]")

    @property
    def kraus(self) -> list[np.ndarray]:
        g = self.gamma
        k0 = np.array([[1, 0], [0, math.sqrt(1 - g)]], dtype=complex)
        k1 = np.array([[0, math.sqrt(g)], [0, 0]], dtype=complex)
        return [k0, k1]


NoiseChannelSpec = Union[RandomRotation, AmplitudeDamping]


def second_fourier_moment(dist) -> complex:
    """``a2 = integral g(phi) exp(2 i phi) dphi``; closed form where available."""
    _check_normalized(dist)
    a2 = dist.fourier_moment(2)
    if abs(a2) > 1 + 1e-12:
        raise ValidationError(f"|a2| = {abs(a2)} > 1: density is not a probability")
    return a2


def r_parameter(dist) -> float:
    """``R = 1 - |a2|^2``."""
    a2 = second_fourier_moment(dist)
    return float(min(1.0, max(0.0, 1.0 - abs(a2) ** 2)))


def _check_normalized(dist) -> None:
    if isinstance(dist, (Delta, Uniform, VonMises, DoubleVonMises, _Shifted)):
        return
    norm = dist.fourier_moment(0).real
    if abs(norm - 1.0) > _NORM_TOL:
        raise ValidationError(f"distribution integrates to {norm}, not 1")


def _rotation_pair(n: np.ndarray, phi: float) -> np.ndarray:
    """``U(phi) (x) conj-copy`` with the copy rotating about (n_x, -n_y, n_z)."""
    nprime = np.array([n[0], -n[1], n[2]])
    u = math.cos(phi) * IDENTITY - 1j * math.sin(phi) * pauli_dot(n)
    ucopy = math.cos(phi) * IDENTITY + 1j * math.sin(phi) * pauli_dot(nprime)
    return np.kron(u, ucopy)


def rotation_superoperator_quadrature(
    axis: RotationAxis, dist, nodes: int = QUAD_NODES
) -> np.ndarray:
    """Trapezoid quadrature of ``g(phi) U(phi) (x) U*(phi)`` on uniform nodes."""
    n = axis.vector
    phis = _nodes(nodes)
    w = dist.density(phis) * (2 * math.pi / nodes)
    out = np.zeros((4, 4), dtype=complex)
    for phi, wi in zip(phis, w):
        if wi != 0.0:
            out += wi * _rotation_pair(n, phi)
    return out


def channel_superoperator(spec: NoiseChannelSpec) -> np.ndarray:
    """Doubled-space operator of a single-qubit channel (4x4 complex).

    For rotations the integrand is a trigonometric polynomial of degree two
    in phi, so the average only needs the moments ``<cos^2>``, ``<sin^2>``
    and ``<sin cos>``, all of which follow from ``a2``.
    """
    if isinstance(spec, AmplitudeDamping):
        return sum(np.kron(k, k.conj()) for k in spec.kraus)
    if not isinstance(spec, RandomRotation):
        raise ValidationError(f"unsupported channel {spec!r}")
    dist = spec.dist
    if isinstance(dist, Delta):
        return _rotation_pair(spec.axis.vector, dist.eps)
    a2 = second_fourier_moment(dist)
    cc, ss, sc = 0.5 * (1 + a2.real), 0.5 * (1 - a2.real), 0.5 * a2.imag
    n = spec.axis.vector
    big_n = pauli_dot(n)
    big_np = pauli_dot(np.array([n[0], -n[1], n[2]]))
    return (
        cc * np.eye(4, dtype=complex)
        + 1j * sc * (np.kron(IDENTITY, big_np) - np.kron(big_n, IDENTITY))
        + ss * np.kron(big_n, big_np)
    )


def stochastic_superoperator(axis: RotationAxis, p: float) -> np.ndarray:
    """``rho -> (1-p) rho + p (n.s) rho (n.s)`` in the doubled basis."""
    ns = pauli_dot(axis.vector)
    return (1 - p) * np.eye(4, dtype=complex) + p * np.kron(ns, ns.conj())


def stochastic_reduction_check(dist, axis: RotationAxis) -> dict:
    """Compare a rotation channel with the stochastic ``n.sigma`` channel.

    ``p = integral g sin^2``; the returned deviation is the entrywise maximum
    difference of the two superoperators.
    """
    if isinstance(dist, Delta):
        p = math.sin(dist.eps) ** 2
    else:
        # sin^2 = (1 - cos 2 phi) / 2
        p = 0.5 * (1.0 - dist.fourier_moment(2).real)
    exact = channel_superoperator(RandomRotation(axis, dist))
    dev = float(np.max(np.abs(exact - stochastic_superoperator(axis, p))))
    return {"p": float(p), "max_deviation": dev}


def distribution_from_config(block: dict, base_dir: Path | None = None):
    """Build a distribution from a config mapping (see README for keys)."""
    block = dict(block)
    variant = str(block.pop("variant", "")).lower()
    try:
        if variant == "delta":
            return Delta(float(block.get("eps", 0.0)))
        if variant == "uniform":
            return Uniform()
        if variant == "von_mises":
            return VonMises(float(block["kappa"]), float(block.get("mean", 0.0)))
        if variant == "double_von_mises":
            return DoubleVonMises(
                float(block.get("q", 0.5)), float(block["kappa"]), float(block["delta_phi"])
            )
        if variant == "tabulated":
            path = Path(block["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return Tabulated.from_csv(path)
    except KeyError as exc:
        raise ValidationError(f"missing key {exc} for distribution {variant!r}") from exc
    raise ValidationError(f"unknown distribution variant {variant!r}")
