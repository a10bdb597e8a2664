"""Parameter sweeps, phase classification and boundary location."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .couplings import ATCouplings, amp_damp_couplings, rotation_couplings
from .ctmrg import CTMEnvironment, Observables, build_vertex_tensor, ctmrg_converge, measure
from .noise import RotationAxis, ValidationError, bessel_ratio

__all__ = [
    "PHASES",
    "ORDER_THRESHOLD",
    "BracketError",
    "CTMSettings",
    "CouplingLine",
    "ScanRecord",
    "BoundaryEstimate",
    "VonMisesBoundary",
    "classify",
    "order_signature",
    "rotation_line",
    "ampdamp_line",
    "evaluate",
    "ray_scan",
    "ray_maximum",
    "bisect_boundary",
    "beta_exponent_fit",
    "von_mises_boundary",
    "RECORD_COLUMNS",
]

PHASES = ("PO", "FM", "PM", "UNCLASSIFIED")
# a channel counts as ordered above this magnitude; deep in a disordered
# phase the converged magnetizations are below 1e-4
ORDER_THRESHOLD = 0.02


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class CTMSettings:
    d: int = 32
    tol: float = 1e-10
    max_iters: int = 5000

    def __post_init__(self):
        if self.d < 1 or self.tol <= 0 or self.max_iters < 1:
            raise ValidationError("need d >= 1, tol > 0 and max_iters >= 1")


@dataclass(frozen=True)
class CouplingLine:
    """A one-parameter family of couplings, e.g. a ray in R or the gamma line."""

    name: str
    param: str
    couplings: Callable[[float], ATCouplings]
    fixed: dict = field(default_factory=dict)

    def params(self, x: float) -> dict:
        return {**self.fixed, self.param: float(x)}


def rotation_line(axis: RotationAxis) -> CouplingLine:
    return CouplingLine(
        f"rotation(theta={axis.theta:.12g},phi={axis.phi:.12g})",
        "R",
        lambda r: rotation_couplings(r, axis),
        {"theta": float(axis.theta), "phi": float(axis.phi)},
    )


def ampdamp_line() -> CouplingLine:
    return CouplingLine("ampdamp", "gamma", amp_damp_couplings)


def classify(obs: Observables) -> str:
    ind = obs.indicator
    if 0.75 <= ind <= 1.25 and abs(obs.m_s) < 0.1 and abs(obs.m_tau) < 0.1:
        return "PO"
    if ind > 1.6:
        return "FM"
    if ind < 0.25:
        return "PM"
    return "UNCLASSIFIED"


def order_signature(obs: Observables, threshold: float = ORDER_THRESHOLD) -> str:
    """Which of s, tau, s*tau carry a nonzero expectation, e.g. ``"stau"``,
    ``"s+tau+stau"`` or ``"none"``."""
    names = [n for n in ("s", "tau", "stau") if abs(getattr(obs, "m_" + n)) > threshold]
    return "+".join(names) if names else "none"


@dataclass
class ScanRecord:
    index: int
    params: dict
    observables: Observables
    phase: str
    signature: str
    d: int
    iterations: int
    residual: float
    converged: bool

    def to_row(self) -> dict:
        row = {"index": self.index}
        row.update(self.params)
        row.update(d=self.d, iterations=self.iterations, residual=self.residual, converged=self.converged)
        row.update(self.observables.to_dict())
        row.update(phase=self.phase, signature=self.signature)
        return row


RECORD_COLUMNS = [
    "index", "R", "theta", "phi", "gamma", "d", "iterations", "residual", "converged",
    "m_s", "m_s_re", "m_s_im", "m_tau", "m_tau_re", "m_tau_im",
    "m_stau", "m_stau_re", "m_stau_im", "indicator", "xi", "entropy", "phase", "signature",
]


@dataclass(frozen=True)
class BoundaryEstimate:
    line: str
    value: float
    width: float
    method: str  # RAY_MAX or BISECTION
    success: bool = True
    labels: tuple = ()
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {
            "line": self.line,
            "value": self.value,
            "width": self.width,
            "method": self.method,
            "success": self.success,
            "labels": list(self.labels),
            "diagnostic": self.diagnostic,
        }


def evaluate(
    at: ATCouplings, settings: CTMSettings, env: CTMEnvironment | None = None
) -> tuple[Observables, CTMEnvironment]:
    vt = build_vertex_tensor(at)
    env = ctmrg_converge(vt, settings.d, tol=settings.tol, max_iters=settings.max_iters, env=env)
    return measure(env, vt), env


def _record(index: int, params: dict, obs: Observables, env: CTMEnvironment) -> ScanRecord:
    return ScanRecord(
        index, params, obs, classify(obs), order_signature(obs),
        env.d, env.iterations, env.residual, env.converged,
    )


def _point_task(args) -> ScanRecord:
    index, params, at, settings = args
    obs, env = evaluate(at, settings)
    return _record(index, params, obs, env)


def sweep_points(points, settings: CTMSettings, map_fn=map) -> list[ScanRecord]:
    """``points`` is a list of ``(params, ATCouplings)``; ``map_fn`` may be a
    pool's map.  Records come back sorted by grid index."""
    tasks = [(i, p, at, settings) for i, (p, at) in enumerate(points)]
    return sorted(map_fn(_point_task, tasks), key=lambda r: r.index)


def ray_maximum(line: str, param: str, records: list[ScanRecord]) -> BoundaryEstimate:
    """Grid point of the largest correlation length along a ray."""
    xs = np.array([r.params[param] for r in records])
    xi = np.array([r.observables.xi for r in records], dtype=float)
    xi = np.where(np.isnan(xi), -np.inf, xi)
    i = int(np.argmax(xi))
    steps = np.diff(xs)
    left = steps[i - 1] if i > 0 else 0.0
    right = steps[i] if i < len(steps) else 0.0
    width = float(max(left, right))
    interior = 0 < i < len(xs) - 1
    return BoundaryEstimate(
        line, float(xs[i]), width, "RAY_MAX", success=interior,
        labels=(records[i].phase,),
        diagnostic="" if interior else "maximum at the end of the grid: no interior peak",
    )


def ray_scan(
    axis: RotationAxis, r_grid, settings: CTMSettings, map_fn=map
) -> tuple[list[ScanRecord], BoundaryEstimate]:
    grid = [float(r) for r in r_grid]
    if any(b < a for a, b in zip(grid, grid[1:])) or grid[0] < 0 or grid[-1] > 1:
        raise ValidationError("r_grid must be sorted inside [0, 1]")
    line = rotation_line(axis)
    points = [(line.params(r), line.couplings(r)) for r in grid]
    records = sweep_points(points, settings, map_fn)
    return records, ray_maximum(line.name, "R", records)


def bisect_boundary(
    line: CouplingLine, lo: float, hi: float, settings: CTMSettings, tol: float,
    label: Callable[[Observables], str] = order_signature,
) -> tuple[BoundaryEstimate, list[ScanRecord]]:
    """Bisect on a phase label until the bracket is at most ``tol`` wide.

    The default label is the set of ordered channels, which also separates
    the s-ordered phase that the indicator thresholds leave unclassified.
    """
    if not lo < hi or tol <= 0:
        raise ValidationError("need lo < hi and tol > 0")
    records = []

    def probe(x):
        obs, env = evaluate(line.couplings(x), settings)
        records.append(_record(len(records), line.params(x), obs, env))
        return label(obs)

    l_lo, l_hi = probe(lo), probe(hi)
    if l_lo == l_hi:
        raise BracketError(f"both ends of [{lo}, {hi}] have label {l_lo!r}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        l_mid = probe(mid)
        if l_mid == l_lo:
            lo = mid
        elif l_mid == l_hi:
            hi = mid
        else:
            raise BracketError(f"third label {l_mid!r} at {mid} between {l_lo!r} and {l_hi!r}")
    est = BoundaryEstimate(line.name, 0.5 * (lo + hi), hi - lo, "BISECTION", labels=(l_lo, l_hi))
    return est, records


def _loglog_slope(t: np.ndarray, m: np.ndarray) -> float:
    x, y = np.log(t), np.log(m)
    if np.ptp(x) == 0:
        raise ValidationError("degenerate fit: all distances equal")
    return float(np.polyfit(x, y, 1)[0])


def beta_exponent_fit(
    gammas, gamma_c: float, settings: CTMSettings | None = None, magnetizations=None
) -> dict:
    """Slope of ``log|<s>|`` against ``log(gamma - gamma_c)`` past the upper
    amplitude-damping transition.  Magnetizations are computed unless given."""
    g = np.asarray(gammas, dtype=float)
    dist = g - gamma_c
    ok = (dist >= 1e-3 - 1e-15) & (dist <= 5e-2 + 1e-15)
    if g.size < 5 or not np.all(ok):
        raise ValidationError("need >= 5 points with gamma - gamma_c in [1e-3, 5e-2]")
    if magnetizations is None:
        settings = settings or CTMSettings(d=40)
        magnetizations = [abs(evaluate(amp_damp_couplings(x), settings)[0].m_s) for x in g]
    m = np.abs(np.asarray(magnetizations, dtype=float))
    if np.any(m <= 0):
        raise ValidationError("magnetization vanishes: points are not in the ordered phase")
    return {"beta": _loglog_slope(dist, m), "gamma_c": float(gamma_c), "points": len(g)}


@dataclass(frozen=True)
class VonMisesBoundary:
    r_c: float
    kappa_min: float
    kappas: tuple
    delta_phis: tuple
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {
            "r_c": self.r_c,
            "kappa_min": self.kappa_min,
            "kappa": list(self.kappas),
            "delta_phi": list(self.delta_phis),
            "diagnostic": self.diagnostic,
        }


def von_mises_boundary(axis: RotationAxis, r_c: float, kappas=None) -> VonMisesBoundary:
    """Curve ``R(1/2, kappa, dphi) = r_c`` for the equal-weight double von Mises
    density, with ``R = 1 - rho^2 cos^2 dphi``, ``rho = I2/I0``.

    Memory is lost where ``R > r_c``.  Below ``kappa_min`` even coincident
    peaks give ``R > r_c``.  ``axis`` only labels the result: the axis enters
    through ``r_c``.
    """
    del axis
    if not 0.0 < r_c <= 1.0:
        raise ValidationError("r_c must lie in (0, 1]")
    if r_c >= 1.0:
        return VonMisesBoundary(r_c, math.inf, (), (), "R <= 1 always: memory survives for all (kappa, dphi)")
    target = math.sqrt(1.0 - r_c)
    hi = 1.0
    while bessel_ratio(2, hi) < target:
        hi *= 2.0
    kmin = brentq(lambda k: bessel_ratio(2, k) - target, 1e-12, hi, xtol=1e-14, rtol=1e-14)
    if kappas is None:
        kappas = np.geomspace(kmin, max(1e3, 10 * kmin), 64)
    ks, dps = [], []
    for k in kappas:
        rho = bessel_ratio(2, float(k))
        c2 = (1.0 - r_c) / rho**2
        if c2 <= 1.0 + 1e-12:  # absorbs root-finding error at kappa_min
            ks.append(float(k))
            dps.append(float(math.acos(math.sqrt(min(1.0, c2)))))
    return VonMisesBoundary(r_c, float(kmin), tuple(ks), tuple(dps))
