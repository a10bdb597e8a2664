"""Exact Ashkin-Teller partition functions on small tori.

Each vertex carries a pair (s, tau) encoded as ``sigma = 2*bs + bt`` with
``s = 1 - 2*bs`` and ``tau = 1 - 2*bt``.  A row of ``lx`` vertices is a
tensor with ``lx`` legs of dimension 4; rows are stacked along y.

Bond-level sign flips implement both the global defect lines and the open
disorder seams: a flipped bond uses ``(sj1*j1, sj2*j2, sk*k)`` for a channel
sign pattern ``(sj1, sj2, sk)``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigs

from .couplings import ATCouplings, DegenerateWeightError
from .noise import ValidationError

__all__ = [
    "MAX_LX",
    "CapacityError",
    "ChannelSet",
    "TorusSpec",
    "DefectPattern",
    "SeamSpec",
    "edge_matrix",
    "partition_function",
    "partition_function_enumerate",
    "renyi2_coherent_info",
    "renyi2_sectors",
    "order_correlator",
    "disorder_correlator",
    "anyon_parameters",
    "cylinder_free_energy",
    "relabel_y_axis",
    "is_effectively_real",
]

MAX_LX = 10
_S = np.array([1, 1, -1, -1])
_T = np.array([1, -1, 1, -1])
SITE_OPS = {"s": _S, "tau": _T, "stau": _S * _T}

# channel sign patterns (j1, j2, k)
S_AND_TAU_FLIP = (-1, -1, 1)
TAU_AND_STAU_FLIP = (1, -1, -1)
TAU_SEAM = TAU_AND_STAU_FLIP  # disorder operator of tau
S_TAU_SEAM = S_AND_TAU_FLIP  # product of the s and tau disorder operators


class CapacityError(ValueError):
    pass


class ChannelSet(enum.Enum):
    S_AND_TAU = S_AND_TAU_FLIP
    TAU_AND_STAU = TAU_AND_STAU_FLIP


@dataclass(frozen=True)
class TorusSpec:
    lx: int
    ly: int

    def __post_init__(self):
        if self.lx < 1 or self.ly < 1:
            raise ValidationError("torus sides must be positive")
        if min(self.lx, self.ly) > MAX_LX:
            raise CapacityError(f"torus {self.lx}x{self.ly}: both sides exceed {MAX_LX}")

    @classmethod
    def parse(cls, text: str) -> "TorusSpec":
        try:
            lx, ly = (int(p) for p in text.lower().split("x"))
        except ValueError as exc:
            raise ValidationError(f"bad torus spec {text!r}, expected LxM") from exc
        return cls(lx, ly)

    @property
    def sites(self) -> int:
        return self.lx * self.ly


@dataclass(frozen=True)
class DefectPattern:
    channelset: ChannelSet = ChannelSet.S_AND_TAU
    a: int = 0
    b: int = 0

    def __post_init__(self):
        if self.a not in (0, 1) or self.b not in (0, 1):
            raise ValidationError("defect bits must be 0 or 1")


@dataclass(frozen=True)
class SeamSpec:
    """``ORDER_STRING``: ``op`` in {s, tau, stau} at two vertices.
    ``DISORDER_SEAM``: ``flip`` channel signs on bonds crossing the dual path
    between two plaquettes (labelled by their lower-left vertex)."""

    kind: str
    start: tuple
    end: tuple
    op: str = "s"
    flip: tuple = TAU_SEAM

    def __post_init__(self):
        if self.kind not in ("ORDER_STRING", "DISORDER_SEAM"):
            raise ValidationError(f"unknown seam kind {self.kind!r}")
        if self.kind == "ORDER_STRING" and self.op not in SITE_OPS:
            raise ValidationError(f"unknown site operator {self.op!r}")


@dataclass
class _Bonds:
    """Per-bond sign masks: ``v[y, x]`` is the bond (x, y)-(x, y+1),
    ``h[y, x]`` the bond (x, y)-(x+1, y); ``True`` means flipped."""

    lx: int
    ly: int
    flip: tuple = (1, 1, 1)
    v: np.ndarray = field(default=None)
    h: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.v is None:
            self.v = np.zeros((self.ly, self.lx), dtype=bool)
        if self.h is None:
            self.h = np.zeros((self.ly, self.lx), dtype=bool)


def edge_matrix(at: ATCouplings, flip=(1, 1, 1)) -> np.ndarray:
    """``W[sigma, sigma'] = 1 + j1 ss' + j2 tt' + k ss'tt'`` (4x4)."""
    j1, j2, k = at.j1 * flip[0], at.j2 * flip[1], at.k * flip[2]
    uu = np.outer(_S, _S)
    vv = np.outer(_T, _T)
    return (1 + j1 * uu + j2 * vv + k * uu * vv).astype(complex)


def _defect_bonds(torus: TorusSpec, defects: DefectPattern) -> _Bonds:
    bonds = _Bonds(torus.lx, torus.ly, defects.channelset.value)
    if defects.a:
        bonds.v[torus.ly - 1, :] = True  # horizontal dual loop between rows ly-1 and 0
    if defects.b:
        bonds.h[:, torus.lx - 1] = True  # vertical dual loop between columns lx-1 and 0
    return bonds


def _seam_bonds(torus: TorusSpec, seam: SeamSpec) -> _Bonds:
    """Dual path: horizontal leg along row ``y0`` then vertical leg at ``x1``."""
    lx, ly = torus.lx, torus.ly
    bonds = _Bonds(lx, ly, seam.flip)
    (x0, y0), (x1, y1) = seam.start, seam.end
    x = x0 % lx
    while x != x1 % lx:
        # plaquette (x, y0) -> (x+1, y0) crosses the bond (x+1, y0)-(x+1, y0+1)
        bonds.v[y0 % ly, (x + 1) % lx] ^= True
        x = (x + 1) % lx
    y = y0 % ly
    while y != y1 % ly:
        # plaquette (x1, y) -> (x1, y+1) crosses the bond (x1, y+1)-(x1+1, y+1)
        bonds.h[(y + 1) % ly, x1 % lx] ^= True
        y = (y + 1) % ly
    return bonds


def _row_diagonal(lx: int, weights: list) -> np.ndarray:
    """Product of horizontal bond weights (and site factors) for one row."""
    diag = np.ones((4,) * lx, dtype=complex)
    for x, w in enumerate(weights):
        x2 = (x + 1) % lx
        shape = [1] * lx
        if x2 == x:  # lx == 1: self bond
            diag = diag * np.diag(w).reshape([4])
            continue
        shape[x], shape[x2] = 4, 4
        wb = w if x < x2 else w.T
        diag = diag * wb.reshape(shape)
    return diag.reshape(-1)


def _apply_vertical(psi: np.ndarray, lx: int, mats: list) -> np.ndarray:
    """Apply ``prod_x W_x`` to a block ``psi`` of shape (4**lx, nb)."""
    nb = psi.shape[1]
    t = psi.reshape((4,) * lx + (nb,))
    for x, w in enumerate(mats):
        t = np.tensordot(w, t, axes=([0], [x]))  # new leg at front
        t = np.moveaxis(t, 0, x)
    return t.reshape(4**lx, nb)


def _contract(
    lx: int,
    ly: int,
    at: ATCouplings,
    bonds: _Bonds | None = None,
    site_ops: dict | None = None,
    block: int = 256,
) -> complex:
    bonds = bonds or _Bonds(lx, ly)
    site_ops = site_ops or {}
    w0 = edge_matrix(at)
    w1 = edge_matrix(at, bonds.flip)
    rows_diag = []
    rows_vert = []
    for y in range(ly):
        hw = [w1 if bonds.h[y, x] else w0 for x in range(lx)]
        diag = _row_diagonal(lx, hw)
        for (x, yy), op in site_ops.items():
            if yy == y:
                shape = [1] * lx
                shape[x] = 4
                diag = (diag.reshape((4,) * lx) * op.reshape(shape)).reshape(-1)
        rows_diag.append(diag)
        rows_vert.append([w1 if bonds.v[y, x] else w0 for x in range(lx)])
    dim = 4**lx
    total = 0j
    for start in range(0, dim, block):
        idx = np.arange(start, min(dim, start + block))
        psi = np.zeros((dim, idx.size), dtype=complex)
        psi[idx, np.arange(idx.size)] = 1.0
        for y in range(ly):
            psi = rows_diag[y][:, None] * psi
            psi = _apply_vertical(psi, lx, rows_vert[y])
        total += psi[idx, np.arange(idx.size)].sum()
    return complex(total)


def _oriented(torus: TorusSpec, bonds: _Bonds | None, site_ops: dict | None):
    """Transpose the lattice if needed so the transfer direction is the short one."""
    if torus.lx <= torus.ly:
        return torus.lx, torus.ly, bonds, site_ops
    lx, ly = torus.ly, torus.lx
    new_bonds = None
    if bonds is not None:
        # after x<->y, old horizontal bonds become vertical ones
        new_bonds = _Bonds(lx, ly, bonds.flip, v=bonds.h.T.copy(), h=bonds.v.T.copy())
    new_ops = None if site_ops is None else {(y, x): op for (x, y), op in site_ops.items()}
    return lx, ly, new_bonds, new_ops


def _check_capacity(torus: TorusSpec) -> None:
    if min(torus.lx, torus.ly) > MAX_LX:
        raise CapacityError(f"transfer matrix would need 4**{min(torus.lx, torus.ly)} states")


def _z(torus, at, bonds=None, site_ops=None) -> complex:
    _check_capacity(torus)
    lx, ly, bonds, site_ops = _oriented(torus, bonds, site_ops)
    return _contract(lx, ly, at, bonds, site_ops)


def partition_function(
    torus: TorusSpec, at: ATCouplings, defects: DefectPattern | None = None
) -> complex:
    """Transfer-matrix partition function with an optional defect sector."""
    bonds = _defect_bonds(torus, defects) if defects is not None else None
    return _z(torus, at, bonds)


def partition_function_enumerate(
    torus: TorusSpec, at: ATCouplings, defects: DefectPattern | None = None
) -> complex:
    """Brute-force sum over all ``4**(lx*ly)`` configurations (oracle)."""
    n = torus.sites
    if 2 * n > 18:
        raise CapacityError(f"enumeration of 2**{2 * n} configurations refused")
    lx, ly = torus.lx, torus.ly
    bonds = _defect_bonds(torus, defects) if defects is not None else _Bonds(lx, ly)
    states = np.array(list(itertools.product(range(4), repeat=n)), dtype=np.int64)
    s = _S[states]
    t = _T[states]
    log_like = np.ones(len(states), dtype=complex)
    j = (at.j1, at.j2, at.k)
    for y in range(ly):
        for x in range(lx):
            i = y * lx + x
            for flipped, nbr in (
                (bonds.h[y, x], y * lx + (x + 1) % lx),
                (bonds.v[y, x], ((y + 1) % ly) * lx + x),
            ):
                sign = bonds.flip if flipped else (1, 1, 1)
                u = s[:, i] * s[:, nbr]
                v = t[:, i] * t[:, nbr]
                log_like *= 1 + sign[0] * j[0] * u + sign[1] * j[1] * v + sign[2] * j[2] * u * v
    return complex(log_like.sum())


def is_effectively_real(z: complex, rel: float = 1e-8) -> bool:
    return abs(complex(z).imag) <= rel * abs(complex(z).real)


def renyi2_sectors(torus: TorusSpec, at: ATCouplings, enumerate_: bool = False) -> dict:
    fn = partition_function_enumerate if enumerate_ else partition_function
    out = {}
    for cs in ChannelSet:
        for a, b in itertools.product((0, 1), repeat=2):
            out[(cs.name, a, b)] = fn(torus, at, DefectPattern(cs, a, b))
    return out


def renyi2_coherent_info(
    torus: TorusSpec, at: ATCouplings, enumerate_: bool = False
) -> float:
    """``log(sum_ab Z_S&T^(ab) / sum_ab Z_T&ST^(ab))``."""
    sectors = renyi2_sectors(torus, at, enumerate_)
    num = sum(v for (cs, _, _), v in sectors.items() if cs == "S_AND_TAU")
    den = sum(v for (cs, _, _), v in sectors.items() if cs == "TAU_AND_STAU")
    for name, val in (("S_AND_TAU", num), ("TAU_AND_STAU", den)):
        if abs(val) == 0:
            raise DegenerateWeightError(f"{name} sector sum vanishes on {torus}")
    ratio = num / den
    if not is_effectively_real(ratio) or ratio.real <= 0:
        raise DegenerateWeightError(f"sector ratio {ratio} is not positive real")
    return math.log(ratio.real)


def order_correlator(torus: TorusSpec, at: ATCouplings, seam: SeamSpec) -> complex:
    if seam.kind != "ORDER_STRING":
        raise ValidationError("order_correlator needs an ORDER_STRING seam")
    i = (seam.start[0] % torus.lx, seam.start[1] % torus.ly)
    j = (seam.end[0] % torus.lx, seam.end[1] % torus.ly)
    if i == j:
        raise ValidationError("order-string endpoints must be distinct")
    op = SITE_OPS[seam.op]
    z = _z(torus, at)
    if z == 0:
        raise DegenerateWeightError("partition function vanishes")
    return _z(torus, at, site_ops={i: op, j: op}) / z


def disorder_correlator(torus: TorusSpec, at: ATCouplings, seam: SeamSpec) -> complex:
    if seam.kind != "DISORDER_SEAM":
        raise ValidationError("disorder_correlator needs a DISORDER_SEAM seam")
    z = _z(torus, at)
    if z == 0:
        raise DegenerateWeightError("partition function vanishes")
    return _z(torus, at, _seam_bonds(torus, seam)) / z


def anyon_parameters(torus: TorusSpec, at: ATCouplings) -> dict:
    """Finite-torus proxies of the four anyon parameters at maximal separation."""
    i = (0, 0)
    j = (torus.lx // 2, torus.ly // 2)
    return {
        "IIbar_eebar": order_correlator(torus, at, SeamSpec("ORDER_STRING", i, j, op="s")),
        "eIbar_eIbar": order_correlator(torus, at, SeamSpec("ORDER_STRING", i, j, op="stau")),
        "IIbar_mmbar": disorder_correlator(
            torus, at, SeamSpec("DISORDER_SEAM", i, j, flip=TAU_SEAM)
        ),
        "mIbar_mIbar": disorder_correlator(
            torus, at, SeamSpec("DISORDER_SEAM", i, j, flip=S_TAU_SEAM)
        ),
    }


def cylinder_free_energy(lx: int, at: ATCouplings) -> complex:
    """``log(lambda_max) / lx`` of the row transfer matrix on a circumference-``lx``
    cylinder, i.e. the free energy per site of an infinitely long cylinder."""
    if lx > MAX_LX:
        raise CapacityError(f"lx={lx} exceeds {MAX_LX}")
    w = edge_matrix(at)
    diag = _row_diagonal(lx, [w] * lx)
    mats = [w] * lx
    dim = 4**lx

    def matvec(v):
        v = np.asarray(v, dtype=complex).reshape(dim, 1)
        return _apply_vertical(diag[:, None] * v, lx, mats).ravel()

    if dim <= 256:
        full = matvec_matrix(matvec, dim)
        vals = np.linalg.eigvals(full)
    else:
        op = LinearOperator((dim, dim), matvec=matvec, dtype=complex)
        vals = eigs(op, k=2, which="LM", tol=1e-14, v0=np.ones(dim), return_eigenvectors=False)
    lam = vals[np.argmax(np.abs(vals))]
    return complex(np.log(complex(lam))) / lx


def matvec_matrix(matvec, dim: int) -> np.ndarray:
    return np.column_stack([matvec(e) for e in np.eye(dim)])


def relabel_y_axis(at: ATCouplings) -> ATCouplings:
    """Couplings after ``tau -> s*tau*eta`` with ``eta`` alternating between
    sublattices (``eta eta' = -1`` on every bond).

    For pure-Y rotation couplings ``(r, -r, 1)`` this gives
    ``1 + r ss'(1 + tt') - tt'``.  Only meaningful on bipartite tori.
    """
    return ATCouplings(at.j1, -at.k, -at.j2)
