"""Directional CTMRG for the Ashkin-Teller vertex model.

Environment tensors are stored clockwise, each with legs ``(prev, [phys], next)``::

    C1 -- T1 -- C2
    |     |     |
    T4 -- a  -- T2
    |     |     |
    C4 -- T3 -- C3

``a[l, u, r, d]``.  One sweep is four left moves, the lattice being rotated
by a quarter turn between them.  Projectors are the biorthogonal pair built
from the upper-left and lower-left enlarged corners, so complex and
non-normal tensors are handled the same way as real ones.  Using two
corners rather than four keeps the spectrum that is truncated at the
square of the corner spectrum, which halves the number of digits lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .couplings import ATCouplings
from .exact import SITE_OPS
from .noise import ValidationError

__all__ = [
    "VertexTensor",
    "CTMEnvironment",
    "Observables",
    "FitError",
    "build_vertex_tensor",
    "ctmrg_converge",
    "measure",
    "free_energy_per_site",
    "central_charge_fit",
]

# Fourier channels (a_s, a_tau) in the order of the 4-state index 2*a_s + a_tau
_FOURIER = np.array(
    [[s**a * t**b for a in (0, 1) for b in (0, 1)] for s, t in ((1, 1), (1, -1), (-1, 1), (-1, -1))],
    dtype=complex,
)


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class VertexTensor:
    """Bulk tensor ``a`` plus single-site impurity tensors for s, tau, s*tau.

    ``boundary`` is the leg vector of a fixed (+, +) spin outside the lattice.
    """

    data: np.ndarray
    impurities: dict
    boundary: np.ndarray
    channels: tuple
    couplings: ATCouplings

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass
class CTMEnvironment:
    corners: list
    edges: list
    d: int
    iterations: int
    residual: float
    converged: bool
    spectrum: np.ndarray = field(default=None)
    symmetric: bool = False

    @property
    def corner(self) -> np.ndarray:
        return self.corners[0]

    @property
    def edge(self) -> np.ndarray:
        return self.edges[0]

    @property
    def chi(self) -> int:
        return self.corners[0].shape[0]


@dataclass(frozen=True)
class Observables:
    m_s: complex
    m_tau: complex
    m_stau: complex
    xi: float
    entropy: float

    @property
    def indicator(self) -> float:
        return abs(self.m_stau) + 0.5 * (abs(self.m_s) + abs(self.m_tau))

    def to_dict(self) -> dict:
        out = {}
        for name in ("m_s", "m_tau", "m_stau"):
            z = complex(getattr(self, name))
            out[name] = abs(z)
            out[name + "_re"] = z.real
            out[name + "_im"] = z.imag
        out.update(indicator=self.indicator, xi=self.xi, entropy=self.entropy)
        return out


def _vertex(p: np.ndarray, weight: np.ndarray) -> np.ndarray:
    return np.einsum("x,xa,xb,xc,xd->abcd", weight, p, p, p, p)


def build_vertex_tensor(at: ATCouplings, drop_zero: bool = True) -> VertexTensor:
    """Split ``W = F diag(c) F^T`` with ``c = (1, j2, j1, k)`` into ``P P^T``,
    ``P = F diag(sqrt c)``, and put one ``P`` on every leg of a vertex."""
    c = np.array([1.0, at.j2, at.j1, at.k], dtype=complex)
    if not np.all(np.isfinite(c)):
        raise ValidationError("couplings must be finite")
    keep = tuple(i for i in range(4) if (not drop_zero) or c[i] != 0)
    root = np.sqrt(c[list(keep)])
    p = _FOURIER[:, list(keep)] * root[None, :]
    if not np.any(p.imag):
        p = p.real  # nonnegative channels: stay in real arithmetic
    ones = np.ones(4)
    a = _vertex(p, ones)
    imps = {name: _vertex(p, op.astype(float)) for name, op in SITE_OPS.items()}
    # spin (+,+) is state 0; its leg vector is the row P[0]
    return VertexTensor(a, imps, p[0].copy(), keep, at)


# --- one left move --------------------------------------------------------------


def _enlarged(c1, t1, t4, a):
    """Top-left quadrant as a matrix ``[(T4.prev, a.d), (T1.next, a.r)]``."""
    m = np.einsum("xy,yuz,wlx,lurd->wdzr", c1, t1, t4, a, optimize=True)
    s = m.shape
    return m.reshape(s[0] * s[1], s[2] * s[3])


def _rotate(corners, edges, a):
    return corners[1:] + corners[:1], edges[1:] + edges[:1], a.transpose(1, 2, 3, 0)


def _truncate(s: np.ndarray, chi: int, rel_cut: float) -> int:
    keep = int(np.sum(s > rel_cut * s[0])) if s[0] > 0 else 1
    keep = max(1, min(keep, chi))
    # keep whole degenerate multiplets, growing by at most three
    while keep < min(len(s), chi + 3) and s[keep] > s[keep - 1] * (1 - 1e-9) and s[keep] > rel_cut * s[0]:
        keep += 1
    return keep


def _projectors(h_top, h_bot, chi, rel_cut):
    """Pair ``(P, Pt)`` with ``P @ Pt`` a rank-``chi`` identity on the cut."""
    h_top = h_top / np.max(np.abs(h_top))
    h_bot = h_bot / np.max(np.abs(h_bot))
    u, s, vh = np.linalg.svd(h_top.T @ h_bot)
    k = _truncate(s, chi, rel_cut)
    inv = 1.0 / np.sqrt(s[:k])
    p = h_bot @ (vh[:k].conj().T * inv[None, :])
    pt = (u[:, :k].conj().T * inv[:, None]) @ h_top.T
    return p, pt


def _left_move(corners, edges, a, chi, rel_cut):
    c1, c2, c3, c4 = corners
    t1, t2, t3, t4 = edges
    # upper-left and lower-left quadrants; the lower one is built in the
    # frame turned three quarters, so its rows are its right legs
    q1 = _enlarged(c1, t1, t4, a)
    q4 = _enlarged(c4, t4, t3, a.transpose(3, 0, 1, 2))
    p, pt = _projectors(q1, q4.T, chi, rel_cut)
    x, du = c1.shape[0], t1.shape[1]
    c1t1 = np.einsum("xy,yuz->xuz", c1, t1).reshape(x * du, -1)
    new_c1 = p.T @ c1t1
    t4a = np.einsum("wlx,lurd->wdrxu", t4, a, optimize=True)
    w, dd, dr, xx, uu = t4a.shape
    t4a = t4a.reshape(w * dd, dr, xx * uu)
    new_t4 = np.einsum("ic,irj,kj->ckr", p, t4a, pt, optimize=True).transpose(0, 2, 1)
    c4t3 = np.einsum("ydx,xw->ywd", t3, c4).reshape(t3.shape[0], -1)
    new_c4 = c4t3 @ pt.T
    new_corners = [new_c1, c2, c3, new_c4]
    new_edges = [t1, t2, t3, new_t4]
    return [_normalize(t) for t in new_corners], [_normalize(t) for t in new_edges]


def _symmetric_move(c, t, a, chi, rel_cut):
    """Grow all four sides at once for a tensor invariant under quarter turns.

    Every corner and edge then has the same form in its own frame.  With
    nonnegative weights the enlarged corner is a real symmetric matrix, so
    its eigenvectors give an orthogonal projector shared by both cuts.
    """
    m = _enlarged(c, t, t, a)
    m = 0.5 * (m + m.T)
    m = m / np.max(np.abs(m))
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    k = _truncate(np.abs(vals), chi, rel_cut)
    u = vecs[:, :k]
    new_c = np.diag(vals[:k])
    ta = np.einsum("wlx,lurd->wdrxu", t, a, optimize=True)
    w, dd, dr, xx, uu = ta.shape
    ta = ta.reshape(w * dd, dr, xx * uu)
    new_t = np.einsum("ic,irj,jk->ckr", u, ta, u, optimize=True).transpose(0, 2, 1)
    return _normalize(new_c), _normalize(new_t)


def is_rotation_invariant(a: np.ndarray, tol: float = 1e-13) -> bool:
    scale = max(np.max(np.abs(a)), 1e-300)
    return bool(np.max(np.abs(a - a.transpose(1, 2, 3, 0))) <= tol * scale)


def symmetric_allowed(t: VertexTensor) -> bool:
    w = t.couplings.weights()
    scale = np.max(np.abs(w))
    nonneg = bool(np.all(np.imag(w) == 0) and np.all(np.real(w) >= -1e-14 * scale))
    return nonneg and not np.iscomplexobj(t.data) and is_rotation_invariant(t.data)


def _normalize(t):
    n = np.max(np.abs(t))
    return t / n if n > 0 else t


def _initial_environment(vt: VertexTensor, boundary: str = "fixed"):
    a = vt.data
    if boundary == "fixed":
        v = vt.boundary
    elif boundary == "free":
        # sum over all four boundary spins: symmetric under both spin flips
        v = np.zeros_like(vt.boundary)
        v[0] = 4.0 * vt.boundary[0]
    else:
        raise ValidationError(f"unknown boundary {boundary!r}")
    c = np.einsum("lurd,l,u->dr", a, v, v)  # C1[prev=down, next=right]
    t = np.einsum("lurd,u->ldr", a, v)  # T1[prev=left, phys=down, next=right]
    corners = [c.copy() for _ in range(4)]
    edges = [t.copy() for _ in range(4)]
    # the vertex tensor is invariant under leg permutations, so each corner
    # and edge has the same form in its own clockwise frame
    return [_normalize(x) for x in corners], [_normalize(x) for x in edges]


def _corner_spectrum(c):
    s = np.linalg.svd(c, compute_uv=False)
    return s / s[0] if s[0] > 0 else s


def _spectrum_change(s_old, s_new):
    n = max(len(s_old), len(s_new))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(s_old)] = s_old
    b[: len(s_new)] = s_new
    return float(np.linalg.norm(a - b))


def ctmrg_converge(
    t: VertexTensor,
    d: int,
    tol: float = 1e-10,
    max_iters: int = 5000,
    rel_cut: float = 1e-14,
    min_iters: int = 3,
    env: CTMEnvironment | None = None,
    boundary: str = "fixed",
    scheme: str = "auto",
) -> CTMEnvironment:
    """Iterate full sweeps until the C1 spectrum moves by less than ``tol``.

    ``scheme`` is ``directional``, ``symmetric`` or ``auto``.  The symmetric
    update grows all four sides in one move and needs a quarter-turn
    invariant tensor with nonnegative edge weights; with mixed-sign weights
    square patches can have nearly cancelling sums, which only the
    directional update survives.  ``auto`` picks symmetric when allowed.
    Non-convergence is reported through ``converged`` and ``residual``.
    """
    if d < 1 or tol <= 0 or max_iters < 1:
        raise ValidationError("need d >= 1, tol > 0 and max_iters >= 1")
    if scheme not in ("auto", "directional", "symmetric"):
        raise ValidationError(f"unknown scheme {scheme!r}")
    allowed = symmetric_allowed(t) and (env is None or env.symmetric)
    if scheme == "symmetric" and not allowed:
        raise ValidationError("symmetric scheme needs an invariant tensor with nonnegative weights")
    symmetric = allowed and scheme != "directional"
    if env is not None:
        corners, edges = list(env.corners), list(env.edges)
    else:
        corners, edges = _initial_environment(t, boundary)
    a = t.data
    spec = _corner_spectrum(corners[0])
    residual = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        if symmetric:
            c, e = _symmetric_move(corners[0], edges[0], a, d, rel_cut)
            corners, edges = [c] * 4, [e] * 4
        else:
            for _ in range(4):
                corners, edges = _left_move(corners, edges, a, d, rel_cut)
                corners, edges, a = _rotate(corners, edges, a)
        new_spec = _corner_spectrum(corners[0])
        residual = _spectrum_change(spec, new_spec)
        spec = new_spec
        if it >= min_iters and residual < tol:
            break
    return CTMEnvironment(
        corners, edges, d, it, residual, bool(residual < tol), spectrum=spec, symmetric=symmetric
    )


# --- measurements ---------------------------------------------------------------


def _block(env: CTMEnvironment, center: np.ndarray | None) -> complex:
    """Contract the environment around zero (``center=None``) or one site."""
    c1, c2, c3, c4 = env.corners
    t1, t2, t3, t4 = env.edges
    if center is None:
        return complex(np.einsum("ab,bc,cd,da->", c1, c2, c3, c4))
    return complex(
        np.einsum(
            "ab,bue,ef,frg,gh,hdi,ij,jla,lurd->",
            c1, t1, c2, t2, c3, t3, c4, t4, center,
            optimize=True,
        )
    )


def _z_1x0(env):
    """Corners plus one column (T1 over T3)."""
    c1, c2, c3, c4 = env.corners
    t1, _, t3, _ = env.edges
    return complex(np.einsum("ab,bue,ef,fg,gui,ia->", c1, t1, c2, c3, t3, c4, optimize=True))


def _z_0x1(env):
    c1, c2, c3, c4 = env.corners
    _, t2, _, t4 = env.edges
    return complex(np.einsum("ab,bc,cle,ef,fg,gla->", c1, c2, t2, c3, c4, t4, optimize=True))


def free_energy_per_site(env: CTMEnvironment, t: VertexTensor) -> complex:
    """``log(Z11 Z00 / (Z10 Z01))``: log partition function per vertex."""
    kappa = _block(env, t.data) * _block(env, None) / (_z_1x0(env) * _z_0x1(env))
    return complex(np.log(kappa))


def _correlation_length(env: CTMEnvironment) -> float:
    """``1 / log|l0 / l1|`` of ``E[(x1, x3), (y1, y3)] = sum_u T1[x1,u,y1] T3[y3,u,x3]``."""
    t1, t3 = env.edges[0], env.edges[2]
    dim = t1.shape[0] * t3.shape[2]
    if dim <= 400:
        e = np.einsum("xuy,zuw->xwyz", t1, t3).reshape(dim, dim)
        vals = np.linalg.eigvals(e)
    else:

        def matvec(v):
            v = np.asarray(v).reshape(t1.shape[2], t3.shape[0])
            return np.einsum("xuy,zuw,yz->xw", t1, t3, v, optimize=True).reshape(-1)

        op = LinearOperator((dim, dim), matvec=matvec, dtype=complex)
        try:
            vals = eigs(op, k=3, which="LM", tol=1e-12, v0=np.ones(dim), return_eigenvectors=False)
        except ArpackNoConvergence as exc:  # pragma: no cover - rare
            vals = exc.eigenvalues
    mags = np.sort(np.abs(vals))[::-1]
    if len(mags) < 2 or mags[1] == 0:
        return 0.0
    if abs(mags[0] - mags[1]) <= 1e-14 * mags[0]:
        return math.inf
    return float(1.0 / math.log(mags[0] / mags[1]))


def _entropy(env: CTMEnvironment) -> float:
    s = np.linalg.svd(env.corners[0] @ env.corners[1], compute_uv=False)
    p = s**2
    p = p[p > 0] / p.sum()
    return float(-np.sum(p * np.log(p)))


def measure(env: CTMEnvironment, t: VertexTensor) -> Observables:
    z = _block(env, t.data)
    mags = {name: _block(env, imp) / z for name, imp in t.impurities.items()}
    return Observables(
        m_s=mags["s"],
        m_tau=mags["tau"],
        m_stau=mags["stau"],
        xi=_correlation_length(env),
        entropy=_entropy(env),
    )


def central_charge_fit(points) -> dict:
    """Least squares ``S = c * log(xi) / 6 + b``."""
    pts = [(float(x), float(s)) for x, s in points]
    if len(pts) < 4:
        raise FitError("need at least four (xi, S) points")
    xi = np.array([p[0] for p in pts])
    ent = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(xi)) or np.any(xi <= 0):
        raise FitError("correlation lengths must be finite and positive")
    x = np.log(xi) / 6
    if np.ptp(x) < 1e-12 or len(np.unique(np.round(xi, 12))) < len(xi):
        raise FitError("correlation lengths are not distinct")
    slope, intercept = np.polyfit(x, ent, 1)
    resid = ent - (slope * x + intercept)
    ss_tot = np.sum((ent - ent.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return {"c": float(slope), "intercept": float(intercept), "goodness": float(r2)}
