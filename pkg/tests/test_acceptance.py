"""End-to-end acceptance checks at their stated tolerances and time budgets.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary.  The CTMRG criteria are slow (hours in total on one core).
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.special import ive
from threadpoolctl import threadpool_limits

from toricat.couplings import (
    amp_damp_couplings,
    boltzmann_form,
    rotation_couplings,
    self_duality_residual,
    weight_oracle_ampdamp,
    weight_oracle_rotation,
)
from toricat.ctmrg import build_vertex_tensor, central_charge_fit, ctmrg_converge, free_energy_per_site, measure
from toricat.exact import (
    TorusSpec,
    cylinder_free_energy,
    partition_function,
    partition_function_enumerate,
    renyi2_coherent_info,
    renyi2_sectors,
)
from toricat.noise import RotationAxis, VonMises, stochastic_reduction_check
from toricat.scan import (
    CTMSettings,
    ampdamp_line,
    beta_exponent_fit,
    bisect_boundary,
    rotation_line,
    sweep_points,
)
from toricat.staggered import exact_correlation_length, finite_correlation_length

R_ISING = 2 - math.sqrt(2)
GREEN_AXIS = RotationAxis(math.pi / 4, math.pi / 4)
LADDER = (10, 16, 24, 32, 48, 64)


@pytest.fixture(autouse=True)
def one_thread():
    with threadpool_limits(1):
        yield


def _axes(n=20):
    return [RotationAxis(t, p) for t in np.linspace(0, math.pi, n) for p in np.linspace(0, 2 * math.pi, n)]


def test_criterion_01_coupling_oracles(report):
    t0 = time.perf_counter()
    dev = 0.0
    for r in np.linspace(0, 1, 20):
        for axis in _axes():
            dev = max(dev, float(np.max(np.abs(weight_oracle_rotation(r, axis) - rotation_couplings(r, axis).weights()))))
    for g in np.linspace(0, 1, 101):
        want = amp_damp_couplings(g)
        got = weight_oracle_ampdamp(g)["at"]
        dev = max(dev, abs(got.j1 - want.j1), abs(got.j2 - want.j2), abs(got.k - want.k))
    dt = time.perf_counter() - t0
    ok = dev <= 1e-12 and dt < 10
    report("criterion 1 coupling oracles", ok, f"max deviation {dev:.2e}, {dt:.1f} s")
    assert ok


def test_criterion_02_stochastic_reduction(report):
    t0 = time.perf_counter()
    axes = [RotationAxis.named(n) for n in "xyz"] + [RotationAxis(0.7, 1.9), RotationAxis(2.2, 4.0)]
    dev = perr = 0.0
    for kappa in (0.5, 3.0, 15.0):
        p_ref = (1 - ive(2, kappa) / ive(0, kappa)) / 2
        for axis in axes:
            chk = stochastic_reduction_check(VonMises(kappa), axis)
            dev = max(dev, chk["max_deviation"])
            perr = max(perr, abs(chk["p"] - p_ref))
    dt = time.perf_counter() - t0
    ok = dev <= 1e-10 and perr <= 1e-10 and dt < 5
    report("criterion 2 stochastic reduction", ok, f"superoperator {dev:.2e}, p {perr:.2e}, {dt:.1f} s")
    assert ok


def test_criterion_03_ising_point_bisection(report):
    t0 = time.perf_counter()
    line = rotation_line(RotationAxis.named("z"))
    est, records = bisect_boundary(line, 0.5, 0.7, CTMSettings(d=40), 2e-3)
    dt = time.perf_counter() - t0
    ok = 0.576 <= est.value <= 0.596 and est.width <= 2e-3 and dt <= 1800
    report("criterion 3 Ising point", ok,
           f"R_c = {est.value:.5f} +/- {est.width / 2:.1e} ({len(records)} points, {dt / 60:.1f} min)")
    assert ok


def _ladder(at):
    # the Ising point relaxes over ~50 xi_D sweeps; 1e-8 leaves S within ~1e-4
    vt = build_vertex_tensor(at)
    pts = []
    for d in LADDER:
        env = ctmrg_converge(vt, d, tol=1e-8, max_iters=400000)
        obs = measure(env, vt)
        pts.append((obs.xi, obs.entropy))
    return central_charge_fit(pts), pts


def test_criterion_04_central_charge(report):
    t0 = time.perf_counter()
    ising, _ = _ladder(rotation_couplings(R_ISING, RotationAxis.named("z")))
    green, _ = _ladder(rotation_couplings(1.0, GREEN_AXIS))
    dt = time.perf_counter() - t0
    ok = 0.40 <= ising["c"] <= 0.60 and 0.85 <= green["c"] <= 1.15 and dt <= 7200
    report("criterion 4 central charge", ok,
           f"Ising c = {ising['c']:.3f}, green point c = {green['c']:.3f}, {dt / 60:.1f} min")
    assert ok


@pytest.fixture(scope="module")
def ampdamp_boundaries():
    with threadpool_limits(1):
        t0 = time.perf_counter()
        s = CTMSettings(d=40)
        lower, _ = bisect_boundary(ampdamp_line(), 0.45, 0.5, s, 1e-3)
        upper, _ = bisect_boundary(ampdamp_line(), 0.5, 0.55, s, 1e-3)
        return lower, upper, time.perf_counter() - t0


def test_criterion_05_ampdamp_transitions(report, ampdamp_boundaries):
    lower, upper, dt = ampdamp_boundaries
    g1, g2 = lower.value, upper.value
    ok = 0.482 <= g1 <= 0.492 and 0.508 <= g2 <= 0.518 and abs(g1 + g2 - 1) <= 4e-3 and dt <= 3600
    report("criterion 5 amplitude damping", ok,
           f"gamma_c1 = {g1:.4f} ({lower.labels[0]}|{lower.labels[1]}), "
           f"gamma_c2 = {g2:.4f} ({upper.labels[0]}|{upper.labels[1]}), {dt / 60:.1f} min")
    assert ok


def test_criterion_06_beta_exponent(report, ampdamp_boundaries):
    gc = ampdamp_boundaries[1].value
    t0 = time.perf_counter()
    gammas = gc + np.geomspace(1e-3, 5e-2, 8)
    fit = beta_exponent_fit(gammas, gc, CTMSettings(d=40))
    dt = time.perf_counter() - t0
    ok = 0.095 <= fit["beta"] <= 0.155 and dt <= 1800
    report("criterion 6 beta exponent", ok, f"beta = {fit['beta']:.4f} at gamma_c = {gc:.4f}, {dt / 60:.1f} min")
    assert ok


def test_criterion_07_staggered_vertex(report):
    t0 = time.perf_counter()
    errs = {r: abs(finite_correlation_length(r, 32) / exact_correlation_length(r) - 1) for r in (0.3, 0.6, 0.9)}
    eps = 1e-4
    prod = exact_correlation_length(1 - eps) * 4 * eps
    dt = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-8 and abs(prod - 1) <= 1e-3 and dt < 1
    detail = ", ".join(f"R={r}: {e:.1e}" for r, e in errs.items())
    report("criterion 7 staggered vertex", ok, f"relative errors {detail}; xi*4(1-R) = {prod:.6f}")
    assert ok


def test_criterion_08_coherent_information(report):
    t0 = time.perf_counter()
    tori = [TorusSpec(2, 2), TorusSpec(2, 3), TorusSpec(3, 3), TorusSpec(3, 4), TorusSpec(4, 4)]
    y = RotationAxis.named("y")
    log4 = 2 * math.log(2)
    err0 = err1 = enum_err = 0.0
    monotone = True
    for t in tori:
        err0 = max(err0, abs(renyi2_coherent_info(t, rotation_couplings(0.0, y)) - log4))
        err1 = max(err1, abs(renyi2_coherent_info(t, rotation_couplings(1.0, y))))
        vals = [renyi2_coherent_info(t, rotation_couplings(r, y)) for r in np.linspace(0, 1, 11)]
        monotone &= all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        if 2 * t.sites <= 18:
            at = rotation_couplings(0.6, RotationAxis(1.1, 0.4))
            tm = renyi2_sectors(t, at)
            en = renyi2_sectors(t, at, enumerate_=True)
            enum_err = max(enum_err, max(abs(tm[k] - en[k]) / abs(en[k]) for k in tm))
            enum_err = max(enum_err, abs(partition_function(t, at) - partition_function_enumerate(t, at))
                           / abs(partition_function_enumerate(t, at)))
    dt = time.perf_counter() - t0
    ok = err0 <= 1e-12 and err1 <= 1e-9 and monotone and enum_err <= 1e-10 and dt < 300
    report("criterion 8 coherent information", ok,
           f"R=0 error {err0:.1e}, R=1 error {err1:.1e}, monotone {monotone}, "
           f"TM vs enumeration {enum_err:.1e}, {dt:.0f} s")
    assert ok


def test_criterion_09_free_energy_vs_exact(report):
    t0 = time.perf_counter()
    points = {
        "pure Z R=0.1": rotation_couplings(0.1, RotationAxis.named("z")),
        "pure Z R=0.9": rotation_couplings(0.9, RotationAxis.named("z")),
        "pure X R=0.9": rotation_couplings(0.9, RotationAxis.named("x")),
    }
    diffs = {}
    for name, at in points.items():
        vt = build_vertex_tensor(at)
        env = ctmrg_converge(vt, 24, tol=1e-12)
        diffs[name] = abs(free_energy_per_site(env, vt).real - cylinder_free_energy(6, at).real)
    dt = time.perf_counter() - t0
    ok = max(diffs.values()) <= 1e-6 and dt < 600
    report("criterion 9 free energy", ok, ", ".join(f"{k}: {v:.1e}" for k, v in diffs.items()) + f", {dt:.0f} s")
    assert ok


def test_criterion_10_self_duality(report):
    t0 = time.perf_counter()
    diag = RotationAxis(math.pi / 2, math.pi / 4)
    on = max(self_duality_residual(boltzmann_form(rotation_couplings(r, diag))) for r in np.linspace(0, 1, 11))
    controls = [RotationAxis(math.pi / 2, p) for p in (0.0, math.pi / 8, math.pi / 3, 1.2, math.pi / 2)]
    off = min(self_duality_residual(boltzmann_form(rotation_couplings(0.5, a))) for a in controls)
    dt = time.perf_counter() - t0
    ok = on <= 1e-12 and off > 1e-2 and dt < 1
    report("criterion 10 self-duality", ok, f"diagonal axis {on:.1e}, controls >= {off:.3f}")
    assert ok


def test_coarse_sweep_smoke(report):
    t0 = time.perf_counter()
    angles = np.linspace(0, math.pi / 2, 5)
    rs = np.linspace(0.1, 0.9, 9)
    points = []
    for th, ph in itertools.product(angles, angles):
        line = rotation_line(RotationAxis(th, ph))
        points.extend((line.params(r), line.couplings(r)) for r in rs)
    records = sweep_points(points, CTMSettings(d=16, tol=1e-8, max_iters=3000))
    problems = []
    rays = {}
    for rec in records:
        th, ph, r = rec.params["theta"], rec.params["phi"], rec.params["R"]
        rays.setdefault((th, ph), []).append(rec)
        z_axis = th == math.pi / 2 and ph == 0
        x_axis = th == math.pi / 2 and ph == math.pi / 2
        y_axis = th == 0
        if r <= 0.3 + 1e-12 and rec.phase != "PO":
            problems.append(f"R={r:.1f} axis ({th:.2f},{ph:.2f}) is {rec.phase}")
        if z_axis and r >= 0.7 - 1e-12 and rec.phase != "FM":
            problems.append(f"pure Z R={r:.1f} is {rec.phase}")
        if x_axis and r >= 0.7 - 1e-12 and rec.phase != "PM":
            problems.append(f"pure X R={r:.1f} is {rec.phase}")
        if y_axis and rec.phase != "PO":
            problems.append(f"pure Y R={r:.1f} is {rec.phase}")
    for key, recs in rays.items():
        phases = [r.phase for r in sorted(recs, key=lambda r: r.params["R"])]
        first_exit = next((i for i, p in enumerate(phases) if p != "PO"), len(phases))
        if "PO" in phases[first_exit:]:
            problems.append(f"PO re-entrance along axis {key}: {phases}")
    dt = time.perf_counter() - t0
    counts = {p: sum(r.phase == p for r in records) for p in ("PO", "FM", "PM", "UNCLASSIFIED")}
    ok = not problems
    report("coarse 5x5x9 sweep", ok, f"{counts}, {dt / 60:.1f} min" + ("; " + "; ".join(problems[:5]) if problems else ""))
    assert ok
