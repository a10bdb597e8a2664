"""Command-line runner: ``toricat <subcommand> [--config FILE] [flags]``.

Flags override values from the YAML config; config keys are the long flag
names with dashes replaced by underscores.  Exit status: 0 success,
2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from .couplings import (
    DegenerateWeightError,
    amp_damp_couplings,
    boltzmann_form,
    rotation_couplings,
)
from .ctmrg import FitError, build_vertex_tensor, central_charge_fit, ctmrg_converge, measure
from .exact import CapacityError, TorusSpec, anyon_parameters, renyi2_coherent_info
from .io import atomic_write, dumps_json, write_csv, write_json
from .noise import (
    QuadratureError,
    RandomRotation,
    RotationAxis,
    ValidationError,
    channel_superoperator,
    distribution_from_config,
    r_parameter,
    second_fourier_moment,
    stochastic_reduction_check,
)
from .scan import (
    RECORD_COLUMNS,
    BracketError,
    CTMSettings,
    ampdamp_line,
    beta_exponent_fit,
    bisect_boundary,
    ray_maximum,
    rotation_line,
    sweep_points,
)
from .staggered import (
    StaggeredVertexParams,
    exact_correlation_length,
    finite_correlation_length,
    order_parameter,
)

ENV_OUT = "TORICAT_OUTPUT_DIR"
ENV_WORKERS = "TORICAT_WORKERS"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

PRESETS = ("ray", "ampdamp-line", "coarse-ball")


# --- argument helpers -------------------------------------------------------------


def parse_grid(text) -> list[float]:
    """``a:b:n`` (n points, inclusive) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text)
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return [float(x) for x in np.linspace(float(a), float(b), n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad grid {text!r}; use a:b:n or a comma list") from exc


def _axis(args) -> RotationAxis:
    if args.axis:
        return RotationAxis.named(args.axis)
    if args.theta is None or args.phi is None:
        raise ValidationError("give --axis or both --theta and --phi")
    return RotationAxis(float(args.theta), float(args.phi))


def _distribution(args):
    if args.dist is None:
        return None
    if isinstance(args.dist, dict):
        block = dict(args.dist)
    else:
        block = {"variant": args.dist}
        for key in ("eps", "kappa", "mean", "q", "delta_phi", "path"):
            val = getattr(args, key, None)
            if val is not None:
                block[key] = val
    base = Path(args.config).parent if args.config else None
    return distribution_from_config(block, base)


def _r_value(args) -> float:
    if args.R is not None:
        return float(args.R)
    dist = _distribution(args)
    if dist is None:
        raise ValidationError("rotation noise needs --R or a --dist")
    return r_parameter(dist)


def _couplings(args):
    """Couplings plus a description of their source."""
    if args.noise == "rotation":
        axis = _axis(args)
        r = _r_value(args)
        src = {"noise": "rotation", "R": r, "theta": axis.theta, "phi": axis.phi}
        return rotation_couplings(r, axis), src
    if args.noise == "ampdamp":
        if args.gamma is None:
            raise ValidationError("amplitude damping needs --gamma")
        g = float(args.gamma)
        return amp_damp_couplings(g), {"noise": "ampdamp", "gamma": g}
    raise ValidationError(f"unknown noise {args.noise!r}")


def _settings(args) -> CTMSettings:
    return CTMSettings(int(args.D), float(args.tol), int(args.max_iters))


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(ENV_OUT) or ".")


def _workers(args) -> int:
    if args.workers is not None:
        n = int(args.workers)
    elif os.environ.get(ENV_WORKERS):
        n = int(os.environ[ENV_WORKERS])
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ValidationError("worker count must be positive")
    return n


def _provenance(args) -> dict:
    skip = {"func", "config", "out", "workers"}
    return {"command": args.command, "version": __version__,
            "args": {k: v for k, v in sorted(vars(args).items()) if k not in skip}}


def _emit(args, name: str, payload: dict) -> Path:
    payload = {**payload, "provenance": _provenance(args)}
    return write_json(_out_dir(args) / name, payload)


# --- worker pool --------------------------------------------------------------------


def _pin_threads():
    # kept alive for the worker's lifetime
    global _POOL_LIMITS
    _POOL_LIMITS = threadpool_limits(1)


_POOL_LIMITS = None


def _run_pool(args, points, settings):
    n = min(_workers(args), max(1, len(points)))
    if n == 1:
        return sweep_points(points, settings)
    init = _pin_threads if args.deterministic else None
    with ProcessPoolExecutor(max_workers=n, initializer=init) as pool:
        return sweep_points(points, settings, map_fn=lambda f, xs: pool.map(f, xs, chunksize=1))


# --- subcommands --------------------------------------------------------------------


def cmd_map_couplings(args):
    at, src = _couplings(args)
    b = boltzmann_form(at)
    out = {**at.to_dict(), "source": src, "boltzmann": b.to_dict()}
    _emit(args, "couplings.json", out)
    print(dumps_json(out), end="")
    return out


def cmd_noise_check(args):
    dist = _distribution(args)
    if dist is None:
        raise ValidationError("noise-check needs --dist")
    axis = _axis(args)
    a2 = second_fourier_moment(dist)
    chk = stochastic_reduction_check(dist, axis)
    sup = channel_superoperator(RandomRotation(axis, dist))
    out = {"R": r_parameter(dist), "a2": a2, **chk,
           "superoperator_norm": float(np.linalg.norm(sup, 2))}
    _emit(args, "noise_check.json", out)
    print(f"R={out['R']:.12g} p={chk['p']:.12g} max_deviation={chk['max_deviation']:.3e}")
    return out


def _point_json(at, env, obs) -> dict:
    o = obs.to_dict()
    return {"couplings": at.to_dict(), "d": env.d, "iterations": env.iterations,
            "residual": env.residual, "converged": env.converged, **o}


def cmd_ctmrg_point(args):
    at, src = _couplings(args)
    vt = build_vertex_tensor(at)
    env = ctmrg_converge(vt, int(args.D), tol=float(args.tol), max_iters=int(args.max_iters))
    obs = measure(env, vt)
    out = {**_point_json(at, env, obs), "source": src}
    _emit(args, "ctmrg_point.json", out)
    print(f"D={env.d} iterations={env.iterations} indicator={obs.indicator:.6f} "
          f"xi={obs.xi:.6g} S={obs.entropy:.6f} converged={env.converged}")
    return out


def _sweep_points(args):
    preset = args.preset
    if preset == "ampdamp-line":
        line = ampdamp_line()
        grid = parse_grid(args.gamma_grid or "0:1:101")
        return [(line.params(g), line.couplings(g)) for g in grid], "gamma"
    if preset == "ray":
        line = rotation_line(_axis(args))
        grid = parse_grid(args.R_grid or "0:1:25")
        return [(line.params(r), line.couplings(r)) for r in grid], "R"
    if preset == "coarse-ball":
        thetas = parse_grid(args.theta_grid or f"0:{math.pi / 2}:5")
        phis = parse_grid(args.phi_grid or f"0:{math.pi / 2}:5")
        rs = parse_grid(args.R_grid or "0.1:0.9:9")
        pts = []
        for th in thetas:
            for ph in phis:
                line = rotation_line(RotationAxis(th, ph))
                pts.extend((line.params(r), line.couplings(r)) for r in rs)
        return pts, "R"
    raise ValidationError(f"unknown preset {preset!r}; choose from {PRESETS}")


def _gnuplot(path: Path, records, keys: list[str]):
    lines = ["# " + " ".join(keys + ["indicator", "xi", "entropy", "phase"])]
    prev = None
    for rec in records:
        block = tuple(rec.params.get(k) for k in keys[:-1])
        if prev is not None and block != prev:
            lines.append("")
        prev = block
        vals = [rec.params[k] for k in keys] + [rec.observables.indicator, rec.observables.xi,
                                               rec.observables.entropy]
        lines.append(" ".join(f"{v:.10g}" for v in vals) + f" {rec.phase}")
    atomic_write(path, "\n".join(lines) + "\n")


def cmd_sweep(args):
    points, param = _sweep_points(args)
    settings = _settings(args)
    records = _run_pool(args, points, settings)
    out = _out_dir(args)
    stem = args.preset
    write_csv(out / f"{stem}.csv", RECORD_COLUMNS, [r.to_row() for r in records])
    keys = ["theta", "phi", "R"] if args.preset == "coarse-ball" else [param]
    _gnuplot(out / f"{stem}.dat", records, keys)
    summary = {"preset": stem, "points": len(records), "d": settings.d,
               "unconverged": sum(not r.converged for r in records),
               "phases": {p: sum(r.phase == p for r in records) for p in sorted({r.phase for r in records})}}
    if args.preset == "ray" and len(records) >= 3:
        summary["boundary"] = ray_maximum(rotation_line(_axis(args)).name, "R", records).to_dict()
    _emit(args, f"{stem}_summary.json", summary)
    print(f"{stem}: {len(records)} points, {summary['unconverged']} unconverged -> {out / (stem + '.csv')}")
    return summary


def cmd_bisect(args):
    if args.line == "ampdamp":
        line = ampdamp_line()
    elif args.line == "rotation":
        line = rotation_line(_axis(args))
    else:
        raise ValidationError(f"unknown line {args.line!r}")
    est, records = bisect_boundary(line, float(args.lo), float(args.hi), _settings(args), float(args.bisect_tol))
    out = {**est.to_dict(), "evaluations": [r.to_row() for r in records]}
    _emit(args, "boundary.json", out)
    print(f"{line.name}: {line.param}_c = {est.value:.6f} +/- {est.width / 2:.1e} ({est.labels[0]} | {est.labels[1]})")
    return out


def cmd_coherent_info(args):
    torus = TorusSpec.parse(args.torus)
    at, src = _couplings(args)
    ic = renyi2_coherent_info(torus, at)
    out = {"torus": f"{torus.lx}x{torus.ly}", "ic2": ic, "ic2_over_log2": ic / math.log(2), "source": src}
    _emit(args, "coherent_info.json", out)
    print(f"torus {torus.lx}x{torus.ly}: ic2 = {ic:.12g} ({ic / math.log(2):.6f} log 2)")
    return out


def cmd_anyon_params(args):
    torus = TorusSpec.parse(args.torus)
    at, src = _couplings(args)
    vals = anyon_parameters(torus, at)
    out = {"torus": f"{torus.lx}x{torus.ly}", **vals, "source": src}
    _emit(args, "anyon_params.json", out)
    print(" ".join(f"{k}={complex(v).real:.6g}" for k, v in vals.items()))
    return out


def cmd_staggered_vertex(args):
    grid = parse_grid(args.R_grid or "0.1:0.9:9")
    rows = []
    for r in grid:
        params = StaggeredVertexParams.from_big_r(r, epsilon=float(args.epsilon), lx=int(args.lx), ly=int(args.ly))
        rows.append({"R": r, "xi_exact": exact_correlation_length(r) if r < 1 else math.inf,
                     "xi_finite_lx": finite_correlation_length(r, int(args.lx)),
                     "O": order_parameter(params)})
    path = write_csv(_out_dir(args) / "staggered_vertex.csv", ["R", "xi_exact", "xi_finite_lx", "O"], rows)
    print(f"{len(rows)} rows -> {path}")
    return rows


def _read_columns(path, names):
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        rows = list(reader)
    try:
        return [[float(r[n]) for r in rows] for n in names]
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: need numeric columns {names}") from exc


def cmd_fit_central_charge(args):
    if args.input:
        xi, ent = _read_columns(args.input, ["xi", "entropy"])
        points = list(zip(xi, ent))
        ladder = []
    else:
        at, _ = _couplings(args)
        vt = build_vertex_tensor(at)
        env, ladder, points = None, [], []
        for d in sorted(int(x) for x in parse_grid(args.D_ladder)):
            # warm start from the previous rung: only the new directions must relax
            env = ctmrg_converge(vt, d, tol=float(args.tol), max_iters=int(args.max_iters), env=env)
            obs = measure(env, vt)
            ladder.append(_point_json(at, env, obs))
            points.append((obs.xi, obs.entropy))
    fit = central_charge_fit(points)
    out = {**fit, "points": [list(p) for p in points], "ladder": ladder}
    _emit(args, "central_charge.json", out)
    print(f"c = {fit['c']:.4f} (R^2 = {fit['goodness']:.5f}, {len(points)} points)")
    return out


def cmd_fit_beta(args):
    if args.input:
        gammas, mags = _read_columns(args.input, ["gamma", "m_s"])
        fit = beta_exponent_fit(gammas, float(args.gamma_c), magnetizations=mags)
    else:
        fit = beta_exponent_fit(parse_grid(args.gamma_grid), float(args.gamma_c), _settings(args))
    _emit(args, "beta.json", fit)
    print(f"beta = {fit['beta']:.4f} from {fit['points']} points")
    return fit


COMMANDS = {
    "map-couplings": cmd_map_couplings,
    "noise-check": cmd_noise_check,
    "ctmrg-point": cmd_ctmrg_point,
    "sweep": cmd_sweep,
    "bisect": cmd_bisect,
    "coherent-info": cmd_coherent_info,
    "anyon-params": cmd_anyon_params,
    "staggered-vertex": cmd_staggered_vertex,
    "fit-central-charge": cmd_fit_central_charge,
    "fit-beta": cmd_fit_beta,
}


# --- parser ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="YAML file with default values for any flag")
    p.add_argument("--out", help=f"output directory (env {ENV_OUT}, default .)")
    p.add_argument("--workers", type=int, help=f"worker processes (env {ENV_WORKERS}, default: all cores)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="pin linear algebra to one thread (default on)")


def _noise(p):
    p.add_argument("--noise", choices=["rotation", "ampdamp"], default="rotation")
    p.add_argument("--R", type=float)
    p.add_argument("--axis", choices=["x", "y", "z"])
    p.add_argument("--theta", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--gamma", type=float)
    _dist(p)


def _dist(p):
    p.add_argument("--dist", help="delta | uniform | von_mises | double_von_mises | tabulated")
    p.add_argument("--eps", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--mean", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--delta-phi", type=float)
    p.add_argument("--path", help="two-column CSV (angle, density) for tabulated")


def _ctm(p, d=32):
    p.add_argument("--D", type=int, default=d, help="bond dimension")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=5000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toricat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map-couplings", help="noise spec -> Ashkin-Teller couplings")
    _common(p), _noise(p)
    p = sub.add_parser("noise-check", help="R parameter and stochastic reduction check")
    _common(p), _dist(p)
    p.add_argument("--axis", choices=["x", "y", "z"])
    p.add_argument("--theta", type=float)
    p.add_argument("--phi", type=float)
    p = sub.add_parser("ctmrg-point", help="CTMRG observables at one parameter point")
    _common(p), _noise(p), _ctm(p)
    p = sub.add_parser("sweep", help="parameter sweep over a preset grid")
    _common(p), _ctm(p)
    p.add_argument("--preset", choices=PRESETS, required=False, default="ray")
    p.add_argument("--axis", choices=["x", "y", "z"])
    p.add_argument("--theta", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--R-grid", "--R", dest="R_grid")
    p.add_argument("--gamma-grid", "--gamma", dest="gamma_grid")
    p.add_argument("--theta-grid")
    p.add_argument("--phi-grid")
    p = sub.add_parser("bisect", help="bisect a phase boundary along a line")
    _common(p), _ctm(p, d=40)
    p.add_argument("--line", choices=["rotation", "ampdamp"], default="rotation")
    p.add_argument("--axis", choices=["x", "y", "z"])
    p.add_argument("--theta", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--lo", type=float, required=False)
    p.add_argument("--hi", type=float, required=False)
    p.add_argument("--bisect-tol", type=float, default=2e-3)
    p = sub.add_parser("coherent-info", help="Renyi-2 coherent information on a torus")
    _common(p), _noise(p)
    p.add_argument("--torus", default="3x3")
    p = sub.add_parser("anyon-params", help="finite-torus anyon parameters")
    _common(p), _noise(p)
    p.add_argument("--torus", default="3x3")
    p = sub.add_parser("staggered-vertex", help="closed-form pure-Y solution")
    _common(p)
    p.add_argument("--R-grid", "--R", dest="R_grid")
    p.add_argument("--lx", type=int, default=8)
    p.add_argument("--ly", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=1.0)
    p = sub.add_parser("fit-central-charge", help="S vs log(xi) fit over a bond-dimension ladder")
    _common(p), _noise(p), _ctm(p)
    p.add_argument("--D-ladder", default="10,16,24,32,48,64")
    p.add_argument("--input", help="CSV with xi and entropy columns instead of running CTMRG")
    p = sub.add_parser("fit-beta", help="order-parameter exponent past the upper amplitude-damping transition")
    _common(p), _ctm(p, d=40)
    p.add_argument("--gamma-c", type=float, required=False)
    p.add_argument("--gamma-grid", "--gamma", dest="gamma_grid")
    p.add_argument("--input", help="CSV with gamma and m_s columns instead of running CTMRG")
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"bad YAML in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a mapping")
    return {str(k).replace("-", "_"): v for k, v in cfg.items()}


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        cfg.pop("command", None)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    _require(args)
    return args


def _require(args):
    need = {"bisect": ("lo", "hi"), "fit-beta": ("gamma_c",)}
    for key in need.get(args.command, ()):
        if getattr(args, key) is None:
            raise ValidationError(f"{args.command} needs --{key.replace('_', '-')}")
    if args.command == "fit-beta" and not args.input and not args.gamma_grid:
        raise ValidationError("fit-beta needs --gamma-grid or --input")


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
        with threadpool_limits(1) if args.deterministic else contextlib.nullcontext():
            COMMANDS[args.command](args)
    except (FitError, ArithmeticError, np.linalg.LinAlgError, QuadratureError, DegenerateWeightError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, CapacityError, BracketError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main() -> None:
    sys.exit(run())
