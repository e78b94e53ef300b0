"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.

Every CSV/JSON written with ``--out`` gets a ``<out>.manifest.json``
recording the subcommand and its fully resolved parameters; ``berrysim
replay`` re-runs a manifest and reproduces the output byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, engine, geometry
from .kernel import SpinSystem
from .parser import SequenceSyntaxError, format_sequence, parse_sequence
from .sequence import DEFAULT_Q_THRESHOLD, adiabaticity_report, build_fig1

SEED_ENV = "BERRYSIM_SEED"

SWEEP_HEADER = [
    "nu1_hz", "phi0_deg", "phi1_deg", "gamma0_deg", "gamma1_deg", "controlled_deg",
    "mag0", "mag1", "analytic_gamma0_deg", "analytic_gamma1_deg", "analytic_controlled_deg",
]
ADIABATICITY_HEADER = [
    "dwell_us", "min_q", "max_abs_phase_error_deg_line0", "max_abs_phase_error_deg_line1",
]


class UsageError(Exception):
    pass


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _num(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _require(cond, message):
    if not cond:
        raise UsageError(message)


def _system(p):
    _require(math.isfinite(p["delta_hz"]), "--delta-hz must be finite")
    _require(p["j_hz"] >= 0 and math.isfinite(p["j_hz"]), "--j-hz must be >= 0")
    return SpinSystem(p["delta_hz"], p["j_hz"])


def _config(p):
    _require(p.get("b1_sigma", 0.0) >= 0, "--b1-sigma must be >= 0")
    _require(p.get("ensemble", 1) >= 1, "--ensemble must be >= 1")
    b1 = engine.GaussianB1(p["b1_sigma"]) if p.get("b1_sigma", 0.0) > 0 else None
    return engine.SimConfig(
        b1=b1, ensemble_size=p.get("ensemble", 1), rng_seed=p["seed"],
        reference_kind=p.get("reference", "bare90"), n_jobs=p.get("jobs", 1),
    )


def _timing(p):
    _require(p["steps"] >= 1, "--steps must be >= 1")
    _require(p["dwell_us"] > 0, "--dwell-us must be > 0")
    return p["steps"], p["dwell_us"] / 1e6


# ---------------------------------------------------------------------------
# subcommand bodies: resolved parameters -> (text, extension)

def run_sweep(p):
    system = _system(p)
    steps, dt = _timing(p)
    _require(p["grid_step_hz"] > 0, "--grid-step-hz must be > 0")
    _require(p["nu1_max_hz"] >= 0, "--nu1-max-hz must be >= 0")
    grid = engine.default_nu1_grid(p["nu1_max_hz"], p["grid_step_hz"])
    rows = engine.sweep_nu1(grid, system, _config(p), steps, dt)
    out = []
    for r in rows:
        res = r.result
        out.append([r.nu1_hz, res.phi0_deg, res.phi1_deg, res.gamma0_deg, res.gamma1_deg,
                    res.controlled_deg, res.mag0, res.mag1, r.analytic_gamma0_deg,
                    r.analytic_gamma1_deg, r.analytic_controlled_deg])
    return _csv_text(SWEEP_HEADER, out), "csv"


def run_gate(p):
    system = _system(p)
    steps, dt = _timing(p)
    _require(p["nu1_hz"] >= 0, "--nu1-hz must be >= 0")
    seq = build_fig1(p["nu1_hz"], steps, dt)
    res = engine.measure_phases(seq, system, _config(p))
    g0, g1 = engine.analytic_gammas_deg(system, p["nu1_hz"])
    rep = adiabaticity_report(seq, system, p["q_threshold"])
    obj = res.to_dict()
    obj.update({
        "nu1_hz": p["nu1_hz"],
        "analytic": {"gamma0_deg": g0, "gamma1_deg": g1,
                     "phi0_deg": 4 * g0, "phi1_deg": 4 * g1,
                     "controlled_deg": 4 * (g0 - g1)},
        "adiabaticity": {"min_q": rep.min_q if math.isfinite(rep.min_q) else None,
                         "threshold": rep.threshold, "ok": rep.ok},
        "adiabaticity_warning": not rep.ok,
    })
    return _json_text(obj), "json"


def run_optimize(p):
    _require(p["j_hz"] > 0, "--j-hz must be > 0")
    _require(0 < p["target_deg"] < 720, "--target-deg must lie in (0, 720)")
    opt = geometry.optimize_pi_gate(p["j_hz"], p["target_deg"])
    return _json_text(opt.to_dict()), "json"


def run_adiabaticity(p):
    system = _system(p)
    _require(len(p["dwells_us"]) > 0, "--dwells-us needs at least one value")
    _require(all(d > 0 for d in p["dwells_us"]), "--dwells-us values must be > 0")
    _require(p["steps"] >= 1, "--steps must be >= 1")
    _require(p["grid_step_hz"] > 0, "--grid-step-hz must be > 0")
    grid = engine.default_nu1_grid(p["nu1_max_hz"], p["grid_step_hz"])
    params = engine.Fig1Params(p["nu1_hz"], p["steps"], 1e-4)
    rows = engine.sweep_rate_study(system, params, [d / 1e6 for d in p["dwells_us"]],
                                   grid, engine.SimConfig(n_jobs=p.get("jobs", 1)),
                                   p["q_threshold"])
    out = [[d, r.min_q, r.max_abs_error_deg[0], r.max_abs_error_deg[1]]
           for d, r in zip(p["dwells_us"], rows)]
    return _csv_text(ADIABATICITY_HEADER, out), "csv"


def run_dephasing(p):
    system = _system(p)
    steps, dt = _timing(p)
    _require(p["b1_sigma"] >= 0, "--b1-sigma must be >= 0")
    _require(p["ensemble"] >= 1, "--ensemble must be >= 1")
    res = engine.dephasing_experiment(
        system, engine.Fig1Params(p["nu1_hz"], steps, dt), p["b1_sigma"],
        engine.SimConfig(ensemble_size=p["ensemble"], rng_seed=p["seed"], n_jobs=p.get("jobs", 1)))
    return _json_text(res.to_dict()), "json"


def run_noise(p):
    system = _system(p)
    steps, dt = _timing(p)
    _require(p["phase_jitter_deg"] >= 0, "--phase-jitter-deg must be >= 0")
    _require(p["trials"] >= 1, "--trials must be >= 1")
    res = engine.jitter_robustness(
        system, engine.Fig1Params(p["nu1_hz"], steps, dt), math.radians(p["phase_jitter_deg"]),
        p["trials"], p["seed"], n_jobs=p.get("jobs", 1))
    return _json_text(res.to_dict()), "json"


RUNNERS = {
    "sweep": run_sweep, "gate": run_gate, "optimize": run_optimize,
    "adiabaticity": run_adiabaticity, "dephasing": run_dephasing, "noise": run_noise,
}


# ---------------------------------------------------------------------------
# argument parsing

def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _physics(sp, nu1=None):
    sp.add_argument("--delta-hz", type=float, default=221.3)
    sp.add_argument("--j-hz", type=float, default=209.2)
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--dwell-us", type=float, default=100.0)
    if nu1 is not None:
        sp.add_argument("--nu1-hz", type=float, default=nu1)


def _common(sp):
    sp.add_argument("--seed", type=int, default=None,
                    help=f"RNG seed (default ${SEED_ENV} or 0)")
    sp.add_argument("--jobs", type=int, default=1, help="parallel workers")
    sp.add_argument("--out", type=Path, default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="berrysim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"berrysim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="controlled phase versus RF amplitude (CSV)")
    _physics(sp)
    sp.add_argument("--nu1-max-hz", type=float, default=774.0)
    sp.add_argument("--grid-step-hz", type=float, default=5.0)
    sp.add_argument("--b1-sigma", type=float, default=0.0)
    sp.add_argument("--ensemble", type=int, default=1)
    sp.add_argument("--reference", choices=("bare90", "same_direction"), default="bare90")
    _common(sp)

    sp = sub.add_parser("gate", help="single-point controlled phase (JSON)")
    _physics(sp, nu1=441.8)
    sp.add_argument("--b1-sigma", type=float, default=0.0)
    sp.add_argument("--ensemble", type=int, default=1)
    sp.add_argument("--reference", choices=("bare90", "same_direction"), default="bare90")
    sp.add_argument("--q-threshold", type=float, default=DEFAULT_Q_THRESHOLD)
    _common(sp)

    sp = sub.add_parser("optimize", help="controlled-phase gate optimum (JSON)")
    sp.add_argument("--j-hz", type=float, default=209.2)
    sp.add_argument("--target-deg", type=float, default=180.0)
    _common(sp)

    sp = sub.add_parser("adiabaticity", help="phase error versus sweep dwell (CSV)")
    _physics(sp, nu1=441.8)
    sp.add_argument("--dwells-us", type=_float_list, default=[100.0, 50.0, 25.0])
    sp.add_argument("--nu1-max-hz", type=float, default=774.0)
    sp.add_argument("--grid-step-hz", type=float, default=5.0)
    sp.add_argument("--q-threshold", type=float, default=DEFAULT_Q_THRESHOLD)
    _common(sp)

    sp = sub.add_parser("dephasing", help="echo versus single block under B1 spread (JSON)")
    _physics(sp, nu1=441.8)
    sp.add_argument("--b1-sigma", type=float, default=0.05)
    sp.add_argument("--ensemble", type=int, default=200)
    _common(sp)

    sp = sub.add_parser("noise", help="controlled phase under RF phase jitter (JSON)")
    _physics(sp, nu1=441.8)
    sp.add_argument("--phase-jitter-deg", type=float, default=2.0)
    sp.add_argument("--trials", type=int, default=100)
    _common(sp)

    sp = sub.add_parser("validate", help="check a sequence file")
    sp.add_argument("path", type=Path)
    sp.add_argument("--adiabaticity", action="store_true", help="append the Q report")
    sp.add_argument("--delta-hz", type=float, default=221.3)
    sp.add_argument("--j-hz", type=float, default=209.2)
    sp.add_argument("--q-threshold", type=float, default=DEFAULT_Q_THRESHOLD)

    sp = sub.add_parser("replay", help="re-run a manifest")
    sp.add_argument("manifest", type=Path)
    sp.add_argument("--out", type=Path, default=None,
                    help="write here instead of the manifest's output path")
    return ap


def _resolved(args) -> dict:
    skip = {"command", "out"}
    p = {k: v for k, v in vars(args).items() if k not in skip}
    if "seed" in p and p["seed"] is None:
        p["seed"] = _default_seed()
    return p


def _emit(text, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _write_manifest(command, params, out: Path, wall):
    manifest = {
        "subcommand": command,
        "parameters": params,
        "seed": params.get("seed"),
        "tool_version": __version__,
        "output_paths": [str(out)],
        "wall_clock_s": wall,
    }
    path = Path(str(out) + ".manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_text(manifest))
    return path


def _run(command, params, out):
    t0 = time.perf_counter()
    text, _ = RUNNERS[command](params)
    _emit(text, out)
    if out is not None:
        _write_manifest(command, params, out, time.perf_counter() - t0)
    return 0


def _validate(args):
    try:
        text = args.path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"berrysim: cannot read {args.path}: {exc}", file=sys.stderr)
        return 1
    try:
        seq = parse_sequence(text, label=args.path.stem)
    except SequenceSyntaxError as exc:
        for err in exc.errors:
            print(f"{args.path}:{err}", file=sys.stderr)
        return 2
    sys.stdout.write(format_sequence(seq))
    if args.adiabaticity:
        rep = adiabaticity_report(seq, SpinSystem(args.delta_hz, args.j_hz), args.q_threshold)
        q = rep.min_q
        sys.stdout.write(f"# adiabaticity: min_q={q!r} threshold={rep.threshold!r} "
                         f"ok={str(rep.ok).lower()}\n")
        for e in rep.entries:
            flag = " LOW" if e.min_q < rep.threshold else ""
            sys.stdout.write(f"#   segment {e.segment} {e.kind} line {e.s_manifold}: "
                             f"min_q={e.min_q!r}{flag}\n")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "validate":
            return _validate(args)
        if args.command == "replay":
            manifest = json.loads(args.manifest.read_text(encoding="utf-8"))
            out = args.out or Path(manifest["output_paths"][0])
            return _run(manifest["subcommand"], manifest["parameters"], out)
        return _run(args.command, _resolved(args), args.out)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"berrysim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (geometry.ConvergenceError, ValueError, RuntimeError, OSError) as exc:
        print(f"berrysim {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
