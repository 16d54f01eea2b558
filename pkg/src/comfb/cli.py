"""Command-line entry point.

Commands
--------
simulate    integrate one parameter point to its periodic steady state and
            write trajectory/correlation artifacts
sweep       run a 1D/2D parameter grid (see --axis1/--axis2)
stability   grid scan recording only verdicts and eigenvalue diagnostics
figure      run a bundled study preset (fig2, fig3a, fig3b, fig4, fig5,
            fig6, fig6b, fig7, fig7bc)
validate    print derived rates, thermal occupations and admissibility checks

Exit codes: 0 success, 2 configuration/spec error, 3 instability,
4 non-convergence.  The default output root is $COMFB_OUT_ROOT (else ./runs).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import shutil
import subprocess
import sys
import time

import numpy as np

from . import __version__, measures, model
from .dynamics import (
    MeanFieldState, SolverOptions, build_drift_matrix, modulation_period,
    QuasiPeriodicError,
)
from .params import ParamFileError, SystemParams, load_params
from .sweep import (
    MEASURE_NAMES, SCHEMA_VERSION, SweepSpec, SweepSpecError, VERDICT_OK,
    evaluate_point, figure_preset, make_axis, run_sweep,
)

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_UNSTABLE = 3
EXIT_NOT_CONVERGED = 4

_VERDICT_EXIT = {
    "ok": EXIT_OK,
    "unstable": EXIT_UNSTABLE,
    "not-converged": EXIT_NOT_CONVERGED,
    "quasi-periodic": EXIT_SPEC,
}


def _out_root() -> str:
    return os.environ.get("COMFB_OUT_ROOT", "runs")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", metavar="FILE", help="parameter file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one parameter "
                   "(repeatable, applied in order)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="integrator relative tolerance (default 1e-9)")
    p.add_argument("--atol", type=float, default=1e-12,
                   help="integrator absolute tolerance (default 1e-12)")
    p.add_argument("--budget-secs", type=float, default=120.0,
                   help="wall budget per point (default 120)")
    p.add_argument("--samples", type=int, default=256,
                   help="covariance samples per period (default 256)")
    p.add_argument("--literal-phonon-frequency", action="store_true",
                   help="use the paper-literal (4,3) drift entry "
                        "(diagnostic variant)")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=1,
                   help="parallel worker processes (default 1)")
    p.add_argument("--grid", metavar="N1[xN2]",
                   help="grid resolution, e.g. 81 or 41x41")
    p.add_argument("--resume", action="store_true",
                   help="reuse completed cells from a previous checkpoint")


def _options(args) -> SolverOptions:
    return SolverOptions(
        rtol=args.tol, atol=args.atol, budget_secs=args.budget_secs,
        samples_per_period=args.samples,
        literal_phonon_frequency=args.literal_phonon_frequency)


def _load(args) -> SystemParams:
    return load_params(args.params, args.overrides)


def _parse_grid(text, ndim):
    if text is None:
        return None
    parts = text.lower().split("x")
    if len(parts) != ndim:
        raise SweepSpecError(f"--grid {text!r}: expected {ndim} dimension(s)")
    return tuple(int(p) for p in parts)


def _parse_axis(text):
    # KEY=LO:HI
    if text is None:
        return None
    if "=" not in text or ":" not in text:
        raise SweepSpecError(f"axis {text!r}: expected KEY=LO:HI")
    key, _, rng = text.partition("=")
    lo, _, hi = rng.partition(":")
    return key.strip(), float(lo), float(hi)


def _write_manifest(out_dir, payload):
    os.makedirs(out_dir, exist_ok=True)
    payload = dict(payload)
    payload.setdefault("schema_version", SCHEMA_VERSION)
    payload.setdefault("package_version", __version__)
    payload["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _csv(path, header_kv, columns, rows):
    lines = [f"# {k}: {v}" for k, v in header_kv.items()]
    lines.append(",".join(columns))
    lines.extend(",".join(r) for r in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v):
    return repr(float(v))


def cmd_simulate(args) -> int:
    params = _load(args)
    options = _options(args)
    out_dir = args.out or os.path.join(
        _out_root(), f"simulate_{params.digest()}")
    result = evaluate_point(params, options, keep_cycle=True,
                            record_transient=True)

    header = {
        "schema_version": SCHEMA_VERSION,
        "params_digest": params.digest(),
        "integrator": f"dopri54 rtol={options.rtol} atol={options.atol}",
        "units": "rates in omega_b, times in 1/omega_b",
    }
    manifest = {
        "kind": "simulate",
        "params": params.as_dict(),
        "params_digest": params.digest(),
        "options": dataclasses.asdict(options),
        "verdict": result.verdict,
        "diagnostics": result.diagnostics,
        "overrides": args.overrides,
    }
    if result.maxima is not None:
        manifest["maxima"] = {m: getattr(result.maxima, m)
                              for m in MEASURE_NAMES}
        manifest["argmax_times"] = result.argmax_times

    os.makedirs(out_dir, exist_ok=True)
    if result.transient is not None:
        tr = result.transient
        rows = [[_fmt(t), _fmt(a.real), _fmt(a.imag), _fmt(abs(a)),
                 _fmt(b.real), _fmt(b.imag)]
                for t, a, b in zip(tr.times, tr.alphas, tr.betas)]
        _csv(os.path.join(out_dir, "meanfield.csv"), header,
             ["t", "re_alpha", "im_alpha", "abs_alpha", "re_beta", "im_beta"],
             rows)
    if result.cycle is not None:
        cyc = result.cycle
        rows = [[_fmt(t), _fmt(a.real), _fmt(a.imag), _fmt(abs(a)),
                 _fmt(b.real), _fmt(b.imag)]
                for t, a, b in zip(cyc.times, cyc.alphas, cyc.betas)]
        _csv(os.path.join(out_dir, "cycle.csv"), header,
             ["t", "re_alpha", "im_alpha", "abs_alpha", "re_beta", "im_beta"],
             rows)
    if result.records is not None:
        rows = [[_fmt(r.t), _fmt(r.E_N), _fmt(r.G_ab), _fmt(r.G_ba),
                 _fmt(r.S_b), _fmt(r.mu_b)] for r in result.records]
        _csv(os.path.join(out_dir, "correlations.csv"), header,
             ["t", "E_N", "G_ab", "G_ba", "S_b", "mu_b"], rows)
    _write_manifest(out_dir, manifest)

    print(f"simulate: verdict={result.verdict} out={out_dir}")
    if result.maxima is not None:
        print("  maxima: " + " ".join(
            f"{m}={getattr(result.maxima, m):.6g}" for m in MEASURE_NAMES))
    return _VERDICT_EXIT[result.verdict]


def _run_grid(args, spec, out_dir, manifest_extra=None) -> int:
    result = run_sweep(spec, out_dir, workers=args.workers,
                       resume=args.resume, manifest_extra=manifest_extra)
    verdicts = [c["verdict"] for c in result.cells]
    counts = {v: verdicts.count(v) for v in sorted(set(verdicts))}
    print(f"{spec.preset or 'sweep'}: {len(verdicts)} cells "
          + " ".join(f"{k}={n}" for k, n in counts.items())
          + f" out={out_dir}")
    return EXIT_OK


def cmd_sweep(args, outputs=None) -> int:
    params = _load(args)
    options = _options(args)
    ax1 = _parse_axis(args.axis1)
    ax2 = _parse_axis(args.axis2)
    if ax1 is None:
        raise SweepSpecError("--axis1 KEY=LO:HI is required")
    ndim = 1 if ax2 is None else 2
    grid = _parse_grid(args.grid, ndim) or ((81,) if ndim == 1 else (41, 41))
    axis1 = make_axis(ax1[0], np.linspace(ax1[1], ax1[2], grid[0]))
    axis2 = None
    if ax2 is not None:
        axis2 = make_axis(ax2[0], np.linspace(ax2[1], ax2[2], grid[1]))
    if outputs is None:
        outputs = tuple(args.measures.split(",")) if args.measures \
            else MEASURE_NAMES
    spec = SweepSpec(params, axis1, axis2, outputs=outputs, options=options)
    out_dir = args.out or os.path.join(
        _out_root(), f"sweep_{params.digest()}")
    return _run_grid(args, spec, out_dir,
                     {"overrides": args.overrides, "command": "sweep"})


def cmd_stability(args) -> int:
    return cmd_sweep(args, outputs=())


def cmd_figure(args) -> int:
    options = _options(args)
    try:
        ndim = 1 if args.name == "fig2" else 2
        grid = _parse_grid(args.grid, ndim)
        spec = figure_preset(args.name, grid, options)
    except SweepSpecError:
        raise
    if args.overrides:
        base = load_params(None, args.overrides, base=spec.base)
        spec = dataclasses.replace(spec, base=base)
    out_dir = args.out or os.path.join(_out_root(), args.name)
    status = _run_grid(args, spec, out_dir,
                       {"overrides": args.overrides, "command": "figure"})
    _invoke_renderer(out_dir, spec)
    return status


def _invoke_renderer(out_dir, spec) -> None:
    exe = shutil.which("comfb-render")
    if exe is None:
        print("renderer not installed; artifacts written in data-only mode")
        return
    kind = "heatmap" if spec.axis2 is not None else "slices"
    for measure in spec.outputs:
        cmd = [exe, "--manifest", os.path.join(out_dir, "manifest.json"),
               "--kind", kind, "--measure", measure,
               "--out", os.path.join(out_dir, f"{measure}_max.png")]
        try:
            subprocess.run(cmd, check=True)
        except subprocess.CalledProcessError as exc:
            print(f"renderer failed for {measure}: {exc}", file=sys.stderr)


def cmd_validate(args) -> int:
    params = _load(args)
    n_b = params.thermal_n_b()
    ratio, ok = model.delay_validity(
        params.kappa_a * params.omega_b, params.r_b, args.t_delay)
    A0 = build_drift_matrix(MeanFieldState(0.0, 0j, 0j), params)
    eigs = np.linalg.eigvals(A0)
    max_re = float(np.max(eigs.real))

    print(f"comfb {__version__} parameter check")
    print(f"  kappa_fb / omega_b   = {params.kappa_fb:.9g}"
          + ("   ** gain regime (kappa_fb <= 0) **"
             if params.kappa_fb <= 0 else ""))
    print(f"  delta_fb / omega_b   = {params.delta_fb:.9g}")
    print(f"  t_b                  = {params.t_b:.9g}")
    print(f"  N_a, N_b             = {params.N_a:.6g}, {n_b:.6g}")
    try:
        info = modulation_period(params)
        print(f"  modulation period    = {info.tau:.9g} / omega_b"
              + (f" (omega_m/delta_c = {info.rational[0]}/{info.rational[1]})"
                 if info.rational else ""))
    except QuasiPeriodicError as exc:
        print(f"  modulation period    : quasi-periodic ({exc})")
    print(f"  delay ratio 2 k r t_d = {ratio:.6g} at t_d = {args.t_delay:g} s"
          f" -> {'negligible' if ok else 'NOT negligible'}")
    print(f"  max Re eig A(0)      = {max_re:.6g} "
          f"({'stable' if max_re < 0 else 'UNSTABLE'} at t=0)")
    if args.settle:
        result = evaluate_point(params, _options(args))
        print(f"  settle verdict       = {result.verdict}")
        clc = result.diagnostics.get("C_LC")
        if clc is not None and math.isfinite(clc):
            print(f"  C_LC                 = {clc:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comfb",
        description="coherent-feedback optomechanics simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="single-point run with artifacts")
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="1D/2D parameter grid")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--axis1", metavar="KEY=LO:HI", required=True)
    p.add_argument("--axis2", metavar="KEY=LO:HI")
    p.add_argument("--measures", metavar="M1,M2,...",
                   help=f"subset of {','.join(MEASURE_NAMES)}")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("stability", help="grid scan of stability verdicts")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--axis1", metavar="KEY=LO:HI", required=True)
    p.add_argument("--axis2", metavar="KEY=LO:HI")
    p.set_defaults(fn=cmd_stability)

    p = sub.add_parser("figure", help="run a bundled study preset")
    p.add_argument("name", help="fig2 fig3a fig3b fig4 fig5 fig6 fig6b "
                                "fig7 fig7bc")
    _add_common(p)
    _add_grid(p)
    p.set_defaults(fn=cmd_figure)

    p = sub.add_parser("validate", help="derived-rate and admissibility report")
    _add_common(p)
    p.add_argument("--t-delay", type=float, default=1e-9,
                   help="feedback loop delay in seconds (default 1e-9)")
    p.add_argument("--settle", action="store_true",
                   help="also settle to the cycle and report C_LC")
    p.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParamFileError, SweepSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
