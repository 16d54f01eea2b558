"""Parameter-grid sweeps over the dynamics + measures pipeline.

A sweep evaluates every cell of a 1D/2D lattice of parameter overrides,
records the per-period maxima of the correlation measures together with a
stability verdict and diagnostics, and writes a deterministic artifact set:

    manifest.json        full description of the run (only file with a clock)
    <measure>_max.csv    axis values, measure maximum, verdict per cell
    diagnostics.csv      residuals, eigenvalues, cooperativity, verdicts
    contours_<m>.csv     zero-level polylines of steering measures (2D grids)
    timing.csv           per-cell wall time (excluded from determinism)
    checkpoint.jsonl     append-only completed-cell log enabling resume

Cells are value-in/value-out tasks, so worker count never changes results;
files are written once, in cell order, after all cells finish.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__ as _pkg_version
from . import measures, model
from .dynamics import (
    NotConvergedError, QuasiPeriodicError, SolverOptions, UnstableError,
    modulation_period, power_balance_terms, settle_to_cycle, stability_check,
)
from .measures import CorrelationRecord, record_from_cov
from .params import PARAM_KEYS, ParamFileError, SystemParams, apply_entries

SCHEMA_VERSION = 1
MEASURE_NAMES = CorrelationRecord.MEASURES
VERDICT_OK = "ok"
VERDICT_UNSTABLE = "unstable"
VERDICT_NOT_CONVERGED = "not-converged"
VERDICT_QUASI_PERIODIC = "quasi-periodic"

DIAG_FIELDS = (
    "poincare_residual", "periods", "kappa_fb", "snap_distance", "C_LC",
    "power_balance_residual", "dominant_phonon_re", "max_re_eig",
    "growth_rate", "min_symplectic_eigenvalue", "mean_photon_number",
    "mean_abs_alpha",
)


class SweepSpecError(ValueError):
    """Invalid axis, measure or parameter path; raised before any cell runs."""


@dataclass(frozen=True)
class SweepAxis:
    key: str
    values: tuple[float, ...]
    snapped: tuple[float, ...] | None = None  # rationalized grid, if any

    def resolved(self) -> tuple[float, ...]:
        return self.snapped if self.snapped is not None else self.values


@dataclass(frozen=True)
class SweepSpec:
    base: SystemParams
    axis1: SweepAxis
    axis2: SweepAxis | None = None
    outputs: tuple[str, ...] = MEASURE_NAMES
    options: SolverOptions = SolverOptions()
    preset: str | None = None

    def __post_init__(self):
        for name in self.outputs:
            if name not in MEASURE_NAMES:
                raise SweepSpecError(f"unknown measure {name!r}")
        for axis in self.axes:
            if axis.key not in PARAM_KEYS:
                raise SweepSpecError(f"unknown parameter path {axis.key!r}")
            vals = np.asarray(axis.values)
            if not np.all(np.isfinite(vals)):
                raise SweepSpecError(f"axis {axis.key}: non-finite values")
            if len(vals) > 1 and not (np.all(np.diff(vals) > 0)
                                      or np.all(np.diff(vals) < 0)):
                raise SweepSpecError(f"axis {axis.key}: not strictly monotone")
            # every value must resolve against the base parameters
            for v in axis.resolved():
                try:
                    apply_entries(self.base, {axis.key: float(v)})
                except (ParamFileError, ValueError) as exc:
                    raise SweepSpecError(
                        f"axis {axis.key}={v!r} does not resolve: {exc}"
                    ) from exc

    @property
    def axes(self) -> tuple[SweepAxis, ...]:
        return (self.axis1,) if self.axis2 is None else (self.axis1, self.axis2)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a.values) for a in self.axes)

    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def cell_assignments(self, idx: int) -> dict[str, float]:
        if self.axis2 is None:
            return {self.axis1.key: self.axis1.resolved()[idx]}
        n2 = len(self.axis2.values)
        i1, i2 = divmod(idx, n2)
        return {self.axis1.key: self.axis1.resolved()[i1],
                self.axis2.key: self.axis2.resolved()[i2]}

    def cell_params(self, idx: int) -> SystemParams:
        return apply_entries(self.base, self.cell_assignments(idx))

    def cell_snap_distance(self, idx: int) -> float:
        if self.axis2 is None:
            indices = (idx,)
        else:
            indices = divmod(idx, len(self.axis2.values))
        dist = 0.0
        for axis, i in zip(self.axes, indices):
            if axis.snapped is not None:
                dist = max(dist, abs(axis.values[i] - axis.snapped[i]))
        return dist


def snap_ratio_axis(values) -> tuple[float, ...]:
    """Snap ratio values to the nearest p/q with q <= 64."""
    out = []
    for v in values:
        out.append(float(Fraction(float(v)).limit_denominator(64)))
    return tuple(out)


def make_axis(key: str, values) -> SweepAxis:
    values = tuple(float(v) for v in values)
    if key == "omega_m_over_delta_c":
        return SweepAxis(key, values, snap_ratio_axis(values))
    return SweepAxis(key, values)


@dataclass
class PointResult:
    verdict: str
    maxima: CorrelationRecord | None
    argmax_times: dict | None
    records: list[CorrelationRecord] | None
    diagnostics: dict
    wall_secs: float
    cycle: object | None = None
    transient: object | None = None


def evaluate_point(params: SystemParams, options: SolverOptions,
                   keep_cycle: bool = False,
                   record_transient: bool = False) -> PointResult:
    """Full single-point pipeline: settle, stability, measures, diagnostics."""
    t0 = time.monotonic()
    diag = {name: float("nan") for name in DIAG_FIELDS}
    diag["kappa_fb"] = params.kappa_fb
    transient = None

    def _done(verdict, maxima=None, argmax=None, records=None, cycle=None):
        return PointResult(verdict, maxima, argmax, records, diag,
                           time.monotonic() - t0,
                           cycle if keep_cycle else None, transient)

    try:
        cycle, info = settle_to_cycle(params, options,
                                      record_transient=record_transient)
        transient = info.transient
    except UnstableError as exc:
        diag["growth_rate"] = exc.growth_rate
        diag["max_re_eig"] = exc.max_re_eig
        return _done(VERDICT_UNSTABLE)
    except NotConvergedError as exc:
        diag["poincare_residual"] = exc.residual
        diag["periods"] = float(exc.periods)
        return _done(VERDICT_NOT_CONVERGED)
    except QuasiPeriodicError as exc:
        diag["snap_distance"] = exc.distance
        return _done(VERDICT_QUASI_PERIODIC)

    diag["poincare_residual"] = cycle.poincare_residual
    diag["periods"] = float(cycle.periods_elapsed)
    diag["snap_distance"] = cycle.snap_distance

    report = stability_check(params, cycle,
                             literal_phonon_frequency=options.literal_phonon_frequency)
    diag["max_re_eig"] = report.max_re_eig
    diag["dominant_phonon_re"] = report.dominant_phonon_re

    terms = power_balance_terms(cycle, params)
    diag["mean_photon_number"] = terms["mean_photon_number"]
    diag["mean_abs_alpha"] = terms["mean_abs_alpha"]
    lhs = terms["lhs"]
    rhs = terms["P_om"] + terms["P_OPA"] + terms["P_drv"]
    scale = max(abs(lhs), abs(rhs))
    diag["power_balance_residual"] = abs(lhs - rhs) / scale if scale else 0.0
    if params.kappa_fb > 0.0:
        diag["C_LC"] = model.effective_cooperativity(
            params.g, terms["mean_photon_number"], params.kappa_fb,
            params.kappa_b)

    if not report.stable:
        return _done(VERDICT_UNSTABLE, cycle=cycle)

    try:
        records = [record_from_cov(t, V)
                   for t, V in zip(cycle.times, cycle.covs)]
    except measures.UnphysicalStateError:
        return _done(VERDICT_NOT_CONVERGED, cycle=cycle)
    diag["min_symplectic_eigenvalue"] = min(
        measures.min_symplectic_eigenvalue(V) for V in cycle.covs)
    maxima, argmax = measures.periodic_maxima(records, cycle.tau)
    return _done(VERDICT_OK, maxima, argmax, records, cycle)


def _run_cell(args):
    idx, params, options, snap = args
    result = evaluate_point(params, options)
    result.diagnostics["snap_distance"] = max(
        snap, result.diagnostics["snap_distance"]
        if math.isfinite(result.diagnostics["snap_distance"]) else 0.0)
    row = {
        "idx": idx,
        "verdict": result.verdict,
        "values": {m: getattr(result.maxima, m) for m in MEASURE_NAMES}
        if result.maxima is not None else None,
        "diagnostics": {k: _json_float(v)
                        for k, v in result.diagnostics.items()},
        "wall_secs": result.wall_secs,
    }
    return row


def _json_float(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None
    return float(v)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(float(v))


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list[dict]
    out_dir: str | None = None

    def values(self, measure: str) -> np.ndarray:
        out = np.full(self.spec.n_cells(), np.nan)
        for c in self.cells:
            if c["values"] is not None:
                out[c["idx"]] = c["values"][measure]
        return out.reshape(self.spec.shape)

    def verdicts(self) -> np.ndarray:
        out = np.empty(self.spec.n_cells(), dtype=object)
        for c in self.cells:
            out[c["idx"]] = c["verdict"]
        return out.reshape(self.spec.shape)

    def diagnostics(self, name: str) -> np.ndarray:
        out = np.full(self.spec.n_cells(), np.nan)
        for c in self.cells:
            v = c["diagnostics"].get(name)
            if v is not None:
                out[c["idx"]] = v
        return out.reshape(self.spec.shape)


def spec_digest(spec: SweepSpec) -> str:
    """Stable hash of the full sweep description (base, axes, options)."""
    import hashlib
    blob = json.dumps(_spec_manifest(spec), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _spec_manifest(spec: SweepSpec) -> dict:
    axes = []
    for axis in spec.axes:
        entry = {"key": axis.key, "values": list(axis.values)}
        if axis.snapped is not None:
            entry["snapped"] = list(axis.snapped)
        axes.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "package_version": _pkg_version,
        "preset": spec.preset,
        "params": spec.base.as_dict(),
        "params_digest": spec.base.digest(),
        "axes": axes,
        "grid": list(spec.shape),
        "measures": list(spec.outputs),
        "options": dataclasses.asdict(spec.options),
    }


def _header_lines(manifest: dict) -> list[str]:
    return [
        f"# schema_version: {SCHEMA_VERSION}",
        f"# params_digest: {manifest['params_digest']}",
        f"# integrator: dopri54 rtol={manifest['options']['rtol']} "
        f"atol={manifest['options']['atol']}",
        "# units: rates in omega_b, times in 1/omega_b",
    ]


def _write_csv(path, manifest, columns, rows):
    lines = _header_lines(manifest)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _axis_columns(spec: SweepSpec, idx: int) -> list[str]:
    assign = spec.cell_assignments(idx)
    return [_fmt(assign[a.key]) for a in spec.axes]


def write_artifacts(result: SweepResult, out_dir: str,
                    manifest_extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    spec = result.spec
    manifest = _spec_manifest(spec)
    manifest["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    cells = sorted(result.cells, key=lambda c: c["idx"])
    axis_keys = [a.key for a in spec.axes]

    for measure in spec.outputs:
        rows = []
        for c in cells:
            value = c["values"][measure] if c["values"] is not None else None
            rows.append(_axis_columns(spec, c["idx"]) + [_fmt(value),
                                                         c["verdict"]])
        _write_csv(os.path.join(out_dir, f"{measure}_max.csv"), manifest,
                   axis_keys + [f"{measure}_max", "verdict"], rows)

    rows = []
    for c in cells:
        rows.append(_axis_columns(spec, c["idx"]) + [c["verdict"]]
                    + [_fmt(c["diagnostics"].get(k)) for k in DIAG_FIELDS])
    _write_csv(os.path.join(out_dir, "diagnostics.csv"), manifest,
               axis_keys + ["verdict"] + list(DIAG_FIELDS), rows)

    rows = [[str(c["idx"]), _fmt(c["wall_secs"])] for c in cells]
    _write_csv(os.path.join(out_dir, "timing.csv"), manifest,
               ["idx", "wall_secs"], rows)

    if spec.axis2 is not None:
        for measure in spec.outputs:
            if measure not in ("G_ab", "G_ba"):
                continue
            grid = result.values(measure)
            ok = result.verdicts() == VERDICT_OK
            polylines = zero_contours(
                np.asarray(spec.axis1.resolved()),
                np.asarray(spec.axis2.resolved()), grid, ok)
            rows = []
            for pid, line in enumerate(polylines):
                for x, y in line:
                    rows.append([str(pid), _fmt(x), _fmt(y)])
            _write_csv(os.path.join(out_dir, f"contours_{measure}.csv"),
                       manifest, ["polyline", axis_keys[0], axis_keys[1]],
                       rows)


def run_sweep(spec: SweepSpec, out_dir: str | None = None, workers: int = 1,
              resume: bool = False,
              manifest_extra: dict | None = None) -> SweepResult:
    """Evaluate every cell of the grid; deterministic output cell order.

    With resume=True, cells already present in <out_dir>/checkpoint.jsonl
    (written by a previous, possibly killed, run over the same spec) are
    not recomputed.
    """
    n = spec.n_cells()
    done: dict[int, dict] = {}
    ckpt_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_path = os.path.join(out_dir, "checkpoint.jsonl")
        if resume and os.path.exists(ckpt_path):
            digest = spec_digest(spec)
            with open(ckpt_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    if row.get("spec_digest") != digest:
                        raise SweepSpecError(
                            "checkpoint belongs to a different sweep spec")
                    done[row["idx"]] = row
        elif os.path.exists(ckpt_path):
            os.remove(ckpt_path)

    todo = [i for i in range(n) if i not in done]
    tasks = [(i, spec.cell_params(i), spec.options, spec.cell_snap_distance(i))
             for i in todo]

    digest = spec_digest(spec)

    def _record(row):
        done[row["idx"]] = row
        if ckpt_path is not None:
            row_out = dict(row)
            row_out["spec_digest"] = digest
            with open(ckpt_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row_out, sort_keys=True) + "\n")

    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            _record(_run_cell(task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, task) for task in tasks]
            for fut in as_completed(futures):
                _record(fut.result())

    cells = [done[i] for i in range(n)]
    result = SweepResult(spec, cells, out_dir)
    if out_dir is not None:
        write_artifacts(result, out_dir, manifest_extra)
    return result


# ---------------------------------------------------------------------------
# zero-level contour extraction (marching squares)

_EDGES = {  # case index -> list of (edge_a, edge_b) segments
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    5: [(3, 0), (1, 2)], 6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)],
    9: [(2, 0)], 10: [(0, 1), (2, 3)], 11: [(2, 1)], 12: [(1, 3)],
    13: [(1, 0)], 14: [(0, 3)],
}


def _interp(x0, y0, v0, x1, y1, v1):
    t = v0 / (v0 - v1)
    return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))


def zero_contours(x, y, grid, valid=None, level: float = 0.0):
    """Marching-squares polylines of grid == level over axes (x, y).

    grid has shape (len(x), len(y)).  Squares touching invalid cells are
    skipped rather than interpolated.  Returns a list of polylines, each a
    list of (x, y) points.
    """
    g = np.asarray(grid, dtype=float) - level
    if valid is None:
        valid = np.isfinite(g)
    segments = []
    for i in range(g.shape[0] - 1):
        for j in range(g.shape[1] - 1):
            if not (valid[i, j] and valid[i + 1, j] and valid[i, j + 1]
                    and valid[i + 1, j + 1]):
                continue
            corners = [  # clockwise from (i, j)
                (x[i], y[j], g[i, j]),
                (x[i + 1], y[j], g[i + 1, j]),
                (x[i + 1], y[j + 1], g[i + 1, j + 1]),
                (x[i], y[j + 1], g[i, j + 1]),
            ]
            case = 0
            for bit, (_, _, v) in enumerate(corners):
                if v > 0.0:
                    case |= 1 << bit
            if case in (0, 15):
                continue
            edge_pts = {}
            for e, (a, b) in enumerate([(0, 1), (1, 2), (2, 3), (3, 0)]):
                va, vb = corners[a][2], corners[b][2]
                if (va > 0.0) != (vb > 0.0):
                    edge_pts[e] = _interp(corners[a][0], corners[a][1], va,
                                          corners[b][0], corners[b][1], vb)
            for ea, eb in _EDGES[case]:
                if ea in edge_pts and eb in edge_pts:
                    segments.append((edge_pts[ea], edge_pts[eb]))
    return _chain_segments(segments)


def _chain_segments(segments, tol=1e-12):
    """Join segments that share endpoints into polylines (greedy walk)."""
    def key(pt):
        return (round(pt[0], 12), round(pt[1], 12))

    remaining = list(segments)
    polylines = []
    while remaining:
        a, b = remaining.pop()
        line = [a, b]
        grown = True
        while grown:
            grown = False
            for k, (p, q) in enumerate(remaining):
                if key(p) == key(line[-1]):
                    line.append(q)
                elif key(q) == key(line[-1]):
                    line.append(p)
                elif key(p) == key(line[0]):
                    line.insert(0, q)
                elif key(q) == key(line[0]):
                    line.insert(0, p)
                else:
                    continue
                remaining.pop(k)
                grown = True
                break
        polylines.append(line)
    return polylines


# ---------------------------------------------------------------------------
# figure presets

_PRESET_DOC = {
    "fig2": "entanglement and limit-cycle diagnostics vs feedback reflectivity",
    "fig3a": "E_N maxima over (omega_m/delta_c, r_b)",
    "fig3b": "E_N maxima over (G_m/G_c, r_b)",
    "fig4": "steering maxima over (omega_m/delta_c, r_b)",
    "fig5": "phonon purity and squeezing over (omega_m/delta_c, r_b)",
    "fig6": "E_N maxima over (feedback phase, G_m/G_c)",
    "fig6b": "G_ab maxima over (feedback phase, G_m/G_c)",
    "fig7": "thermal robustness of E_N over (T, r_b)",
    "fig7bc": "thermal robustness of steering over (T, r_b)",
}

PRESET_NAMES = tuple(_PRESET_DOC)


def _lin(lo, hi, n):
    return tuple(np.linspace(lo, hi, n))


def figure_preset(name: str, grid: tuple[int, ...] | None = None,
                  options: SolverOptions = SolverOptions()) -> SweepSpec:
    """Fully resolved sweep spec for one of the bundled study presets.

    Default resolution is 81 points for 1D presets and 41x41 for 2D ones;
    pass `grid` to override.  delta_a = omega_b and delta_c = 1.18 omega_b
    throughout (stated assumptions of the preset catalog, see README).
    """
    name = {"fig6a": "fig6", "fig7a": "fig7"}.get(name, name)
    if name not in PRESET_NAMES:
        raise SweepSpecError(
            f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")

    base = SystemParams()  # paper operating point, delta_a = 1, delta_c = 1.18
    dc = base.delta_c

    def shape2(default=(41, 41)):
        if grid is None:
            return default
        if len(grid) != 2:
            raise SweepSpecError("this preset needs an n1 x n2 grid")
        return grid

    def shape1(default=81):
        if grid is None:
            return default
        if len(grid) != 1:
            raise SweepSpecError("this preset needs a 1D grid")
        return grid[0]

    if name == "fig2":
        n = shape1()
        base = base.replace(E=6.0e4, G_c=0.02, G_m=0.03,
                            omega_m=1.7 * dc)
        return SweepSpec(base, make_axis("r_b", _lin(0.0, 0.35, n)),
                         outputs=MEASURE_NAMES, options=options, preset=name)
    if name == "fig3a" or name == "fig5":
        n1, n2 = shape2()
        base = base.replace(E=5.0e4, G_c=0.02, G_m=0.03)
        outputs = ("E_N",) if name == "fig3a" else ("mu_b", "S_b")
        return SweepSpec(base,
                         make_axis("omega_m_over_delta_c", _lin(0.5, 2.5, n1)),
                         make_axis("r_b", _lin(0.0, 0.35, n2)),
                         outputs=outputs, options=options, preset=name)
    if name == "fig3b":
        n1, n2 = shape2()
        base = base.replace(E=5.0e4, G_c=0.02, omega_m=1.6 * dc)
        return SweepSpec(base,
                         make_axis("G_m_over_G_c", _lin(0.0, 2.0, n1)),
                         make_axis("r_b", _lin(0.0, 0.35, n2)),
                         outputs=("E_N",), options=options, preset=name)
    if name == "fig4":
        n1, n2 = shape2()
        base = base.replace(E=7.0e4, G_c=0.03, G_m=0.05)
        return SweepSpec(base,
                         make_axis("omega_m_over_delta_c", _lin(0.5, 2.5, n1)),
                         make_axis("r_b", _lin(0.0, 0.35, n2)),
                         outputs=("G_ab", "G_ba"), options=options,
                         preset=name)
    if name in ("fig6", "fig6b"):
        n1, n2 = shape2()
        if name == "fig6":
            base = base.replace(E=5.0e4, G_c=0.02, r_b=0.2, omega_m=1.5 * dc)
            outputs = ("E_N",)
        else:
            base = base.replace(E=5.0e4, G_c=0.02, r_b=0.15, omega_m=1.3 * dc)
            outputs = ("G_ab",)
        return SweepSpec(base,
                         make_axis("theta_rad", _lin(0.0, 2 * math.pi, n1)),
                         make_axis("G_m_over_G_c", _lin(0.0, 2.0, n2)),
                         outputs=outputs, options=options, preset=name)
    if name in ("fig7", "fig7bc"):
        n1, n2 = shape2()
        if name == "fig7":
            base = base.replace(E=5.0e4, G_c=0.02, G_m=0.03, omega_m=1.5 * dc)
            outputs = ("E_N",)
        else:
            base = base.replace(E=7.0e4, G_c=0.02, G_m=0.06, omega_m=1.5 * dc)
            outputs = ("G_ab", "G_ba")
        return SweepSpec(base,
                         make_axis("T_kelvin", _lin(0.02, 0.4, n1)),
                         make_axis("r_b", _lin(0.0, 0.35, n2)),
                         outputs=outputs, options=options, preset=name)
    raise AssertionError(name)
