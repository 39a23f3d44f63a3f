"""Command-line entry point: ``pilotwave run | sweep | analyze | report``.

``run`` simulates one launch and writes its trajectory.  ``sweep`` runs a
named preset or an ensemble file in parallel with checkpointing.
``analyze`` turns one results CSV into histogram, map, fit and peak files,
and ``report`` gathers several results CSVs into per-figure data bundles.

Every file written carries the package version, a configuration hash and
the unit convention: lengths in lambda_c, times in T_c, angles in radians.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import math
import os
import re
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np
import yaml

from . import __version__, stats
from .experiment import (DESK_GRID, EXITED, FAILED, FULL_GRID, OUTCOMES, EnsembleSpec,
                         RunConfig, SchemaError, default_workers, preset_experiments,
                         read_results_csv, run_ensemble, run_single, summarize,
                         write_results_csv)
from .field import write_raster
from .geometry import ApparatusSpec, ConfigurationError, build_apparatus, default_specs
from .units import LAMBDA_C, T_C

UNITS = "lengths in lambda_c, times in T_c, angles in radians, b and p dimensionless"
COMPLETION_THRESHOLD = 0.9
SINGLE_FIGURES = {16.7: "fig3a", 20.9: "fig3b", 25.0: "fig3c"}


class CLIError(Exception):
    """User-facing failure; the message is printed and the exit status is ``code``."""

    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# config files


def _key_lines(text):
    """``(key, line)`` pairs for every mapping key of a YAML/JSON document, in order."""
    out = []

    def walk(node):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                out.append((str(k.value), k.start_mark.line + 1))
                walk(v)
        elif isinstance(node, yaml.SequenceNode):
            for v in node.value:
                walk(v)

    try:
        walk(yaml.compose(text))
    except yaml.YAMLError:
        pass
    return out


def load_config(path):
    """Parse a YAML or JSON config file; returns ``(data, key_lines)``."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CLIError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CLIError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise CLIError(f"{path}:1: top level must be a mapping of config fields")
    return data, _key_lines(text)


def _located(path, exc, key_lines):
    """Error message pointing at the config line whose key the error names."""
    msg = str(exc)
    for key, line in key_lines:
        if re.search(rf"(?<![\w.]){re.escape(key)}(?![\w])", msg):
            return f"{path}:{line}: {key}: {msg}"
    return f"{path}: {msg}"


def _materialize(build, path, key_lines):
    try:
        return build()
    except (ConfigurationError, TypeError, ValueError, KeyError) as exc:
        raise CLIError(_located(path or "<defaults>", exc, key_lines)) from exc


def _with_grid(data, desk_scale):
    """Fill the grid recipe from the desk or full-scale default."""
    data = dict(data)
    base = asdict(DESK_GRID if desk_scale else FULL_GRID)
    grid = data.get("grid") or {}
    if not isinstance(grid, dict):
        raise CLIError("grid must be a mapping of grid fields")
    data["grid"] = {**base, **grid}
    return data


def run_config_from(data, desk_scale=False, apparatus=None):
    data = _with_grid(data, desk_scale)
    if apparatus:
        data["apparatus"] = apparatus
    return RunConfig.from_dict(data)


def ensembles_from(data, desk_scale=False):
    """EnsembleSpecs from a file holding one spec or ``ensembles: [...]``."""
    items = data["ensembles"] if "ensembles" in data else [data]
    specs = []
    for k, item in enumerate(items):
        item = dict(item)
        item.setdefault("name", f"ensemble-{k}")
        item["base"] = run_config_from(item.get("base") or {}, desk_scale)
        specs.append(EnsembleSpec.from_dict(item))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"ensemble names must be unique, got {names}")
    return specs


# ---------------------------------------------------------------------------
# manifests and small writers


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _grid_info(config):
    g = config.grid.build(config.apparatus, config.launch_distance)
    return {**asdict(config.grid), "nx": g.nx, "ny": g.ny, "dx": g.dx / LAMBDA_C,
            "dt": g.dt / T_C}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _header(config_hash, **extra):
    lines = [f"# version: pilotwave {__version__}", f"# config_hash: {config_hash}",
             f"# units: {UNITS}"]
    lines += [f"# {k}: {v}" for k, v in extra.items()]
    return "\n".join(lines) + "\n"


def _write_csv(path, header, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating))
                                              else v) for v in row])


def _manifest(command, config_hash, preset, timing, counts, **extra):
    return {"version": __version__, "command": command, "config_hash": config_hash,
            "preset": preset, "timing": timing, "counts": counts, "units": UNITS, **extra}


def _progress(name):
    state = {"last": -1}

    def report(done, total):
        pct = int(100 * done / total)
        if pct // 5 != state["last"] // 5 or done == total:
            state["last"] = pct
            print(f"  {name}: {done}/{total}", file=sys.stderr, flush=True)

    return report


# ---------------------------------------------------------------------------
# run


def cmd_run(args):
    data, lines = load_config(args.config) if args.config else ({}, [])
    config = _materialize(lambda: run_config_from(data, args.desk_scale, args.preset),
                          args.config, lines)
    os.makedirs(args.out, exist_ok=True)
    snap_dir = os.path.join(args.out, "snapshots")
    hook = None
    if args.snapshot_every:
        os.makedirs(snap_dir, exist_ok=True)
        header = _header(config.config_id)
        counter = iter(range(10 ** 6))

        def hook(t, phi, grid, app):
            k = next(counter)
            if k == 0:
                write_raster(os.path.join(args.out, "apparatus.csv"), 0.0, grid, app.v2,
                             comments=header)
            write_raster(os.path.join(snap_dir, f"phi_{k:05d}.csv"), t, grid, phi,
                         comments=header)

    t0 = time.perf_counter()
    try:
        result = run_single(config, keep_trajectory=True, on_snapshot=hook,
                            snapshot_every=args.snapshot_every)
    except ConfigurationError as exc:
        raise CLIError(_located(args.config or "<defaults>", exc, lines)) from exc
    wall = time.perf_counter() - t0

    tr = result.trajectory
    gamma = np.sqrt(1.0 + tr["px"] ** 2 + tr["py"] ** 2)
    rows = zip(tr["t"] / T_C, tr["x"] / LAMBDA_C, tr["y"] / LAMBDA_C, tr["px"], tr["py"], gamma)
    _write_csv(os.path.join(args.out, "trajectory.csv"), _header(config.config_id),
               ("t", "x", "y", "px", "py", "gamma"), rows)
    res = result.to_dict()
    _write_json(os.path.join(args.out, "manifest.json"), _manifest(
        "run", config.config_id, args.preset,
        {"wall_seconds": wall, "sim_time": result.sim_time},
        {o: int(result.good == o) for o in OUTCOMES},
        grid=_grid_info(config), config=config.to_dict(), result=res))
    theta = "" if result.theta_out is None else f" theta={result.theta_out:.6g} rad"
    print(f"{result.good}{theta} u_steady={result.u_steady:.5g} -> {args.out}")
    if result.good == FAILED:
        print(f"run failed: {result.message}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args):
    if bool(args.preset) == bool(args.config):
        raise CLIError("sweep needs exactly one of --preset or --config")
    if args.preset:
        presets = preset_experiments(desk_scale=args.desk_scale)
        if args.preset not in presets:
            raise CLIError(f"unknown preset {args.preset!r}; choose from {sorted(presets)}")
        specs = presets[args.preset]
    else:
        data, lines = load_config(args.config)
        specs = _materialize(lambda: ensembles_from(data, args.desk_scale), args.config, lines)

    workers = args.workers or default_workers()
    ckpt_dir = args.checkpoint or os.path.join(args.out, "checkpoints")
    os.makedirs(args.out, exist_ok=True)
    entries, totals = [], {o: 0 for o in OUTCOMES}
    t_start = time.perf_counter()
    for spec in specs:
        print(f"{spec.name}: {len(spec)} runs on {workers} worker(s)", file=sys.stderr)
        t0 = time.perf_counter()
        try:
            results = run_ensemble(spec, workers=workers,
                                   checkpoint_path=os.path.join(ckpt_dir, f"{spec.name}.json"),
                                   progress=_progress(spec.name))
        except ValueError as exc:
            raise CLIError(str(exc)) from exc
        elapsed = time.perf_counter() - t0
        csv_path = os.path.join(args.out, f"{spec.name}.csv")
        write_results_csv(csv_path, results, spec)
        summary = summarize(results, spec, elapsed)
        summary["grid"] = _grid_info(spec.base)
        _write_json(os.path.join(args.out, f"{spec.name}.json"), summary)
        for o, n in summary["counts"].items():
            totals[o] += n
        entries.append({"name": spec.name, "csv": os.path.basename(csv_path),
                        "config_hash": spec.spec_hash, "n_runs": len(results),
                        "counts": summary["counts"], "elapsed_seconds": elapsed,
                        "grid": summary["grid"], "spec": spec.to_dict()})
        print(f"{spec.name}: {summary['counts']}", file=sys.stderr)

    n = sum(totals.values())
    completed = (n - totals[FAILED]) / n if n else 0.0
    sweep_hash = _hash([e["config_hash"] for e in entries])
    _write_json(os.path.join(args.out, "manifest.json"), _manifest(
        "sweep", sweep_hash, args.preset,
        {"wall_seconds": time.perf_counter() - t_start, "workers": workers}, totals,
        desk_scale=args.desk_scale, completed_fraction=completed, ensembles=entries))
    if completed < COMPLETION_THRESHOLD:
        print(f"only {completed:.1%} of runs completed (need {COMPLETION_THRESHOLD:.0%})",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# analysis


@dataclass
class Analysis:
    """Everything ``analyze`` derives from one ensemble."""

    b: float
    p0: float
    apparatus: ApparatusSpec
    n_runs: int
    n_good: int
    lam_eff: float                      # lambda_c
    hist: stats.AngularHistogram
    fraunhofer: stats.TabulatedDensity | None
    fit_fraunhofer: stats.FitReport | None
    fit_gaussian: stats.FitReport | None
    dmap: stats.DiffractionMap | None
    lyapunov: tuple | None
    peaks: np.ndarray | None
    peak_spacing: float | None
    node_width: float | None
    node_width_samples: float | None
    node_width_model: float | None
    smoothness: stats.SmoothnessReport | None
    u_steady: float
    notes: list

    def fit_json(self, config_hash):
        def fit(rep):
            return None if rep is None else rep.to_dict()

        sm = self.smoothness
        return {
            "version": __version__, "config_hash": config_hash, "units": UNITS,
            "n_runs": self.n_runs, "n_good": self.n_good,
            "parameters": {"b": self.b, "p0": self.p0, "w": self.apparatus.slit_width,
                           "d": self.apparatus.slit_separation if self.apparatus.kind == "double_slit" else 0.0,
                           "lam_eff": self.lam_eff,
                           "sigma": stats.smoothing_sigma(self.lam_eff * LAMBDA_C,
                                                          self.apparatus.slit_width * LAMBDA_C),
                           "n_bins": self.hist.n_bins, "weight_sigma": stats.WEIGHT_SIGMA,
                           "lyapunov_floor": stats.LYAPUNOV_FLOOR},
            "fraunhofer": fit(self.fit_fraunhofer), "gaussian": fit(self.fit_gaussian),
            "central_node_width": self.node_width,
            "central_node_width_samples": self.node_width_samples,
            "central_node_width_fraunhofer": self.node_width_model,
            "peak_spacing": self.peak_spacing,
            "lyapunov_global": None if sm is None else sm.mean_lyapunov,
            "smoothness": None if sm is None else {
                "verdict": sm.verdict, "monotone": sm.monotone,
                "nondifferentiable": sm.nondifferentiable,
                "variance_ratios": list(sm.variance_ratios)},
            "u_steady_mean": self.u_steady, "notes": self.notes,
        }


def _guarded(notes, label, fn, *args):
    try:
        return fn(*args)
    except stats.StatsError as exc:
        notes.append(f"{label}: {exc}")
        return None


def analyze(results, apparatus, n_bins=None, edge_band=0.0, window=1.0):
    """Full statistics pipeline over one ensemble of a single ``(b, p0)``."""
    pairs = sorted({(float(r.b), float(r.p0)) for r in results})
    if len(pairs) != 1:
        raise CLIError(f"analyze expects one (b, p0) per file, found {pairs}")
    b, p0 = pairs[0]
    good = [r for r in results if r.good == EXITED]
    if not good:
        raise CLIError("no good runs: no trajectory exited downstream", code=1)
    notes = []
    hist = stats.weighted_histogram(results, apparatus.slit_centers, n_bins=n_bins)
    lam = stats.effective_wavelength(b, p0) / LAMBDA_C
    w = apparatus.slit_width
    d = apparatus.slit_separation if apparatus.kind == "double_slit" else 0.0
    theta = np.array([r.theta_out for r in good])
    wts = stats.impact_weights([r.y for r in good], apparatus.slit_centers)

    fraun = fit_f = fit_g = None
    node = node_s = node_m = None
    if apparatus.kind in ("single_slit", "double_slit"):
        fraun = stats.fraunhofer_prediction(w, d, lam * LAMBDA_C)
        try:
            fit_f = stats.chi_square(hist, fraun, n_constraints=1,
                                     params={"model": "fraunhofer", "lam_eff": lam, "w": w, "d": d})
        except stats.StatsError as exc:
            notes.append(f"fraunhofer fit: {exc}")
        node_m = _guarded(notes, "central node (model)", stats.central_node_width_model, fraun, lam, w)
        node = _guarded(notes, "central node (histogram)", stats.central_node_width, hist, lam, w)
        node_s = _guarded(notes, "central node (samples)", stats.central_node_width_samples,
                          theta, wts, lam, w)
    try:
        gauss = stats.gaussian_reference(hist)
        fit_g = stats.chi_square(hist, gauss, n_constraints=2,
                                 params={"model": "gaussian", "sigma": math.sqrt(gauss.moment(2))})
    except stats.StatsError as exc:
        notes.append(f"gaussian fit: {exc}")

    dmap = lyap = peaks = spacing = smooth = None
    try:
        dmap = stats.diffraction_map(results)
        lyap = stats.lyapunov_local(dmap, window=window)
        smooth = stats.smoothness_classifier(
            dmap, rho_in=lambda y: stats.impact_weights(y, apparatus.slit_centers))
        peaks, spacing = stats.fold_peaks(dmap, edge_band=edge_band)
    except stats.StatsError as exc:
        notes.append(f"diffraction map: {exc}")
    u = [r.u_steady for r in results if np.isfinite(r.u_steady)]
    return Analysis(b, p0, apparatus, len(results), len(good), lam, hist, fraun, fit_f, fit_g,
                    dmap, lyap, peaks, spacing, node, node_s, node_m, smooth,
                    float(np.mean(u)) if u else math.nan, notes)


def _apparatus_for(meta, preset, path):
    if "apparatus" in meta:
        return ApparatusSpec.from_dict(json.loads(meta["apparatus"]))
    if preset:
        specs = default_specs()
        if preset not in specs:
            raise CLIError(f"unknown apparatus preset {preset!r}; choose from {sorted(specs)}")
        return specs[preset]
    raise CLIError(f"{path}: no apparatus header; pass --preset single|double|free")


def load_results(path, preset=None):
    try:
        results, meta = read_results_csv(path)
    except SchemaError as exc:
        raise CLIError(str(exc)) from exc
    except (OSError, ValueError, KeyError) as exc:
        raise CLIError(f"{path}: cannot read results: {exc}") from exc
    return results, meta, _apparatus_for(meta, preset, path)


def write_analysis(a, out, stem, config_hash):
    header = _header(config_hash, b=a.b, p0=a.p0, apparatus=a.apparatus.kind)
    exp_f = a.fit_fraunhofer.expected if a.fit_fraunhofer is not None else [None] * a.hist.n_bins
    exp_g = a.fit_gaussian.expected if a.fit_gaussian is not None else [None] * a.hist.n_bins
    e = a.hist.bin_edges
    _write_csv(os.path.join(out, f"{stem}.histogram.csv"), header,
               ("theta_lo", "theta_hi", "weight", "expected_fraunhofer", "expected_gaussian"),
               zip(e[:-1], e[1:], a.hist.weights, exp_f, exp_g))
    rows = []
    if a.dmap is not None:
        rows = zip(a.dmap.y, a.dmap.theta, a.dmap.slope, a.lyapunov[1])
    _write_csv(os.path.join(out, f"{stem}.map.csv"), header,
               ("y", "theta", "dtheta_dy", "lyapunov"), rows)
    spacing = "" if a.peak_spacing is None else repr(a.peak_spacing)
    _write_csv(os.path.join(out, f"{stem}.peaks.csv"), header + f"# mean_spacing: {spacing}\n",
               ("peak_y",), ([p] for p in (a.peaks if a.peaks is not None else ())))
    _write_json(os.path.join(out, f"{stem}.fit.json"), a.fit_json(config_hash))


def cmd_analyze(args):
    results, meta, app = load_results(args.results, args.preset)
    a = analyze(results, app, n_bins=args.n_bins, edge_band=args.edge_band)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.results))[0]
    write_analysis(a, args.out, stem, meta.get("config_hash", ""))
    msg = f"{stem}: {a.n_good}/{a.n_runs} good"
    for name, rep in (("fraunhofer", a.fit_fraunhofer), ("gaussian", a.fit_gaussian)):
        if rep is not None:
            msg += f", {name} chi2_P/nu={rep.reduced_pearson:.3g}"
    print(msg)
    return 0


# ---------------------------------------------------------------------------
# report


def _collect(inputs, preset):
    paths = []
    for item in inputs:
        paths += sorted(glob.glob(os.path.join(item, "*.csv"))) if os.path.isdir(item) else [item]
    found = []
    for p in paths:
        try:
            results, meta, app = load_results(p, preset)
        except CLIError:
            continue
        if results:
            found.append((p, results, meta, app))
    return found


def _close(a, b):
    return abs(a - b) < 1e-9


def cmd_report(args):
    found = _collect(args.inputs, args.preset)
    if not found:
        raise CLIError("no results CSVs found in the given inputs")
    os.makedirs(args.out, exist_ok=True)
    written, skipped, inputs = [], [], []
    single, double = [], []
    for path, results, meta, app in found:
        try:
            a = analyze(results, app, edge_band=args.edge_band)
        except CLIError as exc:
            skipped.append(f"{path}: {exc}")
            continue
        inputs.append({"path": path, "config_hash": meta.get("config_hash", ""),
                       "b": a.b, "p0": a.p0, "apparatus": app.kind})
        if app.kind == "double_slit":
            double.append(a)
        elif app.kind == "single_slit":
            single.append(a)
    single.sort(key=lambda a: (a.b, a.p0))
    report_hash = _hash(sorted(i["config_hash"] for i in inputs))
    header = _header(report_hash)

    def hist_bundle(name, a):
        fine = stats.theta_table(2001)
        e = a.hist.bin_edges
        exp_f = a.fit_fraunhofer.expected if a.fit_fraunhofer else [None] * a.hist.n_bins
        exp_g = a.fit_gaussian.expected if a.fit_gaussian else [None] * a.hist.n_bins
        extra = _header(report_hash, b=a.b, p0=a.p0, apparatus=a.apparatus.kind,
                        lam_eff=a.lam_eff)
        _write_csv(os.path.join(args.out, f"{name}.csv"), extra,
                   ("theta_lo", "theta_hi", "weight", "expected_fraunhofer", "expected_gaussian"),
                   zip(e[:-1], e[1:], a.hist.weights, exp_f, exp_g))
        # continuous curves scaled to histogram weight per radian
        scale = a.hist.total_weight
        gauss = stats.gaussian_reference(a.hist)
        _write_csv(os.path.join(args.out, f"{name}_curve.csv"), extra,
                   ("theta", "fraunhofer", "gaussian"),
                   zip(fine, scale * a.fraunhofer(fine), scale * gauss(fine)))
        written.extend([f"{name}.csv", f"{name}_curve.csv"])

    base = [a for a in single if _close(a.p0, 0.3)]
    for b, name in SINGLE_FIGURES.items():
        match = [a for a in base if _close(a.b, b)]
        if match:
            hist_bundle(name, match[0])
        else:
            skipped.append(f"{name}: no single-slit ensemble at b={b}, p0=0.3")
    if double:
        hist_bundle("fig3d", double[0])
    else:
        skipped.append("fig3d: no double-slit ensemble")

    maps = [(f"single-b{a.b:g}", a) for a in base] + [(f"double-b{a.b:g}", a) for a in double]
    maps = [(p, a) for p, a in maps if a.dmap is not None]
    if maps:
        rows = [(p, a.b, y, th, sl) for p, a in maps
                for y, th, sl in zip(a.dmap.y, a.dmap.theta, a.dmap.slope)]
        _write_csv(os.path.join(args.out, "fig5.csv"), header,
                   ("panel", "b", "y", "theta", "dtheta_dy"), rows)
        written.append("fig5.csv")
    else:
        skipped.append("fig5: no diffraction maps")

    with_peaks = [a for a in base if a.peaks is not None]
    if with_peaks:
        _write_csv(os.path.join(args.out, "fig6a.csv"), header, ("b", "peak_y"),
                   [(a.b, p) for a in with_peaks for p in a.peaks])
        ref = with_peaks[0]
        fit = {"version": __version__, "config_hash": report_hash, "b": ref.b,
               "window": [-1.2, 1.2], "mean_spacing": {f"{a.b:g}": a.peak_spacing for a in with_peaks}}
        try:
            fit["grid_spacing"], fit["grid_offset"] = stats.fold_grid_fit(ref.peaks)
        except stats.StatsError as exc:
            fit["grid_error"] = str(exc)
        _write_json(os.path.join(args.out, "fig6a_fit.json"), fit)
        written += ["fig6a.csv", "fig6a_fit.json"]
    else:
        skipped.append("fig6a: no fold peaks")

    lyap = [a for a in base if a.lyapunov is not None]
    if lyap:
        _write_csv(os.path.join(args.out, "fig6b.csv"), header, ("b", "y", "lyapunov"),
                   [(a.b, y, v) for a in lyap for y, v in zip(*a.lyapunov)])
        written.append("fig6b.csv")
    else:
        skipped.append("fig6b: no Lyapunov profiles")

    nodes = [a for a in base if a.node_width_samples is not None]
    if nodes:
        _write_csv(os.path.join(args.out, "fig7a.csv"), header,
                   ("b", "p0", "lam_eff", "node_width", "node_width_samples",
                    "node_width_fraunhofer", "n_good"),
                   [(a.b, a.p0, a.lam_eff, a.node_width, a.node_width_samples,
                     a.node_width_model, a.n_good) for a in nodes])
        written.append("fig7a.csv")
    else:
        skipped.append("fig7a: no single-slit ensembles at p0=0.3")

    vel = [a for a in single if _close(a.b, 16.7) and a.node_width_samples is not None]
    if len(vel) >= 2:
        rows = []
        for a in sorted(vel, key=lambda a: a.p0):
            u = a.u_steady
            ldb = 1.0 / (u / math.sqrt(1 - u * u)) if 0 < u < 1 else math.nan
            rows.append((a.b, a.p0, u, ldb, 1.0 / a.p0, a.lam_eff,
                         a.node_width, a.node_width_samples, a.node_width_model, a.n_good))
        _write_csv(os.path.join(args.out, "fig7b.csv"), header,
                   ("b", "p0", "u_steady", "lambda_db_steady", "lambda_db_launch", "lam_eff",
                    "node_width", "node_width_samples", "node_width_fraunhofer", "n_good"), rows)
        written.append("fig7b.csv")
    else:
        skipped.append("fig7b: needs a b=16.7 velocity sweep")

    grid = DESK_GRID if args.desk_scale else FULL_GRID
    for name in ("single", "double"):
        spec = default_specs()[name]
        g = grid.build(spec)
        app = build_apparatus(spec, g)
        fname = f"apparatus_{name}.csv"
        write_raster(os.path.join(args.out, fname), 0.0, g, app.v2, comments=header)
        written.append(fname)

    _write_json(os.path.join(args.out, "manifest.json"), _manifest(
        "report", report_hash, args.preset, {}, {}, inputs=inputs, written=written,
        skipped=skipped))
    for s in skipped:
        print(f"skipped {s}", file=sys.stderr)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="pilotwave", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"pilotwave {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a single launch")
    r.add_argument("--config", help="YAML/JSON file of run fields")
    r.add_argument("--preset", help="apparatus preset: single, double or free")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--desk-scale", action="store_true", help="default to the lambda_c/8 grid")
    r.add_argument("--snapshot-every", type=float, default=None,
                   help="dump the field every this many T_c")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run an ensemble preset or file")
    s.add_argument("--preset", help="single-b-sweep, double or velocity-sweep")
    s.add_argument("--config", help="YAML/JSON ensemble file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default: PILOTWAVE_WORKERS or CPU count)")
    s.add_argument("--checkpoint", help="checkpoint directory (default: OUT/checkpoints)")
    s.add_argument("--desk-scale", action="store_true", help="reduced resolution and counts")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="statistics over one results CSV")
    a.add_argument("results", help="ensemble results CSV")
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--preset", help="apparatus preset if the CSV lacks an apparatus header")
    a.add_argument("--n-bins", type=int, default=None, help="histogram bins (default sqrt N_good)")
    a.add_argument("--edge-band", type=float, default=0.0,
                   help="exclude fold peaks within this distance (lambda_c) of the map ends")
    a.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("report", help="per-figure data bundles from results CSVs")
    rp.add_argument("inputs", nargs="+", help="results CSVs or directories of them")
    rp.add_argument("--out", required=True, help="output directory")
    rp.add_argument("--preset", help="apparatus preset for CSVs without an apparatus header")
    rp.add_argument("--desk-scale", action="store_true", help="rasterize apparatus at lambda_c/8")
    rp.add_argument("--edge-band", type=float, default=0.0,
                    help="exclude fold peaks within this distance of the map ends")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
