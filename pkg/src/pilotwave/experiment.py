"""Single runs, outcome classification and deterministic ensembles.

A run launches the particle ``launch_distance`` upstream of the barrier,
lets it equilibrate with its own wave, and follows it through the apparatus
until it either leaves the detection circle downstream, turns back, or runs
out of time.  Ensembles are sweeps over impact parameter (and optionally
``b`` and ``p0``) that can run in parallel and resume from a checkpoint.

Public quantities are in Compton units: lengths in lambda_c, times in T_c.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from ._engine import STATUS_BLOWUP, STATUS_ESCAPED, coupled_steps
from .field import KERNEL_HALF, Grid2D, sponge_profile
from .geometry import (DETECT_RADIUS, LAUNCH_DISTANCE, ApparatusSpec, ConfigurationError,
                       build_apparatus, default_specs)
from .particle import period_speeds
from .units import B_MAX, LAMBDA_C, T_C

EXITED = "exited_downstream"
REFLECTED = "reflected"
TIMED_OUT = "timed_out"
FAILED = "failed"
OUTCOMES = (EXITED, REFLECTED, TIMED_OUT, FAILED)

ANGLE_WINDOW = 5.0        # Compton periods averaged for the exit angle
REFLECTION_PLANE = 3.0    # lambda_c upstream of the barrier
BALLISTIC_FACTOR = 20.0   # default max_time in units of the ballistic crossing time

CSV_COLUMNS = ("run_id", "b", "p0", "y", "outcome", "theta", "u_steady")


class SchemaError(ValueError):
    """A results file does not have the expected columns."""


class AngleError(ValueError):
    """The exit segment is too short to average the angle over."""


def _as_floats(obj):
    """Numbers as floats so that ``25`` and ``25.0`` hash alike."""
    if isinstance(obj, dict):
        return {k: _as_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_floats(v) for v in obj]
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return float(obj)
    return obj


def _canonical_hash(obj):
    text = json.dumps(_as_floats(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GridSpec:
    """Recipe for the simulation grid around an apparatus (lambda_c units).

    ``upstream`` is the free margin behind the launch point, ``downstream``
    the extent past the barrier and ``half_height`` the interior half-height;
    the sponge band of width ``sponge`` is added outside all of these.
    """

    resolution: int = 16
    courant: float = 0.4
    upstream: float = 4.0
    downstream: float = 11.0
    half_height: float = 6.0
    sponge: float = 3.0

    def __post_init__(self):
        if self.resolution < 4:
            raise ConfigurationError("resolution must be at least 4 cells per lambda_c")
        if not 0 < self.courant <= 1 / math.sqrt(2):
            raise ConfigurationError(
                f"CFL constraint violated: courant number dt/dx = {self.courant} must lie in (0, 1/sqrt 2]")
        if min(self.upstream, self.downstream, self.half_height) <= 0 or self.sponge < 0:
            raise ConfigurationError("grid extents must be positive")

    @property
    def dx(self):
        return LAMBDA_C / self.resolution

    def build(self, apparatus, launch_distance=LAUNCH_DISTANCE):
        """Grid2D covering ``apparatus`` with the launch point inside."""
        dx = self.dx
        bx = apparatus.barrier_x
        x0 = (bx - launch_distance - self.upstream - self.sponge) * LAMBDA_C
        x1 = (bx + self.downstream + self.sponge) * LAMBDA_C
        nx = int(math.ceil((x1 - x0) / dx)) + 1
        half = int(math.ceil((self.half_height + self.sponge) * LAMBDA_C / dx))
        ny = 2 * half + 1
        return Grid2D(nx, ny, dx, self.courant * dx, origin=(x0, -half * dx),
                      sponge_width=self.sponge * LAMBDA_C)


@dataclass(frozen=True)
class RunConfig:
    """One launch: coupling ``b``, momentum ``p0`` and impact parameter ``y``.

    ``max_time`` is in Compton periods; ``None`` means twenty times the
    ballistic time to cover ``launch_distance + detect_radius`` at the
    launch speed.  ``trajectory_stride`` is the number of time steps between
    trajectory samples.
    """

    b: float = 16.7
    p0: float = 0.3
    y: float = 0.0
    apparatus: ApparatusSpec = field(default_factory=ApparatusSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    max_time: float | None = None
    trajectory_stride: int = 5
    detect_radius: float = DETECT_RADIUS
    launch_distance: float = LAUNCH_DISTANCE

    def __post_init__(self):
        if not 0 < self.b <= B_MAX:
            raise ConfigurationError(f"coupling b={self.b} violates 0 < b \u2264 {B_MAX}")
        if not self.p0 > 0:
            raise ConfigurationError("p0 must be positive")
        if self.max_time is not None and not self.max_time > 0:
            raise ConfigurationError("max_time must be positive")
        if self.trajectory_stride < 1:
            raise ConfigurationError("trajectory_stride must be >= 1")
        if self.detect_radius <= 0 or self.launch_distance <= 0:
            raise ConfigurationError("detect_radius and launch_distance must be positive")

    @property
    def time_limit(self):
        """Simulation-time cap in Compton periods."""
        if self.max_time is not None:
            return self.max_time
        u0 = self.p0 / math.sqrt(1.0 + self.p0 ** 2)
        return BALLISTIC_FACTOR * (self.launch_distance + self.detect_radius) / u0

    def to_dict(self):
        d = asdict(self)
        d["apparatus"] = self.apparatus.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "apparatus" in d:
            app = d["apparatus"]
            if isinstance(app, str):
                app = default_specs()[app]
            elif not isinstance(app, ApparatusSpec):
                app = ApparatusSpec.from_dict(app)
            d["apparatus"] = app
        if "grid" in d and not isinstance(d["grid"], GridSpec):
            d["grid"] = GridSpec(**d["grid"])
        return cls(**d)

    @property
    def config_id(self):
        return _canonical_hash(self.to_dict())[:16]


@dataclass
class RunResult:
    """Outcome of one run.

    ``good`` is one of ``exited_downstream``, ``reflected``, ``timed_out``
    or ``failed``; ``theta_out`` (radians) is set only for exited runs.
    ``u_steady`` is the equilibrated speed before the apparatus (units of c).
    """

    config_id: str
    b: float
    p0: float
    y: float
    good: str
    theta_out: float | None = None
    u_steady: float = math.nan
    run_id: int | None = None
    sim_time: float = 0.0
    message: str = ""
    trajectory: dict | None = None

    def __post_init__(self):
        if self.good not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.good!r}")
        if (self.theta_out is not None) != (self.good == EXITED):
            raise ValueError("theta_out must be present exactly for exited runs")

    def to_dict(self):
        d = asdict(self)
        d.pop("trajectory")
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "trajectory"}
        if d.get("u_steady") is None:
            d["u_steady"] = math.nan
        return cls(**d)


# ---------------------------------------------------------------------------
# single run


def extract_angle(trajectory, barrier_x, window=ANGLE_WINDOW * T_C):
    """Exit angle from the displacement over the final ``window`` of time.

    ``trajectory`` holds arrays ``t, x, y`` (natural units).  Averaging the
    velocity over whole Compton periods removes the Compton-scale jitter.
    Raises :class:`AngleError` if the path has not been downstream of
    ``barrier_x`` for the whole window.
    """
    t = np.asarray(trajectory["t"], dtype=float)
    x = np.asarray(trajectory["x"], dtype=float)
    y = np.asarray(trajectory["y"], dtype=float)
    if x[-1] <= barrier_x:
        raise AngleError("trajectory does not end downstream of the barrier")
    upstream = np.nonzero(x <= barrier_x)[0]
    t_cross = t[upstream[-1]] if len(upstream) else t[0]
    t_start = t[-1] - window
    if t_start < t_cross - 1e-9 * window:
        raise AngleError(
            f"exit segment spans {(t[-1] - t_cross) / T_C:.2f} T_c, "
            f"shorter than the {window / T_C:.2f} T_c averaging window")
    dx = x[-1] - np.interp(t_start, t, x)
    dy = y[-1] - np.interp(t_start, t, y)
    return math.atan2(dy, dx)


def _steady_speed(t, x, y):
    """Mean speed over the trailing half of a window, in whole periods."""
    if len(t) < 2 or t[-1] - t[0] < 2 * T_C:
        return math.nan
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    speeds = period_speeds(t[half], x[half], y[half])
    if len(speeds) == 0:
        speeds = period_speeds(t, x, y)
    return float(speeds.mean()) if len(speeds) else math.nan


def run_single(config, keep_trajectory=False, run_id=None, on_snapshot=None, snapshot_every=None):
    """Simulate one launch and classify how it ends.

    The run stops when the particle passes ``detect_radius`` from the
    barrier centre on the downstream side (or reaches the grid edge there),
    when it crosses the plane ``REFLECTION_PLANE`` upstream of the barrier
    moving backwards (or leaves the grid upstream), or at ``max_time``.
    A non-finite field or momentum marks the run ``failed``.

    ``on_snapshot(t, phi, grid, apparatus)`` is called at ``t = 0`` and then
    every ``snapshot_every`` Compton periods (at the next trajectory sample).
    """
    spec = config.apparatus
    grid = config.grid.build(spec, config.launch_distance)
    app = build_apparatus(spec, grid, config.launch_distance, config.detect_radius)
    y0 = config.y * LAMBDA_C
    xmin, xmax, ymin, ymax = grid.interior((KERNEL_HALF + 2) * grid.dx)
    if not ymin <= y0 <= ymax:
        raise ConfigurationError(f"impact parameter y={config.y} lies outside the grid interior")

    phi = np.zeros(grid.shape)
    phi_dot = np.zeros(grid.shape)
    work_phi = np.empty(grid.shape)
    work_dot = np.empty(grid.shape)
    damp = sponge_profile(grid)
    q = np.array([app.launch_x, y0])
    p = np.array([config.p0, 0.0])
    bounds = np.array([xmin, xmax, ymin, ymax])

    bx = app.barrier_x
    exit_x = bx + 0.5 * spec.wall_thickness * LAMBDA_C
    plane_x = bx - REFLECTION_PLANE * LAMBDA_C
    t_max = config.time_limit * T_C
    stride = config.trajectory_stride
    dt = grid.dt

    ts, xs, ys, pxs, pys = [0.0], [q[0]], [q[1]], [p[0]], [p[1]]
    t = 0.0
    n_done = 0
    t_plane = None
    outcome, message = None, ""
    next_snap = 0.0
    while outcome is None:
        if on_snapshot is not None and snapshot_every and t >= next_snap:
            on_snapshot(t, phi, grid, app)
            next_snap += snapshot_every * T_C
        n = min(stride, max(1, int(math.ceil((t_max - t) / dt))))
        status, k = coupled_steps(phi, phi_dot, app.v2, damp, True, q, p, config.b, dt,
                                  grid.dx, grid.origin[0], grid.origin[1], bounds, n,
                                  work_phi, work_dot)
        n_done += k
        t = n_done * dt
        if k > 0:
            ts.append(t)
            xs.append(q[0])
            ys.append(q[1])
            pxs.append(p[0])
            pys.append(p[1])
        if status == STATUS_BLOWUP:
            outcome, message = FAILED, f"numerical blow-up at t={t / T_C:.2f} T_c"
            break
        if t_plane is None and q[0] >= plane_x:
            t_plane = t
        downstream = q[0] > exit_x
        if downstream and math.hypot(q[0] - bx, q[1]) >= app.detect_radius:
            outcome = EXITED
        elif status == STATUS_ESCAPED:
            outcome = EXITED if downstream else REFLECTED
            message = "left the grid interior"
        elif t_plane is not None and q[0] < plane_x and p[0] < 0:
            outcome = REFLECTED
        elif t >= t_max:
            outcome, message = TIMED_OUT, f"no exit after {t / T_C:.1f} T_c"

    traj = {"t": np.array(ts), "x": np.array(xs), "y": np.array(ys),
            "px": np.array(pxs), "py": np.array(pys)}
    theta = None
    if outcome == EXITED:
        try:
            theta = extract_angle(traj, exit_x)
        except AngleError as exc:
            outcome, message = FAILED, str(exc)
        else:
            if abs(theta) >= 0.5 * math.pi:
                outcome, theta = REFLECTED, None
                message = "left the detection region moving upstream"

    pre = traj["t"] <= (t_plane if t_plane is not None else t)
    u = _steady_speed(traj["t"][pre], traj["x"][pre], traj["y"][pre])
    return RunResult(
        config_id=config.config_id, b=config.b, p0=config.p0, y=config.y, good=outcome,
        theta_out=theta, u_steady=u, run_id=run_id, sim_time=t / T_C, message=message,
        trajectory=traj if keep_trajectory else None,
    )


# ---------------------------------------------------------------------------
# free particle


@dataclass
class FreeRun:
    """Free-space run: trajectory plus the final field along the flight line."""

    trajectory: dict
    line_x: np.ndarray      # lambda_c, measured from the particle
    line_phi: np.ndarray
    u_steady: float
    grid: Grid2D


def run_free_particle(b, p0, duration, resolution=8, length=120.0, half_height=8.0,
                      launch_at=5.0, sponge=3.0, courant=0.4, stride=5):
    """Launch a particle along +x in empty space (V^2 = 1) for ``duration`` T_c.

    The box is ``length`` by ``2 * half_height`` lambda_c plus sponge, with
    the particle starting ``launch_at`` lambda_c inside the left edge.
    """
    dx = LAMBDA_C / resolution
    half = int(round((half_height + sponge) * resolution))
    nx = int(round((length + 2 * sponge) * resolution)) + 1
    grid = Grid2D(nx, 2 * half + 1, dx, courant * dx, origin=(-sponge * LAMBDA_C, -half * dx),
                  sponge_width=sponge * LAMBDA_C)
    v2 = np.ones(grid.shape)
    phi = np.zeros(grid.shape)
    phi_dot = np.zeros(grid.shape)
    work_phi = np.empty(grid.shape)
    work_dot = np.empty(grid.shape)
    damp = sponge_profile(grid)
    q = np.array([launch_at * LAMBDA_C, 0.0])
    p = np.array([float(p0), 0.0])
    bounds = np.array(grid.interior((KERNEL_HALF + 2) * dx))
    n_total = int(round(duration * T_C / grid.dt))
    rows = [(0.0, q[0], q[1], p[0], p[1])]
    done = 0
    while done < n_total:
        status, k = coupled_steps(phi, phi_dot, v2, damp, True, q, p, float(b), grid.dt, dx,
                                  grid.origin[0], grid.origin[1], bounds,
                                  min(stride, n_total - done), work_phi, work_dot)
        done += k
        rows.append((done * grid.dt, q[0], q[1], p[0], p[1]))
        if status == STATUS_ESCAPED:
            raise ConfigurationError("free particle reached the sponge; enlarge the box")
        if status == STATUS_BLOWUP:
            raise FloatingPointError("numerical blow-up in free-particle run")
    a = np.array(rows)
    traj = {"t": a[:, 0], "x": a[:, 1], "y": a[:, 2], "px": a[:, 3], "py": a[:, 4]}
    jc = half
    ahead = grid.x <= grid.interior()[1]
    return FreeRun(traj, (grid.x[ahead] - q[0]) / LAMBDA_C, phi[ahead, jc].copy(),
                   _steady_speed(a[:, 0], a[:, 1], a[:, 2]), grid)


def _chirp_fit(s, g):
    """Least-squares ``(k0, k1)`` of ``Re[(a + c s) exp(2 pi i (k0 s + k1 s^2 / 2))] + const``."""
    from scipy.optimize import least_squares

    def resid(par):
        ph = 2 * np.pi * (par[0] * s + 0.5 * par[1] * s * s)
        basis = np.column_stack([np.cos(ph), np.sin(ph), s * np.cos(ph), s * np.sin(ph),
                                 np.ones_like(s)])
        coef = np.linalg.lstsq(basis, g, rcond=None)[0]
        return basis @ coef - g

    span = s[-1] - s[0]
    k_grid = np.linspace(0.5 / span, 0.25 * (len(s) - 1) / span, 60)
    c_grid = np.linspace(0.0, k_grid[-1] / span, 61)
    _, k0, k1 = min((float(np.sum(resid((k, c)) ** 2)), k, c)
                    for k in k_grid for c in c_grid)
    return least_squares(resid, [k0, k1]).x


def pilot_wavelength(line_x, line_phi, clearance=2.0, reach=2.0):
    """Local wavelength (lambda_c) of the pilot wave at the particle.

    ``line_phi`` is the field sampled at offsets ``line_x`` (lambda_c) ahead
    of the particle along its direction of motion.  Beyond ``clearance``
    the field is a dispersive Compton-band wave whose local wavenumber grows
    roughly linearly with distance, so the samples are fitted by
    ``Re[(a + c s) exp(2 pi i (k0 s + k1 s^2 / 2))]`` in ``s`` and the
    wavelength at ``s = 0`` is ``1 / k0``.  A first fit over the whole line
    sets the scale; the second is restricted to ``reach`` wavelengths ahead.
    """
    s = np.asarray(line_x, dtype=float)
    g = np.asarray(line_phi, dtype=float)
    sel = s >= clearance
    s, g = s[sel], g[sel]
    if len(s) < 16:
        raise ValueError("too few samples ahead of the particle")
    k0, _ = _chirp_fit(s, g)
    near = s <= clearance + reach / abs(k0)
    if near.sum() >= 16 and near.sum() < len(s):
        k0, _ = _chirp_fit(s[near], g[near])
    return 1.0 / abs(k0)


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    """A sweep of :class:`RunConfig` over impact parameters.

    Optional ``b_values`` / ``p0_values`` add outer sweep axes; runs are
    ordered b-major, then p0, then y.
    """

    name: str
    base: RunConfig
    y_values: tuple
    b_values: tuple = ()
    p0_values: tuple = ()

    def __post_init__(self):
        ys = tuple(float(v) for v in self.y_values)
        object.__setattr__(self, "y_values", ys)
        object.__setattr__(self, "b_values", tuple(float(v) for v in self.b_values))
        object.__setattr__(self, "p0_values", tuple(float(v) for v in self.p0_values))
        if not ys:
            raise ConfigurationError("y_values must be non-empty")
        if any(b <= a for a, b in zip(ys, ys[1:])):
            raise ConfigurationError("y_values must be strictly increasing")

    def configs(self):
        bs = self.b_values or (self.base.b,)
        ps = self.p0_values or (self.base.p0,)
        return [replace(self.base, b=b, p0=p0, y=y)
                for b, p0, y in itertools.product(bs, ps, self.y_values)]

    def __len__(self):
        return len(self.b_values or (1,)) * len(self.p0_values or (1,)) * len(self.y_values)

    def to_dict(self):
        return {"name": self.name, "base": self.base.to_dict(), "y_values": list(self.y_values),
                "b_values": list(self.b_values), "p0_values": list(self.p0_values)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = d.pop("base", {})
        d["base"] = base if isinstance(base, RunConfig) else RunConfig.from_dict(base)
        if "y_values" not in d:
            d["y_values"] = evenly_spaced(**d.pop("y_range"))
        return cls(**d)

    @property
    def spec_hash(self):
        return _canonical_hash(self.to_dict())


def evenly_spaced(half_width, n, center=0.0):
    """``n`` impact parameters evenly spaced strictly inside ``|y - center| < half_width``.

    Cell-centred placement: spacing ``2 * half_width / n``.
    """
    step = 2.0 * half_width / n
    return tuple(center - half_width + step * (k + 0.5) for k in range(int(n)))


def _run_indexed(args):
    idx, config = args
    try:
        return idx, run_single(config, run_id=idx)
    except ConfigurationError:
        raise
    except Exception as exc:  # recorded, never fatal to the ensemble
        return idx, RunResult(config.config_id, config.b, config.p0, config.y, FAILED,
                              run_id=idx, message=f"{type(exc).__name__}: {exc}")


def _load_checkpoint(path, spec_hash):
    if not path or not os.path.exists(path):
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if data.get("spec_hash") != spec_hash:
        raise ValueError(f"checkpoint {path} belongs to a different ensemble")
    return {int(k): RunResult.from_dict(v) for k, v in data["results"].items()}


def _write_checkpoint(path, spec_hash, done):
    payload = {"spec_hash": spec_hash,
               "results": {str(k): done[k].to_dict() for k in sorted(done)}}
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".ckpt-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_workers():
    """Worker count from ``PILOTWAVE_WORKERS``, else the CPU count."""
    env = os.environ.get("PILOTWAVE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_ensemble(spec, workers=1, checkpoint_path=None, progress=None, flush_every=2.0):
    """Run every configuration of ``spec``; results come back in spec order.

    Completed runs found in ``checkpoint_path`` are reused, and the
    checkpoint is rewritten atomically as runs finish (at most every
    ``flush_every`` seconds, and once at the end).  ``progress`` is called
    as ``progress(n_done, n_total)``.
    """
    configs = spec.configs()
    h = spec.spec_hash
    done = _load_checkpoint(checkpoint_path, h)
    todo = [(i, c) for i, c in enumerate(configs) if i not in done]
    last = time.monotonic()

    def record(idx, res):
        nonlocal last
        done[idx] = res
        if progress is not None:
            progress(len(done), len(configs))
        if checkpoint_path and time.monotonic() - last >= flush_every:
            _write_checkpoint(checkpoint_path, h, done)
            last = time.monotonic()

    try:
        if workers <= 1 or len(todo) <= 1:
            for item in todo:
                record(*_run_indexed(item))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_indexed, item) for item in todo]
                for fut in as_completed(futures):
                    record(*fut.result())
    finally:
        if checkpoint_path and todo:
            _write_checkpoint(checkpoint_path, h, done)
    return [done[i] for i in range(len(configs))]


# ---------------------------------------------------------------------------
# presets

DESK_GRID = GridSpec(resolution=8)
FULL_GRID = GridSpec(resolution=16)


def preset_experiments(desk_scale=False):
    """Named ensemble presets; ``desk_scale`` gives the reduced variants.

    Each preset maps to a list of :class:`EnsembleSpec` (one per coupling
    or momentum value so each gets its own results file).
    """
    specs = default_specs()
    single, double = specs["single"], specs["double"]
    grid = DESK_GRID if desk_scale else FULL_GRID
    n_single = 100 if desk_scale else 500
    n_double = 800 if desk_scale else 2500
    single_ys = evenly_spaced(0.5 * single.slit_width, n_single)
    span = 0.5 * (double.slit_separation + double.slit_width)
    double_ys = evenly_spaced(span, n_double)

    def single_at(b, p0=0.3, tag=None):
        base = RunConfig(b=b, p0=p0, apparatus=single, grid=grid)
        return EnsembleSpec(tag or f"single-b{b:g}", base, single_ys)

    p0_values = (0.1, 0.3, 1.0, 2.0, 3.0) if desk_scale else (0.1, 0.2, 0.3, 0.5, 1.0, 1.5, 2.0, 3.0)
    return {
        "single-b-sweep": [single_at(b) for b in (12.5, 16.7, 20.9, 25.0)],
        "double": [EnsembleSpec("double-b25", RunConfig(b=25.0, p0=0.3, apparatus=double, grid=grid),
                                double_ys)],
        "velocity-sweep": [single_at(16.7, p0, f"velocity-p{p0:g}") for p0 in p0_values],
    }


# ---------------------------------------------------------------------------
# results files


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def results_csv_text(results, spec=None):
    """Ensemble results as CSV text with ``#`` metadata header lines."""
    buf = io.StringIO()
    buf.write(f"# version: pilotwave {__version__}\n")
    buf.write("# units: y in lambda_c, theta in radians, u_steady in c\n")
    if spec is not None:
        buf.write(f"# ensemble: {spec.name}\n")
        buf.write(f"# config_hash: {spec.spec_hash}\n")
        app = json.dumps(spec.base.apparatus.to_dict(), sort_keys=True, separators=(",", ":"))
        buf.write(f"# apparatus: {app}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k, r in enumerate(results):
        rid = r.run_id if r.run_id is not None else k
        w.writerow([rid, _fmt(float(r.b)), _fmt(float(r.p0)), _fmt(float(r.y)), r.good,
                    _fmt(r.theta_out), _fmt(float(r.u_steady))])
    return buf.getvalue()


def write_results_csv(path, results, spec=None):
    with open(path, "w") as fh:
        fh.write(results_csv_text(results, spec))


def read_results_csv(path):
    """Read a results CSV back into :class:`RunResult` objects and metadata."""
    meta = {}
    rows = []
    with open(path) as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(":")
                meta[key.strip()] = val.strip()
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}; expected {list(CSV_COLUMNS)}, "
                          f"found {list(reader.fieldnames or ())}")
    for row in reader:
        theta = float(row["theta"]) if row["theta"] else None
        rows.append(RunResult(config_id="", b=float(row["b"]), p0=float(row["p0"]),
                              y=float(row["y"]), good=row["outcome"], theta_out=theta,
                              u_steady=float(row["u_steady"]), run_id=int(row["run_id"])))
    return rows, meta


def summarize(results, spec=None, elapsed=None):
    """Counts and metadata for the JSON summary written beside a results CSV."""
    counts = {o: sum(r.good == o for r in results) for o in OUTCOMES}
    u = [r.u_steady for r in results if np.isfinite(r.u_steady)]
    out = {"n_runs": len(results), "counts": counts,
           "good_fraction": counts[EXITED] / len(results) if results else 0.0,
           "u_steady_mean": float(np.mean(u)) if u else None,
           "version": __version__}
    if spec is not None:
        out["ensemble"] = spec.name
        out["config_hash"] = spec.spec_hash
        out["spec"] = spec.to_dict()
    if elapsed is not None:
        out["elapsed_seconds"] = elapsed
    return out
