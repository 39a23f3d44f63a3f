"""Slit apparatus: the V^2 map and launch/detection geometry.

Walls are a vertical barrier of thickness ``wall_thickness`` spanning the
full domain height except for the slit openings.  The sharp wall mask is
smoothed with a Gaussian of FWHM ``smoothing_width`` before being mapped to
``background_V2 + (wall_V2 - background_V2) * mask``.

All lengths in :class:`ApparatusSpec` are in Compton wavelengths.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from .units import LAMBDA_C

KINDS = ("single_slit", "double_slit", "free_space", "custom_walls")

LAUNCH_DISTANCE = 13.8   # lambda_c upstream of the barrier midline
DETECT_RADIUS = 10.0     # lambda_c from the slit centre
MIN_SLIT_CELLS = 8


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ApparatusSpec:
    kind: str = "single_slit"
    slit_width: float = 4.07
    slit_separation: float = 0.0
    wall_thickness: float = 0.65
    wall_V2: float = 5.0
    background_V2: float = 1.0
    barrier_x: float = 0.0
    smoothing_width: float = 0.5
    # custom_walls: list of (xmin, xmax, ymin, ymax) rectangles, lambda_c units
    walls: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown apparatus kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "free_space":
            return
        if self.kind != "custom_walls" and self.slit_width <= 0:
            raise ConfigurationError("slit_width must be > 0")
        if self.kind == "double_slit" and self.slit_separation <= self.slit_width:
            raise ConfigurationError("double slit needs slit_separation > slit_width (disjoint slits)")
        if self.wall_thickness <= 0:
            raise ConfigurationError("wall_thickness must be > 0")
        if self.wall_V2 <= self.background_V2:
            raise ConfigurationError("wall_V2 must exceed background_V2")
        if self.smoothing_width < 0:
            raise ConfigurationError("smoothing_width must be >= 0")

    @property
    def slit_centers(self):
        """Slit centre y-positions in lambda_c."""
        if self.kind == "double_slit":
            return (-0.5 * self.slit_separation, 0.5 * self.slit_separation)
        return (0.0,)

    @property
    def has_walls(self):
        return self.kind != "free_space"

    def to_dict(self):
        d = asdict(self)
        d["walls"] = [list(w) for w in self.walls]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["walls"] = tuple(tuple(float(v) for v in w) for w in d.get("walls", ()))
        return cls(**d)


@dataclass
class Apparatus:
    v2: np.ndarray
    launch_x: float        # natural units
    detect_radius: float   # natural units
    spec: ApparatusSpec = None

    @property
    def barrier_x(self):
        return self.spec.barrier_x * LAMBDA_C


def default_specs():
    """Named apparatus presets used in the diffraction experiments."""
    common = dict(wall_thickness=0.65, wall_V2=5.0, background_V2=1.0, smoothing_width=0.5)
    return {
        "single": ApparatusSpec(kind="single_slit", slit_width=4.07, **common),
        "double": ApparatusSpec(kind="double_slit", slit_width=2.03, slit_separation=3.66, **common),
        "free": ApparatusSpec(kind="free_space", slit_width=4.07, **common),
    }


def wall_mask(spec, grid):
    """Sharp 0/1 wall indicator on the grid nodes."""
    X, Y = grid.mesh()
    X = X / LAMBDA_C
    Y = Y / LAMBDA_C
    mask = np.zeros(grid.shape)
    if spec.kind == "free_space":
        return mask
    if spec.kind == "custom_walls":
        for xmin, xmax, ymin, ymax in spec.walls:
            mask[(X >= xmin) & (X <= xmax) & (Y >= ymin) & (Y <= ymax)] = 1.0
        return mask
    on_barrier = np.abs(X - spec.barrier_x) <= 0.5 * spec.wall_thickness
    open_ = np.zeros(grid.shape, dtype=bool)
    for c in spec.slit_centers:
        open_ |= np.abs(Y - c) < 0.5 * spec.slit_width
    mask[on_barrier & ~open_] = 1.0
    return mask


def smoothing_kernel(fwhm, dx):
    """Normalized 1D Gaussian of the given FWHM, truncated at 3 sigma."""
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    half = int(math.floor(3.0 * sigma / dx))
    s = dx * np.arange(-half, half + 1)
    k = np.exp(-0.5 * (s / sigma) ** 2)
    return k / k.sum()


def smooth_mask(mask, fwhm, dx):
    if fwhm <= 0:
        return mask.copy()
    k = smoothing_kernel(fwhm, dx)
    # 'nearest' continues walls that run into the domain edge
    out = convolve1d(mask, k, axis=0, mode="nearest")
    out = convolve1d(out, k, axis=1, mode="nearest")
    out[np.abs(out - 1.0) < 1e-12] = 1.0
    out[np.abs(out) < 1e-12] = 0.0
    return np.clip(out, 0.0, 1.0)


def build_apparatus(spec, grid, launch_distance=LAUNCH_DISTANCE, detect_radius=DETECT_RADIUS):
    """Squared-potential map and launch/detection geometry for ``spec``."""
    xmin, xmax, ymin, ymax = grid.interior()
    bx = spec.barrier_x * LAMBDA_C
    launch_x = bx - launch_distance * LAMBDA_C
    if launch_x < xmin + LAMBDA_C:
        raise ConfigurationError(
            f"domain too small: launch point x={launch_x / LAMBDA_C:.2f} lambda_c "
            f"needs one lambda_c clearance from the sponge at {xmin / LAMBDA_C:.2f}")
    if spec.has_walls:
        if spec.kind != "custom_walls":
            half = 0.5 * spec.wall_thickness * LAMBDA_C
            if bx - half < xmin or bx + half > xmax:
                raise ConfigurationError("barrier overlaps the sponge band")
            if spec.slit_width * LAMBDA_C < MIN_SLIT_CELLS * grid.dx:
                raise ConfigurationError(
                    f"slit of width {spec.slit_width} lambda_c is resolved by fewer than "
                    f"{MIN_SLIT_CELLS} cells at dx={grid.dx / LAMBDA_C:.4f} lambda_c")
            top = max(abs(c) + 0.5 * spec.slit_width for c in spec.slit_centers) * LAMBDA_C
            if top > min(-ymin, ymax):
                raise ConfigurationError("slits extend into the sponge band")
        mask = smooth_mask(wall_mask(spec, grid), spec.smoothing_width * LAMBDA_C, grid.dx)
        v2 = spec.background_V2 + (spec.wall_V2 - spec.background_V2) * mask
        if _is_y_symmetric(grid) and spec.kind != "custom_walls":
            v2 = 0.5 * (v2 + v2[:, ::-1])
    else:
        v2 = np.full(grid.shape, float(spec.background_V2))
    v2.setflags(write=False)
    return Apparatus(v2, launch_x, detect_radius * LAMBDA_C, spec)


def _is_y_symmetric(grid):
    y0 = grid.origin[1]
    y1 = y0 + (grid.ny - 1) * grid.dx
    return abs(y0 + y1) <= 1e-9 * grid.dx


def gap_intervals(v2, y, threshold):
    """Intervals of ``y`` where the 1D profile ``v2`` is below ``threshold``.

    Crossings are linearly interpolated between nodes.
    """
    below = v2 < threshold
    out = []
    k = 0
    n = len(v2)
    while k < n:
        if below[k]:
            s = k
            while k < n and below[k]:
                k += 1
            e = k - 1
            lo = y[s] if s == 0 else _cross(y[s - 1], y[s], v2[s - 1], v2[s], threshold)
            hi = y[e] if e == n - 1 else _cross(y[e], y[e + 1], v2[e], v2[e + 1], threshold)
            out.append((lo, hi))
        k += 1
    return out


def _cross(y0, y1, f0, f1, level):
    return y0 + (level - f0) * (y1 - y0) / (f1 - f0)
