"""Klein-Gordon pilot-wave field on a uniform 2D grid.

The field obeys

    d^2 phi/dt^2 - lap(phi) + V^2 phi = b / gamma * delta(q - q_p)

and is advanced with velocity Verlet on (phi, dphi/dt) using the 5-point
Laplacian.  The point source is replaced by a truncated Gaussian of width
``dx``; the particle samples the field gradient through the same kernel so a
resting particle feels no net force from its own field.

Arrays are indexed ``[ix, iy]``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field as dc_field

import numba
import numpy as np

# Deposition stencil: nearest node +- KERNEL_HALF cells (kernel sigma = dx).
KERNEL_HALF = 4
KERNEL_SIZE = 2 * KERNEL_HALF + 1

# Peak damping rate (1/time) of the sponge layer.  Kept low: near-threshold
# Klein-Gordon waves (k -> 0) reflect off any steep change in damping.
SPONGE_STRENGTH = 0.1


class FieldBlowup(FloatingPointError):
    """Raised when a non-finite value appears in the field."""

    def __init__(self, step, cell, time=None):
        self.step = step
        self.cell = cell
        self.time = time
        super().__init__(f"non-finite field value at step {step}, cell {cell} (t={time})")


class OutOfDomainError(ValueError):
    """The particle left the usable interior of the grid."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid with spacing ``dx`` and time step ``dt`` (natural units).

    ``origin`` is the physical position of node (0, 0).  ``sponge_width`` is
    the thickness of the absorbing band on all four edges; zero gives a closed
    box with phi = 0 outside.  ``periodic`` wraps both axes instead.
    """

    nx: int
    ny: int
    dx: float
    dt: float
    origin: tuple = (0.0, 0.0)
    sponge_width: float = 0.0
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if self.nx < 16 or self.ny < 16:
            raise ValueError(f"grid must be at least 16x16, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dt > 0):
            raise ValueError("dx and dt must be positive")
        if self.dt > self.dx / math.sqrt(2.0) * (1 + 1e-12):
            raise ValueError(
                f"CFL condition violated: dt={self.dt:g} > dx/sqrt(2)={self.dx / math.sqrt(2.0):g}"
            )
        if self.sponge_width < 0:
            raise ValueError("sponge_width must be >= 0")
        if self.periodic and self.sponge_width > 0:
            raise ValueError("a periodic grid cannot carry a sponge layer")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def x(self):
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def y(self):
        return self.origin[1] + self.dx * np.arange(self.ny)

    @property
    def cell_area(self):
        return self.dx * self.dx

    @property
    def extent(self):
        """(xmin, xmax, ymin, ymax) of the node positions."""
        return (self.origin[0], self.origin[0] + (self.nx - 1) * self.dx,
                self.origin[1], self.origin[1] + (self.ny - 1) * self.dx)

    def interior(self, margin=0.0):
        """Bounds of the region at least ``margin`` inside the sponge band."""
        xmin, xmax, ymin, ymax = self.extent
        m = self.sponge_width + margin
        return (xmin + m, xmax - m, ymin + m, ymax - m)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")


@dataclass
class FieldState:
    phi: np.ndarray
    phi_dot: np.ndarray
    time: float = 0.0

    @classmethod
    def zeros(cls, grid, time=0.0):
        return cls(np.zeros(grid.shape), np.zeros(grid.shape), time)

    def copy(self):
        return FieldState(self.phi.copy(), self.phi_dot.copy(), self.time)


@dataclass
class SourceTerm:
    """Regularized point source stored as a small patch.

    ``patch[a, b]`` is the source density at node ``(i0 + a, j0 + b)``.
    """

    i0: int
    j0: int
    patch: np.ndarray
    shape: tuple = dc_field(default=(0, 0))

    @property
    def density(self):
        out = np.zeros(self.shape)
        a, b = self.patch.shape
        out[self.i0:self.i0 + a, self.j0:self.j0 + b] = self.patch
        return out

    def total(self, grid):
        """Discrete integral of the density."""
        return float(self.patch.sum()) * grid.cell_area

    @classmethod
    def empty(cls, grid):
        return cls(0, 0, np.zeros((1, 1)), grid.shape)


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _apply_operator(phi, v2, inv_dx2, periodic, out):
    # out = lap(phi) - v2*phi ; Dirichlet boundaries read phi = 0 outside
    nx, ny = phi.shape
    for i in range(nx):
        for j in range(ny):
            c = phi[i, j]
            if periodic:
                s = (phi[(i - 1) % nx, j] + phi[(i + 1) % nx, j]
                     + phi[i, (j - 1) % ny] + phi[i, (j + 1) % ny])
            else:
                s = 0.0
                if i > 0:
                    s += phi[i - 1, j]
                if i < nx - 1:
                    s += phi[i + 1, j]
                if j > 0:
                    s += phi[i, j - 1]
                if j < ny - 1:
                    s += phi[i, j + 1]
            out[i, j] = (s - 4.0 * c) * inv_dx2 - v2[i, j] * c


@numba.njit(cache=True, inline="always")
def _neighbours(phi, i, j, nx, ny, periodic):
    if periodic:
        return (phi[(i - 1) % nx, j] + phi[(i + 1) % nx, j]
                + phi[i, (j - 1) % ny] + phi[i, (j + 1) % ny])
    s = 0.0
    if i > 0:
        s += phi[i - 1, j]
    if i < nx - 1:
        s += phi[i + 1, j]
    if j > 0:
        s += phi[i, j - 1]
    if j < ny - 1:
        s += phi[i, j + 1]
    return s


@numba.njit(cache=True)
def _kick_drift(phi, phi_dot, v2, half, dt, inv_dx2, periodic, new_phi, new_dot):
    # new_dot = phi_dot + half * (lap - V^2) phi ; new_phi = phi + dt * new_dot
    nx, ny = phi.shape
    for i in range(nx):
        edge_i = i == 0 or i == nx - 1
        for j in range(ny):
            c = phi[i, j]
            if edge_i or j == 0 or j == ny - 1:
                s = _neighbours(phi, i, j, nx, ny, periodic)
            else:
                s = phi[i - 1, j] + phi[i + 1, j] + phi[i, j - 1] + phi[i, j + 1]
            vh = phi_dot[i, j] + half * ((s - 4.0 * c) * inv_dx2 - v2[i, j] * c)
            new_dot[i, j] = vh
            new_phi[i, j] = c + dt * vh


@numba.njit(cache=True)
def _final_kick(phi, phi_dot, v2, half, inv_dx2, periodic):
    nx, ny = phi.shape
    for i in range(nx):
        edge_i = i == 0 or i == nx - 1
        for j in range(ny):
            c = phi[i, j]
            if edge_i or j == 0 or j == ny - 1:
                s = _neighbours(phi, i, j, nx, ny, periodic)
            else:
                s = phi[i - 1, j] + phi[i + 1, j] + phi[i, j - 1] + phi[i, j + 1]
            phi_dot[i, j] += half * ((s - 4.0 * c) * inv_dx2 - v2[i, j] * c)


@numba.njit(cache=True)
def _verlet_into(phi, phi_dot, v2, patch, i0, j0, dt, inv_dx2, periodic, damp, use_damp,
                 new_phi, new_dot):
    # velocity Verlet with the source held at its half-step value; returns the
    # flat index of the first non-finite cell or -1
    nx, ny = phi.shape
    pa, pb = patch.shape
    half = 0.5 * dt
    _kick_drift(phi, phi_dot, v2, half, dt, inv_dx2, periodic, new_phi, new_dot)
    for a in range(pa):
        for b in range(pb):
            new_dot[i0 + a, j0 + b] += half * patch[a, b]
            new_phi[i0 + a, j0 + b] += dt * (half * patch[a, b])
    _final_kick(new_phi, new_dot, v2, half, inv_dx2, periodic)
    for a in range(pa):
        for b in range(pb):
            new_dot[i0 + a, j0 + b] += half * patch[a, b]
    if use_damp:
        for i in range(nx):
            for j in range(ny):
                d = damp[i, j]
                new_dot[i, j] *= d
                new_phi[i, j] *= d
    bad = -1
    for i in range(nx):
        for j in range(ny):
            if not (math.isfinite(new_phi[i, j]) and math.isfinite(new_dot[i, j])):
                return i * ny + j
    return bad


@numba.njit(cache=True)
def _kernel_weights(q, origin, dx, n):
    # 1D Gaussian weights (sigma = dx) on nearest node +- KERNEL_HALF, unit sum
    centre = int(math.floor((q - origin) / dx + 0.5))
    start = centre - KERNEL_HALF
    w = np.empty(KERNEL_SIZE)
    total = 0.0
    for k in range(KERNEL_SIZE):
        s = (origin + (start + k) * dx - q) / dx
        w[k] = math.exp(-0.5 * s * s)
        total += w[k]
    for k in range(KERNEL_SIZE):
        w[k] /= total
    return start, w


@numba.njit(cache=True)
def _sample_gradient(phi, i0, wx, j0, wy, inv_2dx):
    gx = 0.0
    gy = 0.0
    for a in range(wx.shape[0]):
        i = i0 + a
        for b in range(wy.shape[0]):
            j = j0 + b
            w = wx[a] * wy[b]
            gx += w * (phi[i + 1, j] - phi[i - 1, j])
            gy += w * (phi[i, j + 1] - phi[i, j - 1])
    return gx * inv_2dx, gy * inv_2dx


# ---------------------------------------------------------------------------
# public operations


def _check_interior(pos, grid):
    x, y = float(pos[0]), float(pos[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise OutOfDomainError(f"non-finite particle position {pos!r}")
    # stencil plus one cell for the centred difference must stay on the grid
    need = (KERNEL_HALF + 2) * grid.dx
    xmin, xmax, ymin, ymax = grid.interior()
    if grid.periodic:
        xmin, xmax, ymin, ymax = grid.extent
    if not (xmin + need <= x <= xmax - need and ymin + need <= y <= ymax - need):
        raise OutOfDomainError(
            f"position ({x:.4g}, {y:.4g}) is outside the usable interior "
            f"x in [{xmin + need:.4g}, {xmax - need:.4g}], y in [{ymin + need:.4g}, {ymax - need:.4g}]"
        )


def kernel_weights(pos, grid):
    """Return ``(i0, wx, j0, wy)``: separable unit-sum deposition weights."""
    i0, wx = _kernel_weights(float(pos[0]), grid.origin[0], grid.dx, grid.nx)
    j0, wy = _kernel_weights(float(pos[1]), grid.origin[1], grid.dx, grid.ny)
    return i0, wx, j0, wy


def deposit_source(pos, gamma, b, grid):
    """Deposit the regularized source ``b/gamma * delta(q - pos)``.

    The discrete integral of the returned density is ``b / gamma`` regardless
    of where ``pos`` sits inside a cell.
    """
    _check_interior(pos, grid)
    i0, wx, j0, wy = kernel_weights(pos, grid)
    patch = np.outer(wx, wy) * (b / gamma / grid.cell_area)
    return SourceTerm(i0, j0, patch, grid.shape)


def sample_gradient(state, pos, grid):
    """Gradient of phi at ``pos``, smoothed with the deposition kernel."""
    _check_interior(pos, grid)
    i0, wx, j0, wy = kernel_weights(pos, grid)
    gx, gy = _sample_gradient(state.phi, i0, wx, j0, wy, 0.5 / grid.dx)
    return np.array([gx, gy])


@functools.lru_cache(maxsize=16)
def sponge_profile(grid, strength=SPONGE_STRENGTH):
    """Per-step multiplicative damping factors, exactly 1 in the interior.

    The damping rate ramps up as a raised cosine over the sponge band.
    """
    damp = np.ones(grid.shape)
    width = grid.sponge_width
    if width <= 0:
        return damp
    xmin, xmax, ymin, ymax = grid.extent
    x, y = grid.x, grid.y
    depth_x = np.maximum(np.maximum(xmin + width - x, x - (xmax - width)), 0.0)
    depth_y = np.maximum(np.maximum(ymin + width - y, y - (ymax - width)), 0.0)
    depth = np.maximum(depth_x[:, None], depth_y[None, :])
    rate = strength * 0.5 * (1.0 - np.cos(np.pi * np.minimum(depth / width, 1.0)))
    inside = depth > 0
    damp[inside] = np.exp(-rate[inside] * grid.dt)
    damp.setflags(write=False)
    return damp


def apply_sponge(state, grid, profile=None):
    """Multiply phi and dphi/dt by the sponge damping profile."""
    if profile is None:
        profile = sponge_profile(grid)
    return FieldState(state.phi * profile, state.phi_dot * profile, state.time)


def _v2_array(potential):
    return np.asarray(getattr(potential, "v2", potential), dtype=float)


def step_field(state, potential, source, grid, step_index=None):
    """Advance the field by one ``grid.dt`` (velocity Verlet + sponge).

    The source is held fixed over the step; callers pass the source at the
    half step.  Raises :class:`FieldBlowup` on any non-finite value.
    """
    v2 = _v2_array(potential)
    if v2.shape != grid.shape or state.phi.shape != grid.shape:
        raise ValueError("field, potential and grid shapes differ")
    if source is None:
        source = SourceTerm.empty(grid)
    use_damp = grid.sponge_width > 0
    damp = sponge_profile(grid) if use_damp else v2
    phi = np.empty(grid.shape)
    dot = np.empty(grid.shape)
    bad = _verlet_into(
        state.phi, state.phi_dot, v2, source.patch, source.i0, source.j0,
        grid.dt, 1.0 / grid.dx ** 2, grid.periodic, damp, use_damp, phi, dot,
    )
    if bad >= 0:
        raise FieldBlowup(step_index, divmod(bad, grid.ny), state.time + grid.dt)
    return FieldState(phi, dot, state.time + grid.dt)


def apply_operator(phi, potential, grid):
    """Discrete ``lap(phi) - V^2 phi`` with the solver's boundary handling."""
    out = np.empty_like(phi)
    _apply_operator(np.ascontiguousarray(phi, dtype=float), _v2_array(potential),
                    1.0 / grid.dx ** 2, grid.periodic, out)
    return out


def field_energy(state, potential, grid, dt=None):
    """Discrete field energy ``1/2 sum(phi_t^2 + |grad phi|^2 + V^2 phi^2) dA``.

    The gradient term is taken as ``-phi * lap(phi)`` so it matches the
    solver's stencil and boundary.  Passing ``dt`` returns the modified
    energy that velocity Verlet conserves exactly for a source-free,
    sponge-free field.
    """
    lphi = -apply_operator(state.phi, potential, grid)
    dens = state.phi_dot ** 2 + state.phi * lphi
    if dt is not None:
        dens = dens - 0.25 * dt * dt * lphi * lphi
    return 0.5 * float(dens.sum()) * grid.cell_area


def advance(state, potential, grid, n_steps, source=None):
    """Step a field ``n_steps`` times with a fixed (possibly empty) source."""
    for k in range(n_steps):
        state = step_field(state, potential, source, grid, step_index=k)
    return state


# ---------------------------------------------------------------------------
# raster files


def write_raster(path, time, grid, values, comments=""):
    """Write a grid array as CSV: header ``time,nx,ny,dx``, then one row per ``ix``.

    ``time`` is in Compton periods and ``dx`` in lambda_c.  ``comments``
    (lines starting with ``#``) are written before the header.
    """
    from .units import LAMBDA_C, T_C

    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"raster shape {values.shape} does not match grid {grid.shape}")
    with open(path, "w") as fh:
        fh.write(comments)
        fh.write("time,nx,ny,dx\n")
        fh.write(f"{time / T_C!r},{grid.nx},{grid.ny},{grid.dx / LAMBDA_C!r}\n")
        np.savetxt(fh, values, delimiter=",", fmt="%.9g")


def read_raster(path):
    """Inverse of :func:`write_raster`: ``(time, dx, values)`` in Compton units."""
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            line = fh.readline()
        if line.strip() != "time,nx,ny,dx":
            raise ValueError(f"{path}: not a raster file")
        t, nx, ny, dx = fh.readline().split(",")
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    if values.shape != (int(nx), int(ny)):
        raise ValueError(f"{path}: header says {nx}x{ny}, data is {values.shape}")
    return float(t), float(dx), values
