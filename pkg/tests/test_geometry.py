import math

import numpy as np
import pytest

from pilotwave.experiment import GridSpec
from pilotwave.field import FieldState, Grid2D, advance, field_energy
from pilotwave.geometry import (ApparatusSpec, ConfigurationError, build_apparatus, default_specs,
                                gap_intervals, smooth_mask, wall_mask)
from pilotwave.units import LAMBDA_C


def _build(spec, resolution=16):
    grid = GridSpec(resolution=resolution).build(spec)
    return grid, build_apparatus(spec, grid)


def _midline(grid, app):
    i = int(np.argmin(np.abs(grid.x - app.barrier_x)))
    return app.v2[i, :], grid.y / LAMBDA_C


def _half_max_gaps(grid, app):
    line, y = _midline(grid, app)
    level = 0.5 * (line.min() + line.max())
    return gap_intervals(line, y, level)


def test_presets():
    s = default_specs()
    assert s["single"].slit_width == 4.07 and s["single"].kind == "single_slit"
    assert s["double"].slit_width == 2.03 and s["double"].slit_separation == 3.66
    assert not s["free"].has_walls
    for spec in s.values():
        assert (spec.wall_thickness, spec.wall_V2, spec.background_V2, spec.smoothing_width) == \
            (0.65, 5.0, 1.0, 0.5)


def test_free_space_is_uniform():
    _, app = _build(default_specs()["free"], 8)
    assert np.all(app.v2 == 1.0)


@pytest.mark.parametrize("res", [8, 16])
def test_single_slit_width(res):
    grid, app = _build(default_specs()["single"], res)
    gaps = [g for g in _half_max_gaps(grid, app) if abs(g[0]) < 6 and abs(g[1]) < 6]
    assert len(gaps) == 1
    lo, hi = gaps[0]
    cell = 1.0 / res
    assert hi - lo == pytest.approx(4.07, abs=cell)
    assert 0.5 * (lo + hi) == pytest.approx(0.0, abs=1e-12)


def test_double_slit_separation():
    grid, app = _build(default_specs()["double"], 16)
    gaps = _half_max_gaps(grid, app)
    centres = sorted(0.5 * (a + b) for a, b in gaps)
    assert len(centres) == 2
    assert centres[1] - centres[0] == pytest.approx(3.66, abs=1 / 16)
    for a, b in gaps:
        assert b - a == pytest.approx(2.03, abs=1 / 16)


@pytest.mark.parametrize("name", ["single", "double"])
def test_mirror_symmetry_is_bitwise(name):
    _, app = _build(default_specs()[name], 8)
    assert np.array_equal(app.v2, app.v2[:, ::-1])


@pytest.mark.parametrize("name", ["single", "double"])
def test_values_bounded_and_background_exact(name):
    grid, app = _build(default_specs()[name], 8)
    assert app.v2.min() >= 1.0 and app.v2.max() <= 5.0
    far = np.abs(grid.x - app.barrier_x) > 2 * LAMBDA_C
    assert np.all(app.v2[far, :] == 1.0)


def test_thick_wall_core_is_exact():
    spec = ApparatusSpec(kind="single_slit", slit_width=3.0, wall_thickness=3.0)
    grid, app = _build(spec, 8)
    line = app.v2[:, 0]
    assert line.max() == 5.0
    assert np.sum(line == 5.0) >= 8


def test_thin_wall_peak_is_below_wall_value():
    # 0.65 lambda_c wall under lambda_c/2 FWHM smoothing never reaches full height
    grid, app = _build(default_specs()["single"], 16)
    peak = app.v2.max()
    assert 4.0 < peak < 5.0


def test_smoothing_preserves_excess_integral():
    for name in ("single", "double"):
        spec = default_specs()[name]
        grid = GridSpec(resolution=8).build(spec)
        sharp = wall_mask(spec, grid)
        smooth = smooth_mask(sharp, spec.smoothing_width * LAMBDA_C, grid.dx)
        assert smooth.sum() == pytest.approx(sharp.sum(), rel=1e-6)
        assert smooth.min() >= 0.0 and smooth.max() <= 1.0


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        ApparatusSpec(kind="double_slit", slit_width=2.0, slit_separation=1.5)
    with pytest.raises(ConfigurationError):
        ApparatusSpec(kind="moat")
    with pytest.raises(ConfigurationError):
        ApparatusSpec(wall_V2=0.5)
    # slit narrower than 8 cells at lambda_c/8
    narrow = ApparatusSpec(kind="single_slit", slit_width=0.8)
    with pytest.raises(ConfigurationError, match="fewer than"):
        _build(narrow, 8)
    small = Grid2D(64, 64, LAMBDA_C / 8, 0.3, origin=(-4 * LAMBDA_C, -4 * LAMBDA_C),
                   sponge_width=LAMBDA_C)
    with pytest.raises(ConfigurationError, match="too small"):
        build_apparatus(default_specs()["single"], small)


def test_spec_round_trip():
    spec = ApparatusSpec(kind="custom_walls", walls=((0, 1, -2, 2),))
    assert ApparatusSpec.from_dict(spec.to_dict()) == spec


def test_gap_intervals_interpolate():
    y = np.arange(10.0)
    v = np.array([5, 5, 5, 1, 1, 1, 1, 5, 5, 5], dtype=float)
    (lo, hi), = gap_intervals(v, y, 3.0)
    assert lo == pytest.approx(2.5) and hi == pytest.approx(6.5)


def test_unbroken_wall_is_opaque():
    res = 8
    dx = LAMBDA_C / res
    nx, ny = 240 * res, 16
    grid = Grid2D(nx, ny, dx, 0.4 * dx, origin=(-120 * LAMBDA_C, 0.0), periodic=True)
    spec = ApparatusSpec(kind="custom_walls", walls=((-0.325, 0.325, -1e9, 1e9),))
    v2 = 1.0 + 4.0 * smooth_mask(wall_mask(spec, grid), 0.5 * LAMBDA_C, dx)
    x = grid.x
    # right-moving Compton-band wave packet built in Fourier space
    x0, sigma, k0 = -25 * LAMBDA_C, 3 * LAMBDA_C, 0.3
    packet = np.exp(-0.5 * ((x - x0) / sigma) ** 2 + 1j * k0 * x)
    k = 2 * np.pi * np.fft.fftfreq(nx, dx)
    omega = np.sqrt(4 / dx ** 2 * np.sin(0.5 * k * dx) ** 2 + 1)
    spec_ = np.fft.fft(packet)
    spec_[k < 0] = 0
    a = np.fft.ifft(spec_)
    phi = np.real(a)[:, None] * np.ones(ny)
    dot = np.real(np.fft.ifft(-1j * omega * spec_))[:, None] * np.ones(ny)
    state = FieldState(phi, dot)
    e0 = field_energy(state, v2, grid)
    vg = k0 / math.sqrt(1 + k0 * k0)
    steps = int((abs(x0) + 15 * LAMBDA_C) / vg / grid.dt)
    state = advance(state, v2, grid, steps)
    gx = np.gradient(state.phi, dx, axis=0)
    dens = 0.5 * (state.phi_dot ** 2 + gx ** 2 + state.phi ** 2) * grid.cell_area
    assert dens[x > 2 * LAMBDA_C].sum() / e0 < 1e-3
    # the packet really arrived: most energy now travels back upstream
    assert dens[x < -2 * LAMBDA_C].sum() > 0.5 * e0
