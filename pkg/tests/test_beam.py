import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcouple import beam, fiber
from qdcouple.beam import AsphericLens, Grid, PropagatedField
from qdcouple.farfield import FarField
from qdcouple.materials import FiberSpec, core_index

WL = 930.0
MESA = AsphericLens(0.012, -3.063, 10.402, 212.859, 0.248, 1.503, 0.019)
FLAT = AsphericLens(math.inf, 0.0, 0.0, 0.0, 0.2, 1.503, 0.0)


def test_sag_values():
    assert beam.sag(MESA, 0.0) == 0
    assert beam.sag(MESA, 0.05) == pytest.approx(0.0568, abs=5e-5)
    sphere = AsphericLens(0.1, 0.0, 0.0, 0.0, 0.2, 1.5, 0.0)
    r = np.linspace(0, 0.0625, 30)
    assert np.allclose(beam.sag(sphere, r), 0.1 - np.sqrt(0.01 - r ** 2), atol=1e-15)
    with pytest.raises(ValueError):
        beam.sag(MESA, 0.07)


@given(st.floats(1e-4, 0.06))
def test_sag_slope_is_derivative(r):
    h = 1e-7
    num = (beam.sag(MESA, r + h) - beam.sag(MESA, r - h)) / (2 * h)
    assert beam.sag_slope(MESA, r) == pytest.approx(num, rel=1e-5)


def test_lens_presets_load():
    names = beam.lens_presets()
    assert len(names) == 12
    lens = beam.load_lens("micropillar-930")
    assert lens.n_polymer == 1.503 and lens.distance_to_source == 0.039
    assert beam.load_lens("table-s5-pillar") == lens
    with pytest.raises(KeyError):
        beam.load_lens("nope")


@pytest.fixture(scope="module")
def grid():
    return Grid(512, 0.25)


def test_zero_distance_identity(grid):
    f = beam.gaussian_field(grid, WL, 5.0)
    g = beam.propagate(f, 0.0)
    assert np.array_equal(g.components, f.components)


@settings(max_examples=10, deadline=None)
# paraxial regime: waist of several wavelengths
@given(st.floats(3.0, 6.0), st.floats(5.0, 150.0))
def test_gaussian_beam_width(w0, z):
    grid = Grid(1024, 0.25)
    f = beam.gaussian_field(grid, WL, w0)
    zr = math.pi * w0 ** 2 / (WL * 1e-3)
    g = beam.propagate(f, z)
    assert beam.beam_radius(g) == pytest.approx(w0 * math.sqrt(1 + (z / zr) ** 2), rel=0.005)
    assert g.power == pytest.approx(f.power, rel=1e-9)


def test_plane_wave(grid):
    comp = np.stack([np.ones((grid.n, grid.n), complex), np.zeros((grid.n, grid.n), complex)])
    f = PropagatedField(comp, grid, 0.0, WL, 1.5)
    g = beam.propagate(f, 7.3)
    k = 2 * math.pi * 1.5 / (WL * 1e-3)
    assert np.allclose(g.ex, np.exp(1j * k * 7.3), atol=1e-12)


def test_aliasing_rejected(grid):
    f = beam.gaussian_field(grid, WL, 0.2)
    with pytest.raises(beam.AliasingError, match="refine"):
        beam.propagate(f, 1.0)


def test_flat_lens_fresnel(grid):
    f = beam.gaussian_field(grid, WL, 10.0)
    t = beam.apply_lens(f, FLAT)
    assert t.clipped == pytest.approx(0, abs=1e-12)
    assert t.reflected == pytest.approx(((1.503 - 1) / 2.503) ** 2, rel=1e-3)
    assert t.reflected == pytest.approx(0.040, abs=0.001)
    assert np.allclose(np.abs(t.field.ex), np.abs(f.ex) * math.sqrt(1 - t.reflected), atol=1e-12)


def test_zero_field(grid):
    z = PropagatedField(np.zeros((2, grid.n, grid.n), complex), grid, 0.0, WL)
    t = beam.apply_lens(z, MESA)
    assert not np.any(t.field.components)
    assert not np.any(beam.propagate(z, 10.0).components)


def test_stop_blocks_outside_aperture(grid):
    lens = replace(FLAT, aperture=1e-3)
    f = beam.gaussian_field(grid, WL, 20.0)
    t = beam.apply_lens(f, lens)
    assert t.clipped > 0.99


def _gaussian_far_field(theta0):
    theta = np.linspace(0, math.pi / 2, 721)
    a = np.exp(-theta ** 2 / theta0 ** 2).astype(complex)
    phi = np.linspace(0, 2 * math.pi, 72, endpoint=False)
    U = 4 * np.abs(a[:, None]) ** 2 * np.ones_like(phi)
    ff = FarField(theta=theta, phi=phi, U=U, a=a, b=a.copy(), p_total=1.0, wavelength=WL)
    return FarField(theta=theta, phi=phi, U=U, a=a, b=a.copy(),
                    p_total=ff.hemisphere_power / 0.8, wavelength=WL)


def _fiber():
    na = 0.1027
    return FiberSpec("t", na, 1.45, core_index(na, 1.45), 2.2, (WL,))


def test_source_field_power():
    ff = _gaussian_far_field(math.radians(15))
    g = Grid(1024, 0.2)
    src = beam.source_field(ff, g, na_max=0.9)
    assert src.power == pytest.approx(ff.power_within(math.asin(0.9)) / ff.p_total, rel=1e-12)


def test_chain_stages_compose():
    ff = _gaussian_far_field(math.radians(15))
    mode = fiber.fundamental(_fiber(), WL)
    lens = beam.load_lens("micropillar-930")
    res = beam.total_efficiency(ff, lens, mode, 1.45, grid=Grid(1024, 0.2))
    assert res.stage_product == pytest.approx(res.facet_power, rel=1e-9)
    assert res.eta_total == pytest.approx(res.facet_power * res.facet_overlap)
    assert 0 < res.eta_total < 0.8
    opaque = replace(lens, aperture=1e-6)
    assert beam.total_efficiency(ff, opaque, mode, 1.45, grid=Grid(1024, 0.2)).eta_total == 0


def test_scan_repeated_distance():
    ff = _gaussian_far_field(math.radians(15))
    mode = fiber.fundamental(_fiber(), WL)
    lens = beam.load_lens("micropillar-930")
    rows = beam.scan_distance(ff, lens, mode, 1.45, [39.0] * 3, grid=Grid(1024, 0.2))
    assert [r.db for r in rows] == [0.0] * 3
    with pytest.raises(ValueError):
        beam.scan_distance(ff, lens, mode, 1.45, [39.0, 40.0], grid=Grid(1024, 0.2))


def test_wavelength_mismatch():
    ff = _gaussian_far_field(math.radians(15))
    mode = fiber.fundamental(_fiber(), 940.0)
    with pytest.raises(beam.ChainError):
        beam.total_efficiency(ff, beam.load_lens("micropillar-930"), mode, 1.45)


def test_csv_writers(tmp_path, grid):
    f = beam.gaussian_field(grid, WL, 5.0)
    beam.write_facet_csv(f, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "position_um,I_x_cut,I_y_cut"
    beam.write_scan_csv([beam.ScanRow(1.0, 0.5, 0.0)], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[1] == "1.0000,0.50000000,0.000000"


def test_grid_scan_matches_distance_scan():
    from qdcouple.optimize import Dimension, ParameterBox, grid_scan
    ff = _gaussian_far_field(math.radians(15))
    mode = fiber.fundamental(_fiber(), WL)
    lens = beam.load_lens("micropillar-930")
    g = Grid(1024, 0.2)

    def ev(x):
        moved = replace(lens, distance_to_source=x[0] * 1e-3)
        return beam.total_efficiency(ff, moved, mode, 1.45, grid=g).eta_total

    rows = grid_scan(ParameterBox((Dimension("distance", 30.0, 48.0, "um"),)), 4, ev)
    ref = beam.scan_distance(ff, lens, mode, 1.45, [r.point[0] for r in rows], grid=g)
    assert [r.point[0] for r in rows] == [r.distance for r in ref]
    assert np.allclose([r.values[0] for r in rows], [r.eta_total for r in ref], rtol=1e-12, atol=0)
