import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from scipy import integrate

from qdcouple import fiber
from qdcouple.fiber import FiberError
from qdcouple.materials import FiberSpec, MaterialTable, core_index, fiber_spec

TABLE = MaterialTable.default()


def make_fiber(v, wavelength=1000.0, a=3.0, ncl=1.45):
    na = v * wavelength * 1e-3 / (2 * math.pi * a)
    return FiberSpec("test", na, ncl, core_index(na, ncl), a, (wavelength,))


def grid(f, half=None, n=401):
    half = half or 4 * fiber.marcuse_radius(f, 1000.0) + 2 * f.core_radius
    return np.linspace(-half, half, n)


@pytest.mark.parametrize("name,wl", [("780HP", 930.0), ("SMF28", 1550.0), ("SMF28", 1310.0)])
def test_presets_single_mode(name, wl):
    f = fiber_spec(name, wl, TABLE)
    modes = fiber.solve_modes(f, wl)
    assert f.v_number(wl) < fiber.LP11_CUTOFF
    assert [(m.label, m.polarization) for m in modes] == [("LP01", "x"), ("LP01", "y")]


def test_v3_has_lp11():
    labels = {m.label for m in fiber.solve_modes(make_fiber(3.0), 1000.0)}
    assert labels == {"LP01", "LP11"}


@settings(max_examples=40, deadline=None)
# below V ~ 0.7 the LP01 decay length exceeds 1e3 core radii
@given(st.floats(0.7, 9.0), st.floats(1.0, 6.0), st.floats(800, 1700))
def test_mode_count_matches_cutoffs(v, a, wl):
    assume(v * wl * 1e-3 / (2 * math.pi * a) < 0.5)
    f = make_fiber(v, wl, a)
    # keep clear of cutoffs, where the count is ill-conditioned
    cuts = [c for l in range(12) for c in fiber.cutoffs(l, 12.0)]
    assume(min(abs(v - c) for c in cuts) > 1e-3)
    modes = fiber.solve_modes(f, wl)
    assert len({(m.l, m.m) for m in modes}) == fiber.expected_mode_count(v)
    for m in modes:
        assert f.n_cladding < m.n_eff < f.n_core


@settings(max_examples=20, deadline=None)
@given(st.floats(0.8, 2.4))
def test_lp01_self_overlap(v):
    f = make_fiber(v)
    m = fiber.fundamental(f, 1000.0)
    x = grid(f)
    assert fiber.overlap(m.field(x, x), x, x, m) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.7, 2.4))
def test_unit_power_and_continuity(v):
    f = make_fiber(v)
    m = fiber.fundamental(f, 1000.0)
    a = f.core_radius

    def dens(r):
        return 2 * math.pi * r * m.radial(np.array([r]))[0] ** 2

    p = integrate.quad(dens, 0, a, epsrel=1e-12)[0] + \
        integrate.quad(dens, a, np.inf, epsrel=1e-12, limit=500)[0]
    assert p == pytest.approx(1.0, abs=1e-10)
    assert m.radial(np.array([a * (1 - 1e-9)]))[0] == pytest.approx(m.radial(np.array([a]))[0],
                                                                      rel=1e-6)


def test_polarizations_add():
    f = make_fiber(2.0)
    m = fiber.fundamental(f, 1000.0)
    x = grid(f)
    psi = m.field(x, x)
    assert fiber.overlap(psi, x, x, m, ey=psi) == pytest.approx(1.0, abs=1e-12)
    assert fiber.overlap(np.zeros_like(psi), x, x, m) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(1.0, 6.0))
def test_gaussian_overlap_closed_form(w1, w2):
    x = np.linspace(-40, 40, 1601)
    g1, g2 = fiber.gaussian(x, x, w1), fiber.gaussian(x, x, w2)
    dA = (x[1] - x[0]) ** 2
    num = abs(np.sum(g1 * g2) * dA) ** 2 / (np.sum(g1 ** 2) * dA * np.sum(g2 ** 2) * dA)
    assert num == pytest.approx(fiber.gaussian_overlap(w1, w2), abs=1e-6)


@pytest.mark.parametrize("v", [1.95, 2.1, 2.3, 2.4])
def test_marcuse_gaussian_overlap(v):
    f = make_fiber(v)
    m = fiber.fundamental(f, 1000.0)
    x = grid(f, n=601)
    g = fiber.gaussian(x, x, fiber.marcuse_radius(f, 1000.0))
    assert fiber.overlap(g, x, x, m) >= 0.99


def test_marcuse_near_optimal_gaussian():
    f = make_fiber(1.6)
    m = fiber.fundamental(f, 1000.0)
    x = grid(f, n=601)
    w0 = fiber.marcuse_radius(f, 1000.0)
    eta = [fiber.overlap(fiber.gaussian(x, x, w), x, x, m) for w in w0 * np.linspace(0.9, 1.1, 21)]
    assert int(np.argmax(eta)) in range(8, 13)


def test_truncated_grid_rejected():
    f = make_fiber(1.5)
    m = fiber.fundamental(f, 1000.0)
    x = np.linspace(-f.core_radius, f.core_radius, 101)
    with pytest.raises(FiberError, match="extend"):
        fiber.overlap(m.field(x, x), x, x, m)


def test_invalid_inputs():
    with pytest.raises(FiberError):
        fiber.solve_modes(make_fiber(2.0), -1.0)
    f = make_fiber(2.0)
    x = grid(f)
    with pytest.raises(FiberError, match="shape"):
        fiber.overlap(np.zeros((3, 3)), x, x, fiber.fundamental(f, 1000.0))


def test_profile_csv(tmp_path):
    m = fiber.fundamental(make_fiber(2.0), 1000.0)
    fiber.write_profile_csv(m, tmp_path / "p.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "r_um,psi" and len(rows) == 401
