import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdcouple import farfield as F
from qdcouple import solver

LAM = 1000.0


@pytest.fixture(scope="module")
def dipole():
    pm = solver.homogeneous_map(1.0, LAM, LAM / 40, margin=2000)
    sol = solver.solve(pm)
    j = pm.dipole_index
    return sol, F.transform(sol, box=(40, j - 40, j + 40))


def test_hemisphere_is_half(dipole):
    sol, ff = dipole
    assert ff.hemisphere_power == pytest.approx(0.5 * sol.p_total, rel=0.005)


def test_matches_dipole_pattern(dipole):
    _, ff = dipole
    for phi in (0.0, math.pi / 4, math.pi / 2):
        ref = F.dipole_pattern(ff.theta, phi, LAM)
        assert np.max(np.abs(ff.cut(phi) - ref)) < 0.02 * ref.max()


def test_harmonic_purity(dipole):
    _, ff = dipole
    c = np.abs(np.fft.fft(ff.U, axis=1))
    allowed = np.zeros(ff.U.shape[1], bool)
    allowed[[0, 2, -2]] = True
    assert c[:, ~allowed].max() <= 1e-10 * c.max()


def test_extraction_monotone(dipole):
    _, ff = dipole
    eta = [F.extraction_efficiency(ff, na) for na in np.linspace(0.05, 1, 40)]
    assert np.all(np.diff(eta) > 0)
    assert eta[-1] == pytest.approx(0.5, rel=0.005)
    with pytest.raises(ValueError):
        F.extraction_efficiency(ff, 1.2)


def _gaussian_lobe(theta0):
    theta = np.linspace(0, math.pi / 2, 721)
    phi = np.linspace(0, 2 * math.pi, 72, endpoint=False)
    a = np.exp(-theta ** 2 / theta0 ** 2).astype(complex)
    U = 4 * np.abs(a[:, None]) ** 2 * np.ones_like(phi)
    return F.FarField(theta=theta, phi=phi, U=U, a=a, b=a.copy(), p_total=1.0, wavelength=930.0)


@given(st.floats(3, 40))
def test_half_angle_of_gaussian(deg):
    ff = _gaussian_lobe(math.radians(deg))
    h = F.half_angles(ff)
    assert h["phi0"] == pytest.approx(deg, abs=0.01)
    assert h["quality"] == "ok"


def test_half_angle_non_monotone():
    ff = _gaussian_lobe(math.radians(10))
    a = ff.a + 0.5 * np.exp(-((ff.theta - 0.8) / 0.05) ** 2)
    ff2 = F.FarField(theta=ff.theta, phi=ff.phi, U=ff.U, a=a, b=a, p_total=1.0, wavelength=930.0)
    assert F.half_angle(ff2, 0.0).quality == "non-monotone"


def test_npz_roundtrip(tmp_path, dipole):
    _, ff = dipole
    F.save_npz(ff, tmp_path / "ff.npz", z_dipole_um=1.25, family="cbg")
    g, meta = F.load_npz(tmp_path / "ff.npz")
    assert np.array_equal(g.a, ff.a) and np.allclose(g.U, ff.U, rtol=1e-14)
    assert meta == {"z_dipole_um": 1.25, "family": "cbg"}


def test_box_must_be_physical(dipole):
    sol, _ = dipole
    with pytest.raises(F.FarFieldError):
        F.transform(sol, box=(sol.pmap.nr - 2, 10, 20))
    with pytest.raises(F.FarFieldError):
        F.transform(sol, n_theta=90)
