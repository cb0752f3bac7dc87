import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcouple import geometry
from qdcouple.geometry import GeometryError
from qdcouple.materials import MaterialTable

TABLE = MaterialTable.default()


def test_presets_validate():
    presets = geometry.load_presets()
    assert {p.family for p in presets.values()} == {"micromesa", "microlens", "cbg", "micropillar"}
    assert {p.wavelength for p in presets.values()} == {930.0, 1310.0, 1550.0}


def test_pillar_cavity_between_mirrors():
    p = geometry.preset("micropillar-930")
    s = geometry.device_structure(p, TABLE)
    layers = s.axis_layers
    # the thickest GaAs layer sits between AlAs layers
    i = max(range(len(layers)), key=lambda k: layers[k][2] - layers[k][1]
            if layers[k][0] == "GaAs" else -1)
    assert layers[i][2] - layers[i][1] == pytest.approx(274.9)
    assert layers[i - 1][0] == "AlAs" and layers[i + 1][0] == "AlAs"
    assert layers[i][1] < s.dipole_z < layers[i][2]


def test_quarter_wave_thickness():
    p = geometry.preset("micropillar-930")
    s = geometry.device_structure(p, TABLE)
    t = [z1 - z0 for m, z0, z1 in s.axis_layers if m == "GaAs"]
    assert min(t) == pytest.approx(930 / (4 * 3.424), abs=0.01)
    assert 930 / (4 * 3.424) == pytest.approx(67.90, abs=0.01)


def test_degenerate_grating_rejected():
    p = geometry.preset("cbg-930")
    with pytest.raises(GeometryError):
        p.replace(trench_width=p.grating_period).validate()
    with pytest.raises(GeometryError):
        geometry.params_from_dict({"family": "cbg", "trench_width": 400.0, "grating_period": 346.0})


def test_unknown_family_and_parameter():
    with pytest.raises(GeometryError, match="family"):
        geometry.params_from_dict({"family": "nanowire"})
    with pytest.raises(GeometryError, match="parameter"):
        geometry.params_from_dict({"family": "micromesa", "colour": 1})
    with pytest.raises(GeometryError):
        geometry.params_from_dict({"family": "micromesa", "radius": -1})


def test_sphere_sag():
    assert geometry.lens_sag(0, 1214, 0.0) == 0
    assert geometry.lens_sag(0, 1214, 1214.0) == pytest.approx(1214)
    assert geometry.lens_sag(0, 1214, 607.0) == pytest.approx(1214 - math.sqrt(1214 ** 2 - 607 ** 2))
    assert geometry.lens_sag(0, 1214, 607.0) == pytest.approx(1214 * (1 - math.sqrt(0.75)))
    with pytest.raises(GeometryError):
        geometry.lens_sag(0, 1000, 1200.0)


@given(st.floats(-5, 0), st.floats(100, 5000), st.floats(0, 1))
def test_sag_monotone(k, R, frac):
    r = np.linspace(0, frac * R, 20)
    z = geometry.lens_sag(k, R, r)
    assert np.all(np.diff(z) >= -1e-9)


def test_map_dipole_and_monitor():
    pm = geometry.build(geometry.preset("micromesa-930"), TABLE, resolution=20)
    s = geometry.device_structure(geometry.preset("micromesa-930"), TABLE)
    assert pm.z0 + pm.dipole_index * pm.dz == pytest.approx(s.dipole_z)
    assert pm.z0 + pm.monitor_index * pm.dz > s.z_top
    # highest-index material resolved at the requested density
    assert 930 / (math.sqrt(pm.eps_phi.real.max()) * pm.dr) == pytest.approx(20, rel=0.02)


def test_domain_budget():
    with pytest.raises(GeometryError, match="maximum"):
        geometry.build(geometry.preset("micropillar-930"), TABLE, resolution=30, max_unknowns=1000)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 3000), st.floats(-500, 5000))
def test_material_at_matches_map(r, z):
    s = geometry.device_structure(geometry.preset("micromesa-930"), TABLE)
    assert s.material_at(r, z) in s.materials()


def test_telecom_buffer_contains_dipole():
    s = geometry.device_structure(geometry.preset("micromesa-1550"), TABLE)
    here = [m for m, z0, z1 in s.axis_layers if z0 <= s.dipole_z <= z1]
    assert geometry.CAP in here
