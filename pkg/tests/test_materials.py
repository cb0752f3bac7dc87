import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdcouple.materials import (FIBERS, MaterialError, MaterialTable, core_index, fiber_for_wavelength,
                                fiber_spec, numerical_aperture)

TABLE = MaterialTable.default()


@pytest.mark.parametrize("mat,wl,temp,n", [
    ("GaAs", 930, "4K", 3.424), ("GaAs", 1550, "300K", 3.3779), ("AlAs", 1550, "4K", 2.845),
    ("AlAs", 1310, "300K", 2.908), ("InGaAs-36", 1550, "4K", 3.40), ("InGaAs-10", 1550, "300K", 3.39),
    ("fiber-cladding", 1310, "4K", 1.446), ("IP-S", 1330, "300K", 1.499),
])
def test_tabulated_values(mat, wl, temp, n):
    assert TABLE.lookup(mat, wl, temp) == n


def test_interpolation_is_linear():
    n = TABLE.lookup("GaAs", 1120, "4K").real
    assert n == pytest.approx(0.5 * (3.424 + 3.315))


def test_outside_span_and_unknown():
    with pytest.raises(MaterialError, match="outside"):
        TABLE.lookup("GaAs", 600)
    with pytest.raises(MaterialError, match="unknown material"):
        TABLE.lookup("unobtainium", 930)
    assert TABLE.lookup("GaAs", 925, clamp_nm=10) == TABLE.lookup("GaAs", 930)


def test_cold_indices_below_room_temperature():
    for mat in ("GaAs", "AlAs", "InGaAs-10", "InGaAs-29.3", "InGaAs-36"):
        for (m, wl, t), n in TABLE.entries.items():
            if m == mat and t == "4K":
                assert n.real < TABLE.entries[(m, wl, "300K")].real


def test_gold_is_lossy_metal():
    n = TABLE.lookup("Au", 930)
    assert n.real < 1 and n.imag > 5


def test_override_merge():
    t = TABLE.merged({"GaAs": [{"wavelength_nm": 930, "temperature": "4K", "n_re": 3.5}]})
    assert t.lookup("GaAs", 930) == 3.5
    assert t.lookup("GaAs", 1310) == TABLE.lookup("GaAs", 1310)
    assert TABLE.lookup("GaAs", 930) == 3.424


@pytest.mark.parametrize("na,ncl,ncore", [(0.1027, 1.450, 1.454), (0.14, 1.446, 1.453),
                                          (0.14, 1.443, 1.450)])
def test_core_index_rows(na, ncl, ncore):
    assert abs(core_index(na, ncl) - ncore) <= 1e-3


def test_core_index_rejects():
    for na in (0.0, -0.1, math.nan):
        with pytest.raises(ValueError):
            core_index(na, 1.45)
    assert core_index(1e-9, 1.45) == pytest.approx(1.45, abs=1e-12)


# below NA ~ 1e-2 float rounding of n_core alone exceeds 1e-12 in NA
@given(st.floats(0.01, 0.5), st.floats(1.3, 1.6))
def test_core_index_inverts_na(na, ncl):
    assert numerical_aperture(core_index(na, ncl), ncl) == pytest.approx(na, abs=1e-12)


@given(st.floats(930, 1550))
def test_interpolation_bracketed(wl):
    n = TABLE.lookup("AlAs", wl).real
    assert 2.845 <= n <= 2.915


def test_fiber_association():
    assert fiber_for_wavelength(930) == "780HP"
    assert fiber_for_wavelength(1310) == fiber_for_wavelength(1550) == "SMF28"
    for name in FIBERS:
        for wl in FIBERS[name]["design_wavelengths"]:
            for model in ("datasheet", "cutoff-matched"):
                f = fiber_spec(name, wl, TABLE, na_model=model)
                assert abs(f.na ** 2 - (f.n_core ** 2 - f.n_cladding ** 2)) < 1e-9
