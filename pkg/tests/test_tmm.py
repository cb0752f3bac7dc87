import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcouple import tmm
from qdcouple.tmm import PEC, LayerStack

NG, NA = 3.424, 2.915


def test_bare_gaas():
    R, T = tmm.reflectivity(LayerStack((), (), 1.0, NG, 930))
    assert R == pytest.approx(((NG - 1) / (NG + 1)) ** 2, abs=1e-12)
    assert R == pytest.approx(0.300, abs=5e-4)
    assert R + T == pytest.approx(1, abs=1e-12)


def test_dbr_peak():
    idx, th = tmm.quarter_wave_stack(NG, NA, 25, 930)
    R, _ = tmm.reflectivity(LayerStack(idx, th, 1.0, NG, 930))
    assert R > 0.999
    assert R == pytest.approx(tmm.quarter_wave_peak(1.0, NG, NG, NA, 25), abs=1e-4)


def test_stopband_centred():
    idx, th = tmm.quarter_wave_stack(NG, NA, 25, 930)
    wl = np.linspace(850, 1010, 161)
    R = tmm.stopband(LayerStack(idx, th, 1.0, NG, 930), wl)
    assert wl[np.argmax(R)] == pytest.approx(930, abs=1)
    assert R[0] < 0.9 and R[-1] < 0.9


layer = st.tuples(st.floats(1.0, 3.6), st.floats(0, 400))


@settings(max_examples=60, deadline=None)
@given(st.lists(layer, max_size=8), st.floats(1.0, 3.6), st.floats(500, 1600),
       st.floats(0, 1.2), st.sampled_from(["s", "p"]))
def test_energy_conservation(layers, ns, wl, angle, pol):
    stack = LayerStack([n for n, _ in layers], [d for _, d in layers], 1.0, ns, wl, angle, pol)
    R, T = tmm.reflectivity(stack)
    assert R + T == pytest.approx(1, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(layer, min_size=1, max_size=6), st.integers(0, 6), st.floats(500, 1600))
def test_zero_thickness_layer_is_noop(layers, pos, wl):
    idx = [n for n, _ in layers]
    th = [d for _, d in layers]
    pos = min(pos, len(idx))
    a = tmm.reflectivity(LayerStack(idx, th, 1.0, NG, wl))
    b = tmm.reflectivity(LayerStack(idx[:pos] + [2.0] + idx[pos:], th[:pos] + [0.0] + th[pos:],
                                    1.0, NG, wl))
    assert b == pytest.approx(a, abs=1e-12)


def test_rejects_bad_stack():
    with pytest.raises(ValueError):
        LayerStack((2.0,), (-1.0,))
    with pytest.raises(ValueError):
        LayerStack((2.0,), (1.0,), polarization="q")


def test_mirror_limits():
    assert tmm.dipole_rate_mirror(0.0, 930) == 0
    assert tmm.dipole_rate_mirror(1e6, 930) == pytest.approx(1, abs=1e-3)
    assert tmm.dipole_rate_mirror(0.0, 930, orientation="vertical") == 2


@pytest.mark.parametrize("frac", [0.05, 0.25, 0.6, 1.0])
@pytest.mark.parametrize("orientation", ["horizontal", "vertical"])
def test_mirror_quadrature_matches_closed_form(frac, orientation):
    wl = 1000.0
    stack = LayerStack((), (), 1.0, PEC, wl)
    rate = tmm.dipole_rate_layered(stack, frac * wl, orientation)
    assert rate == pytest.approx(tmm.dipole_rate_mirror(frac * wl, wl, orientation=orientation),
                                 abs=1e-6)


def test_layered_bulk_limit():
    stack = LayerStack((NG,), (5000.0,), NG, NG, 930)
    assert tmm.dipole_rate_layered(stack, -2500.0) == pytest.approx(1, abs=1e-6)


def test_dipole_above_dielectric_tends_to_one():
    stack = LayerStack((), (), 1.0, NG, 930)
    assert tmm.dipole_rate_layered(stack, 20 * 930.0) == pytest.approx(1, abs=0.02)


def test_cavity_antinode_beats_node():
    # lambda cavity between quarter-wave mirrors: field antinode at the centre, node at 1/4
    top = tmm.quarter_wave_stack(NG, NA, 10, 930)
    bot = tmm.quarter_wave_stack(NA, NG, 20, 930)
    cav = 930 / NG
    stack = LayerStack(top[0] + [NG] + bot[0], top[1] + [cav] + bot[1], 1.0, NG, 930)
    z0 = -sum(top[1])
    assert tmm.dipole_rate_layered(stack, z0 - cav / 2) > tmm.dipole_rate_layered(stack, z0 - cav / 4)
