import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgqubit import (Core, CouplerParams, DeviceLayout, GeometryError, Segment, TransverseGrid,
                     build_cnot, build_directional_coupler, build_phase_shifter_mzi,
                     build_straight)
from wgqubit.scenarios import cnot_layout

from conftest import N_CLAD, N_CORE

X = np.linspace(-14.93, 14.93, 601)  # no sample lands on a core edge


def test_straight_guide_is_z_independent():
    lay = build_straight(length=5000.0)
    ref = lay.index(X, 0.0)
    for z in np.linspace(0, 5000, 11):
        assert np.array_equal(lay.index(X, z), ref)
    assert np.all(ref[np.abs(X) > 1.5] == N_CLAD)
    assert np.all(ref[np.abs(X) < 1.5] == N_CORE)


def test_index_squared_is_cell_average():
    lay = build_straight(width=3.0)
    g = TransverseGrid(-15, 15, 301)  # dx = 0.1, core edges fall mid-cell at +-1.5
    n2 = lay.index_squared(g, 10.0)
    i = np.argmin(np.abs(g.x - 1.5))
    assert n2[i] == pytest.approx(0.5 * (N_CORE**2 + N_CLAD**2))
    assert np.sum(n2 - N_CLAD**2) * g.dx == pytest.approx(3.0 * (N_CORE**2 - N_CLAD**2))


def test_mzi_span_and_balance():
    lay = build_phase_shifter_mzi(delta_n=0.0)
    assert lay.length == pytest.approx(5000.0)
    L = lay.length
    for z in np.linspace(0, L, 41):
        assert np.array_equal(lay.index(X, z), lay.index(X, L - z))
        assert np.array_equal(lay.index(X, z), lay.index(-X, z))


def test_mzi_phase_section_integral():
    dn, ls = 7e-4, 1000.0
    lay = build_phase_shifter_mzi(delta_n=dn, shifter_length=ls)
    z = np.linspace(0, lay.length, 50001)
    lower = np.array([lay.index(-6.0, zi) for zi in z]) - N_CORE
    upper = np.array([lay.index(6.0, zi) for zi in z]) - N_CORE
    lo_mask = (z > 1250) & (z < 3750)
    assert np.trapezoid(np.where(lo_mask, lower, 0), z) == pytest.approx(dn * ls, rel=1e-3)
    assert np.all(upper[lo_mask] == 0)
    a, b = lay.z_range("phase_section")
    assert (a, b) == pytest.approx((2000.0, 3000.0))
    # the shifted core is the only place above n_core
    assert lay.index(-6.0, 2500.0) == pytest.approx(N_CORE + dn)


def test_mzi_geometry_errors():
    with pytest.raises(GeometryError, match="overlap"):
        build_phase_shifter_mzi(arm_separation=1.0)
    with pytest.raises(GeometryError, match="adiabatic"):
        build_phase_shifter_mzi(slope=0.02)
    with pytest.raises(GeometryError):
        build_phase_shifter_mzi(shifter_length=3000.0)


def test_coupler_geometry():
    lay = build_directional_coupler(gap=1.2, parallel_length=823.0, slope=0.007, far_gap=8.0)
    a, b = lay.z_range("coupler_transition")
    assert b - a == pytest.approx((8.0 - 1.2) / (2 * 0.007))
    mid = 0.5 * sum(lay.z_range("coupler_parallel"))
    (_, x1, w1, *_), (_, x2, w2, *_) = lay.cores_at(mid)
    assert (x2 - w2 / 2) - (x1 + w1 / 2) == pytest.approx(1.2)
    L = lay.length
    xs = np.linspace(-24.9, 24.9, 997)
    for z in np.linspace(0, L, 37):
        assert np.array_equal(lay.index(xs, z), lay.index(xs, L - z))
    with pytest.raises(GeometryError):
        build_directional_coupler(gap=9.0, far_gap=8.0)


def test_mirrored_reverses_z():
    lay = build_phase_shifter_mzi(delta_n=5e-4, shifter_length=600.0, arm_length=2000.0,
                                  lead_length=137.0)
    mir = lay.mirrored()
    L = lay.length
    for z in np.linspace(0, L, 29):
        assert np.array_equal(mir.index(X, z), lay.index(X, L - z))


def test_cnot_layout_structure():
    lay = cnot_layout()
    assert lay.length == pytest.approx(10000.0)
    assert lay.count("coupler_parallel") == 2
    kerr = lay.segments[[s.kind for s in lay.segments].index("kerr_section")]
    assert sum(c.n2 != 0 for c in kerr.cores) == 2
    xs = np.linspace(-34.9, 34.9, 1397)
    a, b = lay.z_range("kerr_section")
    for z in np.linspace(0, lay.length, 201):
        has = np.any(lay.kerr(xs, z) != 0)
        assert has == (a <= z < b)
    with pytest.raises(GeometryError, match="budget"):
        build_cnot(CouplerParams(1.5814, 3282.35, far_gap=10.0))


def test_continuity_is_enforced():
    s1 = Segment("straight", 10.0, (Core.straight("g", 0.0, 3.0),))
    s2 = Segment("straight", 10.0, (Core.straight("g", 0.5, 3.0),))
    with pytest.raises(GeometryError, match="discontinuous"):
        DeviceLayout((s1, s2))
    with pytest.raises(GeometryError):
        Segment("bogus", 1.0, ())
    with pytest.raises(GeometryError):
        Segment("straight", 0.0, ())
    with pytest.raises(GeometryError, match="window"):
        DeviceLayout((Segment("straight", 1.0, (Core.straight("g", 14.0, 3.0),)),))


def test_schema_is_checked(tmp_path):
    d = build_straight().to_dict()
    d["schema"] = "other/9"
    with pytest.raises(ValueError, match="schema"):
        DeviceLayout.from_dict(d)


@given(st.floats(4.0, 20.0), st.floats(1e-4, 2e-3), st.floats(100.0, 1500.0),
       st.floats(0.002, 0.01))
def test_save_load_round_trip(sep, dn, ls, slope):
    lay = build_phase_shifter_mzi(arm_separation=sep, delta_n=dn, shifter_length=ls,
                                  slope=slope)
    back = DeviceLayout.from_dict(json.loads(json.dumps(lay.to_dict())))
    g = TransverseGrid(-20, 20, 401)
    for z in np.linspace(0, lay.length, 13):
        assert np.array_equal(back.index_squared(g, z), lay.index_squared(g, z))
        assert np.array_equal(back.kerr_profile(g, z), lay.kerr_profile(g, z))
    assert back.to_dict() == lay.to_dict()


def test_save_and_load_file(tmp_path):
    lay = build_directional_coupler()
    p = tmp_path / "layout.json"
    lay.save(p)
    assert DeviceLayout.load(p).to_dict() == lay.to_dict()
