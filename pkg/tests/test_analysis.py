import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgqubit import (BpmConfig, ComplexField, ExtractionError, InvalidMeasurementError,
                     QubitState, SlabGeometry, build_directional_coupler,
                     build_straight, cutoff_measure, estimate_gate,
                     extract_qubit, local_modes, mode_launch, overlap, pair_powers,
                     power, propagate_linear)
from wgqubit.analysis import deembedding_frame

from conftest import LAM, N_CLAD, N_CORE, WIDTH, gaussian

unit = st.floats(-1, 1, allow_nan=False)


def test_extract_pure_modes(modes):
    for j in range(2):
        state, resid = extract_qubit(modes[j].profile, modes)
        assert abs(abs(state.vector[j]) - 1) < 1e-12
        assert abs(resid) < 1e-10


def test_extract_superposition(modes):
    a, b = 0.6, 0.8j
    f = modes[0].profile * a + modes[1].profile * b
    state, resid = extract_qubit(f, modes)
    assert np.abs(state.vector - [a, b]).max() < 1e-10
    assert abs(resid) < 1e-10


def test_residual_of_orthogonalized_gaussian(modes, grid):
    g = ComplexField.from_function(grid, lambda x: gaussian(x, 1.0, 0.8))
    c = np.array([overlap(m.profile, g) for m in modes])
    rad = g - modes[0].profile * c[0] - modes[1].profile * c[1]
    f = modes[0].profile * 0.5 + rad
    state, resid = extract_qubit(f, modes)
    assert abs(resid - power(rad)) < 1e-8
    assert abs(state.c0 - 1) < 1e-8


def test_unguided_field_raises(grid, modes):
    with pytest.raises(ExtractionError):
        extract_qubit(ComplexField.zeros(grid), modes)
    far = ComplexField.from_function(grid, lambda x: gaussian(x, 13.5, 0.2))
    with pytest.raises(ExtractionError):
        extract_qubit(far, modes)


@given(unit, unit, unit, unit)
def test_extraction_fixed_point(modes, a, b, c, d):
    ms = modes
    v = np.array([complex(a, b), complex(c, d)])
    if np.linalg.norm(v) < 1e-3:
        return
    v = v / np.linalg.norm(v)
    f = ms[0].profile * v[0] + ms[1].profile * v[1]
    state, resid = extract_qubit(f, ms)
    assert np.abs(state.vector - v).max() < 1e-12
    assert -1e-12 < resid < 1e-10


@given(unit, unit, st.floats(0.0, 1.0))
def test_residual_bounded_by_field_power(modes, a, b, weight):
    ms = modes
    grid = ms.grid
    junk = ComplexField.from_function(grid, lambda x: gaussian(x, 6.0, 1.0))
    f = ms[0].profile * complex(a, b) + junk * weight
    if abs(complex(a, b)) < 1e-2:
        return
    _, resid = extract_qubit(f, ms)
    assert -1e-12 <= resid <= power(f) + 1e-12


def test_straight_guide_is_identity_gate():
    lay = build_straight(length=1000.0)
    cfg = BpmConfig()
    grid = lay.grid(cfg.dx)
    n_ref = 0.5 * sum(m.n_eff for m in local_modes(lay, "guide", 0.0, grid))
    runs = [propagate_linear(lay, mode_launch(lay, "guide", s, grid), cfg, n_ref)
            for s in (QubitState.zero(), QubitState.one())]
    est = estimate_gate(*runs, local_modes(lay, "guide", lay.length, grid))
    assert est.fidelity > 0.999
    assert est.distance < 0.05
    assert not est.flagged
    ph = np.exp(1j * np.pi / 3)
    assert est.fidelity == pytest.approx(
        abs(np.trace(est.matrix.matrix * ph)) ** 2 / 4, abs=1e-12)


def test_balanced_interferometer_is_diagonal(not_gate):
    (b0, b1) = not_gate.balanced
    lay = not_gate.layout
    grid = b0.grid
    out = local_modes(lay, "stem", lay.length, grid)
    est = estimate_gate(b0, b1, out)
    assert min(est.basis_fidelities) > 0.99
    assert np.abs(est.matrix.matrix[[0, 1], [1, 0]]).max() < 0.1
    frame = deembedding_frame(b0, b1, out, lay.z_edges[2])
    framed = estimate_gate(b0, b1, out, frame=frame)
    assert framed.fidelity > 0.99


def test_cutoff_measure(grid, modes):
    narrow = SlabGeometry.symmetric(N_CORE, N_CLAD, 1.5, LAM)
    single = local_modes(build_straight(width=1.5), "guide", 0.0, grid)
    assert cutoff_measure(single[0].profile, narrow) == pytest.approx(1.0, abs=1e-10)
    assert cutoff_measure(ComplexField.zeros(grid), narrow) == 0.0
    # odd TE1 finds no overlap with the even single-mode profile
    assert cutoff_measure(modes[1].profile, narrow) < 0.05
    with pytest.raises(InvalidMeasurementError):
        cutoff_measure(modes[0].profile, SlabGeometry.symmetric(N_CORE, N_CLAD, WIDTH, LAM))


def test_pair_powers_track_exchange():
    lay = build_directional_coupler()
    cfg = BpmConfig(snapshot_stride=100)
    grid = lay.grid(cfg.dx)
    traj = propagate_linear(lay, mode_launch(lay, "guide1", QubitState.zero(), grid), cfg)
    z, pa, pb = pair_powers(traj, lay, 0)
    assert pa[0] == pytest.approx(1.0, abs=1e-8) and pb[0] == pytest.approx(0.0, abs=1e-8)
    assert np.all(np.isfinite(pa)) and np.all(np.isfinite(pb))
    assert np.abs(pa + pb - 1).max() < 0.02
    assert pb.max() > 0.3

