import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgqubit import (QubitState, StateKindError, TransferMatrix2, TwoQubitState, apply,
                     cnot_ideal, compose, fidelity, mzi_unitary)
from wgqubit.gates import aligned_distance, cnot_matrix, gate_fidelity

phases = st.floats(-4 * np.pi, 4 * np.pi, allow_nan=False)
unit = st.floats(-1, 1, allow_nan=False)


@given(phases)
def test_mzi_is_unitary(phi):
    u = mzi_unitary(phi)
    assert u.is_unitary()
    assert abs(abs(np.linalg.det(u.matrix)) - 1) < 1e-12


@given(phases, phases)
def test_mzi_phases_add(a, b):
    lhs = compose(mzi_unitary(a), mzi_unitary(b)).matrix
    assert np.abs(lhs - mzi_unitary(a + b).matrix).max() < 1e-12


def test_mzi_named_cases():
    assert np.allclose(mzi_unitary(0).matrix, np.eye(2))
    out = apply(mzi_unitary(np.pi), QubitState.one())
    assert abs(out.c0 - 1j) < 1e-15 and abs(out.c1) < 1e-15
    half = mzi_unitary(np.pi / 2)
    assert np.abs((half @ half).matrix - mzi_unitary(np.pi).matrix).max() < 1e-15
    full = mzi_unitary(np.pi)
    assert np.abs((full @ full).matrix + np.eye(2)).max() < 1e-15


def test_compose_order():
    a = TransferMatrix2(np.array([[0, 1], [1, 0]]))
    b = TransferMatrix2(np.diag([1, 1j]))
    # b acts first
    s = apply(compose(a, b), QubitState.one())
    assert s.c0 == 1j and s.c1 == 0


def test_transfer_matrix_validation():
    with pytest.raises(ValueError):
        TransferMatrix2(np.eye(3))
    assert not TransferMatrix2(np.array([[1, 0], [0, 2]])).is_unitary()
    assert TransferMatrix2.identity().unitarity_defect() == 0.0


def test_cnot_truth_table():
    for c in (0, 1):
        for t in (0, 1):
            out = cnot_ideal(TwoQubitState.basis(c, t))
            expect = TwoQubitState.basis(c, t ^ c)
            assert fidelity(out, expect) == pytest.approx(1.0, abs=1e-15)
    flipped = cnot_ideal(TwoQubitState.basis(1, 0))
    assert flipped.amplitudes[3] == 1j
    assert cnot_ideal(TwoQubitState.basis(0, 0)).amplitudes[0] == 1


def test_cnot_involution_up_to_phase():
    free = cnot_matrix(phase_free=True)
    assert np.array_equal(free @ free, np.eye(4))
    m = cnot_matrix()
    # the physical version squares to diag(1, 1, -1, -1): identity on control 0 only
    assert np.allclose(m @ m, np.diag([1, 1, -1, -1]))
    assert np.allclose(m.conj().T @ m, np.eye(4))


def test_fidelity_examples():
    plus = QubitState(1, 1).normalized()
    assert fidelity(QubitState.zero(), QubitState.one()) == 0.0
    assert fidelity(QubitState.zero(), plus) == pytest.approx(0.5)
    bell = TwoQubitState(np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert fidelity(bell, TwoQubitState.basis(1, 1)) == pytest.approx(0.5)


def test_fidelity_rejects_mixed_kinds():
    with pytest.raises(StateKindError):
        fidelity(QubitState.zero(), TwoQubitState.basis(0, 0))
    with pytest.raises(StateKindError):
        fidelity(np.array([1, 0]), np.array([1, 0]))


def test_two_qubit_state_shape():
    with pytest.raises(ValueError):
        TwoQubitState(np.ones(3))
    p = TwoQubitState.product(QubitState.one(), QubitState.zero())
    assert fidelity(p, TwoQubitState.basis(1, 0)) == 1.0


@given(unit, unit, unit, unit, phases)
def test_fidelity_ignores_global_phase(a, b, c, d, theta):
    s = QubitState(complex(a, b), complex(c, d))
    if s.norm < 1e-3:
        return
    s = s.normalized()
    rotated = QubitState.from_vector(np.exp(1j * theta) * s.vector)
    assert fidelity(s, rotated) == pytest.approx(1.0, abs=1e-12)


@given(phases, phases)
def test_gate_fidelity_and_alignment_ignore_global_phase(phi, theta):
    u = mzi_unitary(phi).matrix
    v = np.exp(1j * theta) * u
    assert gate_fidelity(v, u) == pytest.approx(1.0, abs=1e-12)
    dist, phase = aligned_distance(v, u)
    assert dist < 1e-12
    assert abs(phase - np.exp(1j * theta)) < 1e-12


def test_states_are_immutable():
    s = TwoQubitState.basis(0, 1)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 1
    with pytest.raises(AttributeError):
        QubitState.zero().c0 = 2
