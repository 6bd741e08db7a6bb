"""Ideal transfer-matrix algebra on the {TE0, TE1} qubit basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNITARITY_TOL = 1e-12


class StateKindError(TypeError):
    """Single- and two-qubit states were mixed."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class QubitState:
    """Amplitudes (c0, c1) of |0> = TE0 and |1> = TE1."""

    c0: complex
    c1: complex

    @classmethod
    def zero(cls) -> "QubitState":
        return cls(1.0, 0.0)

    @classmethod
    def one(cls) -> "QubitState":
        return cls(0.0, 1.0)

    @classmethod
    def from_vector(cls, v) -> "QubitState":
        c0, c1 = np.asarray(v, dtype=complex)
        return cls(complex(c0), complex(c1))

    @property
    def vector(self) -> np.ndarray:
        return _frozen([self.c0, self.c1])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def normalized(self) -> "QubitState":
        return QubitState.from_vector(self.vector / self.norm)

    @property
    def populations(self) -> tuple[float, float]:
        return abs(self.c0) ** 2, abs(self.c1) ** 2


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Amplitudes over |00>, |01>, |10>, |11> (control x target)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = _frozen(self.amplitudes)
        if a.shape != (4,):
            raise ValueError("a two-qubit state has four amplitudes")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def basis(cls, control: int, target: int) -> "TwoQubitState":
        a = np.zeros(4, dtype=complex)
        a[2 * control + target] = 1.0
        return cls(a)

    @classmethod
    def product(cls, control: QubitState, target: QubitState) -> "TwoQubitState":
        return cls(np.kron(control.vector, target.vector))

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class TransferMatrix2:
    """2x2 complex transfer matrix acting on (c0, c1)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (2, 2):
            raise ValueError("expected a 2x2 matrix")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "TransferMatrix2":
        return cls(np.eye(2))

    def unitarity_defect(self) -> float:
        m = self.matrix
        return float(np.abs(m.conj().T @ m - np.eye(2)).max())

    def is_unitary(self, tol: float = UNITARITY_TOL) -> bool:
        return self.unitarity_defect() < tol

    def __matmul__(self, other: "TransferMatrix2") -> "TransferMatrix2":
        return compose(self, other)


def mzi_unitary(phi: float) -> TransferMatrix2:
    """Mode-basis transfer of a MZI whose arms differ in phase by ``phi``."""
    c, s = np.cos(phi / 2), np.sin(phi / 2)
    return TransferMatrix2(np.array([[c, 1j * s], [1j * s, c]]))


def apply(u: TransferMatrix2, state: QubitState) -> QubitState:
    return QubitState.from_vector(u.matrix @ state.vector)


def compose(u1: TransferMatrix2, u2: TransferMatrix2) -> TransferMatrix2:
    """Matrix product u1 @ u2, i.e. u2 acts first."""
    return TransferMatrix2(u1.matrix @ u2.matrix)


def cnot_matrix(phase_free: bool = False) -> np.ndarray:
    """4x4 C-NOT in the |control, target> basis.

    By default the flipped block is ``mzi_unitary(pi)`` (off-diagonal ``i``),
    which is what the interferometric gate physically produces.
    """
    flip = np.array([[0, 1], [1, 0]]) if phase_free else mzi_unitary(np.pi).matrix
    m = np.zeros((4, 4), dtype=complex)
    m[:2, :2] = np.eye(2)
    m[2:, 2:] = flip
    return m


def cnot_ideal(state: TwoQubitState, phase_free: bool = False) -> TwoQubitState:
    return TwoQubitState(cnot_matrix(phase_free) @ state.amplitudes)


def fidelity(a, b) -> float:
    """|<a|b>|^2 for two states of the same kind."""
    if type(a) is not type(b) or not isinstance(a, (QubitState, TwoQubitState)):
        raise StateKindError(
            f"fidelity needs two states of the same kind, got {type(a).__name__} "
            f"and {type(b).__name__}")
    return float(abs(np.vdot(a.vector, b.vector)) ** 2)


def aligned_distance(u: np.ndarray, reference: np.ndarray) -> tuple[float, complex]:
    """Max-abs distance between ``u`` and ``reference`` after removing one global phase.

    The phase maximizes Re tr(reference^H e^{-i theta} u).  Returns the
    distance and the unit phase factor that was removed.
    """
    t = np.trace(reference.conj().T @ u)
    phase = t / abs(t) if abs(t) > 0 else 1.0
    return float(np.abs(u / phase - reference).max()), complex(phase)


def gate_fidelity(u: np.ndarray, reference: np.ndarray) -> float:
    """|tr(reference^H u)|^2 / d^2; insensitive to a global phase of either matrix."""
    d = reference.shape[0]
    return float(abs(np.trace(reference.conj().T @ u)) ** 2 / d**2)
