"""Reading qubits out of simulated fields and scoring BPM gates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ComplexField, TransverseGrid, overlap, power
from .devices import DeviceLayout
from .gates import QubitState, TransferMatrix2, aligned_distance, gate_fidelity
from .modes import ModeSet, SlabGeometry, solve_te_modes

GUIDED_FLOOR = 1e-6
RESIDUAL_FLAG = 0.10


class ExtractionError(ValueError):
    """The field carries (almost) no guided power."""


class InvalidMeasurementError(ValueError):
    """A cut-off measurement was requested through a multimode guide."""


def local_modes(layout: DeviceLayout, guide: str, z: float, grid: TransverseGrid) -> ModeSet:
    """Modes of the named guide at z, as if it were isolated, positioned in place."""
    for label, x, w, n, _ in layout.cores_at(z):
        if label == guide:
            geom = SlabGeometry.symmetric(n, layout.n_clad, w, layout.wavelength, center=x)
            return solve_te_modes(geom, grid, max_modes=2, check_window=False)
    raise KeyError(f"no guide named {guide!r} at z = {z}")


def modal_amplitudes(field: ComplexField, modes: ModeSet) -> np.ndarray:
    """Raw overlaps <Psi_j|field> for the first two modes (missing modes give 0)."""
    out = np.zeros(2, dtype=complex)
    for j, m in enumerate(list(modes)[:2]):
        out[j] = overlap(m.profile, field)
    return out


def extract_qubit(field: ComplexField, modes: ModeSet) -> tuple[QubitState, float]:
    """Normalized (C0, C1) and the residual (unguided) power of ``field``."""
    c = modal_amplitudes(field, modes)
    total = power(field)
    guided = float(np.sum(np.abs(c) ** 2))
    if total == 0.0 or guided < GUIDED_FLOOR * total:
        raise ExtractionError(
            f"guided power {guided:.3e} is below {GUIDED_FLOOR:g} of the field power {total:.3e}")
    return QubitState.from_vector(c / np.sqrt(guided)), total - guided


def co_rotating(c: np.ndarray, modes: ModeSet, z: float) -> np.ndarray:
    """Remove the modal propagation phases exp(-i beta_j z)."""
    betas = np.array([m.beta for m in list(modes)[:2]])
    return c[: len(betas)] * np.exp(1j * betas * z)


@dataclass(frozen=True, eq=False)
class GateEstimate:
    matrix: TransferMatrix2
    reference: TransferMatrix2
    distance: float                 # max-abs after global-phase alignment
    phase: complex                  # removed global phase
    fidelity: float                 # |tr(ref^H U)|^2 / 4
    basis_fidelities: tuple[float, float]
    unitarity_defect: float
    residuals: tuple[float, float]  # unguided fraction of each run's output power
    flagged: bool

    def to_dict(self) -> dict:
        m = self.matrix.matrix
        return {"matrix_re": m.real.tolist(), "matrix_im": m.imag.tolist(),
                "distance": self.distance, "fidelity": self.fidelity,
                "basis_fidelities": list(self.basis_fidelities),
                "unitarity_defect": self.unitarity_defect,
                "residuals": list(self.residuals), "flagged": self.flagged}


def _column(run, modes: ModeSet, channel: int) -> tuple[np.ndarray, float]:
    f = run.final_field(channel)
    state, resid = extract_qubit(f, modes)
    c = co_rotating(modal_amplitudes(f, modes), modes, run.z[-1])
    return c / np.linalg.norm(c), resid / power(f)


def estimate_gate(run0, run1, modes: ModeSet, reference: TransferMatrix2 | None = None,
                  frame: tuple[np.ndarray, np.ndarray] | None = None,
                  channel: int = 0) -> GateEstimate:
    """Transfer matrix whose columns are the outputs for |0> and |1> inputs.

    Outputs are taken in the co-rotating modal frame of ``modes``.  ``frame``
    optionally supplies diagonal reference-plane phases (p_in, p_out), see
    :func:`deembedding_frame`; the matrix is then P_out^-1 U P_in^-1.
    """
    if len(run0.z) != len(run1.z) or abs(run0.z[-1] - run1.z[-1]) > 1e-9:
        raise ValueError("both runs must cover the same layout")
    reference = TransferMatrix2.identity() if reference is None else reference
    c0, r0 = _column(run0, modes, channel)
    c1, r1 = _column(run1, modes, channel)
    u = np.column_stack([c0, c1])
    if frame is not None:
        p_in, p_out = (np.asarray(p, dtype=complex) for p in frame)
        u = np.diag(1.0 / p_out) @ u @ np.diag(1.0 / p_in)
    ref = reference.matrix
    dist, phase = aligned_distance(u, ref)
    basis = tuple(float(abs(np.vdot(ref[:, j], u[:, j])) ** 2) for j in range(2))
    est = TransferMatrix2(u)
    return GateEstimate(est, reference, dist, phase, gate_fidelity(u, ref), basis,
                        est.unitarity_defect(), (float(r0), float(r1)),
                        bool(max(r0, r1) > RESIDUAL_FLAG))


def _unit(z: complex) -> complex:
    return z / abs(z)


def supermode_phases(run0, run1, z_ref: float, upper: str = "arm_upper",
                     lower: str = "arm_lower", channel: int = 0) -> np.ndarray:
    """Phases of the even supermode (run0) and odd supermode (run1) of the arm pair at z_ref."""
    i = run0.snapshot_index(z_ref)
    out = []
    for run, sign in ((run0, 1.0), (run1, -1.0)):
        up = run.mode_series(upper, channel)[i, 0]
        lo = run.mode_series(lower, channel)[i, 0]
        if not (np.isfinite(up) and np.isfinite(lo)):
            raise ValueError(f"arms {upper!r}/{lower!r} are not present at z = {run.z[i]}")
        out.append(_unit(up + sign * lo))
    return np.array(out)


def deembedding_frame(balanced0, balanced1, modes: ModeSet, z_ref: float,
                      upper: str = "arm_upper", lower: str = "arm_lower",
                      channel: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Reference-plane phases (p_in, p_out) of an arm interferometer.

    p_in carries each input mode to its arm supermode at z_ref; p_out follows
    from the balanced device, whose arm section acts as the identity on the
    supermodes.  Splitter and combiner phases are thereby removed.
    """
    p_in = supermode_phases(balanced0, balanced1, z_ref, upper, lower, channel)
    c0, _ = _column(balanced0, modes, channel)
    c1, _ = _column(balanced1, modes, channel)
    p_out = np.array([_unit(c0[0]), _unit(c1[1])]) / p_in
    return p_in, p_out


def cutoff_measure(field: ComplexField, single_mode_geometry: SlabGeometry) -> float:
    """Power detected through a single-mode guide: |<Psi_0|field>|^2."""
    modes = solve_te_modes(single_mode_geometry, field.grid, check_window=False)
    if len(modes) != 1:
        raise InvalidMeasurementError(
            f"the measuring guide supports {len(modes)} modes; a cut-off measurement needs one")
    return float(abs(overlap(modes[0].profile, field)) ** 2)


def conversion(run, modes: ModeSet, to_mode: int, channel: int = 0) -> float:
    """Fraction of the launched power found in mode ``to_mode`` at the output."""
    c = modal_amplitudes(run.final_field(channel), modes)
    return float(abs(c[to_mode]) ** 2 / power(run.field(0, channel)))


def _pair_basis(layout: DeviceLayout, a: str, b: str, z: float, grid: TransverseGrid,
                order: int, cache: dict):
    cores = {lab: (x, w, n) for lab, x, w, n, _ in layout.cores_at(z)}
    (xa, wa, na), (xb, wb, nb) = cores[a], cores[b]
    if not (np.isclose(wa, wb) and na == nb):
        return None
    gap = abs(xb - xa) - wa
    key = (round(gap, 9), round(0.5 * (xa + xb), 9), round(wa, 9), na, order)
    if key not in cache:
        geom = SlabGeometry.coupled_pair(na, layout.n_clad, wa, gap, layout.wavelength,
                                         0.5 * (xa + xb))
        sm = solve_te_modes(geom, grid, max_modes=4, check_window=False)
        if len(sm) < 2 * order + 2:
            cache[key] = None
        else:
            even, odd = sm[2 * order].profile, sm[2 * order + 1].profile
            iso_a = local_modes(layout, a, z, grid)[order].profile
            iso_b = local_modes(layout, b, z, grid)[order].profile
            ov = np.array([[overlap(iso_a, even).real, overlap(iso_a, odd).real],
                           [overlap(iso_b, even).real, overlap(iso_b, odd).real]])
            # a missed near-degenerate root shows up as a supermode foreign to the pair
            cache[key] = (even, odd, np.sign(ov)) if np.abs(ov).min() > 0.5 else None
    return cache[key]


def pair_powers(traj, layout: DeviceLayout, order: int, a: str = "guide1", b: str = "guide2",
                channel: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Power of mode ``order`` in guides a and b at every snapshot.

    Where the two guides are identical the field is projected onto the even
    and odd supermodes of the pair and the guide amplitudes are recombined
    from them, which is the local-mode picture behind coupled-mode theory.
    Elsewhere the isolated-guide amplitudes are used.  Returns (z, P_a, P_b).
    """
    grid = traj.grid
    cache: dict = {}
    pa = np.full(len(traj.z), np.nan)
    pb = np.full(len(traj.z), np.nan)
    sa, sb = traj.mode_series(a, channel), traj.mode_series(b, channel)
    for i, z in enumerate(traj.z):
        basis = None
        labels = {c[0] for c in layout.cores_at(z)}
        if a in labels and b in labels:
            basis = _pair_basis(layout, a, b, z, grid, order, cache)
        if basis is None:
            pa[i], pb[i] = abs(sa[i, order]) ** 2, abs(sb[i, order]) ** 2
            continue
        even, odd, s = basis
        f = traj.field(i, channel)
        ce, co = overlap(even, f), overlap(odd, f)
        pa[i] = abs(s[0, 0] * ce + s[0, 1] * co) ** 2 / 2
        pb[i] = abs(s[1, 0] * ce + s[1, 1] * co) ** 2 / 2
    return traj.z.copy(), pa, pb
