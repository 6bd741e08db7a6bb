"""End-to-end device pipelines: NOT gate, coupler check, C-NOT truth table.

Each function returns plain result objects holding the trajectories and the
derived numbers, so the command line driver and the tests share one recipe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .analysis import (GateEstimate, conversion, deembedding_frame, estimate_gate,
                       extract_qubit, local_modes, pair_powers)
from .bpm import (BpmConfig, Calibration, FieldTrajectory, _cnot_refs, calibrate_control_power,
                  calibrate_phase_shifter, cnot_launches, mode_launch, propagate_kerr_xpm,
                  propagate_linear)
from .cmt import SeparatorGeometry, design_separator_geometry, supermode_kappa
from .core import power
from .devices import (N_CLAD, N_CORE, SLOPE, WAVELENGTH, WIDTH, CouplerParams, DeviceLayout,
                      MziParams, build_cnot, build_directional_coupler,
                      build_phase_shifter_mzi)
from .gates import QubitState, mzi_unitary
from .modes import NoGuidedModesError, symmetric_slab_neff

BASIS = (QubitState.zero(), QubitState.one())


# --- NOT gate -------------------------------------------------------------------------

def mzi_family(**geometry):
    """delta_n -> phase-shifter MZI layout with the remaining geometry fixed."""
    return partial(_mzi, geometry)


def _mzi(geometry: dict, delta_n: float) -> DeviceLayout:
    return build_phase_shifter_mzi(delta_n=delta_n, **geometry)


def stem_reference_index(n_core: float = N_CORE, n_clad: float = N_CLAD, width: float = WIDTH,
                         wavelength: float = WAVELENGTH) -> float:
    """Mean of the two stem effective indices.

    Both basis runs of a gate must share one reference index, otherwise the
    paraxial phase error differs between them and leaks into the gate matrix.
    """
    return 0.5 * sum(symmetric_slab_neff(n_core, n_clad, width, wavelength, j) for j in (0, 1))


@dataclass
class NotGateResult:
    layout: DeviceLayout
    delta_n: float
    calibration: Calibration | None
    runs: tuple[FieldTrajectory, ...]            # |0> and |1> launches (only |0> if requested)
    conversions: tuple[float, ...]               # |0> -> |1>, |1> -> |0>
    estimate: GateEstimate | None = None
    balanced: tuple[FieldTrajectory, ...] = ()
    frame: tuple[np.ndarray, np.ndarray] | None = None
    n_ref: float = float("nan")


def run_not_gate(config: BpmConfig = BpmConfig(), delta_n: float | None = None,
                 target_phase: float = np.pi, estimate: bool = True, both_inputs: bool = True,
                 bracket: tuple[float, float] = (0.0, 2e-3), **geometry) -> NotGateResult:
    """Calibrate (unless ``delta_n`` is given) and run the phase-shifter MZI.

    With ``estimate`` the balanced device is also run; its reference-plane
    phases turn the raw co-rotating outputs into a gate matrix comparable
    with ``mzi_unitary(target_phase)``.
    """
    family = mzi_family(**geometry)
    probe = family(0.0)
    n_ref = stem_reference_index(probe.n_core, probe.n_clad, probe.segments[0].cores[0].w0,
                                 probe.wavelength)
    cal = None
    if delta_n is None:
        cal = calibrate_phase_shifter(family, target_phase, config, bracket=bracket, n_ref=n_ref)
        delta_n = cal.value
    layout = family(delta_n)
    grid = layout.grid(config.dx)
    out = local_modes(layout, "stem", layout.length, grid)
    inputs = BASIS if both_inputs or estimate else BASIS[:1]

    def basis_runs(lay):
        return tuple(propagate_linear(lay, mode_launch(lay, "stem", s, grid), config, n_ref)
                     for s in inputs)

    runs = basis_runs(layout)
    conv = tuple(conversion(r, out, 1 - j) for j, r in enumerate(runs))
    result = NotGateResult(layout, float(delta_n), cal, runs, conv, n_ref=n_ref)
    if estimate:
        balanced = basis_runs(family(0.0))
        frame = deembedding_frame(*balanced, out, layout.z_edges[2])
        result.balanced, result.frame = balanced, frame
        result.estimate = estimate_gate(*runs, out, mzi_unitary(target_phase), frame=frame)
    return result


# --- directional coupler --------------------------------------------------------------

def guide_gap(layout: DeviceLayout, z: float, a: str = "guide1", b: str = "guide2") -> float:
    c = {lab: (x, w) for lab, x, w, _, _ in layout.cores_at(z)}
    (xa, wa), (xb, wb) = c[a], c[b]
    return abs(xb - xa) - 0.5 * (wa + wb)


def coupling_oracle(layout: DeviceLayout, z: np.ndarray, order: int, a: str = "guide1",
                    b: str = "guide2", table_points: int = 60) -> np.ndarray:
    """Cross-coupled power sin^2(theta(z)) from coupled-mode theory, with
    theta the running integral of the local supermode coupling kappa(gap(z))."""
    core = next(c for c in layout.segments[0].cores if c.label == a)
    gz = np.array([guide_gap(layout, zi, a, b) for zi in z])
    gaps = np.linspace(gz.min(), gz.max(), table_points) if np.ptp(gz) > 0 else gz[:1]
    ks = []
    for g in gaps:
        try:
            ks.append(supermode_kappa(layout.n_core, layout.n_clad, core.w0, float(g),
                                      layout.wavelength, order))
        except NoGuidedModesError:
            ks.append(1e-300)
    kz = np.exp(np.interp(gz, gaps, np.log(ks)))
    theta = np.concatenate([[0.0], np.cumsum(0.5 * (kz[1:] + kz[:-1]) * np.diff(z))])
    return np.sin(theta) ** 2


@dataclass
class CouplerResult:
    layout: DeviceLayout
    runs: tuple[FieldTrajectory, ...]
    z: np.ndarray
    bpm_cross: tuple[np.ndarray, np.ndarray]       # guide-2 power per mode order
    bpm_bar: tuple[np.ndarray, np.ndarray]
    cmt_cross: tuple[np.ndarray, np.ndarray]
    errors: tuple[float, float] = field(default=(np.nan, np.nan))


def run_coupler(config: BpmConfig = BpmConfig(), **geometry) -> CouplerResult:
    """Launch TE0 and TE1 into guide1 and compare the guide powers with the oracle."""
    layout = build_directional_coupler(**geometry)
    grid = layout.grid(config.dx)
    runs, cross, bar, oracle, errors = [], [], [], [], []
    for j, s in enumerate(BASIS):
        traj = propagate_linear(layout, mode_launch(layout, "guide1", s, grid), config)
        z, p1, p2 = pair_powers(traj, layout, j)
        o = coupling_oracle(layout, z, j)
        runs.append(traj)
        bar.append(p1)
        cross.append(p2)
        oracle.append(o)
        errors.append(float(np.max(np.abs(p2 - o))))
    return CouplerResult(layout, tuple(runs), runs[0].z.copy(), tuple(cross), tuple(bar),
                         tuple(oracle), tuple(errors))


@dataclass
class SeparatorResult:
    design: SeparatorGeometry
    layout: DeviceLayout
    runs: tuple[FieldTrajectory, ...]
    mode0_bar: float
    mode1_cross: float


def run_separator(config: BpmConfig = BpmConfig(), far_gap: float = 8.0, slope: float = SLOPE,
                  n: int | None = None, n_core: float = N_CORE, n_clad: float = N_CLAD,
                  width: float = WIDTH, wavelength: float = WAVELENGTH,
                  lead_length: float = 100.0) -> SeparatorResult:
    """Design a mode-separating coupler and check its routing by BPM."""
    design = design_separator_geometry(n_core, n_clad, width, wavelength, slope, far_gap, n=n)
    layout = build_directional_coupler(design.gap, design.parallel_length, slope, width=width,
                                       far_gap=far_gap, lead_length=lead_length, n_core=n_core,
                                       n_clad=n_clad, wavelength=wavelength)
    grid = layout.grid(config.dx)
    runs = tuple(propagate_linear(layout, mode_launch(layout, "guide1", s, grid), config)
                 for s in BASIS)
    _, bar0, _ = pair_powers(runs[0], layout, 0)
    _, _, cross1 = pair_powers(runs[1], layout, 1)
    return SeparatorResult(design, layout, runs, float(bar0[-1]), float(cross1[-1]))


# --- C-NOT ----------------------------------------------------------------------------

def cnot_layout(far_gap: float = 10.0, n: int = 3, kerr_n2: float = 1e-3,
                slope: float = SLOPE, arm_offset: float = 7.0, lead_length: float = 200.0,
                total_length: float = 10000.0, n_core: float = N_CORE, n_clad: float = N_CLAD,
                width: float = WIDTH, wavelength: float = WAVELENGTH,
                kerr_length: float | None = None) -> DeviceLayout:
    """C-NOT device whose two couplers are designed mode separators."""
    sep = design_separator_geometry(n_core, n_clad, width, wavelength, slope, far_gap, n=n)
    dc = CouplerParams(sep.gap, sep.parallel_length, slope, far_gap)
    return build_cnot(dc, MziParams(arm_offset, slope, lead_length), kerr_n2,
                      kerr_length=kerr_length, total_length=total_length, width=width,
                      n_core=n_core, n_clad=n_clad, wavelength=wavelength)


@dataclass
class CnotCase:
    control_in: int
    target_in: int
    control_out: QubitState
    target_out: QubitState
    fidelity: float                 # overlap of the extracted product with the ideal output
    throughput: tuple[float, float]  # guided output power / launched power, per channel
    trajectory: FieldTrajectory

    def to_dict(self) -> dict:
        return {"control_in": self.control_in, "target_in": self.target_in,
                "control_populations": list(self.control_out.populations),
                "target_populations": list(self.target_out.populations),
                "fidelity": self.fidelity, "throughput": list(self.throughput)}


def cnot_case(layout: DeviceLayout, control: int, target: int, control_power: float,
              config: BpmConfig = BpmConfig(), target_power: float = 1e-6,
              expect_flip: bool | None = None) -> CnotCase:
    """Propagate one basis input and score it against the C-NOT truth table.

    ``expect_flip`` overrides the ideal target output (False: target unchanged).
    """
    grid = layout.grid(config.dx)
    launches = cnot_launches(layout, BASIS[control], BASIS[target], grid, control_power,
                             target_power)
    traj = propagate_kerr_xpm(layout, launches, config, _cnot_refs(layout))
    cm = local_modes(layout, "control", layout.length, grid)
    tm = local_modes(layout, "target", layout.length, grid)
    c_out, c_res = extract_qubit(traj.final_field(0), cm)
    t_out, t_res = extract_qubit(traj.final_field(1), tm)
    flip = bool(control) if expect_flip is None else expect_flip
    ideal_t = target ^ int(flip)
    fid = c_out.populations[control] * t_out.populations[ideal_t]
    through = tuple(float((power(traj.final_field(ch)) - r) / power(f))
                    for ch, (f, r) in enumerate(zip(launches, (c_res, t_res))))
    return CnotCase(control, target, c_out, t_out, float(fid), through, traj)


@dataclass
class CnotResult:
    layout: DeviceLayout
    control_power: float
    calibration: Calibration | None
    cases: list[CnotCase]
    linear_cases: list[CnotCase] = field(default_factory=list)

    @property
    def min_fidelity(self) -> float:
        return min(c.fidelity for c in self.cases)


def run_cnot(config: BpmConfig = BpmConfig(), control_power: float | None = None,
             target_power: float = 1e-6, check_linear: bool = True, **geometry) -> CnotResult:
    """Calibrate the control power (unless given), then run the four basis inputs.

    With ``check_linear`` the two control-|1> cases are repeated with n2 = 0,
    where the target must come out unchanged.
    """
    layout = cnot_layout(**geometry)
    cal = None
    if control_power is None:
        cal = calibrate_control_power(layout, np.pi, config, target_power=target_power)
        if not cal.feasible:
            return CnotResult(layout, float("nan"), cal, [])
        control_power = cal.value
    cases = [cnot_case(layout, c, t, control_power, config, target_power)
             for c in (0, 1) for t in (0, 1)]
    linear = []
    if check_linear:
        flat = cnot_layout(**{**geometry, "kerr_n2": 0.0})
        linear = [cnot_case(flat, 1, t, control_power, config, target_power, expect_flip=False)
                  for t in (0, 1)]
    return CnotResult(layout, float(control_power), cal, cases, linear)


def truth_table_matrix(cases: list[CnotCase]) -> np.ndarray:
    """Populations of the four outputs (columns) for the four inputs (rows)."""
    m = np.zeros((4, 4))
    for c in cases:
        pc, pt = c.control_out.populations, c.target_out.populations
        m[2 * c.control_in + c.target_in] = np.kron(pc, pt)
    return m
