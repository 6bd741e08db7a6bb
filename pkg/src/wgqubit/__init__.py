"""Qubits in the two guided modes of dual-mode optical waveguides.

Mode solving for slab guides, coupled-mode theory for couplers, ideal gate
algebra, device layouts, and finite-difference beam propagation (linear and
Kerr cross-phase) with tools to read qubit states back out of the fields.
"""

from .analysis import (ExtractionError, GateEstimate, InvalidMeasurementError, conversion,
                       cutoff_measure, deembedding_frame, estimate_gate, extract_qubit,
                       local_modes, modal_amplitudes, pair_powers)
from .bpm import (BpmConfig, BpmWindowError, Calibration, CalibrationError, ConvergenceError,
                  FieldTrajectory, RefinementError, arm_phase_difference,
                  calibrate_control_power, calibrate_phase_shifter, discrete_power, mode_launch,
                  propagate_kerr_xpm, propagate_linear)
from .cmt import (CoupledModeSystem, CouplerGeometry, DivergenceError, ModeAmplitudes,
                  SeparatorDesign, StepTooLargeError, coupling_coefficient, coupling_phase,
                  dc_transfer, design_mode_separator, design_separator_geometry,
                  integrate_coupled_modes, supermode_kappa)
from .core import (ComplexField, DegenerateFieldError, GridMismatchError, TransverseGrid,
                   normalize, overlap, power)
from .devices import (Core, CouplerParams, DeviceLayout, GeometryError, MziParams, Segment,
                      build_cnot, build_directional_coupler, build_homogeneous,
                      build_phase_shifter_mzi, build_straight)
from .gates import (QubitState, StateKindError, TransferMatrix2, TwoQubitState, apply,
                    cnot_ideal, cnot_matrix, compose, fidelity, gate_fidelity, mzi_unitary)
from .modes import (ChannelGeometry, Mode, ModeSet, NoGuidedModesError, SlabGeometry,
                    WindowError, effective_index_reduce, mode_count_oracle, solve_te_modes)

__version__ = "0.1.0"
