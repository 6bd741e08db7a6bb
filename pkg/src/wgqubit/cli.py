"""Command line driver: named device scenarios, parameter sweeps, report emission.

    wgqubit modes
    wgqubit not-gate --out runs/not --set dz=0.25
    wgqubit sweep --set sweep_scenario=not-gate --set sweep_param=delta_n \\
                  --set sweep_values=[0,0.0005,0.001] --parallel 4

Configuration is layered: built-in defaults, then ``--config file.json``, then
``--set key=value`` (values parsed as JSON, falling back to plain strings).
The output directory comes from ``--out``, else ``$WGQUBIT_OUT``, else the
config, else ``wgqubit_out/<scenario>``.

Exit status: 0 all scenario checks passed, 1 a check failed, 2 configuration
error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import json
import logging
import math
import os
import random
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenarios
from .analysis import ExtractionError, InvalidMeasurementError, local_modes
from .bpm import (BpmConfig, BpmWindowError, CalibrationError, ConvergenceError, FieldTrajectory,
                  RefinementError)
from .cmt import (DivergenceError, StepTooLargeError, design_mode_separator,
                  design_separator_geometry, supermode_kappa)
from .core import DegenerateFieldError, GridMismatchError, TransverseGrid, overlap
from .devices import GeometryError, build_directional_coupler, build_phase_shifter_mzi
from .gates import QubitState, apply, mzi_unitary
from .modes import NoGuidedModesError, SlabGeometry, WindowError, mode_count_oracle, solve_te_modes

log = logging.getLogger("wgqubit")

OUT_ENV = "WGQUBIT_OUT"
SCENARIOS = ("modes", "gate", "not-gate", "dc-design", "dc-verify", "cnot", "sweep")
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
MAX_SWEEP_POINTS = 10_000

NUMERICAL_ERRORS = (RefinementError, BpmWindowError, ConvergenceError, CalibrationError,
                    ExtractionError, InvalidMeasurementError, NoGuidedModesError, WindowError,
                    StepTooLargeError, DivergenceError, DegenerateFieldError, GridMismatchError,
                    ArithmeticError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


# --- configuration --------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    default: object
    kind: str                # float, int, bool, str, list
    check: object = None     # predicate on the value
    optional: bool = False   # None allowed
    doc: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


PARAMS: dict[str, Param] = {
    "out": Param(None, "str", optional=True, doc="output directory"),
    "seed": Param(0, "int", doc="seed for the sweep submission order"),
    "parallel": Param(1, "int", _pos, doc="worker processes for sweeps"),
    "csv_x_stride": Param(2, "int", _pos, doc="keep every n-th x sample in trajectory.csv"),
    # geometry
    "n_core": Param(1.57, "float", _pos),
    "n_clad": Param(1.55, "float", _pos),
    "width": Param(3.0, "float", _pos, doc="core width, um"),
    "wavelength": Param(1.064, "float", _pos, doc="um"),
    "slope": Param(0.007, "float", lambda v: 0 < v <= 0.01, doc="branch and coupler slope"),
    # propagation
    "dx": Param(0.05, "float", _pos),
    "dz": Param(0.5, "float", _pos),
    "scheme": Param("pade4", "str", lambda v: v in ("pade4", "cn")),
    "snapshot_stride": Param(50, "int", _pos),
    "absorber_width": Param(5.0, "float", _pos),
    "absorber_strength": Param(0.2, "float", _pos),
    # modes
    "mode_half_width": Param(15.0, "float", _pos),
    "mode_points": Param(2048, "int", lambda v: v >= 16),
    # gate
    "phi": Param(math.pi, "float"),
    "state": Param("0", "str", doc="0, 1, +, -, +i, -i or 'c0,c1' (complex literals)"),
    # NOT gate
    "delta_n": Param(None, "float", _nonneg, optional=True, doc="unset: calibrate"),
    "target_phase": Param(math.pi, "float", _pos),
    "shifter_length": Param(1000.0, "float", _pos),
    "arm_length": Param(2500.0, "float", _pos),
    "arm_separation": Param(12.0, "float", _pos),
    "arm_width": Param(1.5, "float", _pos),
    "mzi_lead_length": Param(500.0, "float", _nonneg),
    "estimate_gate": Param(True, "bool"),
    "both_inputs": Param(True, "bool"),
    # couplers
    "gap": Param(1.2, "float", _nonneg),
    "parallel_length": Param(823.0, "float", _nonneg),
    "far_gap": Param(8.0, "float", _pos),
    "dc_lead_length": Param(100.0, "float", _nonneg),
    "kappa0": Param(None, "float", _pos, optional=True, doc="unset: computed from gap"),
    "kappa1": Param(None, "float", _pos, optional=True),
    "l_max": Param(5000.0, "float", _pos),
    "phase_tol": Param(1e-3, "float", _pos),
    "check_separator": Param(True, "bool"),
    "separator_n": Param(None, "int", _nonneg, optional=True),
    # C-NOT
    "cnot_far_gap": Param(10.0, "float", _pos),
    "cnot_separator_n": Param(3, "int", _nonneg),
    "kerr_n2": Param(1e-3, "float", _nonneg),
    "control_power": Param(None, "float", _pos, optional=True, doc="unset: calibrate"),
    "target_power": Param(1e-6, "float", _pos),
    "total_length": Param(10000.0, "float", _pos),
    "arm_offset": Param(7.0, "float", _pos),
    "cnot_lead_length": Param(200.0, "float", _nonneg),
    "check_linear": Param(True, "bool"),
    # sweep
    "sweep_scenario": Param("not-gate", "str", lambda v: v in SCENARIOS and v != "sweep"),
    "sweep_param": Param("delta_n", "str"),
    "sweep_values": Param(None, "list", optional=True),
    "sweep_start": Param(None, "float", optional=True),
    "sweep_stop": Param(None, "float", optional=True),
    "sweep_points": Param(None, "int", _pos, optional=True),
}


def defaults() -> dict:
    return {k: p.default for k, p in PARAMS.items()}


def _coerce(key: str, value):
    p = PARAMS[key]
    if value is None:
        if p.optional:
            return None
        raise ConfigError(f"{key} may not be null")
    try:
        if p.kind == "float":
            if isinstance(value, bool):
                raise TypeError
            value = float(value)
            if not math.isfinite(value):
                raise TypeError
        elif p.kind == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            value = int(value)
        elif p.kind == "bool":
            if not isinstance(value, bool):
                raise TypeError
        elif p.kind == "str":
            if not isinstance(value, str):
                raise TypeError
        elif p.kind == "list":
            if not isinstance(value, list):
                raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a {p.kind}, got {value!r}") from None
    if p.check is not None and not p.check(value):
        raise ConfigError(f"{key} = {value!r} is out of range")
    return value


def _parse_set(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    key = key.strip()
    if key in PARAMS and PARAMS[key].kind == "str" and raw != "null":
        return key, raw
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_config(scenario: str, config_file=None, sets=(), out=None, parallel=None,
                 environ=None) -> dict:
    """Merge the configuration layers and validate every entry."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    layers: list[dict] = []
    if config_file is not None:
        try:
            data = json.loads(Path(config_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config_file}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("the config file must hold a JSON object")
        data.pop("scenario", None)
        layers.append(data)
    layers.append(dict(_parse_set(s) for s in sets))
    cfg = defaults()
    for layer in layers:
        unknown = sorted(set(layer) - set(PARAMS))
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        cfg.update(layer)
    environ = os.environ if environ is None else environ
    if out is not None:
        cfg["out"] = str(out)
    elif environ.get(OUT_ENV):
        cfg["out"] = environ[OUT_ENV]
    if parallel is not None:
        cfg["parallel"] = parallel
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    cfg["scenario"] = scenario
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    """Cross-field checks and cheap geometry construction, before any solve."""
    if cfg["n_core"] <= cfg["n_clad"]:
        raise ConfigError("n_core must exceed n_clad")
    try:
        bpm_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    s = cfg["scenario"]
    try:
        if s == "gate":
            parse_state(cfg["state"])
        elif s == "not-gate":
            build_phase_shifter_mzi(delta_n=cfg["delta_n"] or 0.0, **mzi_geometry(cfg))
        elif s == "dc-verify":
            build_directional_coupler(**coupler_geometry(cfg))
        elif s == "dc-design":
            if (cfg["kappa0"] is None) != (cfg["kappa1"] is None):
                raise ConfigError("give both kappa0 and kappa1, or neither")
        elif s == "cnot":
            if cfg["cnot_far_gap"] <= 2.0:
                raise ConfigError("cnot_far_gap must leave the guides decoupled (> 2 um)")
        elif s == "sweep":
            sweep_values(cfg)
            if cfg["sweep_param"] not in PARAMS or cfg["sweep_param"] in (
                    "out", "parallel", "seed") or cfg["sweep_param"].startswith("sweep_"):
                raise ConfigError(f"cannot sweep {cfg['sweep_param']!r}")
            for v in sweep_values(cfg)[:1]:
                validate({**cfg, "scenario": cfg["sweep_scenario"],
                          cfg["sweep_param"]: _coerce(cfg["sweep_param"], v)})
    except GeometryError as exc:
        raise ConfigError(f"geometry: {exc}") from None


def bpm_config(cfg: dict) -> BpmConfig:
    return BpmConfig(dz=cfg["dz"], dx=cfg["dx"], scheme=cfg["scheme"],
                     snapshot_stride=cfg["snapshot_stride"],
                     absorber_width=cfg["absorber_width"],
                     absorber_strength=cfg["absorber_strength"])


def mzi_geometry(cfg: dict) -> dict:
    return dict(arm_separation=cfg["arm_separation"], arm_length=cfg["arm_length"],
                shifter_length=cfg["shifter_length"], width=cfg["width"],
                arm_width=cfg["arm_width"], slope=cfg["slope"],
                lead_length=cfg["mzi_lead_length"], n_core=cfg["n_core"],
                n_clad=cfg["n_clad"], wavelength=cfg["wavelength"])


def coupler_geometry(cfg: dict) -> dict:
    return dict(gap=cfg["gap"], parallel_length=cfg["parallel_length"], slope=cfg["slope"],
                width=cfg["width"], far_gap=cfg["far_gap"], lead_length=cfg["dc_lead_length"],
                n_core=cfg["n_core"], n_clad=cfg["n_clad"], wavelength=cfg["wavelength"])


def cnot_geometry(cfg: dict) -> dict:
    return dict(far_gap=cfg["cnot_far_gap"], n=cfg["cnot_separator_n"], kerr_n2=cfg["kerr_n2"],
                slope=cfg["slope"], arm_offset=cfg["arm_offset"],
                lead_length=cfg["cnot_lead_length"], total_length=cfg["total_length"],
                n_core=cfg["n_core"], n_clad=cfg["n_clad"], width=cfg["width"],
                wavelength=cfg["wavelength"])


_NAMED_STATES = {"0": (1, 0), "1": (0, 1), "+": (1, 1), "-": (1, -1),
                 "+i": (1, 1j), "-i": (1, -1j)}


def parse_state(text: str) -> QubitState:
    if text in _NAMED_STATES:
        v = np.array(_NAMED_STATES[text], dtype=complex)
    else:
        try:
            v = np.array([complex(p.replace(" ", "")) for p in text.split(",")])
        except ValueError:
            raise ConfigError(f"cannot parse state {text!r}") from None
        if v.shape != (2,) or not np.linalg.norm(v) > 0:
            raise ConfigError(f"state {text!r} needs two amplitudes, not both zero")
    return QubitState.from_vector(v / np.linalg.norm(v))


def sweep_values(cfg: dict) -> list:
    if cfg["sweep_values"] is not None:
        values = list(cfg["sweep_values"])
    elif None not in (cfg["sweep_start"], cfg["sweep_stop"], cfg["sweep_points"]):
        values = np.linspace(cfg["sweep_start"], cfg["sweep_stop"], cfg["sweep_points"]).tolist()
    else:
        raise ConfigError("a sweep needs sweep_values or sweep_start/sweep_stop/sweep_points")
    if not 1 <= len(values) <= MAX_SWEEP_POINTS:
        raise ConfigError(f"a sweep takes 1 to {MAX_SWEEP_POINTS} points, got {len(values)}")
    return values


# --- reports --------------------------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    config: dict
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)      # name -> passed
    files: list = field(default_factory=list)
    complete: bool = False
    failed_stage: str | None = None
    error: str | None = None
    duration_s: float = 0.0
    exit_code: int = EXIT_OK

    @property
    def passed(self) -> bool:
        return self.complete and all(self.checks.values())

    def to_dict(self) -> dict:
        return clean({"scenario": self.scenario, "config": self.config, "metrics": self.metrics,
                      "checks": self.checks, "passed": self.passed, "files": self.files,
                      "complete": self.complete, "failed_stage": self.failed_stage,
                      "error": self.error, "exit_code": self.exit_code,
                      "duration_s": self.duration_s})


def clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(clean(data), indent=2, sort_keys=True) + "\n")


class _Run:
    """Bookkeeping for one scenario: stage names, emitted files, checks."""

    def __init__(self, report: RunReport, out: Path):
        self.report, self.out, self.stage = report, out, "setup"

    @contextmanager
    def step(self, name: str):
        self.stage = name
        log.info("[%s] %s", self.report.scenario, name)
        yield

    def path(self, name: str) -> Path:
        if name not in self.report.files:
            self.report.files.append(name)
        return self.out / name

    def check(self, name: str, ok) -> None:
        self.report.checks[name] = bool(ok)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_mode_powers(path: Path, runs: dict[str, FieldTrajectory]) -> None:
    rows = []
    for label, traj in runs.items():
        rig = traj.rigorous if traj.rigorous is not None else np.ones(len(traj.z), bool)
        for (ch, guide), series in sorted(traj.amplitudes.items()):
            for i, z in enumerate(traj.z):
                c0, c1 = series[i]
                if np.isfinite(c0):
                    rows.append([label, ch, guide, float(z), float(c0.real), float(c0.imag),
                                 float(c1.real), float(c1.imag), float(abs(c0) ** 2),
                                 float(abs(c1) ** 2), int(bool(rig[i]))])
    _write_rows(path, ["run", "channel", "guide", "z", "c0_re", "c0_im", "c1_re", "c1_im",
                       "p0", "p1", "rigorous"], rows)


def _write_mode_profiles(path: Path, modes, index) -> None:
    x = modes.grid.x
    cols = [m.profile.samples.real for m in modes]
    _write_rows(path, ["x", "n"] + [f"psi{m.order}" for m in modes],
                [[float(xi), float(ni), *(float(c[i]) for c in cols)]
                 for i, (xi, ni) in enumerate(zip(x, index))])


def _plot_script(files: list[str]) -> str:
    lines = ['# gnuplot script over the emitted CSV files', 'set datafile separator ","',
             'set terminal pngcairo size 1000,600']
    for name in files:
        if name.startswith("trajectory") and name.endswith(".csv"):
            stem = name[:-4]
            lines += [f'set output "{stem}.png"', 'set xlabel "z (um)"', 'set ylabel "x (um)"',
                      'set cblabel "|E|^2"',
                      f'plot "{name}" skip 1 using 1:2:5 with image notitle']
    if "modes.csv" in files:
        lines += ['set output "modes.png"', 'set xlabel "x (um)"', 'set ylabel "field"',
                  'set key autotitle columnhead',
                  'plot for [c=3:*] "modes.csv" using 1:c with lines']
    if "coupler_powers.csv" in files:
        lines += ['set output "coupler_powers.png"', 'set xlabel "z (um)"',
                  'set ylabel "guide-2 power"', 'set key autotitle columnhead',
                  'plot for [c=2:5] "coupler_powers.csv" using 1:c with lines']
    return "\n".join(lines) + "\n"


# --- scenarios ------------------------------------------------------------------------

def _scenario_modes(cfg: dict, run: _Run) -> None:
    with run.step("mode solve"):
        geom = SlabGeometry.symmetric(cfg["n_core"], cfg["n_clad"], cfg["width"],
                                      cfg["wavelength"])
        hw = cfg["mode_half_width"]
        grid = TransverseGrid(-hw, hw, cfg["mode_points"])
        modes = solve_te_modes(geom, grid)
    gram = np.array([[overlap(a.profile, b.profile) for b in modes] for a in modes])
    ortho = float(np.abs(gram - np.eye(len(modes))).max())
    table = [{"index": m.order, "n_eff": m.n_eff, "beta": m.beta, "confinement": m.confinement,
              "near_cutoff": m.near_cutoff} for m in modes]
    print(f"{'mode':>4} {'n_eff':>18} {'beta (1/um)':>18} {'confinement':>12}")
    for r in table:
        print(f"{r['index']:>4} {r['n_eff']:>18.12f} {r['beta']:>18.12f} {r['confinement']:>12.6f}")
    run.report.metrics.update(mode_count=len(modes), modes=table, v_number=geom.v_number(),
                              orthonormality_error=ortho)
    with run.step("write modes"):
        _write_mode_profiles(run.path("modes.csv"), modes, geom.index(grid.x))
    run.check("mode count matches the closed-form count", len(modes) == mode_count_oracle(geom))
    run.check("effective indices between cladding and core",
              all(cfg["n_clad"] < m.n_eff < cfg["n_core"] for m in modes))
    run.check("orthonormality error below 1e-8", ortho < 1e-8)


def _scenario_gate(cfg: dict, run: _Run) -> None:
    u = mzi_unitary(cfg["phi"])
    state = parse_state(cfg["state"])
    out = apply(u, state)
    m = u.matrix
    print("U =")
    for row in m:
        print("  " + "  ".join(f"{z.real:+.6f}{z.imag:+.6f}i" for z in row))
    print(f"input  ({state.c0:.6f}, {state.c1:.6f})")
    print(f"output ({out.c0:.6f}, {out.c1:.6f})  populations {out.populations[0]:.6f} "
          f"{out.populations[1]:.6f}")
    run.report.metrics.update(matrix_re=m.real, matrix_im=m.imag,
                              unitarity_defect=u.unitarity_defect(),
                              input=[state.c0, state.c1], output=[out.c0, out.c1],
                              output_populations=out.populations)
    run.check("unitary within 1e-12", u.is_unitary())


def _scenario_not_gate(cfg: dict, run: _Run) -> None:
    config = bpm_config(cfg)
    with run.step("calibration and propagation"):
        res = scenarios.run_not_gate(config, cfg["delta_n"], cfg["target_phase"],
                                     cfg["estimate_gate"], cfg["both_inputs"],
                                     **mzi_geometry(cfg))
    met = run.report.metrics
    met.update(delta_n=res.delta_n, reference_delta_n=0.0008, n_ref=res.n_ref,
               conversion_0_to_1=res.conversions[0])
    if len(res.conversions) > 1:
        met["conversion_1_to_0"] = res.conversions[1]
    if res.calibration is not None:
        c = res.calibration
        met["calibration"] = {"phase": c.phase, "efficiency": c.efficiency,
                              "trace": [list(t) for t in c.trace]}
    if res.estimate is not None:
        met["gate"] = res.estimate.to_dict()
        met["gate_fidelity"] = res.estimate.fidelity
        met["gate_distance"] = res.estimate.distance
    met["runs"] = [r.summary() for r in res.runs]
    with run.step("write trajectories"):
        stride = cfg["csv_x_stride"]
        res.runs[0].write_csv(run.path("trajectory.csv"), x_stride=stride)
        if len(res.runs) > 1:
            res.runs[1].write_csv(run.path("trajectory_1.csv"), x_stride=stride)
        _write_mode_powers(run.path("mode_powers.csv"),
                           {f"input{j}": r for j, r in enumerate(res.runs)})
        out = res.runs[0].grid
        modes = local_modes(res.layout, "stem", res.layout.length, out)
        _write_mode_profiles(run.path("modes.csv"), modes,
                             res.layout.index(out.x, res.layout.length))
        res.layout.save(run.path("layout.json"))
    if res.calibration is not None:
        run.check("calibrated delta_n within [4e-4, 1.2e-3]", 4e-4 <= res.delta_n <= 1.2e-3)
    for j, c in enumerate(res.conversions):
        run.check(f"|{j}> -> |{1 - j}> conversion above 0.95", c > 0.95)
    if res.estimate is not None:
        run.check("gate fidelity above 0.95", res.estimate.fidelity > 0.95)


def _scenario_dc_design(cfg: dict, run: _Run) -> None:
    met = run.report.metrics
    with run.step("coupling coefficients"):
        if cfg["kappa0"] is None:
            k0, k1 = (supermode_kappa(cfg["n_core"], cfg["n_clad"], cfg["width"], cfg["gap"],
                                      cfg["wavelength"], j) for j in (0, 1))
        else:
            k0, k1 = cfg["kappa0"], cfg["kappa1"]
    with run.step("length design"):
        d = design_mode_separator(k0, k1, cfg["l_max"], cfg["phase_tol"])
    met["length_design"] = {"feasible": d.feasible, "length": d.length, "m": d.m, "n": d.n,
                            "residual": d.residual, "kappa0": k0, "kappa1": k1,
                            "routing": d.routing() if d.feasible else None}
    if cfg["kappa0"] is None:
        with run.step("geometry design"):
            g = design_separator_geometry(cfg["n_core"], cfg["n_clad"], cfg["width"],
                                          cfg["wavelength"], cfg["slope"], cfg["far_gap"],
                                          n=cfg["separator_n"])
        met["geometry_design"] = {"gap": g.gap, "parallel_length": g.parallel_length,
                                  "phase0": g.phase0, "phase1": g.phase1, "m": g.m, "n": g.n,
                                  "residual": g.residual,
                                  "transition_length": g.geometry.transition_length}
    print(json.dumps(clean(met), indent=2, sort_keys=True))
    if cfg["kappa0"] is None:
        # at a fixed gap the two conditions rarely meet; the gap is the free knob
        run.check("separator geometry found",
                  d.feasible or met["geometry_design"]["residual"] < cfg["phase_tol"])
    else:
        run.check("separator length found", d.feasible)


def _scenario_dc_verify(cfg: dict, run: _Run) -> None:
    config = bpm_config(cfg)
    met = run.report.metrics
    with run.step("coupler propagation"):
        res = scenarios.run_coupler(config, **coupler_geometry(cfg))
    met.update(max_error_mode0=res.errors[0], max_error_mode1=res.errors[1],
               cross_mode0=res.bpm_cross[0][-1], cross_mode1=res.bpm_cross[1][-1],
               cmt_cross_mode0=res.cmt_cross[0][-1], cmt_cross_mode1=res.cmt_cross[1][-1])
    with run.step("write trajectories"):
        _write_rows(run.path("coupler_powers.csv"),
                    ["z", "bpm_cross0", "cmt_cross0", "bpm_cross1", "cmt_cross1",
                     "bpm_bar0", "bpm_bar1"],
                    zip(res.z, res.bpm_cross[0], res.cmt_cross[0], res.bpm_cross[1],
                        res.cmt_cross[1], res.bpm_bar[0], res.bpm_bar[1]))
        res.runs[0].write_csv(run.path("trajectory.csv"), x_stride=cfg["csv_x_stride"])
        res.runs[1].write_csv(run.path("trajectory_1.csv"), x_stride=cfg["csv_x_stride"])
    for j in (0, 1):
        run.check(f"mode {j} transfer within 0.05 of coupled-mode theory", res.errors[j] < 0.05)
    if cfg["check_separator"]:
        with run.step("separator design and propagation"):
            sep = scenarios.run_separator(config, cfg["far_gap"], cfg["slope"],
                                          cfg["separator_n"], cfg["n_core"], cfg["n_clad"],
                                          cfg["width"], cfg["wavelength"], cfg["dc_lead_length"])
        met["separator"] = {"gap": sep.design.gap, "parallel_length": sep.design.parallel_length,
                            "mode0_bar": sep.mode0_bar, "mode1_cross": sep.mode1_cross}
        with run.step("write separator trajectories"):
            _write_mode_powers(run.path("separator_mode_powers.csv"),
                               {f"input{j}": r for j, r in enumerate(sep.runs)})
        run.check("separator keeps mode 0 in guide 1 above 0.9", sep.mode0_bar > 0.9)
        run.check("separator crosses mode 1 to guide 2 above 0.9", sep.mode1_cross > 0.9)


def _scenario_cnot(cfg: dict, run: _Run) -> None:
    config = bpm_config(cfg)
    met = run.report.metrics
    with run.step("calibration and truth table"):
        res = scenarios.run_cnot(config, cfg["control_power"], cfg["target_power"],
                                 cfg["check_linear"], **cnot_geometry(cfg))
    met["control_power"] = res.control_power
    if res.calibration is not None:
        c = res.calibration
        met["calibration"] = {"feasible": c.feasible, "phase": c.phase, "note": c.note,
                              "peak_intensity": c.peak_intensity,
                              "trace": [list(t) for t in c.trace]}
        run.check("control power calibration feasible", c.feasible)
        if not c.feasible:
            return
    met["truth_table"] = [c.to_dict() for c in res.cases]
    met["min_fidelity"] = res.min_fidelity
    met["population_matrix"] = scenarios.truth_table_matrix(res.cases)
    if res.linear_cases:
        met["linear_cases"] = [c.to_dict() for c in res.linear_cases]
    for c in res.cases:
        print(f"|{c.control_in}{c.target_in}> -> control {c.control_out.populations[1]:.4f} "
              f"target {c.target_out.populations[1]:.4f}  fidelity {c.fidelity:.4f}")
    with run.step("write trajectories"):
        case = next(c for c in res.cases if (c.control_in, c.target_in) == (1, 0))
        case.trajectory.write_csv(run.path("trajectory.csv"), channel=1,
                                  x_stride=cfg["csv_x_stride"])
        case.trajectory.write_csv(run.path("trajectory_control.csv"), channel=0,
                                  x_stride=cfg["csv_x_stride"])
        _write_mode_powers(run.path("mode_powers.csv"),
                           {f"case{c.control_in}{c.target_in}": c.trajectory for c in res.cases})
        res.layout.save(run.path("layout.json"))
    run.check("truth table fidelity above 0.9", res.min_fidelity > 0.9)
    for c in res.cases:
        if c.control_in == 0:
            run.check(f"control |0>, target |{c.target_in}> unchanged above 0.99",
                      c.fidelity > 0.99)
    for c in res.linear_cases:
        run.check(f"n2 = 0, target |{c.target_in}> unchanged above 0.99",
                  c.target_out.populations[c.target_in] > 0.99)


_RUNNERS = {"modes": _scenario_modes, "gate": _scenario_gate, "not-gate": _scenario_not_gate,
            "dc-design": _scenario_dc_design, "dc-verify": _scenario_dc_verify,
            "cnot": _scenario_cnot}


def output_dir(cfg: dict) -> Path:
    return Path(cfg["out"] if cfg["out"] is not None else Path("wgqubit_out") / cfg["scenario"])


def run_scenario(cfg: dict) -> RunReport:
    """Run one validated scenario and write its files and ``report.json``."""
    if cfg["scenario"] == "sweep":
        return run_sweep(cfg)
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg["scenario"], dict(cfg))
    run = _Run(report, out)
    t0 = time.perf_counter()
    try:
        _RUNNERS[cfg["scenario"]](cfg, run)
        report.complete = True
        report.exit_code = EXIT_OK if report.passed else EXIT_FAILED
    except GeometryError as exc:
        report.failed_stage, report.error = run.stage, f"{type(exc).__name__}: {exc}"
        report.exit_code = EXIT_CONFIG
    except NUMERICAL_ERRORS + (ValueError,) as exc:
        report.failed_stage, report.error = run.stage, f"{type(exc).__name__}: {exc}"
        report.exit_code = EXIT_NUMERICAL
    report.duration_s = round(time.perf_counter() - t0, 3)
    if run.stage and report.files:
        _write_plot(run)
    dump_json(out / "report.json", report.to_dict())
    return report


def _write_plot(run: _Run) -> None:
    script = _plot_script(list(run.report.files))
    run.path("plot.gp").write_text(script)


# --- sweeps ---------------------------------------------------------------------------

def _sweep_point(args) -> tuple[int, dict]:
    index, cfg = args
    try:
        report = run_scenario(cfg)
        return index, report.to_dict()
    except Exception as exc:           # one bad point must not stop the sweep
        return index, {"complete": False, "error": f"{type(exc).__name__}: {exc}",
                       "exit_code": EXIT_NUMERICAL, "metrics": {}, "checks": {},
                       "passed": False, "failed_stage": "worker"}


def _scalars(metrics: dict) -> dict:
    return {k: v for k, v in metrics.items()
            if isinstance(v, (int, float, bool)) or v is None}


def run_sweep(cfg: dict) -> RunReport:
    """Independent scenario runs over one parameter, aggregated into sweep.csv."""
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport("sweep", dict(cfg))
    t0 = time.perf_counter()
    values = sweep_values(cfg)
    param = cfg["sweep_param"]
    jobs = []
    for i, v in enumerate(values):
        point = {**cfg, "scenario": cfg["sweep_scenario"], param: _coerce(param, v),
                 "out": str(out / "points" / f"{i:04d}")}
        jobs.append((i, point))
    order = list(jobs)
    random.Random(cfg["seed"]).shuffle(order)
    results: dict[int, dict] = {}
    if cfg["parallel"] > 1 and len(jobs) > 1:
        with cf.ProcessPoolExecutor(max_workers=min(cfg["parallel"], len(jobs))) as pool:
            for i, res in pool.map(_sweep_point, order):
                results[i] = res
    else:
        for job in order:
            i, res = _sweep_point(job)
            results[i] = res
    rows = [(i, values[i], results[i]) for i in range(len(values))]
    keys = sorted({k for _, _, r in rows for k in _scalars(clean(r.get("metrics", {})))})
    header = ["index", param, "status", "exit_code", "passed"] + keys
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, v, r in rows:
            status = "ok" if r.get("complete") else f"error: {r.get('error')}"
            m = _scalars(clean(r.get("metrics", {})))
            w.writerow([i, repr(v) if isinstance(v, float) else v, status, r.get("exit_code"),
                        int(bool(r.get("passed")))]
                       + [repr(m[k]) if isinstance(m.get(k), float) else m.get(k, "")
                          for k in keys])
    report.files = ["sweep.csv"] + [f"points/{i:04d}/report.json" for i in range(len(values))]
    report.metrics = {"points": len(values), "param": param, "values": values,
                      "completed": sum(bool(r.get("complete")) for r in results.values()),
                      "passed": sum(bool(r.get("passed")) for r in results.values())}
    report.complete = True
    report.checks["every point completed"] = report.metrics["completed"] == len(values)
    report.exit_code = EXIT_OK if report.passed else EXIT_FAILED
    report.duration_s = round(time.perf_counter() - t0, 3)
    dump_json(out / "report.json", report.to_dict())
    return report


# --- entry point ----------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgqubit",
                                description="Dual-mode waveguide qubit simulator.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="JSON file with configuration overrides")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration entry; repeatable")
    p.add_argument("--parallel", type=int, help="worker processes for sweeps")
    p.add_argument("--list-params", action="store_true", help="print the parameters and exit")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.list_params:
        for k, p in PARAMS.items():
            print(f"{k:20s} {p.kind:6s} {p.default!r:24s} {p.doc}")
        return EXIT_OK
    try:
        cfg = build_config(args.scenario, args.config, args.sets, args.out, args.parallel)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_scenario(cfg)
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if report.error:
        print(f"error in stage '{report.failed_stage}': {report.error}", file=sys.stderr)
        print("outputs are incomplete (report.json has complete = false)", file=sys.stderr)
    print(f"report: {output_dir(cfg) / 'report.json'}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
