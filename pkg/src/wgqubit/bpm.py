"""Finite-difference beam propagation through a :class:`DeviceLayout`.

The slowly varying envelope u of E = u exp(-i k n_ref z) obeys the paraxial
equation

    2 i k n_ref du/dz = d2u/dx2 + k^2 (n^2(x, z) - n_ref^2) u,

which is marched in z with a fourth-order Pade step (two unitary factors,
each a tridiagonal solve) or plain Crank-Nicolson.  The window edges carry a
polynomial absorbing ramp (negative imaginary part of n^2).  Kerr sections
add n2 (|E_self|^2 + 2 |E_other|^2) to the index, resolved by fixed-point
iteration inside each step.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .core import ComplexField, TransverseGrid, overlap, power
from .devices import DeviceLayout
from .gates import QubitState
from .modes import SlabGeometry, solve_te_modes


class RefinementError(ValueError):
    """The z step is too coarse for the index variation it has to resolve."""


class BpmWindowError(ValueError):
    """The field reached the window edge despite the absorber."""


class ConvergenceError(ArithmeticError):
    """The nonlinear fixed point did not settle within the allowed iterations."""


@dataclass(frozen=True)
class BpmConfig:
    dz: float = 0.5
    dx: float = 0.05
    n_ref: float | None = None
    absorber_width: float = 5.0
    absorber_strength: float = 0.2
    absorber_order: int = 2
    nonlinear_iterations: int = 8
    nonlinear_tol: float = 1e-8
    snapshot_stride: int = 20
    scheme: str = "pade4"
    max_step_phase: float = 0.5
    edge_tolerance: float = 1e-3
    decompose: bool = True

    def __post_init__(self):
        if not self.dz > 0 or not self.dx > 0:
            raise ValueError("dz and dx must be positive")
        if self.absorber_width < 10 * self.dx:
            raise ValueError("absorber must span at least 10 grid cells")
        if self.nonlinear_iterations < 1:
            raise ValueError("nonlinear_iterations must be >= 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")


# --- guide modes used for launching and decomposition ---------------------------------

@lru_cache(maxsize=512)
def guide_modes(width: float, n_core: float, n_clad: float, wavelength: float,
                max_modes: int = 2):
    """Modes of an isolated symmetric guide centred at x = 0 (closed-form profiles)."""
    half = 0.5 * width + 40.0
    grid = TransverseGrid.from_spacing(half, 0.02)
    geom = SlabGeometry.symmetric(n_core, n_clad, width, wavelength)
    return solve_te_modes(geom, grid, max_modes=max_modes, check_window=False)


def sampled_guide_mode(grid: TransverseGrid, center: float, width: float, order: int,
                       n_core: float, n_clad: float, wavelength: float):
    """(beta, ComplexField) of mode ``order`` of a guide centred at ``center``."""
    ms = guide_modes(round(width, 9), n_core, n_clad, wavelength)
    if order >= len(ms):
        return None
    m = ms[order]
    samples = m.evaluate(grid.x - center)
    f = ComplexField(grid, samples)
    return m.beta, f / np.sqrt(power(f))


def mode_launch(layout: DeviceLayout, guide: str, state: QubitState, grid: TransverseGrid,
                launch_power: float = 1.0) -> ComplexField:
    """c0 TE0 + c1 TE1 of the named guide at z = 0, scaled to ``launch_power``."""
    for label, x, w, n, _ in layout.cores_at(0.0):
        if label == guide:
            break
    else:
        raise KeyError(f"no guide named {guide!r} at z = 0")
    out = ComplexField.zeros(grid)
    for j, c in enumerate((state.c0, state.c1)):
        if c == 0:
            continue
        hit = sampled_guide_mode(grid, x, w, j, n, layout.n_clad, layout.wavelength)
        if hit is None:
            raise ValueError(f"guide {guide!r} does not support TE{j}")
        out = out + hit[1] * c
    return out * np.sqrt(launch_power / max(state.norm**2, 1e-300))


def reference_index(layout: DeviceLayout, launch: ComplexField) -> float:
    """Power-weighted mean effective index of the guided content of ``launch``."""
    grid = launch.grid
    weights, indices = [], []
    for label, x, w, n, _ in layout.cores_at(0.0):
        for j in range(2):
            hit = sampled_guide_mode(grid, x, w, j, n, layout.n_clad, layout.wavelength)
            if hit is None:
                continue
            beta, f = hit
            weights.append(abs(overlap(f, launch)) ** 2)
            indices.append(beta / (2 * np.pi / layout.wavelength))
    total = power(launch)
    if total == 0:
        raise ValueError("cannot choose a reference index for a zero launch")
    if weights and sum(weights) > 0.5 * total:
        return float(np.dot(weights, indices) / sum(weights))
    n2 = layout.index_squared(grid, 0.0)
    return float(np.sqrt(np.sum(grid.weights * launch.intensity * n2) / total))


# --- trajectory -----------------------------------------------------------------------

@dataclass(eq=False)
class FieldTrajectory:
    """Snapshots and bookkeeping of one propagation run (one or more channels)."""

    grid: TransverseGrid
    wavelength: float
    n_refs: tuple[float, ...]
    z: np.ndarray                       # snapshot positions
    envelopes: np.ndarray               # (channels, snapshots, points)
    step_z: np.ndarray                  # every step
    step_power: np.ndarray              # (channels, steps + 1)
    amplitudes: dict = field(default_factory=dict)   # (channel, guide) -> (snapshots, 2)
    rigorous: np.ndarray | None = None  # snapshot flags: uniform segment or not
    layout_name: str = ""

    @property
    def channels(self) -> int:
        return self.envelopes.shape[0]

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    def field(self, snapshot: int = -1, channel: int = 0) -> ComplexField:
        """Full field E = u exp(-i k n_ref z) at a snapshot."""
        z = self.z[snapshot]
        carrier = np.exp(-1j * self.k0 * self.n_refs[channel] * z)
        return ComplexField(self.grid, self.envelopes[channel, snapshot] * carrier)

    def final_field(self, channel: int = 0) -> ComplexField:
        return self.field(-1, channel)

    def snapshot_index(self, z: float) -> int:
        return int(np.argmin(np.abs(self.z - z)))

    def power_series(self, channel: int = 0) -> tuple[np.ndarray, np.ndarray]:
        return self.step_z, self.step_power[channel]

    def mode_series(self, guide: str, channel: int = 0) -> np.ndarray:
        """Co-rotating (C0, C1) of ``guide`` at every snapshot; NaN where absent."""
        return self.amplitudes[(channel, guide)]

    def write_csv(self, path, channel: int = 0, x_stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "x", "re", "im", "intensity"])
            x = self.grid.x[::x_stride]
            for i, z in enumerate(self.z):
                e = self.field(i, channel).samples[::x_stride]
                for xi, ei in zip(x, e):
                    w.writerow([repr(float(z)), repr(float(xi)), repr(float(ei.real)),
                                repr(float(ei.imag)), repr(float(abs(ei) ** 2))])

    def summary(self) -> dict:
        out = {"z_end": float(self.z[-1]), "n_refs": list(self.n_refs),
               "final_power": [float(p[-1]) for p in self.step_power],
               "modes": {}}
        for (ch, guide), series in sorted(self.amplitudes.items()):
            c = series[-1]
            if np.all(np.isfinite(c)):
                out["modes"][f"{ch}:{guide}"] = {
                    "c0": [float(c[0].real), float(c[0].imag)],
                    "c1": [float(c[1].real), float(c[1].imag)],
                    "p0": float(abs(c[0]) ** 2), "p1": float(abs(c[1]) ** 2)}
        return out

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


# --- stepping machinery ---------------------------------------------------------------

def absorber_profile(grid: TransverseGrid, width: float, strength: float,
                     order: int = 2) -> np.ndarray:
    """Imaginary n^2 loss: polynomial ramp from the inner absorber edge to the window edge."""
    x = grid.x
    depth = np.maximum(np.maximum(grid.x_min + width - x, x - (grid.x_max - width)), 0.0)
    return strength * (depth / width) ** order


def _cos_sin(q, length):
    """cos(sqrt(q) l) and sin(sqrt(q) l)/sqrt(q), valid for either sign of q."""
    r = np.sqrt(np.asarray(q, dtype=complex)) * length
    return np.cos(r).real, (length * np.sinc(r / np.pi)).real


def transverse_operator(pieces, n_clad: float, grid: TransverseGrid, k0: float,
                        n_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric tridiagonal (diag, off) approximating dx * (d2/dx2 + k^2 (n^2 - n_ref^2)).

    Each cell contributes through its exact transfer matrix for the piecewise
    constant index, so a field with beta = k n_ref that solves the continuous
    problem is annihilated exactly, wherever the interfaces fall.
    """
    x, h = grid.x, grid.dx
    lam = (k0 * n_ref) ** 2
    mid = x[:-1] + 0.5 * h
    n2 = np.full(mid.shape, n_clad**2)
    for a, b, n, _ in pieces:
        n2[(mid >= a) & (mid < b)] = n**2
    c, s = _cos_sin(k0**2 * n2 - lam, h)
    t11, t12, t22 = c, s, c.copy()
    breaks = sorted({p for a, b, _, _ in pieces for p in (a, b)})
    tol = 1e-12 * h
    cells = {}
    for e in breaks:
        j = int(np.floor((e - x[0]) / h))
        if 0 <= j < len(mid) and x[j] + tol < e < x[j + 1] - tol:
            cells.setdefault(j, []).append(e)
    for j, inner in cells.items():
        pts = [x[j], *sorted(inner), x[j + 1]]
        m = np.eye(2)
        for a, b in zip(pts[:-1], pts[1:]):
            centre = 0.5 * (a + b)
            nn = n_clad
            for pa, pb, n, _ in pieces:
                if pa <= centre < pb:
                    nn = n
            q = k0**2 * nn**2 - lam
            cc, ss = _cos_sin(q, b - a)
            m = np.array([[cc, ss], [-q * ss, cc]]) @ m
        t11[j], t12[j], t22[j] = m[0, 0], m[0, 1], m[1, 1]
    off = 1.0 / t12
    diag = np.empty(grid.n_points)
    diag[:-1] = -t11 * off
    diag[1:] -= t22 * off
    diag[0] -= t22[0] * off[0]
    diag[-1] = -t11[-1] * off[-1] - t22[-1] * off[-1]
    return diag, off


def _mass(n: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    return np.full(n, 10.0 * h / 12.0), np.full(n - 1, h / 12.0)


def discrete_power(u: np.ndarray, h: float) -> float:
    """Norm conserved by the stepping scheme (close to the trapezoid power)."""
    md, mo = _mass(len(u), h)
    mu = md * u
    mu[1:] += mo * u[:-1]
    mu[:-1] += mo * u[1:]
    return float(np.real(np.vdot(u, mu)))


_ROOT = -3.0 + 1j * np.sqrt(3.0)
SCHEMES = {
    # e^x ~ prod (1 - x/rb) / (1 + x/ra) over the listed (ra, rb) factors
    "cn": ((-2.0, -2.0),),
    "pade4": ((_ROOT, np.conj(_ROOT)), (np.conj(_ROOT), _ROOT)),
}


class _Stepper:
    """One z step M du/dz = -i/(2 k n_ref) H u as a chain of tridiagonal solves.

    ``cn`` is the Crank-Nicolson (1,1) Pade step; ``pade4`` the (2,2) Pade
    step, split into two conjugate factors that are each unitary when H is
    Hermitian.
    """

    def __init__(self, grid: TransverseGrid, k0: float, n_ref: float, dz: float,
                 scheme: str = "pade4"):
        self.grid = grid
        self.k0 = k0
        self.n_ref = n_ref
        self.g = -1j * dz / (2 * k0 * n_ref)
        self.factors = SCHEMES[scheme]
        self.md, self.mo = _mass(grid.n_points, grid.dx)
        self.ab = np.zeros((3, grid.n_points), dtype=complex)

    def step(self, u: np.ndarray, diag: np.ndarray, off: np.ndarray,
             extra: np.ndarray | None) -> np.ndarray:
        """``extra`` is a complex k^2 delta(n^2) added on the lumped diagonal."""
        d = diag if extra is None else diag + self.grid.dx * extra
        ab = self.ab
        for ra, rb in self.factors:
            b = -self.g / rb
            rhs = (self.md + b * d) * u
            bo = self.mo + b * off
            rhs[1:] += bo * u[:-1]
            rhs[:-1] += bo * u[1:]
            a = self.g / ra
            lo = self.mo + a * off
            ab[0, 1:] = lo
            ab[1] = self.md + a * d
            ab[2, :-1] = lo
            u = solve_banded((1, 1), ab, rhs, check_finite=False)
        return u


@dataclass
class _Channel:
    u: np.ndarray
    n_ref: float
    stepper: _Stepper


def _decompose(layout, grid, z, u, n_ref, k0, cache):
    """Co-rotating modal amplitudes of every guide present at z."""
    out = {}
    for label, x, w, n, _ in layout.cores_at(z):
        key = (round(x, 9), round(w, 9), n)
        if key not in cache:
            cache[key] = [sampled_guide_mode(grid, x, w, j, n, layout.n_clad, layout.wavelength)
                          for j in range(2)]
        amps = np.full(2, np.nan, dtype=complex)
        for j, hit in enumerate(cache[key]):
            if hit is not None:
                beta, f = hit
                amps[j] = overlap(f, ComplexField(grid, u)) * np.exp(1j * (beta - k0 * n_ref) * z)
        out[label] = amps
    return out


def _march(layout: DeviceLayout, launches: Sequence[ComplexField], config: BpmConfig,
           n_refs: Sequence[float | None] | None, nonlinear: bool) -> FieldTrajectory:
    grid = launches[0].grid
    for f in launches:
        if f.grid != grid:
            raise ValueError("all launches must share one grid")
    k0 = 2 * np.pi / layout.wavelength
    dz = config.dz
    n_steps = int(np.ceil(layout.length / dz - 1e-9))
    zs = np.linspace(0.0, layout.length, n_steps + 1)
    dzs = np.diff(zs)
    if np.abs(dzs - dzs[0]).max() > 1e-9 * dz:
        raise RefinementError("non-uniform z stepping")
    dz = float(dzs[0])

    if n_refs is None:
        n_refs = [None] * len(launches)
    channels = []
    for f, nr in zip(launches, n_refs):
        nr = nr if nr is not None else (config.n_ref or reference_index(layout, f))
        if not layout.n_clad - 1e-12 <= nr <= max(layout.n_core, layout.n_clad) + 0.01:
            raise ValueError(f"reference index {nr} is outside the guide's index range")
        channels.append(_Channel(np.array(f.samples), nr, _Stepper(grid, k0, nr, dz, config.scheme)))

    loss = absorber_profile(grid, config.absorber_width, config.absorber_strength,
                            config.absorber_order)
    contrast = layout.n_core**2 - layout.n_clad**2

    snaps_z, snaps, rigorous = [], [], []
    amps: dict = {}
    cache: dict = {}
    step_power = np.empty((len(channels), n_steps + 1))

    def record(i):
        z = zs[i]
        snaps_z.append(z)
        snaps.append([ch.u.copy() for ch in channels])
        seg = layout.segment_at(min(z, layout.length))
        rigorous.append(seg.is_uniform)
        for c_idx, ch in enumerate(channels):
            peak = np.abs(ch.u).max()
            if peak > 0 and max(abs(ch.u[0]), abs(ch.u[-1])) > config.edge_tolerance * peak:
                raise BpmWindowError(
                    f"field at the window edge exceeds {config.edge_tolerance:g} of peak at "
                    f"z = {z:.1f} um; widen the window or strengthen the absorber")
            if config.decompose and layout.segments[0].cores:
                for label, a in _decompose(layout, grid, z, ch.u, ch.n_ref, k0, cache).items():
                    amps.setdefault((c_idx, label), {})[len(snaps_z) - 1] = a

    h = grid.dx
    for c_idx, ch in enumerate(channels):
        step_power[c_idx, 0] = discrete_power(ch.u, h)
    record(0)

    seg_cache: dict = {}
    prev_n2 = None
    absorb = -1j * k0**2 * loss
    for i in range(n_steps):
        zm = 0.5 * (zs[i] + zs[i + 1])
        s_idx = layout.segment_index(zm)
        seg = layout.segments[s_idx]
        if seg.is_uniform and s_idx in seg_cache:
            n2_lin, kerr, ops = seg_cache[s_idx]
        else:
            pieces = layout.intervals_at(zm)
            n2_lin, kerr = layout.index_squared(grid, zm), layout.kerr_profile(grid, zm)
            ops = [transverse_operator(pieces, layout.n_clad, grid, k0, ch.n_ref)
                   for ch in channels]
            if seg.is_uniform:
                seg_cache.clear()
                seg_cache[s_idx] = (n2_lin, kerr, ops)
        if prev_n2 is not n2_lin:
            if prev_n2 is not None and np.abs(n2_lin - prev_n2).max() > 0.5 * contrast + 1e-15 \
                    and layout.z_edges.searchsorted(zm) == layout.z_edges.searchsorted(zm - dz):
                raise RefinementError(
                    f"index changes by more than half the core contrast within one step at "
                    f"z = {zm:.2f} um; reduce dz")
            prev_n2 = n2_lin

        for ch in channels:
            phase = k0 * np.abs(n2_lin - ch.n_ref**2).max() / (2 * ch.n_ref) * dz
            if phase > config.max_step_phase:
                raise RefinementError(
                    f"phase increment {phase:.3f} rad per step exceeds {config.max_step_phase}; "
                    f"reduce dz")

        active = nonlinear and np.any(kerr != 0.0)
        if not active:
            for ch, (d, o) in zip(channels, ops):
                ch.u = ch.stepper.step(ch.u, d, o, absorb)
        else:
            n_lin = np.sqrt(n2_lin)
            start = [ch.u for ch in channels]
            inten0 = [np.abs(u) ** 2 for u in start]
            mid = inten0
            new = None
            change = np.inf
            for _ in range(config.nonlinear_iterations):
                total = sum(mid)
                trial = []
                for c_idx, (ch, (d, o)) in enumerate(zip(channels, ops)):
                    dn = kerr * (mid[c_idx] + 2.0 * (total - mid[c_idx]))
                    extra = absorb + k0**2 * dn * (2.0 * n_lin + dn)
                    trial.append(ch.stepper.step(start[c_idx], d, o, extra))
                if new is not None:
                    change = max(np.linalg.norm(t - p) / max(np.linalg.norm(t), 1e-300)
                                 for t, p in zip(trial, new))
                new = trial
                if change < config.nonlinear_tol:
                    break
                mid = [0.5 * (a + np.abs(t) ** 2) for a, t in zip(inten0, trial)]
            if config.nonlinear_iterations > 1 and change > config.nonlinear_tol:
                raise ConvergenceError(
                    f"nonlinear index did not converge at z = {zs[i + 1]:.2f} um "
                    f"(relative change {change:.2e} after {config.nonlinear_iterations} iterations)")
            for ch, t in zip(channels, new):
                ch.u = t

        for c_idx, ch in enumerate(channels):
            step_power[c_idx, i + 1] = discrete_power(ch.u, h)
        if not np.all(np.isfinite(channels[0].u)):
            raise ArithmeticError(f"non-finite field at step {i + 1}")
        if (i + 1) % config.snapshot_stride == 0 or i + 1 == n_steps:
            record(i + 1)

    n_snap = len(snaps_z)
    envelopes = np.array(snaps).transpose(1, 0, 2)
    amplitudes = {}
    for key, entries in amps.items():
        arr = np.full((n_snap, 2), np.nan, dtype=complex)
        for s, a in entries.items():
            arr[s] = a
        amplitudes[key] = arr
    return FieldTrajectory(grid, layout.wavelength, tuple(ch.n_ref for ch in channels),
                           np.array(snaps_z), envelopes, zs, step_power, amplitudes,
                           np.array(rigorous), layout.name)


def propagate_linear(layout: DeviceLayout, launch: ComplexField, config: BpmConfig = BpmConfig(),
                     n_ref: float | None = None) -> FieldTrajectory:
    """Linear propagation of one launched field through ``layout``."""
    return _march(layout, [launch], config, [n_ref], nonlinear=False)


def propagate_kerr_xpm(layout: DeviceLayout, launches: Sequence[ComplexField],
                       config: BpmConfig = BpmConfig(),
                       n_refs: Sequence[float | None] | None = None) -> FieldTrajectory:
    """Propagate co-travelling channels (e.g. control, target) coupled by Kerr XPM.

    Each channel sees n = n_lin + n2 (|E_self|^2 + 2 sum |E_other|^2) inside
    Kerr sections.  Outside them, or with n2 = 0, each channel follows exactly
    the linear update.
    """
    return _march(layout, list(launches), config, n_refs, nonlinear=True)


def with_dz(config: BpmConfig, dz: float, dx: float | None = None) -> BpmConfig:
    return replace(config, dz=dz, dx=config.dx if dx is None else dx)


# --- calibration ----------------------------------------------------------------------

class CalibrationError(RuntimeError):
    """The calibration target could not be bracketed or the response is not monotone."""

    def __init__(self, message: str, trace: list[tuple[float, float]]):
        super().__init__(message + "; scan: " + ", ".join(f"({a:.6g}, {b:.6g})" for a, b in trace))
        self.trace = trace


@dataclass(frozen=True)
class Calibration:
    feasible: bool
    value: float                    # calibrated delta_n or control power
    phase: float                    # achieved differential phase
    efficiency: float               # |0> -> |1> conversion of the calibrated device
    trace: tuple[tuple[float, float], ...]
    note: str = ""
    peak_intensity: float = float("nan")


def _circular_mean(values: np.ndarray) -> float:
    return float(np.angle(np.sum(np.exp(1j * values))))


def arm_phase_difference(traj: FieldTrajectory, layout: DeviceLayout, kind: str,
                         delayed: str = "arm_lower", other: str = "arm_upper",
                         channel: int = 0, estimate: float = 0.0) -> float:
    """Extra phase delay of arm ``delayed`` over arm ``other`` gained across ``kind``.

    With exp(-i beta z) propagation this is the change of arg(C_other / C_delayed)
    for the arm TE0 amplitudes.

    Phases are averaged over the snapshots of the segments just before and
    after it; the 2 pi ambiguity is resolved towards ``estimate``.
    """
    idx = [i for i, s in enumerate(layout.segments) if s.kind == kind]
    if not idx:
        raise ValueError(f"layout has no {kind!r} segment")
    first, last = idx[0], idx[-1]
    edges = layout.z_edges
    slow = traj.mode_series(delayed, channel)[:, 0]
    ref = traj.mode_series(other, channel)[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.angle(ref / slow)

    def window(seg: int, before: bool) -> np.ndarray:
        a, b = edges[seg], edges[seg + 1]
        pad = 1e-6 * max(b - a, 1.0)
        sel = (traj.z > a + pad) & (traj.z < b - pad)
        sel &= np.isfinite(ratio)
        if layout.segments[seg].is_uniform and sel.any():
            return ratio[sel]
        # non-uniform neighbour: only the snapshot next to the section is usable
        z = edges[seg + 1] if before else edges[seg]
        i = traj.snapshot_index(z)
        return ratio[i:i + 1]

    if first == 0 or last == len(layout.segments) - 1:
        raise ValueError(f"the {kind!r} segment needs arm segments on both sides")
    before = _circular_mean(window(first - 1, True))
    after = _circular_mean(window(last + 1, False))
    d = after - before
    return float(d + 2 * np.pi * np.round((estimate - d) / (2 * np.pi)))


def _bracket_solve(f, lo: float, hi: float, target: float, tol: float, max_eval: int,
                   trace: list) -> tuple[float, float]:
    """Illinois false position with bisection fallback on a monotone f."""
    flo, fhi = f(lo) - target, f(hi) - target
    trace += [(lo, flo + target), (hi, fhi + target)]
    if abs(flo) <= tol:
        return lo, flo + target
    if abs(fhi) <= tol:
        return hi, fhi + target
    if flo * fhi > 0:
        raise CalibrationError(f"target {target:.6g} is not bracketed by [{lo:.6g}, {hi:.6g}]",
                               trace)
    side = 0
    for _ in range(max_eval):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        fx = f(x) - target
        trace.append((x, fx + target))
        vals = sorted(trace)
        ys = [v for _, v in vals]
        if any(b < a for a, b in zip(ys, ys[1:])) and any(b > a for a, b in zip(ys, ys[1:])):
            raise CalibrationError("phase response is not monotone", trace)
        if abs(fx) <= tol:
            return x, fx + target
        if fx * fhi > 0:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
        else:
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
    raise CalibrationError(f"no convergence within {max_eval} evaluations", trace)


def calibrate_phase_shifter(family, target_phase: float, config: BpmConfig = BpmConfig(),
                            bracket: tuple[float, float] = (0.0, 2e-3), tol: float = 1e-3,
                            guide: str = "stem", kind: str = "phase_section",
                            n_ref: float | None = None, max_eval: int = 30) -> Calibration:
    """Find delta_n such that the BPM differential arm phase equals ``target_phase``.

    ``family(delta_n)`` must return the layout.  The |0> launch is used; the
    returned efficiency is its conversion into |1> at the output.
    """
    from .analysis import conversion, local_modes

    cache: dict[float, tuple[float, float]] = {}

    def run(dn: float):
        if dn not in cache:
            lay = family(dn)
            grid = lay.grid(config.dx)
            launch = mode_launch(lay, guide, QubitState.zero(), grid)
            traj = propagate_linear(lay, launch, config, n_ref)
            est = _shift_estimate(lay, kind)
            phase = arm_phase_difference(traj, lay, kind, estimate=est)
            out = local_modes(lay, guide, lay.length, grid)
            cache[dn] = (phase, conversion(traj, out, 1))
        return cache[dn]

    trace: list = []
    dn, phase = _bracket_solve(lambda d: run(d)[0], bracket[0], bracket[1], target_phase, tol,
                               max_eval, trace)
    return Calibration(True, float(dn), float(phase), run(dn)[1], tuple(trace))


def _shift_estimate(layout: DeviceLayout, kind: str) -> float:
    """First-order phase of every index step in ``kind`` segments (mode-solver betas)."""
    from .modes import symmetric_slab_neff

    k0 = 2 * np.pi / layout.wavelength
    total = 0.0
    for s in layout.segments:
        if s.kind != kind:
            continue
        for c in s.cores:
            if c.delta_n:
                w = c.w0
                dn = symmetric_slab_neff(layout.n_core + c.delta_n, layout.n_clad, w,
                                         layout.wavelength, 0)
                n0 = symmetric_slab_neff(layout.n_core, layout.n_clad, w, layout.wavelength, 0)
                total += k0 * (dn - n0) * s.length
    return total


def truncate_after(layout: DeviceLayout, kind: str, extra_segments: int = 1) -> DeviceLayout:
    """Leading part of ``layout`` through the last ``kind`` segment plus a few more."""
    last = max(i for i, s in enumerate(layout.segments) if s.kind == kind)
    stop = min(last + 1 + extra_segments, len(layout.segments))
    return replace(layout, segments=layout.segments[:stop])


def cnot_launches(layout: DeviceLayout, control: QubitState, target: QubitState,
                  grid: TransverseGrid, control_power: float,
                  target_power: float = 1e-6) -> list[ComplexField]:
    """[control, target] channel launches; a dark control is an all-zero field."""
    c = (mode_launch(layout, "control", control, grid, control_power)
         if control_power > 0 and control.norm > 0 else ComplexField.zeros(grid))
    return [c, mode_launch(layout, "target", target, grid, target_power)]


def calibrate_control_power(layout: DeviceLayout, target_phase: float = np.pi,
                            config: BpmConfig = BpmConfig(), tol: float = 1e-2,
                            probe_power: float = 0.1, target_power: float = 1e-6,
                            max_eval: int = 20) -> Calibration:
    """Control TE1 launch power giving a ``target_phase`` XPM delay of the upper target arm.

    Only the part of the C-NOT up to just past the Kerr sections is propagated.
    Without any Kerr coefficient the calibration is reported infeasible.
    """
    if not layout.has_kerr():
        return Calibration(False, float("nan"), 0.0, float("nan"), (),
                           "layout has no Kerr nonlinearity; no control power can shift the phase")
    part = truncate_after(layout, "kerr_section")
    grid = part.grid(config.dx)
    cache: dict[float, float] = {}

    def phase(p: float) -> float:
        if p not in cache:
            launches = cnot_launches(part, QubitState.one(), QubitState.zero(), grid, p,
                                     target_power)
            traj = propagate_kerr_xpm(part, launches, config, _cnot_refs(part))
            est = cache.get("slope", 0.0) * p
            cache[p] = arm_phase_difference(traj, part, "kerr_section", delayed="arm_upper",
                                            other="arm_lower", channel=1, estimate=est)
        return cache[p]

    probe = phase(probe_power)
    if probe <= 0:
        return Calibration(False, float("nan"), probe, float("nan"), ((probe_power, probe),),
                           "control light does not delay the upper arm")
    cache["slope"] = probe / probe_power
    guess = target_phase / cache["slope"]
    trace: list = []
    lo = probe_power if probe < target_phase else 0.5 * guess
    p, ph = _bracket_solve(phase, lo, 1.5 * guess, target_phase, tol, max_eval, trace)
    peak = float(np.max(cnot_launches(part, QubitState.one(), QubitState.zero(), grid, p)[0]
                        .intensity))
    return Calibration(True, float(p), float(ph), float("nan"), tuple(trace),
                       peak_intensity=peak)


def _cnot_refs(layout: DeviceLayout) -> list[float]:
    """Fixed per-channel reference indices for C-NOT runs (control: TE1, target: mode mean)."""
    from .modes import symmetric_slab_neff

    n = [symmetric_slab_neff(layout.n_core, layout.n_clad, w, layout.wavelength, j)
         for w in [c[2] for c in layout.cores_at(0.0) if c[0] == "target"] for j in (0, 1)]
    return [n[1], 0.5 * (n[0] + n[1])]
