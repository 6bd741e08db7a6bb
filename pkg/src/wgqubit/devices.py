"""Piecewise-z refractive-index layouts for slab-waveguide circuits.

A layout is an ordered list of segments.  Inside a segment every core
moves and resizes linearly in z, which covers straight guides, tapers,
Y-branches, coupler transitions and phase or Kerr sections.  Samplers
return n^2 averaged over each transverse grid cell, so slowly drifting
core edges change the index smoothly instead of in grid-sized jumps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import TransverseGrid
from .modes import SlabGeometry

N_CORE = 1.57
N_CLAD = 1.55
WIDTH = 3.0
WAVELENGTH = 1.064
SLOPE = 0.007

SCHEMA = "wgqubit.layout/1"
SEGMENT_KINDS = ("straight", "taper", "y_split", "y_merge", "phase_section",
                 "coupler_transition", "coupler_parallel", "kerr_section")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Core:
    """A guiding core whose centre and width vary linearly across its segment."""

    label: str
    x0: float
    x1: float
    w0: float
    w1: float
    delta_n: float = 0.0
    n2: float = 0.0

    def at(self, t: float) -> tuple[float, float]:
        """Centre and width at fractional position t in [0, 1]."""
        return self.x0 + t * (self.x1 - self.x0), self.w0 + t * (self.w1 - self.w0)

    @classmethod
    def straight(cls, label, x, w, **kw) -> "Core":
        return cls(label, x, x, w, w, **kw)


@dataclass(frozen=True)
class Segment:
    kind: str
    length: float
    cores: tuple[Core, ...]
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise GeometryError(f"unknown segment kind {self.kind!r}")
        if not self.length > 0:
            raise GeometryError(f"segment length must be positive, got {self.length}")
        object.__setattr__(self, "cores", tuple(self.cores))
        for c in self.cores:
            if c.w0 <= 0 or c.w1 <= 0:
                raise GeometryError(f"core {c.label!r} has non-positive width")

    @property
    def is_uniform(self) -> bool:
        return all(c.x0 == c.x1 and c.w0 == c.w1 for c in self.cores)


@dataclass(frozen=True, eq=False)
class DeviceLayout:
    segments: tuple[Segment, ...]
    n_core: float = N_CORE
    n_clad: float = N_CLAD
    wavelength: float = WAVELENGTH
    window: tuple[float, float] = (-15.0, 15.0)
    name: str = "layout"
    continuity_tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "window", tuple(float(w) for w in self.window))
        if not self.segments:
            raise GeometryError("a layout needs at least one segment")
        edges = np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])])
        edges.flags.writeable = False
        object.__setattr__(self, "_edges", edges)
        for i in range(len(self.segments) - 1):
            a = _union(self._intervals(i, 1.0))
            b = _union(self._intervals(i + 1, 0.0))
            if len(a) != len(b) or any(abs(p - q) > self.continuity_tol
                                       for ia, ib in zip(a, b) for p, q in zip(ia, ib)):
                raise GeometryError(
                    f"cores are discontinuous between segments {i} and {i + 1} "
                    f"at z = {edges[i + 1]:.6g} um: {a} vs {b}")
        lo, hi = self.window
        for s in self.segments:
            for c in s.cores:
                for t in (0.0, 1.0):
                    x, w = c.at(t)
                    if x - w / 2 <= lo or x + w / 2 >= hi:
                        raise GeometryError(f"core {c.label!r} leaves the window {self.window}")

    # geometry queries -----------------------------------------------------

    @property
    def z_edges(self) -> np.ndarray:
        return self._edges

    @property
    def length(self) -> float:
        return float(self._edges[-1])

    def segment_index(self, z: float) -> int:
        i = int(np.searchsorted(self._edges, z, side="right")) - 1
        return min(max(i, 0), len(self.segments) - 1)

    def segment_at(self, z: float) -> Segment:
        return self.segments[self.segment_index(z)]

    def _intervals(self, i: int, t: float) -> list[tuple[float, float, float, float, str]]:
        out = []
        for c in self.segments[i].cores:
            x, w = c.at(t)
            out.append((x - w / 2, x + w / 2, self.n_core + c.delta_n, c.n2, c.label))
        return out

    def cores_at(self, z: float) -> list[tuple[str, float, float, float, float]]:
        """(label, centre, width, index, n2) of every core at z."""
        i = self.segment_index(z)
        t = (z - self._edges[i]) / self.segments[i].length
        t = min(max(t, 0.0), 1.0)
        return [(lab, 0.5 * (a + b), b - a, n, n2)
                for a, b, n, n2, lab in self._intervals(i, t)]

    def intervals_at(self, z: float) -> list[tuple[float, float, float, float]]:
        """Disjoint (start, stop, index, n2) pieces; overlapping cores take the larger index."""
        cores = [(x - w / 2, x + w / 2, n, n2) for _, x, w, n, n2 in self.cores_at(z)]
        cuts = sorted({p for a, b, _, _ in cores for p in (a, b)})
        pieces = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            cover = [(n, n2) for ca, cb, n, n2 in cores if ca <= mid <= cb]
            if cover:
                n, n2 = max(cover)
                if pieces and pieces[-1][1] == a and pieces[-1][2:] == (n, n2):
                    pieces[-1] = (pieces[-1][0], b, n, n2)
                else:
                    pieces.append((a, b, n, n2))
        return pieces

    def index(self, x, z: float) -> np.ndarray:
        """Point samples of n(x, z)."""
        x = np.asarray(x, dtype=float)
        n = np.full(x.shape, self.n_clad)
        for a, b, ni, _ in self.intervals_at(z):
            n = np.where((x >= a) & (x < b), ni, n)
        return n

    def kerr(self, x, z: float) -> np.ndarray:
        """Point samples of the Kerr coefficient n2(x, z)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for a, b, _, n2 in self.intervals_at(z):
            out = np.where((x >= a) & (x < b), n2, out)
        return out

    def index_squared(self, grid: TransverseGrid, z: float) -> np.ndarray:
        """Cell-averaged n^2 on ``grid``."""
        n2 = np.full(grid.n_points, self.n_clad**2)
        for a, b, ni, _ in self.intervals_at(z):
            n2 += _coverage(grid, a, b) * (ni**2 - self.n_clad**2)
        return n2

    def kerr_profile(self, grid: TransverseGrid, z: float) -> np.ndarray:
        """Cell-averaged Kerr coefficient on ``grid``."""
        out = np.zeros(grid.n_points)
        for a, b, _, k in self.intervals_at(z):
            if k != 0.0:
                out += _coverage(grid, a, b) * k
        return out

    def has_kerr(self) -> bool:
        return any(c.n2 != 0.0 for s in self.segments for c in s.cores)

    def cross_section(self, z: float) -> SlabGeometry:
        """Layer stack of the cross-section at z, for the local mode solver."""
        pieces = self.intervals_at(z)
        if not pieces:
            raise GeometryError(f"no core at z = {z}")
        indices, thick = [self.n_clad], []
        pos = pieces[0][0]
        for a, b, n, _ in pieces:
            if a > pos:
                indices.append(self.n_clad)
                thick.append(a - pos)
            indices.append(n)
            thick.append(b - a)
            pos = b
        indices.append(self.n_clad)
        centre = 0.5 * (pieces[0][0] + pieces[-1][1])
        return SlabGeometry(tuple(indices), tuple(thick), self.wavelength, centre)

    def grid(self, dx: float) -> TransverseGrid:
        lo, hi = self.window
        n = int(np.ceil((hi - lo) / dx - 1e-9)) + 1
        return TransverseGrid(lo, hi, n)

    def count(self, kind: str) -> int:
        return sum(s.kind == kind for s in self.segments)

    def z_range(self, kind: str, occurrence: int = 0) -> tuple[float, float]:
        """Start and end z of the ``occurrence``-th segment of ``kind``."""
        hits = [i for i, s in enumerate(self.segments) if s.kind == kind]
        i = hits[occurrence]
        return float(self._edges[i]), float(self._edges[i + 1])

    def mirrored(self) -> "DeviceLayout":
        """The same device traversed from its far end: n'(x, z) = n(x, L - z)."""
        segs = tuple(Segment(s.kind, s.length, tuple(_reverse(c) for c in s.cores), s.params)
                     for s in reversed(self.segments))
        return DeviceLayout(segs, self.n_core, self.n_clad, self.wavelength, self.window,
                            self.name + "_mirrored", self.continuity_tol)

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "n_core": self.n_core,
            "n_clad": self.n_clad,
            "wavelength": self.wavelength,
            "window": list(self.window),
            "segments": [
                {"kind": s.kind, "length": s.length, "params": s.params,
                 "cores": [asdict(c) for c in s.cores]}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceLayout":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported layout schema {d.get('schema')!r}; expected {SCHEMA}")
        segments = [Segment(s["kind"], s["length"], tuple(Core(**c) for c in s["cores"]),
                            dict(s.get("params", {})))
                    for s in d["segments"]]
        return cls(tuple(segments), d["n_core"], d["n_clad"], d["wavelength"],
                   tuple(d["window"]), d.get("name", "layout"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DeviceLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _coverage(grid: TransverseGrid, a: float, b: float) -> np.ndarray:
    x = grid.x
    h = 0.5 * grid.dx
    return np.clip(np.minimum(x + h, b) - np.maximum(x - h, a), 0.0, None) / grid.dx


def _union(intervals):
    spans = sorted((a, b) for a, b, *_ in intervals)
    merged = []
    for a, b in spans:
        if merged and a <= merged[-1][1] + 1e-12:
            merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
        else:
            merged.append((a, b))
    return merged


# --- builders ---------------------------------------------------------------------

def build_straight(width: float = WIDTH, length: float = 5000.0, *, center: float = 0.0,
                   n_core: float = N_CORE, n_clad: float = N_CLAD,
                   wavelength: float = WAVELENGTH, window=(-15.0, 15.0)) -> DeviceLayout:
    seg = Segment("straight", length, (Core.straight("guide", center, width),))
    return DeviceLayout((seg,), n_core, n_clad, wavelength, window, name="straight")


def build_homogeneous(length: float, index: float, *, wavelength: float = WAVELENGTH,
                      window=(-40.0, 40.0)) -> DeviceLayout:
    """Uniform medium of the given index (no core)."""
    seg = Segment("straight", length, ())
    return DeviceLayout((seg,), index, index, wavelength, window, name="homogeneous")


def _y_split(stem: Core, x_arm: float, arm_width: float, slope: float,
             labels=("arm_lower", "arm_upper")) -> tuple[float, tuple[Core, Core]]:
    """Two halves of ``stem`` drifting apart to centres stem.x1 -/+ x_arm."""
    x, w = stem.x1, stem.w1
    start = w / 4
    length = (x_arm - start) / slope
    lower = Core(labels[0], x - start, x - x_arm, w / 2, arm_width)
    upper = Core(labels[1], x + start, x + x_arm, w / 2, arm_width)
    return length, (lower, upper)


def _reverse(core: Core) -> Core:
    return Core(core.label, core.x1, core.x0, core.w1, core.w0, core.delta_n, core.n2)


def _check_slope(slope: float) -> None:
    if not 0 < slope <= 0.01:
        raise GeometryError(f"branch slope {slope} is outside (0, 0.01]; not adiabatic")


def build_phase_shifter_mzi(arm_separation: float = 12.0, arm_length: float = 2500.0,
                            delta_n: float = 0.0008, shifter_length: float = 1000.0, *,
                            width: float = WIDTH, arm_width: float = 1.5,
                            slope: float = SLOPE, lead_length: float = 500.0,
                            n_core: float = N_CORE, n_clad: float = N_CLAD,
                            wavelength: float = WAVELENGTH,
                            window=(-20.0, 20.0)) -> DeviceLayout:
    """Dual-mode guide, Y-split into two single-mode arms, index step on the
    lower arm over ``shifter_length`` (centred), Y-merge back to dual-mode.

    A phase delay phi on the lower arm realizes ``mzi_unitary(phi)``.

    ``arm_separation`` is centre to centre.  With the defaults the device spans
    5000 um.
    """
    _check_slope(slope)
    if arm_separation < arm_width:
        raise GeometryError(f"arms overlap: separation {arm_separation} < arm width {arm_width}")
    if shifter_length > arm_length:
        raise GeometryError("phase shifter is longer than the arms")
    stem = Core.straight("stem", 0.0, width)
    y_len, (lo, up) = _y_split(stem, arm_separation / 2, arm_width, slope)
    lower = Core.straight("arm_lower", -arm_separation / 2, arm_width)
    upper = Core.straight("arm_upper", arm_separation / 2, arm_width)
    shifted = Core.straight("arm_lower", -arm_separation / 2, arm_width, delta_n=delta_n)
    pad = 0.5 * (arm_length - shifter_length)
    segs = [Segment("straight", lead_length, (stem,)),
            Segment("y_split", y_len, (lo, up), {"slope": slope})]
    if pad > 0:
        segs.append(Segment("straight", pad, (lower, upper)))
    segs.append(Segment("phase_section", shifter_length, (shifted, upper),
                        {"delta_n": delta_n}))
    if pad > 0:
        segs.append(Segment("straight", pad, (lower, upper)))
    segs += [Segment("y_merge", y_len, (_reverse(lo), _reverse(up)), {"slope": slope}),
             Segment("straight", lead_length, (stem,))]
    return DeviceLayout(tuple(segs), n_core, n_clad, wavelength, window, name="mzi")


def build_directional_coupler(gap: float = 1.2, parallel_length: float = 823.0,
                              slope: float = SLOPE, *, width: float = WIDTH,
                              far_gap: float = 8.0, lead_length: float = 100.0,
                              n_core: float = N_CORE, n_clad: float = N_CLAD,
                              wavelength: float = WAVELENGTH,
                              window=(-25.0, 25.0)) -> DeviceLayout:
    """Two identical guides approaching along linear transitions of the given
    slope (each guide moves by ``slope`` per um), running parallel at edge gap
    ``gap`` for ``parallel_length`` and separating symmetrically.

    ``guide1`` sits at negative x.
    """
    if gap < 0:
        raise GeometryError("gap must be non-negative")
    if slope <= 0:
        raise GeometryError("slope must be positive")
    if far_gap < gap:
        raise GeometryError("far gap must not be smaller than the coupling gap")
    far = 0.5 * (width + far_gap)
    near = 0.5 * (width + gap)
    t_len = (far_gap - gap) / (2 * slope)
    g1 = Core.straight("guide1", -far, width)
    g2 = Core.straight("guide2", far, width)
    segs = [Segment("straight", lead_length, (g1, g2))]
    params = {"gap": gap, "slope": slope, "far_gap": far_gap}
    if t_len > 0:
        segs.append(Segment("coupler_transition", t_len,
                            (Core("guide1", -far, -near, width, width),
                             Core("guide2", far, near, width, width)), params))
    segs.append(Segment("coupler_parallel", parallel_length,
                        (Core.straight("guide1", -near, width),
                         Core.straight("guide2", near, width)), params))
    if t_len > 0:
        segs.append(Segment("coupler_transition", t_len,
                            (Core("guide1", -near, -far, width, width),
                             Core("guide2", near, far, width, width)), params))
    segs.append(Segment("straight", lead_length, (g1, g2)))
    return DeviceLayout(tuple(segs), n_core, n_clad, wavelength, window, name="coupler")


@dataclass(frozen=True)
class CouplerParams:
    gap: float
    parallel_length: float
    slope: float = SLOPE
    far_gap: float = 8.0

    @property
    def transition_length(self) -> float:
        return (self.far_gap - self.gap) / (2 * self.slope)


@dataclass(frozen=True)
class MziParams:
    arm_offset: float = 7.0      # arm centre distance from the target axis
    slope: float = SLOPE
    lead_length: float = 200.0


def build_cnot(dc: CouplerParams, mzi: MziParams = MziParams(), kerr_n2: float = 1e-3, *,
               kerr_length: float | None = None, total_length: float = 10000.0,
               width: float = WIDTH, n_core: float = N_CORE, n_clad: float = N_CLAD,
               wavelength: float = WAVELENGTH, half_window: float = 35.0) -> DeviceLayout:
    """Control-target C-NOT: a target MZI with dual-mode arms, Kerr sections in both
    arms, and two mode-separating couplers that move control TE1 light into the
    upper arm and back.

    The control guide sits above the upper arm.  A mirror-image dummy guide
    below the lower arm keeps the target interferometer exactly balanced when
    the control is dark.  Both couplers share one ``coupler_parallel`` segment
    each (control/upper arm and dummy/lower arm side by side).
    """
    _check_slope(mzi.slope)
    a = mzi.arm_offset
    xc = a + width + dc.far_gap
    shift = 0.5 * (dc.far_gap - dc.gap)
    if a - width / 2 < 1.0:
        raise GeometryError("arm offset too small: the arms would touch")
    stem = Core.straight("target", 0.0, width)
    ctrl = Core.straight("control", xc, width)
    dummy = Core.straight("dummy", -xc, width)
    y_len, (lo, up) = _y_split(stem, a, width, mzi.slope)
    t_len = dc.transition_length
    dc_len = 2 * t_len + dc.parallel_length
    fixed = 2 * mzi.lead_length + 2 * y_len + 2 * dc_len
    middle = total_length - fixed
    if middle <= 0:
        raise GeometryError(f"components need {fixed:.1f} um, more than the {total_length} um budget")
    kerr_length = max(middle - 100.0, 0.5 * middle) if kerr_length is None else kerr_length
    if kerr_length > middle:
        raise GeometryError("Kerr sections are longer than the space between the couplers")
    pad = 0.5 * (middle - kerr_length)

    arm_lo = Core.straight("arm_lower", -a, width)
    arm_up = Core.straight("arm_upper", a, width)
    def coupler(direction):
        p = {"gap": dc.gap, "slope": dc.slope, "far_gap": dc.far_gap}
        s = 1 if direction == "in" else -1
        out0, out1 = (0.0, shift) if s == 1 else (shift, 0.0)
        moving = (Core("dummy", -xc + out0, -xc + out1, width, width),
                  Core("arm_lower", -a - out0, -a - out1, width, width),
                  Core("arm_upper", a + out0, a + out1, width, width),
                  Core("control", xc - out0, xc - out1, width, width))
        return Segment("coupler_transition", t_len, moving, p)

    near = (Core.straight("dummy", -xc + shift, width),
            Core.straight("arm_lower", -a - shift, width),
            Core.straight("arm_upper", a + shift, width),
            Core.straight("control", xc - shift, width))
    dc_segments = [coupler("in"),
                   Segment("coupler_parallel", dc.parallel_length, near,
                           {"gap": dc.gap, "slope": dc.slope, "far_gap": dc.far_gap}),
                   coupler("out")]
    kerr_cores = (dummy, Core.straight("arm_lower", -a, width, n2=kerr_n2),
                  Core.straight("arm_upper", a, width, n2=kerr_n2), ctrl)
    segs = [Segment("straight", mzi.lead_length, (dummy, stem, ctrl)),
            Segment("y_split", y_len, (dummy, lo, up, ctrl), {"slope": mzi.slope}),
            *dc_segments]
    if pad > 0:
        segs.append(Segment("straight", pad, (dummy, arm_lo, arm_up, ctrl)))
    segs.append(Segment("kerr_section", kerr_length, kerr_cores, {"n2": kerr_n2}))
    if pad > 0:
        segs.append(Segment("straight", pad, (dummy, arm_lo, arm_up, ctrl)))
    segs += [*dc_segments,
             Segment("y_merge", y_len, (dummy, _reverse(lo), _reverse(up), ctrl),
                     {"slope": mzi.slope}),
             Segment("straight", mzi.lead_length, (dummy, stem, ctrl))]
    return DeviceLayout(tuple(segs), n_core, n_clad, wavelength,
                        (-half_window, half_window), name="cnot")
