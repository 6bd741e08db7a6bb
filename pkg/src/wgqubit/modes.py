"""Guided TE modes of layered slab waveguides.

Propagation constants come from a transfer-matrix dispersion function that
is bracketed on a dense effective-index scan and then refined with a
bracketing root finder.  Profiles are built from the closed-form layer
solutions (cos/sin in guiding layers, exponentials in the claddings) and
sampled on the requested grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .core import ComplexField, TransverseGrid

NEAR_CUTOFF = 1e-9
EDGE_TOLERANCE = 1e-6


class NoGuidedModesError(ValueError):
    """The structure supports no guided mode at this wavelength."""


class WindowError(ValueError):
    """A mode is not negligible at the edge of the sampling window."""


class UnsupportedOracleError(ValueError):
    """The closed-form mode count only applies to symmetric three-layer slabs."""


@dataclass(frozen=True)
class SlabGeometry:
    """Layered index profile n(x) plus free-space wavelength (micrometres).

    ``indices`` lists every layer from left to right; the first and last are
    semi-infinite claddings.  ``thicknesses`` gives the widths of the inner
    layers only.  The inner stack is centred on ``center``.
    """

    indices: tuple[float, ...]
    thicknesses: tuple[float, ...]
    wavelength: float
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(float(n) for n in self.indices))
        object.__setattr__(self, "thicknesses", tuple(float(t) for t in self.thicknesses))
        if len(self.indices) < 3:
            raise ValueError("a slab needs at least three layers")
        if len(self.thicknesses) != len(self.indices) - 2:
            raise ValueError("need one thickness per inner layer")
        if min(self.indices) <= 0 or self.wavelength <= 0:
            raise ValueError("indices and wavelength must be positive")
        if min(self.thicknesses) < 0:
            raise ValueError("layer thicknesses must be non-negative")

    @classmethod
    def symmetric(cls, n_core: float, n_clad: float, width: float,
                  wavelength: float, center: float = 0.0) -> "SlabGeometry":
        return cls((n_clad, n_core, n_clad), (width,), wavelength, center)

    @classmethod
    def coupled_pair(cls, n_core: float, n_clad: float, width: float, gap: float,
                     wavelength: float, center: float = 0.0) -> "SlabGeometry":
        """Two identical cores separated by ``gap`` (edge to edge)."""
        return cls((n_clad, n_core, n_clad, n_core, n_clad),
                   (width, gap, width), wavelength, center)

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def n_clad(self) -> float:
        return max(self.indices[0], self.indices[-1])

    @property
    def n_core(self) -> float:
        return max(self.indices[1:-1])

    @property
    def total_thickness(self) -> float:
        return sum(self.thicknesses)

    @property
    def interfaces(self) -> np.ndarray:
        """x positions of the layer boundaries, left to right."""
        left = self.center - 0.5 * self.total_thickness
        return left + np.concatenate([[0.0], np.cumsum(self.thicknesses)])

    @property
    def core_span(self) -> tuple[float, float]:
        """Extent from the first to the last layer above the cladding index."""
        edges = self.interfaces
        inner = [i for i, n in enumerate(self.indices[1:-1]) if n > self.n_clad]
        return float(edges[inner[0]]), float(edges[inner[-1] + 1])

    @property
    def is_symmetric_three_layer(self) -> bool:
        return len(self.indices) == 3 and self.indices[0] == self.indices[2]

    def v_number(self) -> float:
        """(pi W / lambda) sqrt(n_core^2 - n_clad^2) for a three-layer slab."""
        n_clad, n_core, _ = self.indices
        return np.pi * self.thicknesses[0] / self.wavelength * np.sqrt(
            max(n_core**2 - n_clad**2, 0.0))

    def index(self, x) -> np.ndarray:
        """Point samples of n(x)."""
        x = np.asarray(x, dtype=float)
        layer = np.searchsorted(self.interfaces, x, side="right")
        return np.asarray(self.indices)[layer]

    def index_squared_cells(self, grid: TransverseGrid) -> np.ndarray:
        """n^2 averaged over each grid cell, so interfaces need not sit on nodes."""
        x = grid.x
        half = 0.5 * grid.dx
        lo, hi = x - half, x + half
        n2 = np.full(grid.n_points, self.indices[0] ** 2)
        edges = self.interfaces
        bounds = np.concatenate([[-np.inf], edges, [np.inf]])
        for j, n in enumerate(self.indices):
            a, b = bounds[j], bounds[j + 1]
            frac = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None) / grid.dx
            n2 += frac * (n**2 - self.indices[0] ** 2)
        return n2


@dataclass(frozen=True, eq=False)
class Mode:
    """One guided mode: propagation constant plus sampled, normalized profile."""

    order: int
    beta: float
    n_eff: float
    profile: ComplexField
    confinement: float
    near_cutoff: bool = False

    def evaluate(self, x) -> np.ndarray:
        """Closed-form profile at arbitrary x, with the same scaling as ``profile``."""
        return self._analytic(np.asarray(x, dtype=float))

    _analytic: object = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class ModeSet:
    geometry: SlabGeometry
    grid: TransverseGrid
    modes: tuple[Mode, ...]

    def __len__(self):
        return len(self.modes)

    def __getitem__(self, j) -> Mode:
        return self.modes[j]

    def __iter__(self):
        return iter(self.modes)

    @property
    def betas(self) -> np.ndarray:
        return np.array([m.beta for m in self.modes])

    @property
    def n_effs(self) -> np.ndarray:
        return np.array([m.n_eff for m in self.modes])


def _layer_matrix(q2: float, d: float) -> np.ndarray:
    """(psi, psi') transfer across a layer where psi'' = q2 psi."""
    if q2 < 0:
        kx = np.sqrt(-q2)
        c, s = np.cos(kx * d), np.sin(kx * d)
        return np.array([[c, s / kx], [-kx * s, c]])
    if q2 > 0:
        g = np.sqrt(q2)
        c, s = np.cosh(g * d), np.sinh(g * d)
        return np.array([[c, s / g], [g * s, c]])
    return np.array([[1.0, d], [0.0, 1.0]])


def _q2(geometry: SlabGeometry, n_eff: float) -> np.ndarray:
    k0 = geometry.k0
    return k0**2 * (n_eff**2 - np.asarray(geometry.indices) ** 2)


def dispersion(geometry: SlabGeometry, n_eff) -> np.ndarray:
    """Mismatch of the right-cladding boundary condition; zero at a guided mode.

    Vectorized over ``n_eff``.  The (psi, psi') vector is rescaled after each
    layer, which changes neither sign nor zeros.
    """
    n_eff = np.asarray(n_eff, dtype=float)
    k0 = geometry.k0
    idx = geometry.indices
    gl = k0 * np.sqrt(np.maximum(n_eff**2 - idx[0] ** 2, 0.0))
    gr = k0 * np.sqrt(np.maximum(n_eff**2 - idx[-1] ** 2, 0.0))
    p, dp = np.ones_like(n_eff), gl.copy()
    for n_j, d in zip(idx[1:-1], geometry.thicknesses):
        q2 = k0**2 * (n_eff**2 - n_j**2)
        osc = q2 < 0
        kx = np.sqrt(np.abs(q2))
        safe = np.where(kx > 0, kx, 1.0)
        c = np.where(osc, np.cos(kx * d), np.cosh(kx * d))
        s_over = np.where(kx > 0, np.where(osc, np.sin(kx * d), np.sinh(kx * d)) / safe, d)
        s_times = np.where(osc, -kx * np.sin(kx * d), kx * np.sinh(kx * d))
        p, dp = c * p + s_over * dp, s_times * p + c * dp
        scale = np.maximum(np.abs(p), np.abs(dp))
        p, dp = p / scale, dp / scale
    return dp + gr * p


def _dispersion_roots(geometry: SlabGeometry, n_scan: int) -> list[float]:
    lo, hi = geometry.n_clad, geometry.n_core
    span = hi - lo
    grid = lo + span * np.linspace(1e-12, 1 - 1e-12, n_scan)[::-1]
    vals = dispersion(geometry, grid)
    roots = []
    for i in range(n_scan - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(grid[i])
        elif a * b < 0:
            roots.append(brentq(lambda n: float(dispersion(geometry, n)),
                                grid[i + 1], grid[i], xtol=1e-14, rtol=1e-15))
    return roots


def _profile_function(geometry: SlabGeometry, n_eff: float):
    """Closed-form (unnormalized) field for a given root of the dispersion relation."""
    q2 = _q2(geometry, n_eff)
    edges = geometry.interfaces
    gl, gr = np.sqrt(q2[0]), np.sqrt(q2[-1])
    starts = [np.array([1.0, gl])]
    for q2_j, d in zip(q2[1:-1], geometry.thicknesses):
        starts.append(_layer_matrix(q2_j, d) @ starts[-1])
    psi_end = starts[-1][0]

    def psi(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        layer = np.searchsorted(edges, x, side="right")
        left = layer == 0
        out[left] = np.exp(gl * (x[left] - edges[0]))
        right = layer == len(edges)
        out[right] = psi_end * np.exp(-gr * (x[right] - edges[-1]))
        for j in range(1, len(edges)):
            sel = layer == j
            if not sel.any():
                continue
            t = x[sel] - edges[j - 1]
            p0, dp0 = starts[j - 1]
            q = q2[j]
            if q < 0:
                kx = np.sqrt(-q)
                out[sel] = p0 * np.cos(kx * t) + dp0 * np.sin(kx * t) / kx
            elif q > 0:
                g = np.sqrt(q)
                out[sel] = p0 * np.cosh(g * t) + dp0 * np.sinh(g * t) / g
            else:
                out[sel] = p0 + dp0 * t
        return out

    def norm2_exact():
        total = 1.0 / (2 * gl) + psi_end**2 / (2 * gr)
        pieces = []
        for j in range(1, len(edges)):
            val, _ = quad(lambda t: psi(t)[0] ** 2, edges[j - 1], edges[j],
                          epsabs=0, epsrel=1e-13, limit=200)
            pieces.append(val)
        return total + sum(pieces), pieces

    return psi, norm2_exact


def solve_te_modes(geometry: SlabGeometry, grid: TransverseGrid, max_modes: int = 10,
                   n_scan: int = 1000, check_window: bool = True) -> ModeSet:
    """Find the guided TE modes of ``geometry`` and sample them on ``grid``.

    Modes are returned with decreasing propagation constant.  Sampled profiles
    are real, normalized under the trapezoidal rule and mutually orthonormal.
    """
    if geometry.n_core <= geometry.n_clad:
        raise NoGuidedModesError("no layer exceeds the cladding index; no guided modes")
    roots = _dispersion_roots(geometry, n_scan)[:max_modes]
    if not roots:
        raise NoGuidedModesError(f"no guided modes at wavelength {geometry.wavelength} um")

    k0 = geometry.k0
    x = grid.x
    w = grid.weights
    core_lo, core_hi = geometry.core_span
    center = 0.5 * (core_lo + core_hi)
    edges = geometry.interfaces
    inner_core = [j + 1 for j, n in enumerate(geometry.indices[1:-1]) if n > geometry.n_clad]

    raw, meta = [], []
    for order, n_eff in enumerate(roots):
        psi, norm2_exact = _profile_function(geometry, n_eff)
        norm2, pieces = norm2_exact()
        core_power = sum(pieces[j - 1] for j in inner_core)
        h = 1e-6
        if order % 2 == 0:
            ref = psi(center)[0]
        else:
            ref = (psi(center + h)[0] - psi(center - h)[0])
        if abs(ref) < 1e-10 * np.abs(psi(x)).max():
            # asymmetric stack: fall back on the leftmost lobe
            samples = psi(x)
            ref = samples[np.argmax(np.abs(samples) > 1e-3 * np.abs(samples).max())]
        sign = 1.0 if ref >= 0 else -1.0
        samples = sign * psi(x)
        near_cutoff = n_eff - geometry.n_clad < NEAR_CUTOFF
        if check_window and not near_cutoff:
            edge = (max(abs(samples[0]), abs(samples[-1])) / np.abs(samples).max()) ** 2
            if edge > EDGE_TOLERANCE:
                raise WindowError(
                    f"mode {order} has relative intensity {edge:.2e} at the window edge; "
                    f"widen the grid beyond [{grid.x_min}, {grid.x_max}] um")
        raw.append(samples)
        meta.append((order, n_eff, sign, psi, core_power / norm2, near_cutoff))

    phi = np.array(raw).T
    gram = phi.T @ (w[:, None] * phi)
    evals, evecs = np.linalg.eigh(gram)
    phi = phi @ (evecs @ np.diag(evals ** -0.5) @ evecs.T)

    modes = []
    for j, (order, n_eff, sign, psi, gamma, near_cutoff) in enumerate(meta):
        scale = phi[:, j] @ (w * raw[j]) / (raw[j] @ (w * raw[j]))

        def analytic(xx, psi=psi, s=sign * scale):
            return s * psi(xx)

        modes.append(Mode(order=order, beta=k0 * n_eff, n_eff=n_eff,
                          profile=ComplexField(grid, phi[:, j]),
                          confinement=gamma, near_cutoff=near_cutoff,
                          _analytic=analytic))
    return ModeSet(geometry, grid, tuple(modes))


def mode_count_oracle(geometry: SlabGeometry) -> int:
    """Closed-form TE mode count 1 + floor(2V/pi) of a symmetric slab."""
    if not geometry.is_symmetric_three_layer:
        raise UnsupportedOracleError("mode-count formula needs a symmetric three-layer slab")
    n_clad, n_core, _ = geometry.indices
    if n_core <= n_clad:
        raise NoGuidedModesError("zero or negative index contrast guides nothing")
    return 1 + int(np.floor(2 * geometry.v_number() / np.pi))


def symmetric_slab_neff(n_core: float, n_clad: float, width: float,
                        wavelength: float, order: int = 0) -> float:
    """Effective index of TE mode ``order`` of a symmetric slab.

    Solves u tan u = w (even) or -u cot u = w (odd) with u^2 + w^2 = V^2 on
    the branch ((order) pi/2, (order+1) pi/2), which stays well conditioned
    for arbitrarily thick slabs.
    """
    if n_core <= n_clad:
        raise NoGuidedModesError("zero or negative index contrast guides nothing")
    k0 = 2 * np.pi / wavelength
    v = 0.5 * k0 * width * np.sqrt(n_core**2 - n_clad**2)
    lo = order * np.pi / 2
    if v <= lo:
        raise NoGuidedModesError(f"TE{order} is below cutoff (V = {v:.4g})")
    hi = min((order + 1) * np.pi / 2, v)

    def f(u):
        w = np.sqrt(max(v**2 - u**2, 0.0))
        if order % 2 == 0:
            return u * np.sin(u) - w * np.cos(u)
        return -u * np.cos(u) - w * np.sin(u)

    u = brentq(f, lo + 1e-15 * max(1.0, hi), hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    kx = 2 * u / width
    return float(np.sqrt(n_core**2 - (kx / k0) ** 2))


@dataclass(frozen=True)
class ChannelGeometry:
    """Rectangular channel cross-section for the effective index method."""

    n_core: float
    n_clad: float
    width: float
    height: float
    wavelength: float


def effective_index_reduce(channel: ChannelGeometry) -> SlabGeometry:
    """Collapse a rectangular channel to an equivalent horizontal slab.

    The vertical slab (core height, TE0) is solved first; its effective index
    becomes the core index of the returned horizontal slab.
    """
    if np.isinf(channel.height):
        n_vertical = channel.n_core
    else:
        n_vertical = symmetric_slab_neff(channel.n_core, channel.n_clad,
                                         channel.height, channel.wavelength)
    return SlabGeometry.symmetric(n_vertical, channel.n_clad, channel.width,
                                  channel.wavelength)


def confinement_in(mode: Mode, spans: Sequence[tuple[float, float]]) -> float:
    """Fraction of the mode's power inside the given x intervals (closed form)."""
    total, _ = quad(lambda t: mode.evaluate(t)[0] ** 2, -np.inf, np.inf, limit=400)
    inside = sum(quad(lambda t: mode.evaluate(t)[0] ** 2, a, b, limit=200)[0]
                 for a, b in spans)
    return inside / total
