"""Coupled-mode theory for dual-mode waveguides.

Covers the general z-integrator for M coupled dual-mode guides, the
closed-form two-guide transfer, overlap-integral coupling coefficients,
and the search for mode-separating coupler lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .core import ComplexField, overlap
from .modes import NoGuidedModesError, SlabGeometry

HERMITIAN_TOL = 1e-10


class StepTooLargeError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class CoupledModeSystem:
    """Propagation constants and coupling matrix of M dual-mode guides.

    ``betas`` has shape (M, 2).  ``kappas`` is indexed by the flattened
    (guide, mode) pair, row-major, so entry [2k + j, 2k' + l] is the
    coefficient coupling mode l of guide k' into mode j of guide k, in rad/um.
    """

    betas: np.ndarray
    kappas: np.ndarray
    z_span: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        betas = np.array(self.betas, dtype=float)
        if betas.ndim == 1:
            betas = betas[:, None]
        kappas = np.array(self.kappas, dtype=complex)
        n = betas.size
        if kappas.shape != (n, n):
            raise ValueError(f"kappas must be {n}x{n} for betas of shape {betas.shape}")
        if np.abs(kappas - kappas.conj().T).max() > HERMITIAN_TOL:
            raise ValueError("coupling matrix is not Hermitian; the model would not conserve power")
        if np.abs(np.diag(kappas).imag).max() > HERMITIAN_TOL:
            raise ValueError("self-coupling terms must be real")
        betas.flags.writeable = False
        kappas.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "kappas", kappas)

    @property
    def guides(self) -> int:
        return self.betas.shape[0]

    @classmethod
    def directional_coupler(cls, beta: float, kappa: float, delta_beta: float = 0.0,
                            z_span=(0.0, 1.0)) -> "CoupledModeSystem":
        """Two single-mode guides with mismatch ``delta_beta`` = beta_1 - beta_2."""
        betas = np.array([[beta + 0.5 * delta_beta], [beta - 0.5 * delta_beta]])
        return cls(betas, np.array([[0.0, kappa], [kappa, 0.0]]), z_span)


@dataclass(frozen=True, eq=False)
class ModeAmplitudes:
    """Complex amplitudes C_j^(k), shape (guides, modes), at position z."""

    values: np.ndarray
    z: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True, eq=False)
class AmplitudeTrajectory:
    z: np.ndarray
    values: np.ndarray  # (steps, guides, modes)

    def __getitem__(self, i) -> ModeAmplitudes:
        return ModeAmplitudes(self.values[i], float(self.z[i]))

    def __len__(self):
        return len(self.z)

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def power_drift(self) -> float:
        total = self.powers.reshape(len(self.z), -1).sum(axis=1)
        return float(np.abs(total - total[0]).max() / total[0])


def coupling_coefficient(mode_a: ComplexField, mode_b: ComplexField,
                         index_perturbation, prefactor: float) -> float:
    """prefactor * integral of conj(a) * dn2 * b over the shared grid.

    ``index_perturbation`` is n^2 of the full structure minus n^2 of the
    guide that ``mode_b`` belongs to, as an array or a ComplexField.
    """
    dn2 = index_perturbation.samples if isinstance(index_perturbation, ComplexField) \
        else np.asarray(index_perturbation)
    if dn2.shape != mode_b.samples.shape:
        raise ValueError("index perturbation is not sampled on the mode grid")
    weighted = ComplexField(mode_b.grid, dn2 * mode_b.samples)
    return prefactor * overlap(mode_a, weighted).real


def scalar_prefactor(beta: float, wavelength: float) -> float:
    """k0^2 / (2 beta): the scalar-wave prefactor giving kappa in rad/um."""
    k0 = 2 * np.pi / wavelength
    return k0**2 / (2 * beta)


def integrate_coupled_modes(system: CoupledModeSystem, initial: ModeAmplitudes,
                            dz: float) -> AmplitudeTrajectory:
    """Fixed-step RK4 over ``system.z_span``.

    Amplitudes are slowly varying: the e^{i(beta_a - beta_b) z} factors
    are evaluated exactly at every stage, so only the coupling is discretized.
    """
    if dz <= 0:
        raise StepTooLargeError("dz must be positive")
    kmax = np.abs(system.kappas).max()
    if kmax * dz >= 0.1:
        raise StepTooLargeError(f"max|kappa| * dz = {kmax * dz:.3g} >= 0.1; reduce dz")
    shape = system.betas.shape
    beta = system.betas.ravel()
    sign = np.sign(beta)
    K = system.kappas
    dbeta = beta[:, None] - beta[None, :]

    def rhs(z, c):
        return -1j * sign * ((K * np.exp(1j * dbeta * z)) @ c)

    z0, z1 = system.z_span
    n_steps = int(np.ceil((z1 - z0) / dz - 1e-9))
    zs = z0 + dz * np.arange(n_steps + 1)
    zs[-1] = z1
    out = np.empty((n_steps + 1, beta.size), dtype=complex)
    c = np.array(initial.values, dtype=complex).ravel()
    if c.size != beta.size:
        raise ValueError("initial amplitudes do not match the system shape")
    out[0] = c
    for i in range(n_steps):
        z, h = zs[i], zs[i + 1] - zs[i]
        k1 = rhs(z, c)
        k2 = rhs(z + h / 2, c + h / 2 * k1)
        k3 = rhs(z + h / 2, c + h / 2 * k2)
        k4 = rhs(z + h, c + h * k3)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(c)):
            raise DivergenceError(f"non-finite amplitudes at step {i + 1} (z = {zs[i + 1]:.6g} um)")
        out[i + 1] = c
    return AmplitudeTrajectory(zs, out.reshape(-1, *shape))


def dc_transfer(kappa: float, length: float, initial) -> np.ndarray:
    """Two-guide exchange for one mode order: rotate (C^(1), C^(2)) by kappa*L."""
    if length < 0:
        raise ValueError("coupler length must be non-negative")
    c, s = np.cos(kappa * length), np.sin(kappa * length)
    t = np.array([[c, -1j * s], [-1j * s, c]])
    return t @ np.asarray(initial, dtype=complex)


@dataclass(frozen=True)
class SeparatorDesign:
    """Coupler length for which TE0 returns to its guide and TE1 crosses over."""

    feasible: bool
    length: float
    m: int
    n: int
    residual: float
    kappa0: float
    kappa1: float

    def routing(self) -> dict:
        """Guide powers for each mode after a coupler of this length."""
        p0 = np.abs(dc_transfer(self.kappa0, self.length, [1, 0])) ** 2
        p1 = np.abs(dc_transfer(self.kappa1, self.length, [1, 0])) ** 2
        return {"mode0_bar": float(p0[0]), "mode1_cross": float(p1[1])}


def _pair_residual(k0, k1, m, n):
    a0, a1 = 2 * np.pi * m, np.pi / 2 + 2 * np.pi * n
    length = (k0 * a0 + k1 * a1) / (k0**2 + k1**2)
    res = max(abs(k0 * length - a0), abs(k1 * length - a1))
    return length, res


def design_mode_separator(kappa0: float, kappa1: float, l_max: float,
                          tol: float = 1e-3) -> SeparatorDesign:
    """Shortest L <= l_max with kappa0 L = 2 pi m and kappa1 L = pi/2 + 2 pi n.

    Each (m, n) pair is scored by the least-squares L that balances both
    phase conditions; a pair is accepted when both residuals are within
    ``tol`` rad.  Without any accepted pair the best near miss is returned
    with ``feasible=False``.
    """
    if kappa0 <= 0 or kappa1 <= 0:
        raise ValueError("coupling coefficients must be positive")
    best = None
    m_max = int(np.floor(kappa0 * l_max / (2 * np.pi) + tol)) + 1
    for m in range(1, m_max + 1):
        centre = (kappa1 * 2 * np.pi * m / kappa0 - np.pi / 2) / (2 * np.pi)
        for n in {max(int(np.floor(centre)), 0), max(int(np.ceil(centre)), 0)}:
            length, res = _pair_residual(kappa0, kappa1, m, n)
            if length > l_max * (1 + 1e-12):
                continue
            cand = (res > tol, length if res <= tol else res, length, m, n, res)
            if best is None or cand[:2] < best[:2]:
                best = cand
    if best is None:
        return SeparatorDesign(False, float("nan"), 0, 0, float("inf"), kappa0, kappa1)
    infeasible, _, length, m, n, res = best
    return SeparatorDesign(not infeasible, float(length), m, n, float(res), kappa0, kappa1)


# --- coupling of two identical slab guides -------------------------------------

def _half_dispersion(n_eff, n_core, n_clad, width, gap, k0, parity):
    """Symmetric-pair supermode condition, integrating out from the mirror plane.

    Vectorized over ``n_eff``.
    """
    n_eff = np.asarray(n_eff, dtype=float)
    g = k0 * np.sqrt(n_eff**2 - n_clad**2)
    kx = k0 * np.sqrt(n_core**2 - n_eff**2)
    d = gap / 2
    if parity == 0:
        p, dp = np.cosh(g * d), g * np.sinh(g * d)
    else:
        p, dp = np.sinh(g * d) / g, np.cosh(g * d)
    c, s = np.cos(kx * width), np.sin(kx * width)
    p, dp = c * p + s / kx * dp, -kx * s * p + c * dp
    return (dp + g * p) / (np.abs(p) + np.abs(dp) / g)


def _class_roots(n_core, n_clad, width, gap, wavelength, parity, n_scan=1000):
    k0 = 2 * np.pi / wavelength
    grid = n_clad + (n_core - n_clad) * np.linspace(1e-12, 1 - 1e-12, n_scan)[::-1]
    f = _half_dispersion(grid, n_core, n_clad, width, gap, k0, parity)
    roots = []
    for i in np.nonzero(f[:-1] * f[1:] < 0)[0]:
        roots.append(brentq(lambda n: float(_half_dispersion(n, n_core, n_clad, width,
                                                             gap, k0, parity)),
                            grid[i + 1], grid[i], xtol=1e-15, rtol=1e-15))
    return roots


@lru_cache(maxsize=4096)
def supermode_indices(n_core: float, n_clad: float, width: float, gap: float,
                      wavelength: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Effective indices of the even and odd supermodes of two identical slabs.

    Returns (even, odd), each in decreasing order; the j-th entry of each
    grows out of the isolated-guide mode TE_j.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    even = _class_roots(n_core, n_clad, width, gap, wavelength, 0)
    odd = _class_roots(n_core, n_clad, width, gap, wavelength, 1)
    # even class alternates TE0-like (sym), TE1-like (antisym combination) ...
    # both classes hold one member of every isolated-mode pair while guided
    return tuple(even), tuple(odd)


def supermode_kappa(n_core: float, n_clad: float, width: float, gap: float,
                    wavelength: float, order: int) -> float:
    """|beta_even - beta_odd| / 2 for the pair grown from isolated mode ``order``."""
    even, odd = supermode_indices(n_core, n_clad, width, gap, wavelength)
    if len(even) <= order or len(odd) <= order:
        raise NoGuidedModesError(f"supermode pair of order {order} is not guided at gap {gap}")
    k0 = 2 * np.pi / wavelength
    return 0.5 * k0 * abs(even[order] - odd[order])


def overlap_kappa(n_core: float, n_clad: float, width: float, gap: float,
                  wavelength: float, order: int, grid=None) -> float:
    """Overlap-integral coupling of mode ``order`` between two identical slabs."""
    from .core import TransverseGrid
    from .modes import solve_te_modes

    half = width + gap / 2 + 20.0
    grid = grid or TransverseGrid.from_spacing(half, 0.01)
    c = 0.5 * (width + gap)
    g1 = SlabGeometry.symmetric(n_core, n_clad, width, wavelength, center=-c)
    g2 = SlabGeometry.symmetric(n_core, n_clad, width, wavelength, center=c)
    m1 = solve_te_modes(g1, grid, max_modes=order + 1, check_window=False)[order]
    m2 = solve_te_modes(g2, grid, max_modes=order + 1, check_window=False)[order]
    dn2 = g1.index_squared_cells(grid) - n_clad**2
    return abs(coupling_coefficient(m2.profile, m1.profile, dn2,
                                    scalar_prefactor(m1.beta, wavelength)))


@dataclass(frozen=True)
class CouplerGeometry:
    """Two identical guides: linear approach, parallel run at gap D, linear exit."""

    n_core: float
    n_clad: float
    width: float
    gap: float
    parallel_length: float
    slope: float
    far_gap: float
    wavelength: float

    @property
    def transition_length(self) -> float:
        return (self.far_gap - self.gap) / (2 * self.slope)


def coupling_phase(geom: CouplerGeometry, order: int, include_transitions: bool = True,
                   samples: int = 81) -> float:
    """Integrated coupling kappa_j(z) dz across a coupler.

    Identical guides give commuting coupling matrices along z, so the
    coupler acts exactly as a rotation by this total phase.
    """
    k = supermode_kappa(geom.n_core, geom.n_clad, geom.width, geom.gap,
                        geom.wavelength, order)
    phase = k * geom.parallel_length
    if include_transitions and geom.transition_length > 0:
        gaps = np.linspace(geom.gap, geom.far_gap, samples)
        ks = np.array([_kappa_or_zero(geom, g, order) for g in gaps])
        phase += 2 * np.trapezoid(ks, gaps) / (2 * geom.slope)
    return float(phase)


def _kappa_or_zero(geom, gap, order):
    try:
        return supermode_kappa(geom.n_core, geom.n_clad, geom.width, gap,
                               geom.wavelength, order)
    except NoGuidedModesError:
        return 0.0


@dataclass(frozen=True)
class SeparatorGeometry:
    gap: float
    parallel_length: float
    phase0: float
    phase1: float
    m: int
    n: int
    residual: float
    geometry: CouplerGeometry = field(repr=False)


def design_separator_geometry(n_core: float, n_clad: float, width: float,
                              wavelength: float, slope: float, far_gap: float,
                              gap_range=(0.6, 2.5), m: int = 1,
                              n: int | None = None, offset0: float = 0.0,
                              offset1: float = 0.0) -> SeparatorGeometry:
    """Choose gap and parallel length so the whole coupler, transitions included,
    returns TE0 (total phase 2 pi m) and crosses TE1 (pi/2 + 2 pi n).

    ``offset0``/``offset1`` are coupling phases picked up elsewhere along the
    same guide pair (e.g. residual coupling at the far gap); they are counted
    towards the two conditions.

    The parallel length is fixed by the TE0 condition; the gap is then found
    by root search on the TE1 phase residual.  With ``n`` unset, the integer
    closest to the mid-range phase ratio is used.
    """
    def geom(gap, length=0.0):
        return CouplerGeometry(n_core, n_clad, width, gap, length, slope, far_gap, wavelength)

    def length_for(gap):
        g = geom(gap)
        t0 = coupling_phase(g, 0)
        k0 = supermode_kappa(n_core, n_clad, width, gap, wavelength, 0)
        return (2 * np.pi * m - offset0 - t0) / k0

    def phase1(gap):
        return coupling_phase(geom(gap, length_for(gap)), 1) + offset1

    if n is None:
        mid = 0.5 * sum(gap_range)
        n = max(int(round((phase1(mid) - np.pi / 2) / (2 * np.pi))), 0)
    target = np.pi / 2 + 2 * np.pi * n
    lo, hi = gap_range
    gap = brentq(lambda g: phase1(g) - target, lo, hi, xtol=1e-10)
    length = length_for(gap)
    if length <= 0:
        raise ValueError("transitions alone exceed the TE0 phase budget; raise far_gap or slope")
    g = geom(gap, length)
    p0, p1 = coupling_phase(g, 0), coupling_phase(g, 1)
    res = max(abs(p0 + offset0 - 2 * np.pi * m), abs(p1 + offset1 - target))
    return SeparatorGeometry(gap, length, p0, p1, m, n, res, g)
