"""Vector potentials, Peierls phases, gauge transformations and loop flux."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

from .errors import FluxMismatch, NotARing
from .lattice import Grid1D, PhysicalConstants, WaveFunction, derivative

TWO_PI = 2.0 * np.pi


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class VectorPotential:
    grid: Grid1D
    a: np.ndarray
    preset: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        a = _frozen(self.a)
        if a.shape != (self.grid.n,):
            raise ValueError(f"vector potential has shape {a.shape}, grid has {self.grid.n} sites")
        if not np.all(np.isfinite(a)):
            raise ValueError("vector potential contains non-finite values")
        object.__setattr__(self, "a", a)

    @classmethod
    def zero(cls, grid: Grid1D) -> "VectorPotential":
        return cls(grid, np.zeros(grid.n), "zero", {})

    @classmethod
    def constant(cls, grid: Grid1D, a0: float) -> "VectorPotential":
        return cls(grid, np.full(grid.n, float(a0)), "constant", {"a0": float(a0)})

    @classmethod
    def gaussian_bump(cls, grid: Grid1D, A0: float, x_c: float, w: float) -> "VectorPotential":
        if not w > 0:
            raise ValueError("bump width w must be positive")
        a = A0 * np.exp(-(((grid.x - x_c) / w) ** 2))
        return cls(grid, a, "gaussian_bump", {"A0": float(A0), "x_c": float(x_c), "w": float(w)})

    @classmethod
    def linear(cls, grid: Grid1D, b: float) -> "VectorPotential":
        return cls(grid, b * grid.x, "linear", {"b": float(b)})

    def shifted(self, delta: np.ndarray) -> "VectorPotential":
        return VectorPotential(self.grid, self.a + delta)


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """Static gauge function Lambda(x), in units of hbar/q."""

    grid: Grid1D
    lam: np.ndarray
    preset: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        lam = _frozen(self.lam)
        if lam.shape != (self.grid.n,):
            raise ValueError(f"gauge function has shape {lam.shape}, grid has {self.grid.n} sites")
        if not np.all(np.isfinite(lam)):
            raise ValueError("gauge function contains non-finite values")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def constant(cls, grid: Grid1D, c: float) -> "GaugeFunction":
        return cls(grid, np.full(grid.n, float(c)), "constant", {"c": float(c)})

    @classmethod
    def linear(cls, grid: Grid1D, b: float) -> "GaugeFunction":
        if grid.is_ring and b != 0:
            raise ValueError("a linear gauge function is not single-valued on a ring")
        return cls(grid, b * grid.x, "linear", {"b": float(b)})

    @classmethod
    def sine(cls, grid: Grid1D, amplitude: float, mode: int = 1) -> "GaugeFunction":
        # period L/mode; single-valued on a ring
        phase = TWO_PI * mode * (grid.x - grid.x_min) / grid.length
        return cls(grid, amplitude * np.sin(phase), "sine", {"amplitude": float(amplitude), "mode": int(mode)})

    @classmethod
    def gaussian(cls, grid: Grid1D, amplitude: float, x_c: float, w: float) -> "GaugeFunction":
        lam = amplitude * np.exp(-(((grid.x - x_c) / w) ** 2))
        return cls(grid, lam, "gaussian", {"amplitude": float(amplitude), "x_c": float(x_c), "w": float(w)})


@dataclass(frozen=True)
class FluxReport:
    loop_integral: float
    ab_phase: float
    ab_phase_mod: float


# -- quadrature -------------------------------------------------------------

_STENCIL = 6


@lru_cache(maxsize=None)
def _interval_weights(offsets: tuple[int, ...]) -> np.ndarray:
    """Weights integrating the interpolating polynomial through ``offsets`` over [0, 1]."""
    o = np.array(offsets, dtype=float)
    vander = np.vander(o, increasing=True).T
    moments = 1.0 / np.arange(1, len(o) + 1)
    return np.linalg.solve(vander, moments)


def _cumulative_open(grid: Grid1D, f: np.ndarray) -> np.ndarray:
    n = grid.n
    pieces = np.empty(n - 1)
    # interval j spans [x_j, x_j+1]; centred stencil j-2..j+3 where it fits
    interior = np.arange(2, n - 3)
    offsets = np.arange(-2, _STENCIL - 2)
    pieces[interior] = f[interior[:, None] + offsets] @ _interval_weights(tuple(offsets))
    for j in (0, 1, n - 3, n - 2):
        start = 0 if j < 2 else n - _STENCIL
        offs = tuple(range(start - j, start - j + _STENCIL))
        pieces[j] = f[start : start + _STENCIL] @ _interval_weights(offs)
    return np.concatenate([[0.0], np.cumsum(pieces * grid.dx)])


def _cumulative_ring(grid: Grid1D, f: np.ndarray) -> np.ndarray:
    mean = f.mean()
    k = grid.wavenumbers()
    spec = np.fft.fft(f - mean)
    nz = k != 0
    spec[nz] /= 1j * k[nz]
    spec[~nz] = 0.0
    if grid.n % 2 == 0:
        spec[grid.n // 2] = 0.0
    s = np.fft.ifft(spec).real
    return mean * (grid.x - grid.x_min) + (s - s[0])


def cumulative_integral(grid: Grid1D, f: np.ndarray) -> np.ndarray:
    """Running integral of ``f`` from x_min to each site.

    Spectral on a ring (exact for the trigonometric interpolant, with the mean
    contributing the linear part), 6th-order local polynomial quadrature on an
    open segment.  Both are exact for constant integrands.
    """
    f = np.asarray(f, dtype=float)
    if grid.is_ring:
        return _cumulative_ring(grid, f)
    return _cumulative_open(grid, f)


def loop_integral(A: VectorPotential) -> float:
    if not A.grid.is_ring:
        raise NotARing("loop integral needs ring topology")
    return float(np.sum(A.a) * A.grid.dx)


def loop_flux(A: VectorPotential, consts: PhysicalConstants) -> FluxReport:
    """Closed-loop integral of A around the ring and the Aharonov-Bohm phase it imprints."""
    integral = loop_integral(A)
    phase = consts.q * integral / consts.hbar
    mod = phase % TWO_PI
    if mod >= TWO_PI:  # -tiny % 2pi can round up to 2pi
        mod = 0.0
    return FluxReport(integral, phase, mod)


def flux_defect(A: VectorPotential, consts: PhysicalConstants) -> float:
    """Distance of the AB phase from the nearest multiple of 2 pi."""
    phase = loop_flux(A, consts).ab_phase
    return abs(phase - TWO_PI * round(phase / TWO_PI))


def phase_integral(A: VectorPotential) -> np.ndarray:
    """S_j, the integral of A from x_min to x_j."""
    return cumulative_integral(A.grid, A.a)


def peierls_phase(
    psi0: WaveFunction,
    A: VectorPotential,
    consts: PhysicalConstants,
    allow_twist: bool = False,
) -> WaveFunction:
    """Dress a field-free state with the phase exp(i q/hbar * integral of A).

    On a ring the enclosed flux must be quantized, otherwise the dressed state
    is not single-valued and :class:`FluxMismatch` is raised.  With
    ``allow_twist=True`` the state is instead returned with a boundary twist
    equal to the AB phase, which keeps it smooth on the ring.
    """
    psi0.grid.check_same(A.grid)
    grid = psi0.grid
    twist = psi0.twist
    if grid.is_ring:
        phase = loop_flux(A, consts).ab_phase
        if not allow_twist and flux_defect(A, consts) > 1e-9:
            raise FluxMismatch(
                f"AB phase {phase:.12g} is not a multiple of 2 pi; "
                "the dressed state would not be single-valued"
            )
        if allow_twist:
            twist = twist + phase
    S = phase_integral(A)
    return WaveFunction(grid, np.exp(1j * consts.q * S / consts.hbar) * psi0.amp, twist)


def gauge_transform(
    psi: WaveFunction,
    A: VectorPotential,
    lam: GaugeFunction,
    consts: PhysicalConstants,
) -> tuple[WaveFunction, VectorPotential]:
    """psi -> exp(i q Lambda / hbar) psi and A -> A + dLambda/dx."""
    psi.grid.check_same(A.grid)
    psi.grid.check_same(lam.grid)
    dlam = derivative(lam.lam, lam.grid, real=True)
    new_psi = psi.with_amp(np.exp(1j * consts.q * lam.lam / consts.hbar) * psi.amp)
    return new_psi, A.shifted(dlam)
