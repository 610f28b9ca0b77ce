"""Momentum weak values with position post-selection, and what is built on them.

For pre-selection psi and post-selection on the lattice site |x_j>, the
momentum weak value is (p psi)_j / psi_j.  Its real part is the local phase
gradient (the eigenvalue field of the position-commuting part of p), its
imaginary part the osmotic term -hbar/2 d ln|psi|^2/dx.  Dressing psi with a
Peierls phase shifts the real part by q A(x) and leaves the imaginary part
alone, which is what :func:`reconstruct_vector_potential` exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllMasked, ZeroOverlap
from .gauge import VectorPotential
from .lattice import Grid1D, PhysicalConstants, WaveFunction, apply_momentum

DEFAULT_THRESHOLD = 1e-10


@dataclass(frozen=True, eq=False)
class WeakValueField:
    """Complex weak value per site; NaN where ``mask`` is False."""

    grid: Grid1D
    wv: np.ndarray
    mask: np.ndarray
    threshold: float

    @property
    def real(self) -> np.ndarray:
        return self.wv.real

    @property
    def imag(self) -> np.ndarray:
        return self.wv.imag


@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    a_recon: np.ndarray  # NaN at masked sites
    mask: np.ndarray
    masked_fraction: float
    imag_leak_linf: float
    residual_linf: float | None = None
    residual_l2: float | None = None


def density_mask(psi: WaveFunction, threshold: float) -> np.ndarray:
    """True where |psi|^2 >= threshold * max |psi|^2 (and nonzero)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    rho = psi.density
    return (rho >= threshold * rho.max()) & (rho > 0)


def weak_value_momentum(
    psi: WaveFunction, consts: PhysicalConstants, threshold: float = DEFAULT_THRESHOLD
) -> WeakValueField:
    """Weak value of canonical momentum, pre-selected on ``psi``, post-selected on each site.

    Sites where the relative density falls below ``threshold`` are masked out
    since the ratio diverges at nodes.
    """
    mask = density_mask(psi, threshold)
    if not mask.any():
        raise AllMasked("no site of the pre-selected state clears the density threshold")
    p_psi = apply_momentum(psi, consts)
    wv = np.full(psi.grid.n, np.nan + 1j * np.nan)
    wv[mask] = p_psi[mask] / psi.amp[mask]
    wv.flags.writeable = False
    mask.flags.writeable = False
    return WeakValueField(psi.grid, wv, mask, threshold)


def reconstruct_vector_potential(
    psi: WaveFunction,
    psi0: WaveFunction,
    consts: PhysicalConstants,
    threshold: float = DEFAULT_THRESHOLD,
    a_true: VectorPotential | np.ndarray | None = None,
) -> ReconstructionReport:
    """Recover A(x) = Re[<p>_w(psi) - <p>_w(psi0)] / q on jointly valid sites.

    ``imag_leak_linf`` is max |Im(wv - wv0)|, zero in exact arithmetic when psi
    is a Peierls dressing of psi0.  Residual norms are filled in only when a
    ground-truth ``a_true`` is supplied.
    """
    psi.grid.check_same(psi0.grid)
    if consts.q == 0:
        raise ValueError("cannot reconstruct A with zero charge coupling")
    wv = weak_value_momentum(psi, consts, threshold)
    wv0 = weak_value_momentum(psi0, consts, threshold)
    mask = wv.mask & wv0.mask
    if not mask.any():
        raise AllMasked("the two states share no valid site")
    diff = wv.wv - wv0.wv
    a = np.where(mask, diff.real / consts.q, np.nan)
    imag_leak = float(np.max(np.abs(diff.imag[mask])))
    masked_fraction = 1.0 - np.count_nonzero(mask) / psi.grid.n

    res_linf = res_l2 = None
    if a_true is not None:
        truth = a_true.a if isinstance(a_true, VectorPotential) else np.asarray(a_true, float)
        err = (a - truth)[mask]
        res_linf = float(np.max(np.abs(err)))
        res_l2 = float(np.sqrt(np.sum(psi.grid.weights[mask] * err**2)))
    a.flags.writeable = False
    mask.flags.writeable = False
    return ReconstructionReport(
        a_recon=a,
        mask=mask,
        masked_fraction=float(masked_fraction),
        imag_leak_linf=imag_leak,
        residual_linf=res_linf,
        residual_l2=res_l2,
    )


def hall_commuting_momentum(
    psi: WaveFunction, consts: PhysicalConstants, threshold: float = DEFAULT_THRESHOLD
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue field p_c(x) of the position-commuting part of momentum.

    Returns ``(p_c, mask)``; p_c is the real part of the momentum weak value
    and NaN at masked sites.
    """
    field = weak_value_momentum(psi, consts, threshold)
    return field.wv.real.copy(), field.mask


def wavefunction_from_weak_values(
    psi: WaveFunction, consts: PhysicalConstants
) -> tuple[np.ndarray, WaveFunction]:
    """Direct tomography: weak values of site projectors, post-selected on zero momentum.

    Returns the weak values <0|x_j><x_j|psi> / <0|psi>, which equal psi_j times
    one global constant, together with the state rebuilt from them by
    normalization.  Requires an untwisted ring so that the zero mode exists.
    """
    grid = psi.grid
    if not grid.is_ring:
        raise ValueError("zero-momentum post-selection needs ring topology")
    if abs(np.exp(1j * psi.twist) - 1.0) > 1e-12:
        raise ValueError("a twisted ring has no zero-momentum mode")
    zero_mode = np.full(grid.n, 1.0 / np.sqrt(grid.length))
    overlap = grid.inner(zero_mode, psi.amp)
    if abs(overlap) ** 2 < 1e-14:
        raise ZeroOverlap(f"|<k=0|psi>|^2 = {abs(overlap) ** 2:.3g} is below 1e-14")
    # <0|x_j><x_j|psi> with site projectors weighted by dx
    wv = zero_mode * grid.weights * psi.amp / overlap
    recovered = WaveFunction(grid, wv, psi.twist).normalized()
    return wv, recovered
