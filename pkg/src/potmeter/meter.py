"""Von Neumann pointer model of the weak momentum measurement.

The system couples impulsively to a Gaussian pointer through exp(-i g p M / hbar)
where M is the pointer momentum, so the pointer position is translated by
g times the system momentum.  After post-selecting the system on a site x the
pointer is left in

    phi(Q) = sum_k <x|k> psi~(k) Phi0(Q - g hbar k),

evaluated here exactly over the lattice momentum modes of a ring.  In the
weak regime the pointer position shifts by g Re<p>_w and the pointer momentum
by 2 g var_p Im<p>_w / hbar.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    MaskedSite,
    PointerGridTooNarrow,
    PotmeterWarning,
    ZeroCoupling,
    ZeroProbability,
)
from .lattice import Grid1D, PhysicalConstants, WaveFunction
from .weakvalue import DEFAULT_THRESHOLD, weak_value_momentum

CHANNELS = ("position", "momentum")
_MODE_CUTOFF = 1e-30  # relative |c_k|^2 below which a mode is dropped from the sum
_SIGNIFICANT = 1e-12  # relative |c_k|^2 used for the weak-regime guard
_PAD = 4  # zero-padding factor for the pointer momentum distribution


@dataclass(frozen=True)
class MeterConfig:
    sigma_q: float
    g: float
    k_m: float = 0.0

    def __post_init__(self):
        if not self.sigma_q > 0:
            raise ValueError("sigma_q must be positive")
        if not np.isfinite(self.g):
            raise ValueError("g must be finite")

    def sigma_p(self, consts: PhysicalConstants) -> float:
        return consts.hbar / (2.0 * self.sigma_q)

    def var_p(self, consts: PhysicalConstants) -> float:
        return self.sigma_p(consts) ** 2

    def mean_M(self, consts: PhysicalConstants) -> float:
        return consts.hbar * self.k_m

    def initial_pointer(self, Q: np.ndarray) -> np.ndarray:
        s = self.sigma_q
        return (2.0 * np.pi * s * s) ** -0.25 * np.exp(-(Q**2) / (4.0 * s * s) + 1j * self.k_m * Q)


@dataclass(frozen=True, eq=False)
class PostSelectedMeter:
    q_grid: Grid1D
    phi: np.ndarray  # unnormalized pointer amplitude
    prob: float  # post-selection probability density at the chosen site
    meter: MeterConfig
    hbar: float
    x_idx: int


class PointerMoments(NamedTuple):
    mean_q: float
    var_q: float
    mean_p: float
    var_p: float


@dataclass(frozen=True, eq=False)
class ReadoutSamples:
    channel: str
    values: np.ndarray
    seed_path: str

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class WeakValueEstimate:
    value: complex
    stderr_re: float
    stderr_im: float
    n_pos: int
    n_mom: int


def momentum_decomposition(psi: WaveFunction) -> tuple[np.ndarray, np.ndarray]:
    """Return (k, c) with psi_j = sum_m c_m exp(i k_m (x_j - x_min)) on a ring."""
    grid = psi.grid
    if not grid.is_ring:
        raise ValueError("the exact meter model needs ring topology")
    u = psi.amp
    if psi.twist:
        u = u * np.exp(-1j * psi.twist * (grid.x - grid.x_min) / grid.length)
    return grid.wavenumbers(psi.twist), np.fft.fft(u) / grid.n


def _active_modes(psi: WaveFunction, cutoff: float):
    k, c = momentum_decomposition(psi)
    w = np.abs(c) ** 2
    keep = w >= cutoff * w.max()
    return k[keep], c[keep]


def coupling_strength(psi: WaveFunction, meter: MeterConfig, consts: PhysicalConstants) -> float:
    """g * max|hbar k| over modes with non-negligible weight, in units of sigma_q."""
    k, _ = _active_modes(psi, _SIGNIFICANT)
    return abs(meter.g) * consts.hbar * float(np.max(np.abs(k))) / meter.sigma_q


def default_pointer_grid(
    psi: WaveFunction, meter: MeterConfig, consts: PhysicalConstants
) -> Grid1D:
    """Open pointer grid covering every mode's shift plus 8 sigma_q of margin."""
    k, _ = _active_modes(psi, _MODE_CUTOFF)
    half = abs(meter.g) * consts.hbar * float(np.max(np.abs(k))) + 8.0 * meter.sigma_q
    # resolve the pointer width and its momentum content k_m +- 12 sigma_k
    kmax = abs(meter.k_m) + 12.0 / (2.0 * meter.sigma_q)
    dq = min(meter.sigma_q / 16.0, np.pi / kmax)
    n = int(np.ceil(2.0 * half / dq)) + 1
    return Grid1D(n, -half, half, "open")


def post_selected_meter_state(
    psi: WaveFunction,
    x_idx: int,
    meter: MeterConfig,
    consts: PhysicalConstants,
    q_grid: Grid1D | None = None,
    weak_guard: float = 0.1,
) -> PostSelectedMeter:
    """Exact pointer state after coupling and post-selection on site ``x_idx``.

    No expansion in g is made.  Raises :class:`PointerGridTooNarrow` when more
    than 1e-10 of the pointer weight sits within 3 sites of either edge.
    """
    grid = psi.grid
    if not 0 <= x_idx < grid.n:
        raise IndexError(f"site index {x_idx} outside 0..{grid.n - 1}")
    if coupling_strength(psi, meter, consts) > weak_guard:
        warnings.warn(
            f"g={meter.g} is outside the weak regime for this state "
            f"(g*max|hbar k| > {weak_guard} sigma_q)",
            PotmeterWarning,
            stacklevel=2,
        )
    if q_grid is None:
        q_grid = default_pointer_grid(psi, meter, consts)
    if q_grid.is_ring:
        raise ValueError("pointer grid must be open")

    k, c = _active_modes(psi, _MODE_CUTOFF)
    amps = c * np.exp(1j * k * (grid.x[x_idx] - grid.x_min))
    shifts = meter.g * consts.hbar * k
    phi = amps @ meter.initial_pointer(q_grid.x[None, :] - shifts[:, None])

    dens = np.abs(phi) ** 2
    prob = float(q_grid.integrate(dens))
    total = dens.sum()
    if total > 0 and (dens[:3].sum() + dens[-3:].sum()) > 1e-10 * total:
        raise PointerGridTooNarrow(
            f"pointer weight reaches the edge of [{q_grid.x_min}, {q_grid.x_max}]"
        )
    phi.flags.writeable = False
    return PostSelectedMeter(q_grid, phi, prob, meter, consts.hbar, int(x_idx))


def postselection_probability(
    psi: WaveFunction,
    x_idx: int,
    meter: MeterConfig,
    consts: PhysicalConstants,
    mode: str = "exact",
    threshold: float = DEFAULT_THRESHOLD,
    q_grid: Grid1D | None = None,
) -> float:
    """Probability density of post-selecting site ``x_idx`` after the coupling.

    ``first_order`` evaluates |psi(x)|^2 (1 + 2 g Im<p>_w <M> / hbar), the
    leading-order expansion in g; ``exact`` integrates the exact pointer state.
    """
    if mode == "exact":
        return post_selected_meter_state(psi, x_idx, meter, consts, q_grid).prob
    if mode != "first_order":
        raise ValueError(f"mode must be 'exact' or 'first_order', got {mode!r}")
    field = weak_value_momentum(psi, consts, threshold)
    if not field.mask[x_idx]:
        raise MaskedSite(f"site {x_idx} is below the density threshold")
    rho = psi.density[x_idx]
    return float(rho * (1.0 + 2.0 * meter.g * field.wv[x_idx].imag * meter.mean_M(consts) / consts.hbar))


def _momentum_distribution(m: PostSelectedMeter) -> tuple[np.ndarray, np.ndarray]:
    """Pointer momenta (ascending) and the unnormalized |phi~(p)|^2 on them."""
    nq = len(m.phi)
    size = _PAD * nq
    kappa = np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(size, m.q_grid.dx))
    dens = np.abs(np.fft.fftshift(np.fft.fft(m.phi, n=size))) ** 2
    return m.hbar * kappa, dens


def pointer_moments(m: PostSelectedMeter) -> PointerMoments:
    if not m.prob > 0:
        raise ZeroProbability("post-selection probability is zero")
    Q = m.q_grid.x
    w = m.q_grid.weights * np.abs(m.phi) ** 2
    w = w / w.sum()
    mean_q = float(np.sum(w * Q))
    var_q = float(np.sum(w * (Q - mean_q) ** 2))
    p, dens = _momentum_distribution(m)
    dens = dens / dens.sum()
    mean_p = float(np.sum(dens * p))
    var_p = float(np.sum(dens * (p - mean_p) ** 2))
    return PointerMoments(mean_q, var_q, mean_p, var_p)


def readout_rng(seed: int, stream: Sequence[int] = ()) -> np.random.Generator:
    """Counter-based generator for one independent stream under a master seed."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(seq))


def _inverse_cdf(nodes: np.ndarray, dens: np.ndarray, u: np.ndarray) -> np.ndarray:
    # piecewise-uniform density within cells, trapezoid cell masses
    cells = 0.5 * (dens[1:] + dens[:-1]) * np.diff(nodes)
    cdf = np.concatenate([[0.0], np.cumsum(cells)])
    cdf /= cdf[-1]
    return np.interp(u, cdf, nodes)


def sample_readouts(
    m: PostSelectedMeter,
    n: int,
    seed: int,
    channel: str = "position",
    stream: Sequence[int] = (),
) -> ReadoutSamples:
    """Draw ``n`` pointer readings by inverse-CDF sampling on the pointer grid.

    Bit-reproducible for fixed (seed, stream, n, channel, grid).
    """
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    if n < 1:
        raise ValueError("need at least one sample")
    if not m.prob > 0:
        raise ZeroProbability("post-selection probability is zero")
    if channel == "position":
        nodes, dens = m.q_grid.x, np.abs(m.phi) ** 2
    else:
        nodes, dens = _momentum_distribution(m)
    u = readout_rng(seed, stream).random(n)
    path = "/".join(str(s) for s in (seed, *stream, channel))
    values = _inverse_cdf(nodes, dens, u)
    values.flags.writeable = False
    return ReadoutSamples(channel, values, path)


def _values(samples) -> np.ndarray:
    return samples.values if isinstance(samples, ReadoutSamples) else np.asarray(samples, float)


def estimate_weak_value(
    pos_samples,
    mom_samples,
    meter: MeterConfig,
    consts: PhysicalConstants,
) -> WeakValueEstimate:
    """Weak-value estimate from pointer readings.

    Re = mean(Q) / g and Im = hbar (mean(P) - hbar k_m) / (2 g var_p), with
    standard errors from the sample spreads scaled the same way.
    """
    if meter.g == 0:
        raise ZeroCoupling("the weak value cannot be read out with g = 0")
    q = _values(pos_samples)
    p = _values(mom_samples)
    if q.size == 0 or p.size == 0:
        raise ValueError("both sample sets must be non-empty")
    scale_im = consts.hbar / (2.0 * meter.g * meter.var_p(consts))
    re = q.mean() / meter.g
    im = (p.mean() - meter.mean_M(consts)) * scale_im
    se_re = q.std(ddof=1) / np.sqrt(q.size) / abs(meter.g) if q.size > 1 else np.inf
    se_im = p.std(ddof=1) / np.sqrt(p.size) * abs(scale_im) if p.size > 1 else np.inf
    return WeakValueEstimate(complex(re, im), float(se_re), float(se_im), int(q.size), int(p.size))
