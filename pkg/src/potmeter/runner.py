"""Pipeline orchestration and report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import scipy

from . import __version__
from .config import PIPELINES, ScenarioConfig
from .dynamics import (
    EvolutionParams,
    build_hamiltonian,
    check_minimal_coupling_relation,
    evolve,
    ground_state_energy,
    lattice_norm,
)
from .errors import ConfigError, FluxMismatch, PipelineError, PotmeterError
from .gauge import GaugeFunction, flux_defect, gauge_transform, loop_flux, loop_integral, peierls_phase
from .lattice import WaveFunction, apply_momentum, prepare_state
from .meter import (
    estimate_weak_value,
    pointer_moments,
    post_selected_meter_state,
    sample_readouts,
)
from .weakvalue import reconstruct_vector_potential, weak_value_momentum

CSV_COLUMNS = ("x", "a_true", "a_recon", "re_wv", "im_wv", "re_wv0", "im_wv0", "mask", "p_c")
REPORT_VERSION = 1
_STATE_IDS = {"psi": 0, "psi0": 1}
_CHANNEL_IDS = {"position": 0, "momentum": 1}


@dataclass(frozen=True)
class Check:
    name: str
    invariant: str
    value: float | None
    tolerance: float
    passed: bool


def _check(name: str, invariant: str, value: float | None, tolerance: float) -> Check:
    ok = value is not None and math.isfinite(value) and value <= tolerance
    return Check(name, invariant, value, float(tolerance), bool(ok))


@dataclass
class RunReport:
    config: ScenarioConfig
    pipeline: str
    pipelines_run: list[str]
    results: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    fields: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "tool": {
                "potmeter": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "pipeline": self.pipeline,
            "pipelines_run": list(self.pipelines_run),
            "passed": self.passed,
            "checks": [c.__dict__ for c in self.checks],
            "failures": [{"name": c.name, "invariant": c.invariant} for c in self.failures],
            "warnings": list(self.warnings),
            "scenario": self.config.resolved,
            "results": self.results,
            "fields": {k: self.fields[k] for k in CSV_COLUMNS},
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        cols = [self.fields[k] for k in CSV_COLUMNS]
        for row in zip(*cols):
            writer.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return repr(float(v))


def _jsonable(obj):
    """Convert numpy scalars/arrays and complex numbers; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if obj.dtype == bool:
            return [int(v) for v in obj]
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(float(obj.real)), "im": _jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


# -- helpers -------------------------------------------------------------------


def resolve_threads(env: dict | None = None) -> int:
    """Worker count from POTMETER_THREADS (0 or unset = one per CPU)."""
    raw = (os.environ if env is None else env).get("POTMETER_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("POTMETER_THREADS", f"expected a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("POTMETER_THREADS", f"expected a non-negative integer, got {raw!r}")
    return n if n > 0 else (os.cpu_count() or 1)


@contextmanager
def _stage(name: str):
    try:
        yield
    except (ConfigError, PipelineError):
        raise
    except (PotmeterError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise PipelineError(name, exc) from exc


def _nan_masked(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, values, np.nan)


def _gauge_derivative(gauge: dict, grid) -> np.ndarray:
    x = grid.x
    p = gauge["preset"]
    if p == "constant":
        return np.zeros(grid.n)
    if p == "linear":
        return np.full(grid.n, gauge["b"])
    if p == "sine":
        kk = 2.0 * np.pi * gauge["mode"] / grid.length
        return gauge["amplitude"] * kk * np.cos(kk * (x - grid.x_min))
    u = (x - gauge["x_c"]) / gauge["w"]
    return -2.0 * u / gauge["w"] * gauge["amplitude"] * np.exp(-(u**2))


@dataclass
class _Context:
    cfg: ScenarioConfig
    psi0: WaveFunction
    psi: WaveFunction
    A: Any
    wv: Any
    wv0: Any
    recon: Any


# -- stages ----------------------------------------------------------------------


def _prepare(cfg: ScenarioConfig, report: RunReport) -> _Context:
    with _stage("prepare"):
        psi0 = prepare_state(cfg.grid, cfg.state)
        A = cfg.vector_potential()
        # non-quantized ring flux is carried as a boundary twist on psi
        psi = peierls_phase(psi0, A, cfg.consts, allow_twist=True)
        wv = weak_value_momentum(psi, cfg.consts, cfg.mask_threshold)
        wv0 = weak_value_momentum(psi0, cfg.consts, cfg.mask_threshold)
        recon = reconstruct_vector_potential(psi, psi0, cfg.consts, cfg.mask_threshold, a_true=A)
    joint = recon.mask
    report.fields = {
        "x": cfg.grid.x,
        "a_true": A.a,
        "a_recon": recon.a_recon,
        "re_wv": _nan_masked(wv.wv.real, joint),
        "im_wv": _nan_masked(wv.wv.imag, joint),
        "re_wv0": _nan_masked(wv0.wv.real, joint),
        "im_wv0": _nan_masked(wv0.wv.imag, joint),
        "mask": joint,
        "p_c": _nan_masked(wv.wv.real, joint),
    }
    return _Context(cfg, psi0, psi, A, wv, wv0, recon)


def _reconstruct(ctx: _Context, report: RunReport) -> None:
    cfg, tol, recon = ctx.cfg, ctx.cfg.tolerances, ctx.recon
    with _stage("reconstruct"):
        p_mean = cfg.grid.inner(ctx.psi.amp, apply_momentum(ctx.psi, cfg.consts)).real
        valid = ctx.wv.mask
        hall = float(np.sum((cfg.grid.weights * ctx.psi.density * ctx.wv.wv.real)[valid]))
    res = {
        "residual_linf": recon.residual_linf,
        "residual_l2": recon.residual_l2,
        "imag_leak_linf": recon.imag_leak_linf,
        "masked_fraction": recon.masked_fraction,
        "psi_twist": ctx.psi.twist,
        "momentum_expectation": p_mean,
        "hall_first_moment_gap": abs(hall - p_mean),
    }
    if cfg.grid.is_ring:
        flux = loop_flux(ctx.A, cfg.consts)
        res["flux"] = {
            "loop_integral": flux.loop_integral,
            "ab_phase": flux.ab_phase,
            "ab_phase_mod": flux.ab_phase_mod,
        }
    report.results["reconstruct"] = res
    report.checks += [
        _check("reconstruct.residual_linf", "Re(wv - wv0)/q equals A at every unmasked site",
               recon.residual_linf, tol["reconstruct_residual_linf"]),
        _check("reconstruct.imag_leak_linf", "Im(wv) equals Im(wv0) for a Peierls-related pair",
               recon.imag_leak_linf, tol["reconstruct_imag_leak_linf"]),
        _check("reconstruct.masked_fraction", "fraction of sites lost to the density mask",
               recon.masked_fraction, tol["reconstruct_masked_fraction"]),
    ]


def _meter_probe(ctx: _Context, k: int, x: float) -> tuple[dict, list[Check]]:
    cfg = ctx.cfg
    meter, consts, n = cfg.meter, cfg.consts, cfg.n_samples
    j, snap = cfg.grid.nearest_index(x)
    entry = {"index": k, "x": x, "site": j, "x_site": float(cfg.grid.x[j]), "snap": snap}
    if not ctx.recon.mask[j]:
        entry["skipped"] = "masked"
        return entry, []
    half = replace(meter, g=0.5 * meter.g)
    per_state = {}
    mean_q = {}
    for label, state in (("psi", ctx.psi), ("psi0", ctx.psi0)):
        m = post_selected_meter_state(state, j, meter, consts, weak_guard=cfg.weak_guard)
        m_half = post_selected_meter_state(state, j, half, consts, weak_guard=cfg.weak_guard)
        s_id = _STATE_IDS[label]
        pos = sample_readouts(m, n, cfg.master_seed, "position", (k, _CHANNEL_IDS["position"], s_id))
        mom = sample_readouts(m, n, cfg.master_seed, "momentum", (k, _CHANNEL_IDS["momentum"], s_id))
        est = estimate_weak_value(pos, mom, meter, consts)
        exact = (ctx.wv if label == "psi" else ctx.wv0).wv[j]
        mean_q[label] = (pointer_moments(m).mean_q, pointer_moments(m_half).mean_q)
        per_state[label] = {
            "estimate": est.value,
            "stderr_re": est.stderr_re,
            "stderr_im": est.stderr_im,
            "exact": exact,
            "prob": m.prob,
            "seed_path": {"position": pos.seed_path, "momentum": mom.seed_path},
        }
    q = consts.q
    qa_est = per_state["psi"]["estimate"].real - per_state["psi0"]["estimate"].real
    stderr = math.hypot(per_state["psi"]["stderr_re"], per_state["psi0"]["stderr_re"])
    truth = q * float(ctx.A.a[j])
    # exact pointer means at g and g/2: the O(g) bias is at most twice their gap
    e_g = (mean_q["psi"][0] - mean_q["psi0"][0]) / meter.g
    e_h = (mean_q["psi"][1] - mean_q["psi0"][1]) / half.g
    bias = 2.0 * abs(e_g - e_h)
    nominal = meter.sigma_q / (abs(meter.g) * math.sqrt(n))
    entry.update(
        {
            "n_samples": n,
            "seed": cfg.master_seed,
            "states": per_state,
            "qA_estimate": qa_est,
            "qA_stderr": stderr,
            "qA_true": truth,
            "qA_exact_pointer": e_g,
            "bias_bound": bias,
            "z": (qa_est - truth) / stderr,
        }
    )
    tol = cfg.tolerances
    checks = [
        _check(f"meter.probe[{k}].qA", "sampled qA lies within z*stderr + bias bound of the true qA",
               abs(qa_est - truth), tol["meter_z"] * stderr + bias),
        _check(f"meter.probe[{k}].stderr", "Re stderr matches sigma_q/(g sqrt(n)) (relative deviation)",
               abs(per_state["psi"]["stderr_re"] / nominal - 1.0), tol["meter_stderr_rel"]),
    ]
    return entry, checks


def _meter(ctx: _Context, report: RunReport, threads: int) -> None:
    cfg = ctx.cfg
    if cfg.meter is None:
        raise ConfigError("meter", "the meter pipeline needs a [meter] table")
    if not cfg.probes:
        raise ConfigError("probes.x", "the meter pipeline needs at least one probe site")
    with _stage("meter"):
        jobs = list(enumerate(cfg.probes))
        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
                out = list(pool.map(lambda kx: _meter_probe(ctx, *kx), jobs))
        else:
            out = [_meter_probe(ctx, k, x) for k, x in jobs]
    # merged in declared probe order, never completion order
    report.results["meter"] = {
        "sigma_q": cfg.meter.sigma_q,
        "g": cfg.meter.g,
        "k_m": cfg.meter.k_m,
        "probes": [entry for entry, _ in out],
    }
    for _, checks in out:
        report.checks += checks


def _dynamics(ctx: _Context, report: RunReport) -> None:
    cfg = ctx.cfg
    if cfg.evolution is None:
        raise ConfigError("evolution", "the dynamics pipeline needs an [evolution] table")
    evo, tol = cfg.evolution, cfg.tolerances
    with _stage("dynamics"):
        if cfg.grid.is_ring and flux_defect(ctx.A, cfg.consts) > 1e-9:
            raise FluxMismatch(
                "the lattice phase relation needs quantized ring flux; "
                f"AB phase is {loop_flux(ctx.A, cfg.consts).ab_phase:.12g}"
            )
        V = cfg.scalar_potential()
        params = EvolutionParams(evo["dt"], evo["steps"])
        H0 = build_hamiltonian(cfg.grid, None, V, evo["flux_twist"], cfg.consts)
        H = build_hamiltonian(cfg.grid, ctx.A, V, evo["flux_twist"], cfg.consts)
        start = peierls_phase(ctx.psi0, ctx.A, cfg.consts)
        psi0_t = evolve(ctx.psi0, H0, params)
        psi_t = evolve(start, H, params)
        residual = check_minimal_coupling_relation(psi0_t, psi_t, ctx.A, cfg.consts)
        drift = max(
            abs(lattice_norm(psi0_t) - lattice_norm(ctx.psi0)),
            abs(lattice_norm(psi_t) - lattice_norm(start)),
        )
        recon = reconstruct_vector_potential(psi_t, psi0_t, cfg.consts, cfg.mask_threshold, a_true=ctx.A)
    report.results["dynamics"] = {
        "t_final": evo["dt"] * evo["steps"],
        "relation_residual": residual,
        "norm_drift": drift,
        "reconstruction_linf": recon.residual_linf,
        "reconstruction_imag_leak": recon.imag_leak_linf,
        "masked_fraction": recon.masked_fraction,
    }
    report.checks += [
        _check("dynamics.relation_residual", "evolved psi equals the lattice Peierls phase times evolved psi0",
               residual, tol["dynamics_relation_residual"]),
        _check("dynamics.norm_drift", "Cayley evolution preserves the lattice norm",
               drift, tol["dynamics_norm_drift"]),
        _check("dynamics.reconstruction_linf", "reconstruction from the evolved pair recovers the static A",
               recon.residual_linf, tol["dynamics_reconstruction_linf"] + residual),
    ]


def _gauge_check(ctx: _Context, report: RunReport) -> None:
    cfg = ctx.cfg
    if cfg.gauge is None:
        raise ConfigError("gauge", "the gauge_check pipeline needs a [gauge] table")
    tol, grid = cfg.tolerances, cfg.grid
    with _stage("gauge_check"):
        lam: GaugeFunction = cfg.gauge_function()
        psi_g, A_g = gauge_transform(ctx.psi, ctx.A, lam, cfg.consts)
        modulus = float(np.max(np.abs(np.abs(psi_g.amp) - np.abs(ctx.psi.amp))))
        cov = reconstruct_vector_potential(psi_g, ctx.psi0, cfg.consts, cfg.mask_threshold, a_true=A_g)
        inner = slice(None) if grid.is_ring else slice(2, grid.n - 2)
        shift = float(np.max(np.abs((A_g.a - ctx.A.a) - _gauge_derivative(cfg.gauge, grid))[inner]))
        res = {"modulus_linf": modulus, "covariance_linf": cov.residual_linf, "shift_linf": shift}
        checks = [
            _check("gauge.modulus_linf", "|psi| is unchanged by the gauge phase",
                   modulus, tol["gauge_modulus_linf"]),
            _check("gauge.covariance_linf", "reconstruction follows A + dLambda/dx",
                   cov.residual_linf, tol["gauge_covariance_linf"]),
            _check("gauge.shift_linf", "A' - A equals the analytic dLambda/dx at interior sites",
                   shift, tol["gauge_shift_linf"]),
        ]
        if grid.is_ring:
            dflux = abs(loop_integral(A_g) - loop_integral(ctx.A))
            V = cfg.scalar_potential()
            base = cfg.evolution["flux_twist"] if cfg.evolution else 0.0
            energies = [
                ground_state_energy(build_hamiltonian(grid, ctx.A, V, base + tw, cfg.consts))
                for tw in (0.0, np.pi, 2.0 * np.pi)
            ]
            period = abs(energies[2] - energies[0])
            res.update({"loop_flux_change": dflux, "ground_energy_twist": energies, "ab_period_gap": period})
            checks += [
                _check("gauge.flux_invariance", "a single-valued Lambda leaves the loop flux unchanged",
                       dflux, tol["gauge_flux_invariance"]),
                _check("gauge.ab_period", "ground energy is 2 pi periodic in the flux twist",
                       period, tol["gauge_ab_period"]),
            ]
    report.results["gauge_check"] = res
    report.checks += checks


# -- entry point --------------------------------------------------------------------


def pipelines_for(cfg: ScenarioConfig, pipeline: str) -> list[str]:
    if pipeline == "all":
        out = ["reconstruct"]
        if cfg.meter is not None and cfg.probes:
            out.append("meter")
        if cfg.evolution is not None:
            out.append("dynamics")
        if cfg.gauge is not None:
            out.append("gauge_check")
        return out
    if pipeline not in PIPELINES:
        raise ConfigError("pipeline", f"unknown pipeline {pipeline!r} (choose from {', '.join(PIPELINES)}, all)")
    return [pipeline]


def run_scenario(cfg: ScenarioConfig, pipeline: str = "all", threads: int | None = None) -> RunReport:
    """Run one or all pipelines of a scenario and collect checks into a report.

    Raises :class:`ConfigError` for unusable configurations and
    :class:`PipelineError`, naming the failing stage, for numeric failures.
    """
    stages = pipelines_for(cfg, pipeline)
    if threads is None:
        threads = resolve_threads()
    report = RunReport(cfg, pipeline, stages)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ctx = _prepare(cfg, report)
        for stage in stages:
            if stage == "reconstruct":
                _reconstruct(ctx, report)
            elif stage == "meter":
                _meter(ctx, report, threads)
            elif stage == "dynamics":
                _dynamics(ctx, report)
            else:
                _gauge_check(ctx, report)
    # threads may interleave warnings; sort for a stable report
    report.warnings = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    return report
