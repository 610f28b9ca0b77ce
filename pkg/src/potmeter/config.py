"""Scenario configuration: TOML schema, validation and construction of model objects.

A scenario file looks like::

    schema_version = 1
    name = "bump-reconstruct"

    [grid]
    n = 1024
    x_min = -7.0
    x_max = 7.0
    topology = "ring"

    [state]
    kind = "gaussian"
    x0 = 0.0
    k0 = 2.0
    sigma = 1.0

    [potential]
    preset = "gaussian_bump"
    A0 = 0.7
    x_c = 0.0
    w = 2.0

Optional tables are ``constants``, ``gauge``, ``meter``, ``evolution``,
``probes``, ``sampling``, ``thresholds`` and ``tolerances``.  Unknown keys are
rejected with the dotted path of the offending field.
"""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .gauge import GaugeFunction, VectorPotential
from .lattice import Gaussian, Grid1D, PhysicalConstants, PlaneWave, StateSpec, Superposition
from .meter import MeterConfig

SCHEMA_VERSION = 1
PIPELINES = ("reconstruct", "meter", "dynamics", "gauge_check")

# preset name -> required parameters
POTENTIAL_PRESETS = {
    "zero": (),
    "constant": ("a0",),
    "gaussian_bump": ("A0", "x_c", "w"),
    "linear": ("b",),
}
GAUGE_PRESETS = {
    "constant": ("c",),
    "linear": ("b",),
    "sine": ("amplitude", "mode"),
    "gaussian": ("amplitude", "x_c", "w"),
}
SCALAR_POTENTIALS = {
    "zero": (),
    "harmonic": ("omega", "x_c"),
}
STATE_KINDS = {
    "gaussian": ("x0", "k0", "sigma"),
    "plane_wave": ("k",),
    "superposition": ("components",),
}
# keys a user might reach for to make A depend on time
_TIME_KEYS = ("time_dependent", "omega_t", "frequency", "t0", "ramp", "a_of_t")

# (ring, open) defaults
TOLERANCE_DEFAULTS = {
    "reconstruct_residual_linf": (1e-7, 1e-5),
    "reconstruct_imag_leak_linf": (1e-8, 1e-5),
    "reconstruct_masked_fraction": (0.05, 0.05),
    "meter_z": (3.0, 3.0),
    "meter_stderr_rel": (0.25, 0.25),
    "dynamics_relation_residual": (1e-10, 1e-10),
    "dynamics_norm_drift": (1e-12, 1e-12),
    "dynamics_reconstruction_linf": (1e-6, 1e-6),
    "gauge_modulus_linf": (1e-14, 1e-14),
    "gauge_covariance_linf": (1e-7, 1e-5),
    "gauge_shift_linf": (1e-9, 1e-6),
    "gauge_flux_invariance": (1e-9, 1e-9),
    "gauge_ab_period": (1e-9, 1e-9),
}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Validated scenario.  ``resolved`` is the full config with defaults filled in."""

    name: str
    grid: Grid1D
    consts: PhysicalConstants
    state: StateSpec
    potential: dict
    gauge: dict | None
    meter: MeterConfig | None
    evolution: dict | None
    probes: tuple[float, ...]
    n_samples: int
    master_seed: int
    mask_threshold: float
    weak_guard: float
    tolerances: dict
    resolved: dict

    def vector_potential(self) -> VectorPotential:
        return build_vector_potential(self.grid, self.potential)

    def gauge_function(self) -> GaugeFunction | None:
        return None if self.gauge is None else build_gauge_function(self.grid, self.gauge)

    def scalar_potential(self) -> np.ndarray:
        spec = (self.evolution or {}).get("potential", {"preset": "zero"})
        if spec["preset"] == "zero":
            return np.zeros(self.grid.n)
        omega, x_c = spec["omega"], spec["x_c"]
        return 0.5 * self.consts.mass * omega**2 * (self.grid.x - x_c) ** 2

    def with_seed(self, seed: int) -> "ScenarioConfig":
        raw = copy.deepcopy(self.resolved)
        raw["sampling"]["master_seed"] = int(seed)
        return parse_config(raw)


# -- field readers -------------------------------------------------------------


def _path(*parts) -> str:
    return ".".join(str(p) for p in parts if p != "")


def _table(raw: Mapping, key: str, where: str, required: bool = False) -> dict | None:
    if key not in raw:
        if required:
            raise ConfigError(_path(where, key), "required table is missing")
        return None
    val = raw[key]
    if not isinstance(val, Mapping):
        raise ConfigError(_path(where, key), f"expected a table, got {type(val).__name__}")
    return dict(val)


def _reject_unknown(tab: Mapping, allowed, where: str) -> None:
    for key in tab:
        if key in _TIME_KEYS:
            raise ConfigError(
                _path(where, key), "time-dependent vector potentials are not supported; A must be static"
            )
        if key not in allowed:
            raise ConfigError(_path(where, key), f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(tab: Mapping, key: str, where: str, default=None, positive=False, integer=False):
    if key not in tab:
        if default is None:
            raise ConfigError(_path(where, key), "required value is missing")
        return default
    val = tab[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(_path(where, key), f"expected a number, got {val!r}")
    if integer:
        if isinstance(val, float) and not val.is_integer():
            raise ConfigError(_path(where, key), f"expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if not np.isfinite(val):
        raise ConfigError(_path(where, key), "value must be finite")
    if positive and not val > 0:
        raise ConfigError(_path(where, key), f"must be positive, got {val!r}")
    return val


def _string(tab: Mapping, key: str, where: str, choices, default=None) -> str:
    if key not in tab:
        if default is None:
            raise ConfigError(_path(where, key), "required value is missing")
        return default
    val = tab[key]
    if val not in choices:
        raise ConfigError(_path(where, key), f"expected one of {sorted(choices)}, got {val!r}")
    return val


def _preset_table(tab: Mapping, where: str, presets: Mapping) -> dict:
    preset = _string(tab, "preset", where, presets)
    _reject_unknown(tab, {"preset", *presets[preset]}, where)
    out = {"preset": preset}
    for key in presets[preset]:
        out[key] = _number(tab, key, where, integer=(key == "mode"))
    return out


# -- sections --------------------------------------------------------------------


def _grid(raw) -> dict:
    tab = _table(raw, "grid", "", required=True)
    _reject_unknown(tab, {"n", "x_min", "x_max", "topology"}, "grid")
    out = {
        "n": _number(tab, "n", "grid", integer=True),
        "x_min": _number(tab, "x_min", "grid"),
        "x_max": _number(tab, "x_max", "grid"),
        "topology": _string(tab, "topology", "grid", ("open", "ring")),
    }
    if out["n"] < 8:
        raise ConfigError("grid.n", f"need at least 8 sites, got {out['n']}")
    if out["x_max"] <= out["x_min"]:
        raise ConfigError("grid.x_max", "must exceed grid.x_min")
    return out


def _constants(raw) -> dict:
    tab = _table(raw, "constants", "") or {}
    _reject_unknown(tab, {"hbar", "mass", "q"}, "constants")
    return {
        "hbar": _number(tab, "hbar", "constants", 1.0, positive=True),
        "mass": _number(tab, "mass", "constants", 1.0, positive=True),
        "q": _number(tab, "q", "constants", 1.0),
    }


def _gaussian_fields(tab, where) -> dict:
    return {
        "x0": _number(tab, "x0", where),
        "k0": _number(tab, "k0", where),
        "sigma": _number(tab, "sigma", where, positive=True),
    }


def _state(raw) -> dict:
    tab = _table(raw, "state", "", required=True)
    kind = _string(tab, "kind", "state", STATE_KINDS)
    _reject_unknown(tab, {"kind", *STATE_KINDS[kind]}, "state")
    if kind == "gaussian":
        return {"kind": kind, **_gaussian_fields(tab, "state")}
    if kind == "plane_wave":
        return {"kind": kind, "k": _number(tab, "k", "state")}
    comps = tab.get("components")
    if not isinstance(comps, list) or not comps:
        raise ConfigError("state.components", "expected a non-empty array of tables")
    out = []
    for i, comp in enumerate(comps):
        where = f"state.components[{i}]"
        if not isinstance(comp, Mapping):
            raise ConfigError(where, "expected a table")
        _reject_unknown(comp, {"weight_re", "weight_im", "x0", "k0", "sigma"}, where)
        out.append(
            {
                "weight_re": _number(comp, "weight_re", where, 1.0),
                "weight_im": _number(comp, "weight_im", where, 0.0),
                **_gaussian_fields(comp, where),
            }
        )
    return {"kind": kind, "components": out}


def _meter(raw) -> dict | None:
    tab = _table(raw, "meter", "")
    if tab is None:
        return None
    _reject_unknown(tab, {"sigma_q", "g", "k_m"}, "meter")
    return {
        "sigma_q": _number(tab, "sigma_q", "meter", positive=True),
        "g": _number(tab, "g", "meter"),
        "k_m": _number(tab, "k_m", "meter", 0.0),
    }


def _evolution(raw, topology) -> dict | None:
    tab = _table(raw, "evolution", "")
    if tab is None:
        return None
    _reject_unknown(tab, {"dt", "steps", "flux_twist", "potential"}, "evolution")
    out = {
        "dt": _number(tab, "dt", "evolution", positive=True),
        "steps": _number(tab, "steps", "evolution", integer=True),
        "flux_twist": _number(tab, "flux_twist", "evolution", 0.0),
    }
    if out["steps"] < 0:
        raise ConfigError("evolution.steps", "must be non-negative")
    if out["flux_twist"] and topology != "ring":
        raise ConfigError("evolution.flux_twist", "a flux twist needs ring topology")
    pot = _table(tab, "potential", "evolution") or {"preset": "zero"}
    out["potential"] = _preset_table(pot, "evolution.potential", SCALAR_POTENTIALS)
    return out


def _probes(raw) -> list[float]:
    tab = _table(raw, "probes", "") or {}
    _reject_unknown(tab, {"x"}, "probes")
    xs = tab.get("x", [])
    if not isinstance(xs, list):
        raise ConfigError("probes.x", "expected an array of numbers")
    return [_number({f"x[{i}]": v}, f"x[{i}]", "probes") for i, v in enumerate(xs)]


def _sampling(raw) -> dict:
    tab = _table(raw, "sampling", "") or {}
    _reject_unknown(tab, {"n_samples", "master_seed"}, "sampling")
    out = {
        "n_samples": _number(tab, "n_samples", "sampling", 100_000, integer=True),
        "master_seed": _number(tab, "master_seed", "sampling", 0, integer=True),
    }
    if out["n_samples"] < 2:
        raise ConfigError("sampling.n_samples", "need at least 2 samples for an error bar")
    if out["master_seed"] < 0:
        raise ConfigError("sampling.master_seed", "must be non-negative")
    return out


def _thresholds(raw) -> dict:
    tab = _table(raw, "thresholds", "") or {}
    _reject_unknown(tab, {"mask", "weak_regime"}, "thresholds")
    out = {
        "mask": _number(tab, "mask", "thresholds", 1e-10, positive=True),
        "weak_regime": _number(tab, "weak_regime", "thresholds", 0.1, positive=True),
    }
    if not out["mask"] < 1:
        raise ConfigError("thresholds.mask", "must lie in (0, 1)")
    return out


def _tolerances(raw, topology) -> dict:
    tab = _table(raw, "tolerances", "") or {}
    _reject_unknown(tab, TOLERANCE_DEFAULTS, "tolerances")
    col = 0 if topology == "ring" else 1
    return {
        key: _number(tab, key, "tolerances", defaults[col], positive=True)
        for key, defaults in TOLERANCE_DEFAULTS.items()
    }


# -- builders ----------------------------------------------------------------------


def build_state_spec(state: Mapping) -> StateSpec:
    if state["kind"] == "gaussian":
        return Gaussian(state["x0"], state["k0"], state["sigma"])
    if state["kind"] == "plane_wave":
        return PlaneWave(state["k"])
    return Superposition(
        tuple(
            (complex(c["weight_re"], c["weight_im"]), Gaussian(c["x0"], c["k0"], c["sigma"]))
            for c in state["components"]
        )
    )


def build_vector_potential(grid: Grid1D, spec: Mapping) -> VectorPotential:
    preset = spec["preset"]
    if preset == "zero":
        return VectorPotential.zero(grid)
    if preset == "constant":
        return VectorPotential.constant(grid, spec["a0"])
    if preset == "gaussian_bump":
        return VectorPotential.gaussian_bump(grid, spec["A0"], spec["x_c"], spec["w"])
    return VectorPotential.linear(grid, spec["b"])


def build_gauge_function(grid: Grid1D, spec: Mapping) -> GaugeFunction:
    preset = spec["preset"]
    if preset == "constant":
        return GaugeFunction.constant(grid, spec["c"])
    if preset == "linear":
        return GaugeFunction.linear(grid, spec["b"])
    if preset == "sine":
        return GaugeFunction.sine(grid, spec["amplitude"], spec["mode"])
    return GaugeFunction.gaussian(grid, spec["amplitude"], spec["x_c"], spec["w"])


def parse_config(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Validate a raw config mapping and build a :class:`ScenarioConfig`."""
    if not isinstance(raw, Mapping):
        raise ConfigError("", "config must be a table")
    _reject_unknown(
        raw,
        {"schema_version", "name", "grid", "constants", "state", "potential", "gauge", "meter",
         "evolution", "probes", "sampling", "thresholds", "tolerances"},
        "",
    )
    version = _number(raw, "schema_version", "", integer=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")
    name = raw.get("name", "unnamed")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")

    grid_d = _grid(raw)
    topology = grid_d["topology"]
    pot_tab = _table(raw, "potential", "") or {"preset": "zero"}
    gauge_tab = _table(raw, "gauge", "")
    resolved = {
        "schema_version": version,
        "name": name,
        "grid": grid_d,
        "constants": _constants(raw),
        "state": _state(raw),
        "potential": _preset_table(pot_tab, "potential", POTENTIAL_PRESETS),
        "gauge": None if gauge_tab is None else _preset_table(gauge_tab, "gauge", GAUGE_PRESETS),
        "meter": _meter(raw),
        "evolution": _evolution(raw, topology),
        "probes": {"x": _probes(raw)},
        "sampling": _sampling(raw),
        "thresholds": _thresholds(raw),
        "tolerances": _tolerances(raw, topology),
    }
    # model objects check the remaining physics constraints
    try:
        grid = Grid1D(grid_d["n"], grid_d["x_min"], grid_d["x_max"], topology)
        consts = PhysicalConstants(**resolved["constants"])
        meter = None if resolved["meter"] is None else MeterConfig(**resolved["meter"])
    except ValueError as exc:
        raise ConfigError("", str(exc)) from None
    if resolved["gauge"] is not None:
        g = resolved["gauge"]
        if g["preset"] == "linear" and topology == "ring" and g["b"] != 0:
            raise ConfigError("gauge.b", "a linear gauge function is not single-valued on a ring")
        if g["preset"] == "gaussian" and not g["w"] > 0:
            raise ConfigError("gauge.w", "must be positive")
    if resolved["potential"]["preset"] == "gaussian_bump" and not resolved["potential"]["w"] > 0:
        raise ConfigError("potential.w", "must be positive")
    if meter is not None and topology != "ring":
        raise ConfigError("meter", "the exact meter model needs ring topology")
    if meter is not None and meter.g == 0:
        raise ConfigError("meter.g", "the coupling must be non-zero to read out weak values")

    return ScenarioConfig(
        name=name,
        grid=grid,
        consts=consts,
        state=build_state_spec(resolved["state"]),
        potential=resolved["potential"],
        gauge=resolved["gauge"],
        meter=meter,
        evolution=resolved["evolution"],
        probes=tuple(resolved["probes"]["x"]),
        n_samples=resolved["sampling"]["n_samples"],
        master_seed=resolved["sampling"]["master_seed"],
        mask_threshold=resolved["thresholds"]["mask"],
        weak_guard=resolved["thresholds"]["weak_regime"],
        tolerances=resolved["tolerances"],
        resolved=_strip_none(resolved),
    )


def _strip_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def loads_config(text: str) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"invalid TOML: {exc}") from None
    return parse_config(raw)


def load_config(path: str | Path) -> ScenarioConfig:
    """Load a scenario from TOML, or from the ``scenario`` echo of a JSON report."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("", "expected a JSON object")
        return parse_config(doc.get("scenario", doc))
    return loads_config(text)
