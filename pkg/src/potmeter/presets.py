"""Built-in scenarios, kept as TOML text so they can be printed and edited."""

from __future__ import annotations

from .config import ScenarioConfig, loads_config
from .errors import ConfigError

_RING_PACKET = """\
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
"""

PRESETS = {
    "zero-field": f"""\
schema_version = 1
name = "zero-field"

{_RING_PACKET}
[potential]
preset = "zero"

[gauge]
preset = "sine"
amplitude = 0.5
mode = 1

[meter]
sigma_q = 1.0
g = 0.05
k_m = 0.0

[evolution]
dt = 1e-3
steps = 500

[probes]
x = [-2.0, -1.0, 0.0, 1.0, 2.0]

[sampling]
n_samples = 200000
master_seed = 1
""",
    "bump-reconstruct": f"""\
schema_version = 1
name = "bump-reconstruct"

{_RING_PACKET}
[potential]
preset = "gaussian_bump"
A0 = 0.7
x_c = 0.0
w = 2.0

[gauge]
preset = "sine"
amplitude = 0.5
mode = 2
""",
    "meter-endtoend": f"""\
schema_version = 1
name = "meter-endtoend"

{_RING_PACKET}
[potential]
preset = "gaussian_bump"
A0 = 0.7
x_c = 0.0
w = 2.0

[meter]
sigma_q = 1.0
g = 0.05
k_m = 0.0

[probes]
x = [-2.0, -1.0, 0.0, 1.0, 2.0]

[sampling]
n_samples = 1000000
master_seed = 20240611
""",
    "dynamics-open": """\
schema_version = 1
name = "dynamics-open"

[grid]
n = 1024
x_min = -12.0
x_max = 12.0
topology = "open"

[state]
kind = "gaussian"
x0 = 0.0
k0 = 0.0
sigma = 1.2

[potential]
preset = "gaussian_bump"
A0 = 0.7
x_c = 0.0
w = 2.0

[gauge]
preset = "linear"
b = 0.5

[evolution]
dt = 1e-3
steps = 1000

[tolerances]
# the tails beyond ~8 sigma of a 24-wide box fall below the density mask
reconstruct_masked_fraction = 0.4
""",
}


def preset_text(name: str) -> str:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r} (choose from {', '.join(PRESETS)})") from None


def load_preset(name: str) -> ScenarioConfig:
    return loads_config(preset_text(name))
