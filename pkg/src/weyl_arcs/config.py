"""TOML run configuration: parsing, validation and dotted-key overrides."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .lattice import LatticeError, ModelParams

COMMANDS = (
    "bands", "phase-diagram", "fermi-arcs", "berry-surface", "evolve", "bloch-map", "tof",
    "farfield", "chiral-channel", "concurrence-scan", "cavity", "j12-scan", "chern", "weyl-points",
)

PRESETS = {
    # phi = 0 phase-diagram crosses
    "I": {"J": 1.0, "Jprime": 0.0, "m": 0.0, "phi": 0.0},
    "II": {"J": 1.0, "Jprime": 0.25, "m": 0.5, "phi": 0.0},
    "III": {"J": 1.0, "Jprime": 0.3, "m": 1.5, "phi": 0.0},
    # phi = pi/2 negative-refraction configuration
    "NR": {"J": 1.0, "Jprime": 0.4, "m": 0.0, "phi_pi_units": 0.5},
}

MODEL_KEYS = {"preset", "J", "Jprime", "m", "phi", "phi_pi_units", "epsilon"} | {
    f"t{i}" for i in range(1, 11)} | {f"phi{i}" for i in range(1, 11)}

GEOMETRY_KEYS = {
    "builder", "n_par", "n_perp", "n_z", "n_side", "n_side_perp", "nx", "ny", "termination",
    "terminations", "absorber_facets", "absorber_gamma_J", "absorber_layers", "N_s",
}
BUILDERS = ("slab_block", "rect_block", "braid_box", "cubic_block")

EMITTER_KEYS = {"facet", "site", "s", "u", "z", "omega_J", "g_over_J", "gamma0_J"}

COMMON_EXPERIMENT = {"command", "threads"}
EXPERIMENT_KEYS = {
    "bands": {"family", "kx", "kz", "n_k", "N_s"},
    "phase-diagram": {"m_min", "m_max", "n_m", "Jprime_min", "Jprime_max", "n_Jprime"},
    "fermi-arcs": {"N_s", "omega_J", "n_par", "n_kz"},
    "berry-surface": {"N_s", "n_par", "n_kz"},
    "evolve": {"t_final_J", "dt_J", "n_samples", "snapshot_times_J", "g_over_J"},
    "bloch-map": {"t_J", "dt_J", "g_over_J", "N_s", "window_J"},
    "tof": {"times_J", "dt_J", "g_over_J", "pad"},
    "farfield": {"times_J", "dt_J", "g_over_J", "wavelength_a", "dipole", "n_theta", "n_phi"},
    "chiral-channel": {"distance", "g_over_J", "t_final_J", "dt_J", "n_samples"},
    "concurrence-scan": {"distances", "g_list", "t_final_J", "dt_J", "n_samples"},
    "cavity": {"distance", "g_over_J", "t_final_J", "dt_J", "n_samples", "window_J"},
    "j12-scan": {"sizes", "distances", "g_over_J", "t_final_J", "dt_J", "n_samples", "window_J"},
    "chern": {"n_path", "n_kz", "grid"},
    "weyl-points": {"tol", "grid"},
}

TOP_KEYS = {"model", "geometry", "emitters", "experiment"}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    model: ModelParams
    geometry: dict
    emitters: list
    experiment: dict
    raw: dict = field(default_factory=dict)

    @property
    def command(self) -> str:
        return self.experiment["command"]

    def get(self, key, default=None):
        return self.experiment.get(key, default)

    def digest(self) -> str:
        """SHA-256 of the resolved config; the worker count does not change results so is left out."""
        raw = copy.deepcopy(self.raw)
        raw.get("experiment", {}).pop("threads", None)
        blob = json.dumps(raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _coerce(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides (value parsed as a TOML literal)."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not key=value"])
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError([f"override {key!r} does not address a table"])
        node[parts[-1]] = _coerce(value.strip())
    return out


def _model(section: dict, errors: list) -> ModelParams | None:
    data = dict(section)
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            errors.append(f"model.preset must be one of {sorted(PRESETS)}, got {preset!r}")
            return None
        base = dict(PRESETS[preset])
        if "phi" in data or "phi_pi_units" in data:
            base.pop("phi", None)
            base.pop("phi_pi_units", None)
        base.update(data)
        data = base
    if not data:
        errors.append("model section is empty")
        return None
    try:
        return ModelParams.from_dict(data)
    except (LatticeError, KeyError, TypeError, ValueError) as exc:
        errors.append(f"model: {exc}")
        return None


def _check_positive_int(sec, name, key, errors, odd=False):
    if key in sec:
        v = sec[key]
        if not isinstance(v, int) or v < 1:
            errors.append(f"{name}.{key} must be a positive integer")
        elif odd and v % 2 == 0:
            errors.append(f"{key} must be odd")


def validate(raw: dict) -> RunConfig:
    errors = []
    for k in raw:
        if k not in TOP_KEYS:
            errors.append(f"unknown section {k!r}")
    model_sec = raw.get("model", {})
    geom = dict(raw.get("geometry", {}))
    emitters = raw.get("emitters", [])
    exp = dict(raw.get("experiment", {}))
    if not isinstance(model_sec, dict):
        errors.append("model must be a table")
        model_sec = {}
    for k in model_sec:
        if k not in MODEL_KEYS:
            errors.append(f"unknown key model.{k}")
    model = _model({k: v for k, v in model_sec.items() if k in MODEL_KEYS}, errors) if model_sec else None
    if not model_sec:
        errors.append("missing required section [model]")

    for k in geom:
        if k not in GEOMETRY_KEYS:
            errors.append(f"unknown key geometry.{k}")
    if "builder" in geom and geom["builder"] not in BUILDERS:
        errors.append(f"geometry.builder must be one of {BUILDERS}")
    for key in ("n_par", "n_perp", "n_z", "n_side", "n_side_perp", "nx", "ny", "absorber_layers"):
        _check_positive_int(geom, "geometry", key, errors)
    _check_positive_int(geom, "geometry", "N_s", errors, odd=True)
    if "absorber_gamma_J" in geom and not (isinstance(geom["absorber_gamma_J"], (int, float))
                                           and geom["absorber_gamma_J"] >= 0):
        errors.append("geometry.absorber_gamma_J must be >= 0")

    if not isinstance(emitters, list):
        errors.append("emitters must be an array of tables")
        emitters = []
    for i, e in enumerate(emitters):
        for k in e:
            if k not in EMITTER_KEYS:
                errors.append(f"unknown key emitters[{i}].{k}")
        if e.get("g_over_J", 0) < 0:
            errors.append(f"emitters[{i}].g_over_J must be >= 0")
        if e.get("gamma0_J", 0) < 0:
            errors.append(f"emitters[{i}].gamma0_J must be >= 0")

    command = exp.get("command")
    if command is None:
        errors.append("experiment section is missing the required key 'command'")
    elif command not in COMMANDS:
        errors.append(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    else:
        allowed = EXPERIMENT_KEYS[command] | COMMON_EXPERIMENT
        for k in exp:
            if k not in allowed:
                errors.append(f"unknown key experiment.{k} for command {command!r}")
        _check_positive_int(exp, "experiment", "N_s", errors, odd=True)
        for key in ("n_k", "n_m", "n_Jprime", "n_par", "n_kz", "n_samples", "n_theta", "n_phi",
                    "n_path", "grid", "pad", "distance", "threads"):
            _check_positive_int(exp, "experiment", key, errors)
        for key in ("t_final_J", "t_J", "dt_J", "wavelength_a", "window_J"):
            if key in exp and not (isinstance(exp[key], (int, float)) and exp[key] > 0):
                errors.append(f"experiment.{key} must be > 0")
        if "g_over_J" in exp and not (isinstance(exp["g_over_J"], (int, float)) and exp["g_over_J"] >= 0):
            errors.append("experiment.g_over_J must be >= 0")
        if "dipole" in exp:
            d = exp["dipole"]
            if not (isinstance(d, list) and len(d) == 3 and math.isclose(sum(x * x for x in d), 1.0, rel_tol=1e-9)):
                errors.append("experiment.dipole must be a unit 3-vector")
    if errors:
        raise ConfigError(errors)
    return RunConfig(model, geom, list(emitters), exp, raw)


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse TOML text into a validated RunConfig; all problems are reported at once."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    return validate(apply_overrides(raw, overrides))
