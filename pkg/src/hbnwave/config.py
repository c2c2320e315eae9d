"""JSON run configuration: defaults, dotted overrides and validation."""
from __future__ import annotations

import copy
import json
import math
import os
from importlib import resources
from pathlib import Path

from .exceptions import ConfigurationError
from .lattice import load_species_file

DATA_DIR_ENV = "HBNWAVE_DATA_DIR"
MODES = ("propagate", "sweep", "farfield", "slice-dump")

DEFAULTS = {
    "species_file": "hbn_species.json",
    "lattice": {"n_cells": 12, "lattice_constant": 2.504},
    "hole": "hole_6A",
    "grid": {"extent": 15.9, "n_points": 128},
    "potential": {"cutoff": 12.0, "u_max": 100.0, "z_table_step": 0.02},
    "propagation": {
        "velocity": 2.0,
        "z_start": -4.23,
        "z_stop": 4.23,
        "dt": None,
        "phase_limit": 0.3,
        "max_dz_per_step": 0.01,
        "absorption_dz": 0.01,
        "snapshot_every": 10,
    },
    "farfield": {
        "enabled": True,
        "distance": 1.0,
        "window": 4.0,
        "n_points": 512,
        "method": "direct",
        "input_field": None,
        "pgm": True,
    },
    "sweep": {
        "holes": ["hole_6A", "hole_10A", "snowflake"],
        "velocities": None,
        "workers": 1,
        "record_wall_time": False,
    },
    "slice": {"z": 2.0},
}

# keys whose value may be null in addition to their default's type
_NULLABLE = {
    "propagation.dt": float,
    "propagation.absorption_dz": float,
    "farfield.input_field": str,
    "sweep.velocities": list,
}


def default_data_dir():
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("hbnwave") / "data"))


def resolve_data_path(name, config_dir=None):
    """Locate a data file: absolute, next to the config, or in the data directory."""
    p = Path(name)
    if p.is_absolute():
        return p
    if config_dir is not None and (Path(config_dir) / p).exists():
        return Path(config_dir) / p
    return default_data_dir() / p


def merge(defaults, user):
    out = copy.deepcopy(defaults)
    for k, v in user.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text):
    """``"a.b=value"`` -> ``(["a", "b"], value)``; the value is JSON when it parses."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(cfg, overrides):
    cfg = copy.deepcopy(cfg)
    for text in overrides:
        path, value = parse_override(text)
        node = cfg
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {text!r}: {part!r} is not a section")
        node[path[-1]] = value
    return cfg


def read_config_file(path):
    """Load a config (or a manifest, using its materialised ``config``)."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    if "config" in data and "outputs" in data:
        data = data["config"]
    return data


def _type_name(t):
    return {float: "number", int: "integer", bool: "boolean", str: "string",
            list: "list", dict: "object"}[t]


def _check_types(user, defaults, prefix, out):
    for k, v in user.items():
        path = f"{prefix}{k}"
        if k not in defaults:
            out.append(f"{path}: unknown key (expected one of {sorted(defaults)})")
            continue
        d = defaults[k]
        if isinstance(d, dict):
            if not isinstance(v, dict):
                out.append(f"{path}: expected an object")
            else:
                _check_types(v, d, path + ".", out)
            continue
        if v is None:
            if d is not None and path not in _NULLABLE:
                out.append(f"{path}: must not be null")
            continue
        want = _NULLABLE.get(path, type(d))
        if want is float:
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        elif want is int:
            ok = isinstance(v, int) and not isinstance(v, bool)
        else:
            ok = isinstance(v, want)
        if not ok:
            out.append(f"{path}: expected {_type_name(want)}, got {json.dumps(v)}")


def _num(cfg, path):
    node = cfg
    for part in path.split("."):
        node = node[part]
    return node


def _semantic_checks(cfg, species, out):
    def positive(path):
        try:
            v = _num(cfg, path)
        except (KeyError, TypeError):
            return
        if isinstance(v, (int, float)) and not isinstance(v, bool) and not (v > 0 and math.isfinite(v)):
            out.append(f"{path}: must be positive, got {v!r}")

    for p in ("lattice.lattice_constant", "grid.extent", "potential.cutoff",
              "potential.u_max", "potential.z_table_step", "propagation.velocity",
              "propagation.phase_limit", "propagation.max_dz_per_step",
              "farfield.distance", "farfield.window"):
        positive(p)
    prop = cfg["propagation"]
    for p in ("dt", "absorption_dz"):
        v = prop.get(p)
        if isinstance(v, (int, float)) and not isinstance(v, bool) and not (v > 0):
            out.append(f"propagation.{p}: must be positive or null, got {v!r}")
    n = cfg["lattice"].get("n_cells")
    if isinstance(n, int) and n < 1:
        out.append(f"lattice.n_cells: must be >= 1, got {n}")
    for p in ("grid.n_points", "farfield.n_points"):
        v = _num(cfg, p)
        if isinstance(v, int) and not isinstance(v, bool) and (v < 16 or v & (v - 1)):
            out.append(f"{p}: must be a power of two >= 16, got {v}")
    zs, ze = prop.get("z_start"), prop.get("z_stop")
    if all(isinstance(z, (int, float)) for z in (zs, ze)) and not (zs < 0 < ze):
        out.append(f"propagation.z_start/z_stop: need z_start < 0 < z_stop, got {zs}, {ze}")
    se = prop.get("snapshot_every")
    if isinstance(se, int) and se < 1:
        out.append(f"propagation.snapshot_every: must be >= 1, got {se}")
    if cfg["farfield"].get("method") not in ("direct", "fourier"):
        out.append(f"farfield.method: expected 'direct' or 'fourier', got {cfg['farfield'].get('method')!r}")
    w = cfg["sweep"].get("workers")
    if isinstance(w, int) and w < 1:
        out.append(f"sweep.workers: must be >= 1, got {w}")
    vel = cfg["sweep"].get("velocities")
    if isinstance(vel, list):
        if not vel or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vel):
            out.append("sweep.velocities: expected a non-empty list of numbers")
        else:
            if any(b <= a for a, b in zip(vel, vel[1:])):
                out.append("sweep.velocities: must be strictly increasing")
            if min(vel) < 0.05 or max(vel) > 200:
                out.append("sweep.velocities: must lie within [0.05, 200] km/s")
    if species is not None:
        available = sorted(species.holes)
        names = [("hole", cfg.get("hole"))]
        names += [(f"sweep.holes[{i}]", h) for i, h in enumerate(cfg["sweep"].get("holes") or [])]
        for path, name in names:
            if isinstance(name, str) and name not in species.holes:
                out.append(f"{path}: unknown hole {name!r}; available holes: {available}")
        for sp in ("boron", "nitrogen"):
            if sp not in species.species:
                out.append(f"species_file: missing species {sp!r}")
        for key in ("mass", "alpha0"):
            if key not in species.probe:
                out.append(f"species_file: probe.{key} missing")


def validate_data(user, config_dir=None):
    """All problems with a config dict, as ``"path: message"`` strings.

    Returns ``(diagnostics, resolved_config, species_file_contents)``.
    """
    out = []
    if not isinstance(user, dict):
        return ["<root>: expected an object"], None, None
    _check_types(user, DEFAULTS, "", out)
    if out:
        return out, None, None
    cfg = merge(DEFAULTS, user)
    species = None
    path = resolve_data_path(cfg["species_file"], config_dir)
    try:
        species = load_species_file(path)
    except OSError as exc:
        out.append(f"species_file: cannot read {str(path)!r}: {exc.strerror or exc}")
    except (ValueError, ConfigurationError) as exc:
        out.append(f"species_file: {exc}")
    _semantic_checks(cfg, species, out)
    return out, cfg, species


def validate(config_path, overrides=()):
    """Validation diagnostics for a config file; empty when it is valid."""
    try:
        user = read_config_file(config_path)
    except OSError as exc:
        return [f"{config_path}: cannot read config: {exc.strerror or exc}"]
    except json.JSONDecodeError as exc:
        return [f"{config_path}: invalid JSON: {exc}"]
    except ConfigurationError as exc:
        return [str(exc)]
    try:
        user = apply_overrides(user, overrides)
    except ConfigurationError as exc:
        return [str(exc)]
    diags, _, _ = validate_data(user, Path(config_path).parent)
    return diags
