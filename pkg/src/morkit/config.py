"""Experiment configuration: one TOML tree, explicit seeds, flat overrides."""

import copy

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

#: sections each subcommand must provide (seeds are never defaulted)
REQUIRED_SECTIONS = {
    "snapshots": ("model", "sampling"),
    "basis": ("model", "sampling", "basis"),
    "compare-bases": ("model", "sampling", "basis"),
    "ncrba-train": ("model", "sampling", "ncrba"),
    "ncrba-solve": ("model", "sampling", "ncrba"),
    "quadratic": ("model", "sampling", "quadratic"),
    "toy-quadratic": ("toy",),
    "taylor-convergence": ("model", "sampling", "manifold"),
    "quad-law": ("model", "sampling", "manifold"),
    "report": (),
}

MODEL_DEFAULTS = {
    "subfins": 4,
    "mesh_density": 8,
    "p": 3,
}

SAMPLING_DEFAULTS = {
    "train_size": 100,
    "pod_size": 100,
    "test_size": 200,
}


def load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from exc


def parse_override(text):
    """``key.path=value`` with TOML literal values (bare words fall back to str)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def apply_overrides(config, overrides):
    config = copy.deepcopy(config)
    for text in overrides:
        key, value = parse_override(text)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends through a non-table")
        node[parts[-1]] = value
    return config


def validate(config, subcommand):
    """Check required sections and the explicit seed; fill section defaults."""
    if subcommand not in REQUIRED_SECTIONS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    merged = copy.deepcopy(config)
    for section in REQUIRED_SECTIONS[subcommand]:
        if section not in merged:
            raise ConfigError(f"missing config section [{section}] for {subcommand}")
    if "sampling" in REQUIRED_SECTIONS[subcommand]:
        if "seed" not in merged.get("sampling", {}):
            raise ConfigError("missing explicit [sampling].seed (no entropy defaults)")
    if "model" in merged:
        merged["model"] = {**MODEL_DEFAULTS, **merged["model"]}
    if "sampling" in merged:
        merged["sampling"] = {**SAMPLING_DEFAULTS, **merged["sampling"]}
    return merged
