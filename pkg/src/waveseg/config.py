"""Sectioned key-value configuration with CLI override support."""

import configparser
import copy

from .exceptions import ConfigurationError

DEFAULTS = {
    "corpus": {
        "size": 64,
        "num_classes": 4,
        "n_train": 200,
        "n_val": 50,
    },
    "model": {
        "c_dec": 32,
        "encoder_channels": "16,32,64,96",
        "state_size": 8,
        "directions": 2,
        "ffn_expansion": 4,
        "per_band_vssm": False,
        "scan_mode": "parallel",
        "toggle_hpg": "on",
        "toggle_sda": "on",
        "wm": "wavelet",
    },
    "train": {
        "seed": 1,
        "steps": 2000,
        "batch_size": 8,
        "lr": 2e-3,
        "weight_decay": 0.01,
        "warmup_steps": 100,
        "eval_every": 250,
        "precision": "f64",
    },
    "eval": {
        "boundary_radius": 2,
        "batch_size": 8,
    },
    "ablate": {
        "seeds": "1,2,3",
        "steps": 500,
        "eval_every": 0,
    },
    "bench": {
        "lengths": "1024,2048",
        "channels": 4,
        "state_size": 16,
        "repeats": 5,
        "warmup": 2,
    },
}


def default_config():
    return copy.deepcopy(DEFAULTS)


def _coerce(section, key, raw, reference):
    kind = type(reference)
    try:
        if kind is bool:
            lowered = str(raw).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(
            f"config [{section}] {key}: cannot parse {raw!r} as {kind.__name__}"
        ) from err


def load_config(path=None):
    """Defaults overlaid with an INI-style file, if given."""
    cfg = default_config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except OSError as err:
        raise ConfigurationError(f"{path}: cannot read config ({err})") from err
    except configparser.Error as err:
        raise ConfigurationError(f"{path}: {err}") from err
    for section in parser.sections():
        if section not in cfg:
            raise ConfigurationError(f"{path}: unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in cfg[section]:
                raise ConfigurationError(
                    f"{path}: unknown key {key!r} in section [{section}]"
                )
            cfg[section][key] = _coerce(section, key, raw, DEFAULTS[section][key])
    return cfg


def apply_overrides(cfg, overrides):
    """Apply (section, key, value) CLI overrides; CLI wins over file values."""
    for section, key, value in overrides:
        if value is None:
            continue
        if section not in cfg or key not in cfg[section]:
            raise ConfigurationError(f"unknown config target [{section}] {key}")
        cfg[section][key] = _coerce(section, key, value, DEFAULTS[section][key])
    return cfg


def int_list(raw):
    try:
        return [int(part) for part in str(raw).split(",") if part.strip()]
    except ValueError as err:
        raise ConfigurationError(f"cannot parse integer list from {raw!r}") from err
