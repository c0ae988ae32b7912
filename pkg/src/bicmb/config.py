"""TOML run configurations.

A config has four tables; only ``[geometry]`` is required::

    [geometry]
    mode = "single-user"      # or "multi-user"
    M_t = 2
    M_r = 2
    N_t = 64
    N_r = 32
    N_s = 1

    [fading]
    L = 2                     # scalar or matrix (rows: receive RAUs / users)
    beta_db = -20.0           # scalar or matrix; -inf zeroes a block

    [code]
    generators = [0o133, 0o171]
    constraint_length = 7

    [simulation]
    modulation = "bpsk"
    snr_db = [0.0, 5.0, 10.0]
    max_frames = 10000
    target_bit_errors = 100
    seed = 0
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .channel import FadingProfile, SystemGeometry
from .convcode import CodeSpec
from .errors import ConfigError
from .linksim import SimConfig

DEFAULT_L = 2
DEFAULT_BETA_DB = -20.0

GEOMETRY_KEYS = ("mode", "M_t", "M_r", "N_t", "N_r", "K", "N_s", "N_t_rf", "N_r_rf", "d_lambda")
FADING_KEYS = ("L", "beta_db")
CODE_KEYS = ("generators", "constraint_length")
SIM_KEYS = ("modulation", "snr_db", "max_frames", "target_bit_errors", "seed", "info_bits", "coded",
            "chunk_frames", "interleaver")
TABLES = {"geometry": GEOMETRY_KEYS, "fading": FADING_KEYS, "code": CODE_KEYS, "simulation": SIM_KEYS}


def _check_keys(raw: dict) -> None:
    for table, value in raw.items():
        if table not in TABLES:
            raise ConfigError(f"unknown table [{table}]", key=table)
        if not isinstance(value, dict):
            raise ConfigError(f"[{table}] must be a table", key=table)
        for key in value:
            if key not in TABLES[table]:
                raise ConfigError(f"unknown key {table}.{key}; allowed: {', '.join(TABLES[table])}",
                                  key=f"{table}.{key}")
    if "geometry" not in raw:
        raise ConfigError("missing required table [geometry]", key="geometry")


def _matrix(value, shape, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise ConfigError(f"fading.{name} has shape {arr.shape}, geometry needs {shape}", key=f"fading.{name}")
    return arr


def config_from_dict(raw: dict) -> SimConfig:
    """Build a validated :class:`SimConfig`, filling defaults."""
    _check_keys(raw)
    try:
        geometry = SystemGeometry(**raw["geometry"])
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"geometry.{exc.key}") from None
    except TypeError as exc:
        raise ConfigError(f"geometry: {exc}", key="geometry") from None

    fading = raw.get("fading", {})
    shape = geometry.profile_shape
    L = _matrix(fading.get("L", DEFAULT_L), shape, "L")
    beta_db = _matrix(fading.get("beta_db", DEFAULT_BETA_DB), shape, "beta_db")
    try:
        profile = FadingProfile(L, beta_db)
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"fading.{exc.key}") from None

    try:
        code = CodeSpec(**raw.get("code", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"code: {exc}", key="code") from None

    sim = dict(raw.get("simulation", {}))
    if "snr_db" in sim:
        sim["snr_db"] = tuple(float(s) for s in np.atleast_1d(sim["snr_db"]))
    try:
        return SimConfig(geometry, profile, code=code, **sim)
    except ConfigError as exc:
        key = exc.key if exc.key is None or "." in exc.key else (
            f"geometry.{exc.key}" if exc.key in GEOMETRY_KEYS else f"simulation.{exc.key}")
        raise ConfigError(str(exc), key=key) from None


def _to_py(arr: np.ndarray, kind):
    return [[kind(v) for v in row] for row in arr]


def config_to_dict(config: SimConfig) -> dict:
    """Fully resolved config; ``config_from_dict`` of the result is equivalent."""
    g = config.geometry
    return {
        "geometry": {k: getattr(g, k) for k in GEOMETRY_KEYS},
        "fading": {"L": _to_py(config.profile.L, int), "beta_db": _to_py(config.profile.beta_db, float)},
        "code": {"generators": list(config.code.generators), "constraint_length": config.code.constraint_length},
        "simulation": {
            "modulation": config.modulation,
            "snr_db": list(config.snr_db),
            "max_frames": config.max_frames,
            "target_bit_errors": config.target_bit_errors,
            "seed": config.seed,
            "info_bits": config.info_bits,
            "coded": config.coded,
            "chunk_frames": config.chunk_frames,
            "interleaver": config.interleaver,
        },
    }


def load_config(path) -> SimConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found", key=None)
    try:
        raw = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


parse_config = load_config


def dump_config(config: SimConfig) -> str:
    return tomli_w.dumps(config_to_dict(config))


def config_hash(config: SimConfig) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON form."""
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def with_overrides(config: SimConfig, **changes) -> SimConfig:
    """Copy of ``config`` with simulation fields replaced (``None`` values ignored)."""
    changes = {k: v for k, v in changes.items() if v is not None}
    return dataclasses.replace(config, **changes) if changes else config
