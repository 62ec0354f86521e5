"""File formats, config validation, and atomic output writing.

Matrix CSV: first line ``# rows cols``, then one comma-separated line per
lattice row.  Matrix binary: magic ``SBD1``, two little-endian uint64 dims,
then float64 little-endian values in column-major order.  Traces: one CSV
per parameter block, one column per coordinate, one row per retained
iteration.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import ConfigError, IoError

MAGIC = b"SBD1"


def atomic_write_bytes(path, payload: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_matrix_csv(path, mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    lines = [f"# {mat.shape[0]} {mat.shape[1]}"]
    for row in mat:
        lines.append(",".join(format(v, ".17g") for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline()
            if not header.startswith("#"):
                raise IoError(f"{path}: missing '# rows cols' header")
            parts = header[1:].split()
            if len(parts) != 2:
                raise IoError(f"{path}: malformed header {header!r}")
            rows, cols = int(parts[0]), int(parts[1])
            data = np.loadtxt(handle, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read matrix from {path}: {exc}") from exc
    if data.shape != (rows, cols):
        raise IoError(f"{path}: header says {rows}x{cols}, data is {data.shape}")
    return data


def write_matrix_binary(path, mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    rows, cols = mat.shape
    payload = MAGIC + struct.pack("<QQ", rows, cols)
    payload += np.ravel(mat, order="F").astype("<f8").tobytes()
    atomic_write_bytes(path, payload)


def read_matrix_binary(path):
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise IoError(f"{path}: bad magic {blob[:4]!r}")
    rows, cols = struct.unpack("<QQ", blob[4:20])
    values = np.frombuffer(blob[20:], dtype="<f8")
    if values.size != rows * cols:
        raise IoError(f"{path}: expected {rows * cols} values, got {values.size}")
    return values.reshape((rows, cols), order="F").copy()


def write_trace_csv(path, array, names):
    array = np.atleast_2d(np.asarray(array, dtype=float))
    if array.ndim == 2 and array.shape[1] != len(names) and array.shape[0] == len(names):
        array = array.T
    lines = [",".join(names)]
    for row in array:
        lines.append(",".join(format(v, ".17g") for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace_csv(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            names = handle.readline().strip().split(",")
            data = np.loadtxt(handle, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read trace from {path}: {exc}") from exc
    return names, data


def read_matrix_any(path):
    """Dispatch on content: binary magic or the CSV header."""
    try:
        with open(path, "rb") as handle:
            head = handle.read(4)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if head == MAGIC:
        return read_matrix_binary(path)
    return read_matrix_csv(path)


def write_pixel_obs_csv(path, rows, cols, values):
    """Exact image observations: one (row, col, value) line each."""
    table = np.column_stack([np.asarray(rows, float), np.asarray(cols, float),
                             np.asarray(values, float)])
    write_matrix_csv(path, table)


def read_pixel_obs_csv(path):
    table = read_matrix_csv(path)
    if table.size == 0:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    if table.shape[1] != 3:
        raise IoError(f"{path}: pixel observation file needs 3 columns")
    return table[:, 0].astype(int), table[:, 1].astype(int), table[:, 2]


# --- configuration ---------------------------------------------------------

CONFIG_SCHEMA = {
    "model": {
        "lattice": {"n_v_obs", "n_h_obs", "m_v", "m_h", "blur_len"},
        "blur": {"phi", "p"},
        "image": {"phi_h", "p_h", "phi_v", "p_v"},
        "noise": {"phi_h", "p_h", "phi_v", "p_v"},
        "hyper": {"alpha_c", "beta_c", "alpha_w", "beta_w",
                  "alpha_zeta", "beta_zeta", "psi"},
    },
    "sampler": {
        "alpha", "iterations", "burn_in", "thin", "seed",
        "hmc_steps", "hmc_step_size", "hmc_adapt", "hmc_target_accept",
        "image_trace",
    },
    "io": {"data", "image_obs", "out_dir"},
    "experiment": {
        "name", "m_values", "mv_values", "mh_values", "iterations", "burn_in",
        "workers", "n_v_obs", "n_h_obs", "blur_len", "embed_factor",
        "exact_obs_column",
    },
    "simulate": {"n_v_obs", "n_h_obs", "blur_len", "embed_factor",
                 "exact_obs_column"},
}


def _check_keys(section, schema, prefix):
    if not isinstance(section, dict):
        raise ConfigError(f"config section '{prefix}' must be an object")
    for key, value in section.items():
        if isinstance(schema, dict):
            if key not in schema:
                raise ConfigError(f"unknown config key: {prefix}{key}")
            child = schema[key]
            if isinstance(child, (dict, set)):
                _check_keys(value, child, f"{prefix}{key}.")
        else:
            if key not in schema:
                raise ConfigError(f"unknown config key: {prefix}{key}")


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in cfg.items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        _check_keys(value, CONFIG_SCHEMA[key], f"{key}.")
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            cfg = json.load(handle)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def config_hash(cfg):
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(path, cfg, extra=None):
    payload = {"config": cfg, "config_hash": config_hash(cfg)}
    if extra:
        payload.update(extra)
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True,
                                       default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")
