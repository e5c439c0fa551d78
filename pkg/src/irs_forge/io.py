"""Plain-text file formats: patterns, results, configs and realization dumps."""
from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, ScattererSet, SystemConfig

PATTERN_HEADER = "theta_r_deg,phi_r_deg,g_over_lambda_db,g_phase_rad"


def write_pattern_csv(path, theta_deg, phi_deg, g_over_lambda):
    theta_deg, phi_deg, g = np.broadcast_arrays(np.asarray(theta_deg, float), np.asarray(phi_deg, float),
                                                np.asarray(g_over_lambda, complex))
    db = 20 * np.log10(np.maximum(np.abs(g), 1e-300))
    with open(path, "w", newline="") as fh:
        fh.write(PATTERN_HEADER + "\n")
        for t, p, v, a in zip(theta_deg.ravel(), phi_deg.ravel(), db.ravel(), np.angle(g).ravel()):
            fh.write(f"{t:.6f},{p:.6f},{v:.10f},{a:.10f}\n")


def read_pattern_csv(path):
    with open(path) as fh:
        if fh.readline().strip() != PATTERN_HEADER:
            raise ValueError(f"{path} is not a pattern file")
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def results_header(n_users):
    return "realization_id,scheme,p_dbm,iterations," + ",".join(f"sinr_user_{k + 1}" for k in range(n_users))


def format_result_row(realization_id, scheme, result, n_users):
    sinrs = result.sinr if result.sinr is not None else np.full(n_users, np.nan)
    sinr_db = ",".join(f"{10 * np.log10(s):.6f}" if s > 0 else "nan" for s in sinrs)
    return f"{realization_id},{scheme},{result.p_dbm:.6f},{result.iterations},{sinr_db}"


# ---------------------------------------------------------------- configs

_SECTIONS = {
    "system": ("bs_rows", "bs_cols", "n_users", "n_tiles", "gamma_db"),
    "tile": ("tile_size", "pitch", "cell_size", "tau"),
    "codebook": ("codebook_x", "codebook_y", "codebook_0", "modes_per_user", "preselection", "delta_db"),
    "channel": ("paths_direct", "paths_bs_irs", "paths_irs_user", "rho_d", "rho_t", "rho_r",
                "shadow_d_db", "shadow_t_db", "shadow_r_db"),
    "noise": ("bandwidth_hz", "n0_dbm_hz", "nf_db"),
    "optimizer": ("ao_iterations", "ao_tol"),
}
_FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(SystemConfig)}


def _coerce(key, value):
    if key not in _FIELD_TYPES:
        raise KeyError(f"unknown configuration key {key!r}")
    kind = _FIELD_TYPES[key]
    if kind is int:
        return int(float(value)) if float(value).is_integer() else int(value)
    if kind is float:
        return float(value)
    return str(value).strip()


def parse_overrides(items):
    """``key=value`` or ``section.key=value`` strings to a field dict."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip().split(".")[-1]
        out[key] = _coerce(key, value.strip())
    return out


def read_config(path=None, overrides=()):
    """Load a sectioned key=value file; unknown keys are an error."""
    values = {}
    extra = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, value in parser.items(section):
                if section == "experiment":
                    extra[key] = value
                else:
                    values[key] = _coerce(key, value)
    values.update(parse_overrides(overrides))
    return SystemConfig(**values), extra


def write_config(config: SystemConfig, path, extra=None):
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {k: repr(getattr(config, k)) if isinstance(getattr(config, k), float)
                           else str(getattr(config, k)) for k in keys}
    if extra:
        parser["experiment"] = {k: str(v) for k, v in extra.items()}
    with open(path, "w") as fh:
        parser.write(fh)


# ---------------------------------------------------------- realizations

def _write_block(fh, name, arr):
    arr = np.asarray(arr)
    kind = "complex" if np.iscomplexobj(arr) else ("int" if arr.dtype.kind in "iu" else "float")
    shape = "x".join(str(s) for s in arr.shape) or "scalar"
    fh.write(f"## {name} shape={shape} dtype={kind}\n")
    flat = arr.ravel()
    if kind == "complex":
        fh.write("re,im\n")
        for v in flat:
            fh.write(f"{float(v.real)!r},{float(v.imag)!r}\n")
    else:
        fh.write("value\n")
        for v in flat:
            fh.write(f"{v.item()!r}\n")


def dump_realization(real: ChannelRealization, path):
    """Write a realization as CSV blocks under a ``#`` manifest header."""
    path = Path(path)
    blocks = {"direct": real.direct, "tiles": real.tiles, "gamma": real.gamma, "mode_ids": real.mode_ids}
    if real.scatterers is not None:
        blocks.update({f"scatterers.{k}": v for k, v in real.scatterers.arrays().items()})
    with open(path, "w", newline="") as fh:
        fh.write("# irs-forge realization\n")
        fh.write(f"# seed={real.seed!r}\n" if isinstance(real.seed, (int, np.integer)) else "# seed=\n")
        fh.write(f"# config_hash={real.config_hash}\n")
        fh.write(f"# sigma2={float(real.sigma2)!r}\n")
        if real.config is not None:
            for f in dataclasses.fields(real.config):
                fh.write(f"# config.{f.name}={getattr(real.config, f.name)!r}\n")
        fh.write(f"# blocks={','.join(blocks)}\n")
        for name, arr in blocks.items():
            _write_block(fh, name, arr)


def load_realization(path) -> ChannelRealization:
    meta, cfg, blocks = {}, {}, {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("# "):
        key, _, value = lines[i][2:].partition("=")
        if key.startswith("config."):
            cfg[key[7:]] = value
        else:
            meta[key] = value
        i += 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "##":
            raise ValueError(f"malformed block header on line {i + 1}")
        name = head[1]
        attrs = dict(h.split("=") for h in head[2:])
        shape = () if attrs["shape"] == "scalar" else tuple(int(s) for s in attrs["shape"].split("x"))
        count = int(np.prod(shape)) if shape else 1
        rows = lines[i + 2:i + 2 + count]
        if attrs["dtype"] == "complex":
            vals = np.array([complex(float(a), float(b)) for a, b in (r.split(",") for r in rows)])
        elif attrs["dtype"] == "int":
            vals = np.array([int(r) for r in rows], dtype=int)
        else:
            vals = np.array([float(r) for r in rows])
        blocks[name] = vals.reshape(shape)
        i += 2 + count
    config = None
    if cfg:
        config = SystemConfig(**{k: _coerce(k, v.strip("'\"")) for k, v in cfg.items()})
    sc_keys = [f.name for f in dataclasses.fields(ScattererSet)]
    scatterers = None
    if all(f"scatterers.{k}" in blocks for k in sc_keys):
        scatterers = ScattererSet(**{k: blocks[f"scatterers.{k}"] for k in sc_keys})
    seed = int(meta["seed"]) if meta.get("seed") else None
    return ChannelRealization(blocks["direct"], blocks["tiles"], float(meta["sigma2"]), blocks["gamma"],
                              blocks["mode_ids"], seed, meta.get("config_hash", ""), scatterers, config)
