"""JSON run files, result export and versioned CSV tables.

Complex numbers are stored as ``[re, im]`` pairs and floats are written with
``repr`` precision, so every object round-trips exactly.  Keys ending in
``_db`` are accepted wherever a linear power/SINR value is expected.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .radar import BeampatternSpec, beampattern_grid
from .scenario import Scenario, SystemConfig, Target, angle_grid, generate_channel
from .sdr import DesignResult, SecurityThresholds

BEAMPATTERN_CSV = "# secure-dfrc beampattern v1"
SWEEP_CSV = "# secure-dfrc sweep v1"
DB_KEYS = ("total_power", "noise_var_lu", "noise_var_eve", "gamma_c", "gamma_e")


# ---------------------------------------------------------------- encoding

def encode_complex(a):
    """Nested ``[re, im]`` lists for a complex scalar/array."""
    arr = np.asarray(a, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def decode_complex(obj, where: str = "value") -> np.ndarray | complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected [re, im] pairs") from exc
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ConfigError(f"{where}: expected [re, im] pairs, got shape {arr.shape}")
    out = arr[..., 0] + 1j * arr[..., 1]
    return complex(out) if out.ndim == 0 else out


def _take(d: dict, allowed, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return dict(d)


def _linear(d: dict, key: str, where: str, default=None):
    """Read ``key`` or ``key_db`` (not both) and return the linear value."""
    has_lin, has_db = key in d, f"{key}_db" in d
    if has_lin and has_db:
        raise ConfigError(f"{where}: give either {key} or {key}_db, not both")
    if has_db:
        v = d[f"{key}_db"]
        return None if v is None else 10 ** (float(v) / 10)
    return d.get(key, default)


def _with_db(keys):
    return [k for key in keys for k in (key, f"{key}_db")]


def config_to_dict(cfg: SystemConfig) -> dict:
    d = {
        "num_antennas": cfg.M,
        "total_power": cfg.total_power,
        "noise_var_lu": cfg.noise_var_lu,
        "noise_var_eve": cfg.noise_var_eve,
        "spacing_ratio": cfg.spacing_ratio,
        "grid_resolution": cfg.grid_resolution,
    }
    if not np.array_equal(cfg.angle_grid_deg, angle_grid(cfg.grid_resolution)):
        d["angle_grid_deg"] = cfg.angle_grid_deg.tolist()
    return d


def config_from_dict(d: dict, where: str = "config") -> SystemConfig:
    plain = ("num_antennas", "spacing_ratio", "grid_resolution", "angle_grid_deg")
    d = _take(d, plain + tuple(_with_db(DB_KEYS[:3])), where)
    kw = {k: d[k] for k in plain if k in d}
    for k in DB_KEYS[:3]:
        v = _linear(d, k, where)
        if v is not None:
            kw[k] = float(v)
    try:
        return SystemConfig(**kw)
    except (ContractError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def target_to_dict(t: Target) -> dict:
    return {"angle_deg": t.angle_deg, "path_loss": encode_complex(t.path_loss),
            "angle_uncertainty_deg": t.angle_uncertainty_deg}


def target_from_dict(d: dict, where: str) -> Target:
    d = _take(d, ("angle_deg", "path_loss", "angle_uncertainty_deg"), where)
    if "angle_deg" not in d:
        raise ConfigError(f"{where}: angle_deg is required")
    try:
        return Target(float(d["angle_deg"]), decode_complex(d.get("path_loss", 1.0), f"{where}.path_loss"),
                      float(d.get("angle_uncertainty_deg", 0.0)))
    except ContractError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "config": config_to_dict(sc.config),
        "channel": encode_complex(sc.channel),
        "targets": [target_to_dict(t) for t in sc.targets],
    }


def scenario_from_dict(d: dict, where: str = "scenario") -> Scenario:
    """Scenario from an explicit ``channel`` or from ``num_users`` + ``channel_seed`` (Rayleigh draw)."""
    d = _take(d, ("config", "channel", "num_users", "channel_seed", "targets"), where)
    cfg = config_from_dict(d.get("config", {}), f"{where}.config")
    if "channel" in d:
        if "channel_seed" in d or "num_users" in d:
            raise ConfigError(f"{where}: channel excludes num_users/channel_seed")
        H = np.atleast_2d(decode_complex(d["channel"], f"{where}.channel"))
    elif "channel_seed" in d:
        try:
            H = generate_channel(int(d.get("num_users", 1)), cfg.M, int(d["channel_seed"]))
        except ContractError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    else:
        raise ConfigError(f"{where}: need either channel or channel_seed")
    targets = [target_from_dict(t, f"{where}.targets[{i}]") for i, t in enumerate(d.get("targets", []))]
    try:
        return Scenario(cfg, H, tuple(targets))
    except ContractError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def spec_to_dict(spec: BeampatternSpec) -> dict:
    return {"center_angles_deg": list(spec.center_angles_deg), "beam_width_deg": spec.beam_width_deg,
            "weight": spec.weight, "crosscorr_angles_deg": list(spec.crosscorr_angles_deg)}


def spec_from_dict(d: dict, default_centers=(), where: str = "beampattern") -> BeampatternSpec:
    d = _take(d, ("center_angles_deg", "beam_width_deg", "weight", "crosscorr_angles_deg"), where)
    centers = d.get("center_angles_deg", list(default_centers))
    if not centers:
        raise ConfigError(f"{where}: center_angles_deg is required when there are no targets")
    try:
        return BeampatternSpec(tuple(centers), float(d.get("beam_width_deg", 10.0)),
                               float(d.get("weight", 1.0)), d.get("crosscorr_angles_deg"))
    except ContractError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def thresholds_to_dict(th: SecurityThresholds) -> dict:
    # null encodes an infinite (disabled) Eve threshold
    return {"gamma_c": th.gamma_c, "gamma_e": th.gamma_e if math.isfinite(th.gamma_e) else None}


def thresholds_from_dict(d: dict, where: str = "thresholds") -> SecurityThresholds:
    d = _take(d, _with_db(("gamma_c", "gamma_e")), where)
    gc = _linear(d, "gamma_c", where, 0.0)
    ge = _linear(d, "gamma_e", where, None)
    try:
        return SecurityThresholds(float(gc or 0.0), math.inf if ge is None else float(ge))
    except ContractError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


# ---------------------------------------------------------------- files

def load_json(path) -> dict:
    """Parse a JSON file, turning syntax errors into :class:`ConfigError` with line/column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


def result_to_dict(result: DesignResult, scenario: Scenario, metrics=None) -> dict:
    """Design export.  Solve times are left out so identical inputs give identical files."""
    diag = {k: v for k, v in result.diagnostics.items() if k != "solve_time"}
    d = {
        "designer": result.designer,
        "alpha": result.alpha,
        "objective": result.objective,
        "relaxed_objective": result.relaxed_objective,
        "covariance": encode_complex(result.covariance),
        "comm_precoder": encode_complex(result.precoders.comm),
        "radar_precoder": encode_complex(result.precoders.radar),
        "diagnostics": {k: (_finite(v) if isinstance(v, float) else v) for k, v in diag.items()},
        "metadata": result.metadata,
        "scenario": scenario_to_dict(scenario),
    }
    if metrics is not None:
        d["metrics"] = metrics_to_dict(metrics)
    return d


def metrics_to_dict(m) -> dict:
    out = m.as_dict()
    for k in ("user_sinr_db", "eve_sinr_db"):
        out[k] = [_finite(v) for v in out[k]]
    out["beampattern_mse"] = _finite(out["beampattern_mse"])
    return out


def _check_version(fh, expected: str, path) -> None:
    first = fh.readline().rstrip("\r\n")
    if first != expected:
        raise ConfigError(f"{path}: expected header {expected!r}, found {first!r}")


def write_beampattern_csv(path, R: np.ndarray, config: SystemConfig) -> None:
    P = beampattern_grid(R, config)
    with np.errstate(divide="ignore"):
        P_db = 10 * np.log10(P)
    with open(path, "w", newline="") as fh:
        fh.write(BEAMPATTERN_CSV + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle_deg", "power_linear", "power_db"])
        for a, p, pdb in zip(config.angle_grid_deg, P, P_db):
            w.writerow([repr(float(a)), repr(float(p)), repr(float(pdb))])


def read_beampattern_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        _check_version(fh, BEAMPATTERN_CSV, path)
        rows = list(csv.DictReader(fh))
    if not rows or list(rows[0]) != ["angle_deg", "power_linear", "power_db"]:
        raise ConfigError(f"{path}: malformed beampattern table")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def write_sweep_csv(path, result) -> None:
    from .evaluation import sweep_table
    header, rows = sweep_table(result)
    with open(path, "w", newline="") as fh:
        fh.write(SWEEP_CSV + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_sweep_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        _check_version(fh, SWEEP_CSV, path)
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [[float(v) for v in r] for r in reader if r]
    if not header or any(len(r) != len(header) for r in rows):
        raise ConfigError(f"{path}: malformed sweep table")
    cols = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: cols[:, j] for j, name in enumerate(header)}
