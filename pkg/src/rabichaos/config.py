"""Experiment configuration: a JSON document with ``model``, ``run`` and ``output`` blocks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .hilbert import spinor
from .models import KINDS, ModelParams, params_from_gc_eta

_INITIAL = {"spin": "+", "occupations": 0}

# per-subcommand run keys and their defaults (None = computed when absent)
RUN_DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {"n_max": 200, "sector": None},
    "spacing": {"n_max": 8000, "sector": None, "keep_fraction": 0.5, "poly_degree": 7,
                "edge_trim_fraction": 0.02, "bin_width": 0.1, "s_max": 4.0, "s_min": 0.05},
    "fotoc": {"initial": _INITIAL, "horizon": 40.0, "grid_size": 2000, "n_max": None,
              "tolerance": 1e-3, "n_cap": 16384, "refine": True},
    "echo": {"initial": _INITIAL, "horizon": 40.0, "grid_size": 2000, "n_max": None,
             "tolerance": 1e-3, "n_cap": 16384, "delta_phi": 1e-3, "observable": "sigma_x"},
    "lyapunov-scan": {"initial": _INITIAL, "etas": [25, 50, 100, 200], "horizon": 40.0,
                      "grid_size": 2000, "n_max": None, "tolerance": 1e-3, "n_cap": 16384,
                      "refine": True},
    "equilibrate": {"initial": {"spin": "down", "occupations": 20}, "n_max": None,
                    "t_start": 0.0, "window": 1e3, "delta_E": None, "min_states": 20,
                    "n_cap": 16384},
    "deff-scan": {"vary": "n", "values": [0, 5, 10, 20], "spin": "down", "occupation": 0,
                  "n_max": None, "n_cap": 16384},
    "oracle-check": {},
}
SUBCOMMANDS = tuple(RUN_DEFAULTS)
OUTPUT_DEFAULTS = {"directory": "out", "formats": ["csv", "json"]}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    model: ModelParams | None
    model_block: dict
    run: dict
    output: dict
    defaults_used: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {"subcommand": self.subcommand, "model": self.model_block, "run": self.run,
                "output": self.output, "defaults_used": list(self.defaults_used)}


def _number(block: dict, key: str, prefix: str, positive: bool = False) -> float:
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{prefix}.{key}", f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{prefix}.{key}", f"must be positive, got {value}")
    return float(value)


def parse_model(block: dict, require: bool = True) -> ModelParams | None:
    if not block:
        if require:
            raise ConfigError("model", "missing model block")
        return None
    allowed = {"kind", "g_c", "eta", "omega", "delta", "g", "lambda_perturb"}
    for key in block:
        if key not in allowed:
            raise ConfigError(f"model.{key}", "unknown key")
    kind = block.get("kind")
    if kind not in KINDS:
        raise ConfigError("model.kind", f"must be one of {list(KINDS)}, got {kind!r}")
    has_gc = {"g_c", "eta"} & block.keys()
    has_wd = {"omega", "delta"} & block.keys()
    if bool(has_gc) == bool(has_wd):
        raise ConfigError("model", "give exactly one of (g_c, eta) or (omega, delta)")
    pair = ("g_c", "eta") if has_gc else ("omega", "delta")
    for key in pair:
        if key not in block:
            raise ConfigError(f"model.{key}", "missing")
    g = _number(block, "g", "model") if "g" in block else 0.0
    lam = _number(block, "lambda_perturb", "model") if "lambda_perturb" in block else 0.0
    try:
        if has_gc:
            return params_from_gc_eta(kind, _number(block, "g_c", "model", True),
                                      _number(block, "eta", "model", True), g, lam)
        return ModelParams(kind, _number(block, "omega", "model", True),
                           _number(block, "delta", "model", True), g, lam)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("model", str(exc)) from exc


def parse_config(doc: dict, subcommand: str) -> ExperimentConfig:
    if subcommand not in RUN_DEFAULTS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in doc:
        if key not in ("model", "run", "output"):
            raise ConfigError(key, "unknown top-level key")
    model = parse_model(doc.get("model") or {}, require=subcommand != "oracle-check")
    run_in = doc.get("run") or {}
    defaults = RUN_DEFAULTS[subcommand]
    for key in run_in:
        if key not in defaults:
            raise ConfigError(f"run.{key}", f"not a parameter of '{subcommand}'")
    run = {**defaults, **run_in}
    used = tuple(sorted(set(defaults) - set(run_in)))
    if "initial" in run:
        init = {**_INITIAL, **run["initial"]} if isinstance(run["initial"], dict) else None
        if init is None or set(init) != {"spin", "occupations"}:
            raise ConfigError("run.initial", "expected {'spin': ..., 'occupations': ...}")
        run["initial"] = init
        occ = init["occupations"]
        n_modes = 2 if model is not None and model.kind == "QJT" else 1
        occ_list = [occ] if isinstance(occ, int) else occ
        if (not isinstance(occ_list, list) or any(not isinstance(n, int) or n < 0 for n in occ_list)
                or len(occ_list) not in (1, n_modes)):
            raise ConfigError("run.initial.occupations",
                              f"expected a nonnegative integer or a list of {n_modes}, got {occ!r}")
        try:
            spinor(init["spin"])
        except ValueError as exc:
            raise ConfigError("run.initial.spin", str(exc)) from exc
    for key in ("horizon", "window", "delta_phi", "tolerance"):
        if key in run and run[key] is not None:
            _number(run, key, "run", positive=True)
    for key in ("grid_size", "n_cap"):
        if key in run and (not isinstance(run[key], int) or run[key] < 2):
            raise ConfigError(f"run.{key}", f"expected an integer >= 2, got {run[key]!r}")
    if subcommand == "lyapunov-scan":
        if "g_c" not in (doc.get("model") or {}):
            raise ConfigError("model.g_c", "an eta sweep needs the (g_c, eta) parameterization")
        if not run["etas"] or any(not isinstance(e, (int, float)) or e <= 0 for e in run["etas"]):
            raise ConfigError("run.etas", "expected a nonempty list of positive numbers")
    if subcommand == "echo" and run["observable"] not in ("sigma_x", "projector"):
        raise ConfigError("run.observable", "must be 'sigma_x' or 'projector'")
    if subcommand == "deff-scan" and run["vary"] not in ("n", "g"):
        raise ConfigError("run.vary", "must be 'n' or 'g'")
    output = {**OUTPUT_DEFAULTS, **(doc.get("output") or {})}
    for key in output:
        if key not in OUTPUT_DEFAULTS:
            raise ConfigError(f"output.{key}", "unknown key")
    return ExperimentConfig(subcommand, model, dict(doc.get("model") or {}), run, output, used)


def load_config(path: str | Path | None, subcommand: str) -> ExperimentConfig:
    if path is None:
        return parse_config({}, subcommand)
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    return parse_config(doc, subcommand)
