"""experiment_config.py

Strict JSON experiment files.

Unknown keys, wrong types and non-finite numbers are rejected with the line
of the offending key. Every default is filled in and kept in the normalized
document, which is echoed into the run manifest and hashed for caching.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass
from typing import Any, Optional

import config
from errors import ConfigError, InvalidParameter
from spinchain import CHAOTIC_D, CHAOTIC_H, G_READINGS, MAX_L, MIN_L, ChainSpec

EMIT_KINDS = ("leaf", "diagnostics", "evolution", "figures", "report")
DEFAULT_EMIT = ["leaf", "diagnostics", "evolution", "figures"]

DEFAULTS: dict[str, Any] = {
    "model": {"L": 12, "g": "supplement", "h": CHAOTIC_H, "D": CHAOTIC_D, "boundary": "periodic"},
    "foliation": {
        "gap_tol": config.GAP_TOL,
        "rank_floor": config.RANK_FLOOR,
        "allow_degenerate": False,
        "oracle_samples": 0,
    },
    "diagnostics": {
        "shell_size": "sqrt",
        "delta_points": 201,
        "observables": "all",
        "benchmarks": False,
        "site": 1,
    },
    "evolve": {"t_max": 10.0, "dt": 0.25, "observables": "all"},
    "sweep": {"L": None, "beta": None},
    "swap_roles": False,
    "output": {"dir": "out", "emit": DEFAULT_EMIT},
    "seed": 0,
    "fig1": {"grid_step": 0.05, "curve_leaves": 8, "beta_max": 50.0, "beta_points": 41},
}

STATE_KEYS = {"h0", "beta", "uniform", "file"}
H0_KEYS = {"g", "h", "D", "boundary"}
TOP_KEYS = set(DEFAULTS) | {"state"}


@dataclass(frozen=True)
class StateSpec:
    kind: str  # thermal | uniform | file
    h0: Optional[ChainSpec] = None
    beta: Optional[float] = None
    file: Optional[str] = None


@dataclass(frozen=True)
class FoliationOptions:
    gap_tol: float
    rank_floor: float
    allow_degenerate: bool
    oracle_samples: int  # random decompositions per leaf, drawn from `seed`; 0 = off


@dataclass(frozen=True)
class DiagnosticsOptions:
    shell_size: Optional[int]  # None = round(sqrt(d))
    delta_points: int
    observables: str
    benchmarks: bool
    site: int


@dataclass(frozen=True)
class EvolveOptions:
    t_max: float
    dt: float
    observables: str


@dataclass(frozen=True)
class Fig1Options:
    grid_step: float
    curve_leaves: int
    beta_max: float
    beta_points: int


@dataclass(frozen=True)
class ExperimentConfig:
    model: ChainSpec
    state: StateSpec
    foliation: FoliationOptions
    diagnostics: DiagnosticsOptions
    evolve: EvolveOptions
    sweep_L: tuple[int, ...]
    sweep_beta: tuple[Optional[float], ...]
    swap_roles: bool
    out_dir: str
    emit: tuple[str, ...]
    seed: int
    fig1: Fig1Options
    document: dict

    def model_at(self, L: int) -> ChainSpec:
        return ChainSpec(L, self.model.g, self.model.h, self.model.D, self.model.boundary)

    def h0_at(self, L: int) -> ChainSpec:
        h0 = self.state.h0
        return ChainSpec(L, h0.g, h0.h, h0.D, h0.boundary)

    def wants(self, kind: str) -> bool:
        return kind in self.emit

    def config_hash(self) -> str:
        return config_hash(self.document)


def config_hash(document: dict) -> str:
    """sha256 of the canonical document; the output directory does not count."""
    doc = copy.deepcopy(document)
    doc.get("output", {}).pop("dir", None)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive merge; ``state`` is replaced as a whole since its variants are exclusive."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key != "state" and isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class _Doc:
    """Raw text kept around for line-anchored messages."""

    def __init__(self, text: str | None):
        self.text = text or ""

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        if not m:
            return None
        return self.text.count("\n", 0, m.start()) + 1

    def fail(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, self.line_of(key))


def _reject_constant(name: str) -> float:
    raise ValueError(f"non-finite number {name} is not allowed")


def _load_text(path: str) -> tuple[str, dict]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, e.lineno) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object", 1)
    return text, data


def _number(doc: _Doc, key: str, value: Any) -> float:
    if isinstance(value, bool):
        raise doc.fail(key, f"'{key}' must be a number, got a boolean")
    if isinstance(value, str):
        try:
            parsed = float(value)
        except ValueError:
            raise doc.fail(key, f"'{key}' must be a number, got {value!r}") from None
        if not math.isfinite(parsed):
            raise doc.fail(key, f"'{key}' is non-finite ({value!r})")
        raise doc.fail(key, f"'{key}' must be a JSON number, got the string {value!r}")
    if not isinstance(value, (int, float)):
        raise doc.fail(key, f"'{key}' must be a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise doc.fail(key, f"'{key}' is non-finite")
    return float(value)


def _integer(doc: _Doc, key: str, value: Any, minimum: int | None = None) -> int:
    number = _number(doc, key, value)
    if number != int(number):
        raise doc.fail(key, f"'{key}' must be an integer, got {value!r}")
    if minimum is not None and number < minimum:
        raise doc.fail(key, f"'{key}' must be >= {minimum}, got {value!r}")
    return int(number)


def _boolean(doc: _Doc, key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise doc.fail(key, f"'{key}' must be true or false")
    return value


def _section(doc: _Doc, name: str, value: Any, allowed: set[str]) -> dict:
    if not isinstance(value, dict):
        raise doc.fail(name, f"'{name}' must be an object")
    for key in sorted(value):
        if key not in allowed:
            raise doc.fail(key, f"unknown key '{key}' in '{name}'")
    return value


def _coupling_g(doc: _Doc, value: Any) -> float:
    if isinstance(value, str) and value in G_READINGS:
        return G_READINGS[value]
    return _number(doc, "g", value)


def _chain(doc: _Doc, section: str, L: int, raw: dict, boundary_default: str) -> ChainSpec:
    try:
        return ChainSpec(
            L,
            _coupling_g(doc, raw.get("g", 0.0)),
            _number(doc, "h", raw.get("h", 0.0)),
            _number(doc, "D", raw.get("D", 0.0)),
            raw.get("boundary", boundary_default),
        )
    except InvalidParameter as e:
        raise doc.fail(section, f"{section}: {e.message}") from e


def _state(doc: _Doc, raw: Any, model: ChainSpec, base_dir: str) -> tuple[StateSpec, dict]:
    raw = _section(doc, "state", raw, STATE_KEYS)
    kinds = [k for k in ("h0", "uniform", "file") if k in raw]
    if len(kinds) != 1:
        raise doc.fail("state", "'state' needs exactly one of 'h0', 'uniform', 'file'")
    kind = kinds[0]
    if kind == "uniform":
        if set(raw) != {"uniform"} or not _boolean(doc, "uniform", raw["uniform"]):
            raise doc.fail("uniform", "'uniform' state must be {\"uniform\": true}")
        return StateSpec("uniform"), {"uniform": True}
    if kind == "file":
        if set(raw) != {"file"} or not isinstance(raw["file"], str):
            raise doc.fail("file", "'file' state must be {\"file\": \"<path>\"}")
        path = raw["file"] if os.path.isabs(raw["file"]) else os.path.join(base_dir, raw["file"])
        if not os.path.isfile(path):
            raise doc.fail("file", f"state file not found: {raw['file']}")
        return StateSpec("file", file=path), {"file": raw["file"]}
    if "beta" not in raw:
        raise doc.fail("h0", "thermal state needs 'beta'")
    h0_raw = _section(doc, "h0", raw["h0"], H0_KEYS)
    h0 = _chain(doc, "h0", model.L, h0_raw, model.boundary)
    beta = _number(doc, "beta", raw["beta"])
    echoed = {"h0": {"g": h0.g, "h": h0.h, "D": h0.D, "boundary": h0.boundary}, "beta": beta}
    return StateSpec("thermal", h0=h0, beta=beta), echoed


def parse_document(data: dict, text: str | None = None, base_dir: str = ".") -> ExperimentConfig:
    doc = _Doc(text)
    for key in sorted(data):
        if key not in TOP_KEYS:
            raise doc.fail(key, f"unknown key '{key}'")
    if "model" not in data:
        raise ConfigError("missing required section 'model'")
    if "state" not in data:
        raise ConfigError("missing required section 'state'")

    merged = deep_merge({k: v for k, v in DEFAULTS.items()}, data)

    model_raw = _section(doc, "model", merged["model"], set(DEFAULTS["model"]))
    L = _integer(doc, "L", model_raw["L"])
    model = _chain(doc, "model", L, model_raw, "periodic")
    state, state_doc = _state(doc, merged["state"], model, base_dir)

    fol = _section(doc, "foliation", merged["foliation"], set(DEFAULTS["foliation"]))
    foliation = FoliationOptions(
        gap_tol=_number(doc, "gap_tol", fol["gap_tol"]),
        rank_floor=_number(doc, "rank_floor", fol["rank_floor"]),
        allow_degenerate=_boolean(doc, "allow_degenerate", fol["allow_degenerate"]),
        oracle_samples=_integer(doc, "oracle_samples", fol["oracle_samples"], minimum=0),
    )

    diag = _section(doc, "diagnostics", merged["diagnostics"], set(DEFAULTS["diagnostics"]))
    shell_size = diag["shell_size"]
    if shell_size != "sqrt":
        shell_size = _integer(doc, "shell_size", shell_size, minimum=1)
    observables = diag["observables"]
    if observables not in ("all", "main"):
        raise doc.fail("observables", "'observables' must be \"all\" or \"main\"")
    diagnostics = DiagnosticsOptions(
        shell_size=None if shell_size == "sqrt" else shell_size,
        delta_points=_integer(doc, "delta_points", diag["delta_points"], minimum=2),
        observables=observables,
        benchmarks=_boolean(doc, "benchmarks", diag["benchmarks"]),
        site=_integer(doc, "site", diag["site"], minimum=1),
    )
    if diagnostics.site > L:
        raise doc.fail("site", f"'site' must be <= L ({L})")

    ev = _section(doc, "evolve", merged["evolve"], set(DEFAULTS["evolve"]))
    if ev["observables"] not in ("all", "main"):
        raise doc.fail("observables", "'observables' must be \"all\" or \"main\"")
    evolve = EvolveOptions(
        t_max=_number(doc, "t_max", ev["t_max"]),
        dt=_number(doc, "dt", ev["dt"]),
        observables=ev["observables"],
    )
    if evolve.t_max < 0 or (evolve.t_max > 0 and evolve.dt <= 0):
        raise doc.fail("t_max", "'t_max' must be >= 0 and 'dt' > 0")

    sweep = _section(doc, "sweep", merged["sweep"], set(DEFAULTS["sweep"]))
    sweep_L = (L,) if sweep["L"] is None else _int_list(doc, "L", sweep["L"])
    for n in sweep_L:
        if not MIN_L <= n <= MAX_L:
            raise doc.fail("sweep", f"sweep length {n} outside {MIN_L}..{MAX_L}")
    if sweep["beta"] is None:
        sweep_beta: tuple[Optional[float], ...] = (state.beta,)
    else:
        if state.kind != "thermal":
            raise doc.fail("sweep", "'sweep.beta' needs a thermal state")
        if not isinstance(sweep["beta"], list) or not sweep["beta"]:
            raise doc.fail("beta", "'sweep.beta' must be a non-empty list")
        sweep_beta = tuple(_number(doc, "beta", b) for b in sweep["beta"])

    swap_roles = _boolean(doc, "swap_roles", merged["swap_roles"])
    if swap_roles and state.kind != "thermal":
        raise doc.fail("swap_roles", "'swap_roles' needs a thermal state with 'h0'")

    out = _section(doc, "output", merged["output"], set(DEFAULTS["output"]))
    if not isinstance(out["dir"], str) or not out["dir"]:
        raise doc.fail("dir", "'dir' must be a non-empty string")
    if not isinstance(out["emit"], list):
        raise doc.fail("emit", "'emit' must be a list")
    for item in out["emit"]:
        if item not in EMIT_KINDS:
            raise doc.fail("emit", f"unknown emit kind {item!r} (expected one of {', '.join(EMIT_KINDS)})")

    seed = _integer(doc, "seed", merged["seed"], minimum=0)

    f1 = _section(doc, "fig1", merged["fig1"], set(DEFAULTS["fig1"]))
    fig1 = Fig1Options(
        grid_step=_number(doc, "grid_step", f1["grid_step"]),
        curve_leaves=_integer(doc, "curve_leaves", f1["curve_leaves"], minimum=0),
        beta_max=_number(doc, "beta_max", f1["beta_max"]),
        beta_points=_integer(doc, "beta_points", f1["beta_points"], minimum=2),
    )
    if not 0 < fig1.grid_step <= 1:
        raise doc.fail("grid_step", "'grid_step' must be in (0, 1]")

    document = {
        "model": {"L": L, "g": model.g, "h": model.h, "D": model.D, "boundary": model.boundary},
        "state": state_doc,
        "foliation": {
            "gap_tol": foliation.gap_tol,
            "rank_floor": foliation.rank_floor,
            "allow_degenerate": foliation.allow_degenerate,
            "oracle_samples": foliation.oracle_samples,
        },
        "diagnostics": {
            "shell_size": shell_size,
            "delta_points": diagnostics.delta_points,
            "observables": diagnostics.observables,
            "benchmarks": diagnostics.benchmarks,
            "site": diagnostics.site,
        },
        "evolve": {"t_max": evolve.t_max, "dt": evolve.dt, "observables": evolve.observables},
        "sweep": {"L": list(sweep_L), "beta": list(sweep_beta)},
        "swap_roles": swap_roles,
        "output": {"dir": out["dir"], "emit": list(out["emit"])},
        "seed": seed,
        "fig1": {
            "grid_step": fig1.grid_step,
            "curve_leaves": fig1.curve_leaves,
            "beta_max": fig1.beta_max,
            "beta_points": fig1.beta_points,
        },
    }
    return ExperimentConfig(
        model=model,
        state=state,
        foliation=foliation,
        diagnostics=diagnostics,
        evolve=evolve,
        sweep_L=sweep_L,
        sweep_beta=sweep_beta,
        swap_roles=swap_roles,
        out_dir=out["dir"],
        emit=tuple(out["emit"]),
        seed=seed,
        fig1=fig1,
        document=document,
    )


def _int_list(doc: _Doc, key: str, value: Any) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise doc.fail(key, f"'{key}' must be a non-empty list")
    return tuple(_integer(doc, key, v) for v in value)


def parse_config(
    path: str | None,
    *,
    base: dict | None = None,
    overrides: dict | None = None,
) -> ExperimentConfig:
    """Parse an experiment file merged over a preset document, then apply command-line overrides."""
    text, data, base_dir = None, {}, "."
    if path is None:
        if base is None:
            raise ConfigError("either --config or --preset is required")
    else:
        text, data = _load_text(path)
        base_dir = os.path.dirname(os.path.abspath(path))
    if base is not None:
        data = deep_merge(base, data)
    if overrides:
        data = deep_merge(data, overrides)
    return parse_document(data, text, base_dir)
