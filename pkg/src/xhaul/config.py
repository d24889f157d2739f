"""Scenario documents: schema, validation and sweep expansion.

A scenario is a YAML (or JSON) mapping::

    schema_version: 1
    experiment: smgw          # smgw | orchestrator | interleave | linkbudget | hfc
    seed: 7
    horizon: 10.0             # simulated seconds (stochastic kinds)
    warmup: 0.1               # fraction of the horizon discarded
    replications: 1
    output: results/smgw
    params: {mode: excess, light_load: 30e6}
    sweep:
      - {name: light_load, values: [5e6, 25e6, 45e6]}
      - {name: heavy_load, range: {start: 60e6, stop: 100e6, step: 20e6}}

Validation reports every problem at once through ``ScenarioError.errors``.
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
import yaml

from .traffic import ConfigError, TwoStateBurstParams

SCHEMA_VERSION = 1
KINDS = ("smgw", "orchestrator", "interleave", "linkbudget", "hfc")
TOP_KEYS = {"schema_version", "experiment", "seed", "horizon", "warmup", "replications", "output",
            "params", "sweep"}


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Param:
    kind: str  # float | int | bool | str | matrix | vector
    default: Any
    choices: Optional[tuple] = None
    check: Optional[Callable[[Any], bool]] = None
    hint: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _frac(x):
    return 0 <= x <= 1


SCHEMAS: dict[str, dict[str, Param]] = {
    "smgw": {
        "mode": Param("str", "excess", ("none", "equal", "excess")),
        "num_light": Param("int", 10, check=_nonneg, hint=">= 0"),
        "num_heavy": Param("int", 10, check=_nonneg, hint=">= 0"),
        "light_load": Param("float", 30e6, check=_nonneg, hint=">= 0 bit/s"),
        "heavy_load": Param("float", 140e6, check=_nonneg, hint=">= 0 bit/s"),
        "uplink_rate": Param("float", 1e9, check=_pos, hint="> 0"),
        "cycle": Param("float", 1e-3, check=_pos, hint="> 0"),
        "batches": Param("int", 20, check=lambda x: x >= 10, hint=">= 10"),
        "packet_bytes": Param("float", 1500.0, check=_pos, hint="> 0"),
        "packet_size_dist": Param("str", "constant", ("constant", "exponential")),
        "sojourn_lo": Param("float", 1e-3, check=_pos, hint="> 0"),
        "sojourn_hi": Param("float", 4e-3, check=_pos, hint="> 0"),
        "p_switch_from_low": Param("float", 0.7, check=_frac, hint="in [0, 1]"),
        "p_switch_from_heavy": Param("float", 0.3, check=_frac, hint="in [0, 1]"),
        "rate_ratio": Param("float", 4.0, check=_pos, hint="> 0"),
        "enb_buffer_bytes": Param("float", 20e6, check=_pos, hint="> 0"),
        "gateway_buffer_bytes": Param("float", 20e6, check=_pos, hint="> 0"),
    },
    "orchestrator": {
        "preset": Param("str", "custom", ("custom", "opti1", "roam2")),
        "R": Param("float", 50e6, check=_nonneg, hint=">= 0 bit/s"),
        "requests": Param("matrix", None),
        "constraints": Param("vector", None),
        "sharing": Param("bool", False),
        "mode": Param("str", "proportional", ("proportional", "static_equal")),
    },
    "interleave": {
        "T_L": Param("float", 71.4e-6, check=_pos, hint="> 0"),
        "T_D": Param("float", 40e-6, check=_pos, hint="> 0"),
        "tau_L": Param("float", 14.28e-6, check=_nonneg, hint=">= 0"),
        "tau_D": Param("float", None, check=_nonneg, hint=">= 0"),
        "beta": Param("float", None, check=_nonneg, hint=">= 0"),
        "guard": Param("float", 0.0, check=_nonneg, hint=">= 0"),
        "offset": Param("float", 0.0, check=_nonneg, hint=">= 0"),
    },
    "linkbudget": {
        "subcarriers": Param("int", 1200, check=lambda x: x >= 72, hint=">= 72"),
        "bits_per_component": Param("int", 10, check=_pos, hint="> 0"),
        "allocated_fraction": Param("float", 1.0, check=lambda x: 0 < x <= 1, hint="in (0, 1]"),
        "docsis_total_subc": Param("int", 7680, check=_pos, hint="> 0"),
        "docsis_guard": Param("int", 80, check=_nonneg, hint=">= 0"),
        "docsis_cont": Param("int", 88, check=_nonneg, hint=">= 0"),
        "docsis_scat": Param("int", 60, check=_nonneg, hint=">= 0"),
    },
    "hfc": {
        "node_kind": Param("str", "RFFT", ("RFFT", "RPHY")),
        "optical_rate": Param("float", 10e9, check=_pos, hint="> 0"),
        "cable_rate": Param("float", 1e9, check=_pos, hint="> 0"),
        "distance": Param("float", 10.0, check=_nonneg, hint=">= 0 km"),
        "num_cms": Param("int", 200, check=lambda x: x >= 2, hint=">= 2"),
        "cable_load": Param("float", 0.2, check=_frac, hint="in [0, 1]"),
        "lte_load": Param("float", 0.5, check=_frac, hint="in [0, 1]"),
        "hurst": Param("float", 0.5, check=lambda x: 0.5 <= x < 1, hint="in [0.5, 1)"),
        "fft_size": Param("str", "4K", ("4K", "8K")),
        "qam_bits": Param("int", 12, check=_pos, hint="> 0"),
        "code_rate": Param("float", 0.9, check=lambda x: 0 < x <= 1, hint="in (0, 1]"),
        "iq_bits": Param("int", 10, check=_pos, hint="> 0"),
        "cm_packet_bytes": Param("float", 472e3, check=_pos, hint="> 0"),
        "lte_packet_bytes": Param("float", 9000.0, check=_pos, hint="> 0"),
        "maintenance": Param("float", 0.2, check=lambda x: 0 <= x < 1, hint="in [0, 1)"),
        "max_cycle": Param("float", 20e-3, check=_pos, hint="> 0"),
        "min_phase": Param("float", 0.25e-3, check=_pos, hint="> 0"),
        "onoff_mean_period": Param("float", 0.1, check=_pos, hint="> 0"),
        "cm_burst_period": Param("float", 10e-3, check=_pos, hint="> 0"),
    },
}

STOCHASTIC = {"smgw", "hfc"}


@dataclass
class ScenarioConfig:
    experiment: str
    params: dict
    seed: int
    sweep: list = field(default_factory=list)  # [(name, [values])]
    horizon: float = 10.0
    warmup: float = 0.1
    replications: int = 1
    output: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version, "experiment": self.experiment, "seed": self.seed,
            "horizon": self.horizon, "warmup": self.warmup, "replications": self.replications,
            "output": self.output, "params": self.params,
            "sweep": [{"name": n, "values": list(v)} for n, v in self.sweep],
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def points(self) -> list[dict]:
        """Parameter maps for every sweep point, in deterministic order."""
        if not self.sweep:
            return [dict(self.params)]
        names = [n for n, _ in self.sweep]
        out = []
        for combo in itertools.product(*(v for _, v in self.sweep)):
            p = dict(self.params)
            p.update(zip(names, combo))
            out.append(p)
        return out


def replicate_seed(master: int, index: int) -> int:
    digest = hashlib.sha256(f"{int(master)}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def expand_range(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid; values are rounded to shed float drift."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(max(n, 0))]


def _coerce(name, param: Param, value, errors):
    if value is None:
        return None
    try:
        if param.kind == "float":
            if isinstance(value, bool):
                raise TypeError
            value = float(value)
        elif param.kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            value = int(value)
        elif param.kind == "bool":
            if not isinstance(value, bool):
                raise TypeError
        elif param.kind == "str":
            if not isinstance(value, str):
                raise TypeError
        elif param.kind == "matrix":
            arr = np.asarray(value, dtype=float)
            if arr.ndim != 2:
                raise TypeError
            value = arr.tolist()
        elif param.kind == "vector":
            arr = np.asarray(value, dtype=float)
            if arr.ndim != 1:
                raise TypeError
            value = arr.tolist()
    except (TypeError, ValueError):
        errors.append(f"params.{name}: expected {param.kind}, got {value!r}")
        return None
    if param.choices and value not in param.choices:
        errors.append(f"params.{name}: {value!r} not one of {list(param.choices)}")
    elif param.check and not param.check(value):
        errors.append(f"params.{name}: {value!r} violates {param.hint}")
    return value


def _cross_checks(kind, p, errors):
    if kind == "smgw":
        burst = TwoStateBurstParams(
            target_mean_rate=max(p["light_load"], 0.0), sojourn_lo=p["sojourn_lo"], sojourn_hi=p["sojourn_hi"],
            p_switch_from_low=p["p_switch_from_low"], p_switch_from_heavy=p["p_switch_from_heavy"],
            rate_ratio_heavy_to_low=p["rate_ratio"], mean_packet_size=p["packet_bytes"] * 8)
        try:
            burst.validate()
        except ConfigError as e:
            errors.extend(f"params: {m}" for m in str(e).split("; "))
        if p["num_light"] + p["num_heavy"] < 1:
            errors.append("params: need at least one eNB")
    elif kind == "orchestrator":
        if p["preset"] == "custom":
            if p["requests"] is None or p["constraints"] is None:
                errors.append("params: custom orchestrator needs requests and constraints")
            elif len(p["requests"][0]) != len(p["constraints"]):
                errors.append("params: requests columns must match constraints length")
    elif kind == "interleave":
        if p["tau_D"] is None and p["beta"] is None:
            errors.append("params: interleave needs tau_D or beta")
        for a, b in (("tau_L", "T_L"),):
            if p[a] is not None and p[b] is not None and p[a] >= p[b]:
                errors.append(f"params: {a} must be shorter than {b}")


def validate(doc: dict) -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario must be a mapping"])
    if "manifest" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    for k in sorted(set(doc) - TOP_KEYS):
        errors.append(f"unknown key {k!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    kind = doc.get("experiment")
    if kind not in KINDS:
        errors.append(f"experiment: expected one of {list(KINDS)}, got {kind!r}")
    seed = doc.get("seed")
    if seed is None:
        errors.append("seed: required field is missing")
    elif isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        errors.append(f"seed: expected unsigned 64-bit integer, got {seed!r}")

    def number(key, default, ok, hint):
        v = doc.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not ok(v):
            errors.append(f"{key}: {v!r} violates {hint}")
            return default
        return v

    horizon = float(number("horizon", 10.0, _pos, "> 0"))
    warmup = float(number("warmup", 0.1, lambda x: 0 <= x < 1, "in [0, 1)"))
    reps = number("replications", 1, lambda x: isinstance(x, int) and x >= 1, "integer >= 1")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        errors.append("output: expected a path string")

    raw = doc.get("params") or {}
    params: dict = {}
    if not isinstance(raw, dict):
        errors.append("params: expected a mapping")
        raw = {}
    schema = SCHEMAS.get(kind, {})
    if kind in KINDS:
        for k in sorted(set(raw) - set(schema)):
            errors.append(f"params.{k}: unknown parameter for {kind}")
        for name, param in schema.items():
            params[name] = _coerce(name, param, raw[name], errors) if name in raw else copy.deepcopy(param.default)

    sweep = []
    raw_sweep = doc.get("sweep") or []
    if not isinstance(raw_sweep, list):
        errors.append("sweep: expected a list of axes")
        raw_sweep = []
    for i, axis in enumerate(raw_sweep):
        if not isinstance(axis, dict) or "name" not in axis:
            errors.append(f"sweep[{i}]: expected a mapping with a name")
            continue
        for k in sorted(set(axis) - {"name", "values", "range"}):
            errors.append(f"sweep[{i}]: unknown key {k!r}")
        name = axis["name"]
        if name not in schema:
            errors.append(f"sweep[{i}]: {name!r} is not a parameter of {kind}")
            continue
        if ("values" in axis) == ("range" in axis):
            errors.append(f"sweep[{i}]: give exactly one of values or range")
            continue
        if "range" in axis:
            r = axis["range"]
            try:
                values = expand_range(float(r["start"]), float(r["stop"]), float(r["step"]))
            except (KeyError, TypeError, ValueError):
                errors.append(f"sweep[{i}]: range needs numeric start, stop and positive step")
                continue
        else:
            values = axis["values"]
            if not isinstance(values, list) or not values:
                errors.append(f"sweep[{i}]: values must be a non-empty list")
                continue
        coerced = [_coerce(name, schema[name], v, errors) for v in values]
        sweep.append((name, coerced))

    if kind in KINDS:
        for point in ScenarioConfig(kind, params, 0, sweep).points():
            if any(point[k] is None and schema[k].default is not None for k in schema):
                break  # already reported as a type error
            before = len(errors)
            _cross_checks(kind, point, errors)
            if len(errors) > before:
                break
    if errors:
        raise ScenarioError(errors)
    return ScenarioConfig(kind, params, int(seed), sweep, horizon, warmup, int(reps), output)


def parse_scenario(text: str) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError([f"not a valid YAML/JSON document: {e}"]) from None
    return validate(doc)
