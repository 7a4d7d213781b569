"""YAML run configuration with strict keys and line-anchored validation."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from .contracts import BondContract, MarketParams, Window
from .errors import CbfemError, ConfigurationError
from .stepper import NewtonConfig

COMMANDS = ("price", "surface", "greeks", "converge", "mms", "compare-fdm")
FORMATS = ("csv", "json")


class ConfigError(ConfigurationError):
    """All violations found in one configuration, each prefixed by its line."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_positive(v):
    return None if _number(v) and v > 0 else "must be a positive number"


def _check_nonneg(v):
    return None if _number(v) and v >= 0 else "must be a non-negative number"


def _check_real(v):
    return None if _number(v) else "must be a finite number"


def _check_pos_int(v):
    return None if isinstance(v, int) and not isinstance(v, bool) and v > 0 else "must be a positive integer"


def _check_bool(v):
    return None if isinstance(v, bool) else "must be true or false"


def _check_unit(v):
    return None if _number(v) and 0 <= v <= 1 else "must lie in [0, 1]"


def _check_order(v):
    return None if v in (1, 2) else "must be 1 or 2"


def _check_opt_positive(v):
    return None if v is None else _check_positive(v)


def _check_opt_pos_int(v):
    return None if v is None else _check_pos_int(v)


def _check_window(v):
    if v is None:
        return None
    if isinstance(v, list) and len(v) == 2 and all(_number(t) for t in v) and v[0] <= v[1]:
        return None
    return "must be null or [start, end] with start <= end"


def _list_of(check, what):
    def inner(v):
        if isinstance(v, list) and v and all(check(e) is None for e in v):
            return None
        return f"must be a non-empty list of {what}"
    return inner


def _one_of(*choices):
    def inner(v):
        return None if v in choices else f"must be one of {list(choices)}"
    return inner


# section -> key -> (default, validator)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "contract": {
        "face_value": (100.0, _check_positive),
        "coupon_amount": (4.0, _check_nonneg),
        "coupon_times": ([0.5 * i for i in range(1, 11)], _list_of(_check_positive, "positive times")),
        "conversion_ratio": (1.0, _check_nonneg),
        "maturity": (5.0, _check_positive),
        "call_price": (110.0, _check_opt_positive),
        "call_window": ([2.0, 5.0], _check_window),
        "call_window_left_open": (True, _check_bool),
        "put_price": (105.0, _check_opt_positive),
        "put_window": ([2.0, 3.0], _check_window),
        "put_window_left_open": (True, _check_bool),
    },
    "market": {
        "r": (0.05, _check_nonneg),
        "r_c": (0.02, _check_nonneg),
        "sigma": (0.2, _check_positive),
        "s_init": (100.0, _check_positive),
    },
    "numerics": {
        "x_min": (-6.0, _check_real),
        "x_max": (2.0, _check_real),
        "n_elements": (100, _check_pos_int),
        "order": (2, _check_order),
        "n_t": (100, _check_pos_int),
        "theta": (0.5, _check_unit),
        "rho": (1e12, _check_positive),
        "newton_tol": (1e-12, _check_positive),
        "max_iter": (100, _check_pos_int),
    },
    "sweep": {
        "n_elements": ([100, 200, 400, 600, 800, 1000, 1200], _list_of(_check_pos_int, "positive integers")),
        "fdm_intervals_per_element": (None, _check_opt_pos_int),
        "jobs": (1, _check_pos_int),
    },
    "mms": {
        "study": ("both", _one_of("temporal", "spatial", "both")),
        "theta": (0.5, _check_unit),
        "forcing_level": ("new", _one_of("new", "old", "theta")),
        "forcing_load": ("quadrature", _one_of("quadrature", "mass", "nodal")),
        "temporal_dtaus": ([0.1, 0.05, 0.02, 0.01], _list_of(_check_positive, "positive steps")),
        "temporal_n_elements": (None, _check_opt_pos_int),
        "spatial_n_elements": ([10, 20, 40, 100], _list_of(_check_pos_int, "positive integers")),
        "spatial_dtau": (1e-4, _check_positive),
    },
    "greeks": {
        "chain_rule_term": (False, _check_bool),
    },
    "output": {
        "path": (None, lambda v: None if v is None or isinstance(v, str) else "must be a path string"),
        "format": (None, lambda v: None if v is None or v in FORMATS else f"must be one of {list(FORMATS)}"),
    },
}

# sections whose keys must all be given when defaults are switched off
REQUIRED_SECTIONS = ("contract", "market", "numerics")


def default_values() -> Dict[str, Dict[str, Any]]:
    return {sec: {k: copy.deepcopy(d) for k, (d, _) in keys.items()} for sec, keys in SCHEMA.items()}


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, Any]]
    command: Optional[str] = None
    lines: Dict[str, int] = field(default_factory=dict, repr=False)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def contract(self) -> BondContract:
        c = self.values["contract"]

        def window(kind):
            w = c[f"{kind}_window"]
            return None if w is None else Window(float(w[0]), float(w[1]), bool(c[f"{kind}_window_left_open"]))

        call_w, put_w = window("call"), window("put")
        return BondContract(
            face_value=float(c["face_value"]),
            coupon_amount=float(c["coupon_amount"]),
            coupon_times=tuple(float(t) for t in c["coupon_times"]),
            conversion_ratio=float(c["conversion_ratio"]),
            maturity=float(c["maturity"]),
            call_price=None if c["call_price"] is None or call_w is None else float(c["call_price"]),
            call_window=call_w if c["call_price"] is not None else None,
            put_price=None if c["put_price"] is None or put_w is None else float(c["put_price"]),
            put_window=put_w if c["put_price"] is not None else None,
        )

    @property
    def market(self) -> MarketParams:
        m = self.values["market"]
        return MarketParams(float(m["r"]), float(m["r_c"]), float(m["sigma"]), float(m["s_init"]))

    @property
    def newton(self) -> NewtonConfig:
        n = self.values["numerics"]
        return NewtonConfig(tol=float(n["newton_tol"]), max_iter=int(n["max_iter"]), rho=float(n["rho"]))

    def to_dict(self) -> Dict[str, Any]:
        out = copy.deepcopy(self.values)
        out["command"] = self.command
        return out

    def override(self, section: str, key: str, value) -> None:
        problem = SCHEMA[section][key][1](value)
        if problem:
            raise ConfigError([f"override {section}.{key}: {problem}"])
        self.values[section][key] = value
        validate(self)


def _where(lines, path):
    line = lines.get(path)
    return f"line {line}: " if line else ""


def _compose_lines(root) -> Dict[str, int]:
    """Map 'section' and 'section.key' to 1-based source lines."""
    lines: Dict[str, int] = {}
    if not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        sec = str(knode.value)
        lines[sec] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, v2 in vnode.value:
                lines[f"{sec}.{k2.value}"] = v2.start_mark.line + 1
                lines[f"{sec}.{k2.value}:key"] = k2.start_mark.line + 1
    return lines


def parse_config(text: str, use_defaults: bool = True, command: Optional[str] = None) -> RunConfig:
    """Parse YAML text into a validated :class:`RunConfig`.

    Unknown sections or keys, wrong types and invariant violations are all
    collected and raised together as a :class:`ConfigError`.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{where}malformed YAML ({getattr(exc, 'problem', exc)})"]) from None
    lines = _compose_lines(root)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["line 1: top level must be a mapping of sections"])

    problems: List[str] = []
    values = default_values()
    given = set()
    for sec, body in data.items():
        if sec not in SCHEMA:
            problems.append(f"{_where(lines, str(sec))}unknown section '{sec}'")
            continue
        if body is None:
            continue
        if not isinstance(body, dict):
            problems.append(f"{_where(lines, sec)}section '{sec}' must be a mapping")
            continue
        for key, val in body.items():
            path = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                problems.append(f"{_where(lines, path + ':key')}unknown key '{path}'")
                continue
            if isinstance(val, int) and not isinstance(val, bool) and isinstance(SCHEMA[sec][key][0], float):
                val = float(val)
            problem = SCHEMA[sec][key][1](val)
            if problem:
                problems.append(f"{_where(lines, path)}{path} {problem}")
            else:
                values[sec][key] = val
            given.add(path)
    if not use_defaults:
        for sec in REQUIRED_SECTIONS:
            for key in SCHEMA[sec]:
                if f"{sec}.{key}" not in given:
                    problems.append(f"missing required field '{sec}.{key}'")
    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(values, command, lines)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Cross-field invariants, checked by building the domain objects."""
    lines = cfg.lines
    problems = []
    n = cfg.values["numerics"]
    if not n["x_min"] < n["x_max"]:
        problems.append(f"{_where(lines, 'numerics.x_min')}numerics.x_min must be below numerics.x_max")
    for sec, build in (("contract", lambda: cfg.contract), ("market", lambda: cfg.market), ("numerics", lambda: cfg.newton)):
        try:
            build()
        except CbfemError as exc:
            problems.append(f"{_where(lines, sec)}{sec}: {exc}")
    if problems:
        raise ConfigError(problems)


def load_config(path: Optional[str], use_defaults: bool = True, command: Optional[str] = None) -> RunConfig:
    if path is None:
        return parse_config("", use_defaults=use_defaults, command=command)
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), use_defaults=use_defaults, command=command)
