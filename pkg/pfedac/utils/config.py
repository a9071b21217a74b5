"""
Run configuration: a flat YAML document with an explicit version key
"""
import logging
import math
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from pfedac.utils.error_handler import (
    InvalidValue,
    MissingKey,
    StepsizeConditionViolated,
    UnknownKey,
)

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
MAX_DIMENSION = 512
MODES = ("pfedac", "local_only", "fedavg_full", "sweep")
ENVIRONMENTS = ("lumpable", "random")

REQUIRED_KEYS = ("version", "env", "K", "r", "L", "T", "gamma", "zeta", "seed")

# key -> (type, default)
OPTIONAL_KEYS: Dict[str, Tuple[Any, Any]] = {
    "num_groups": (int, 2),
    "states_per_group": (int, 4),
    "num_states": (int, 8),
    "num_actions": (int, 2),
    "feature_dim": (int, None),
    "d": (int, None),
    "U_r": (float, 1.0),
    "U_omega": (float, "auto"),
    "c": (float, 1.0),
    "c_theta": (float, 1.0),
    "workers": (int, 1),
    "metrics_stride": (int, "auto"),
    "burn_in": (int, "auto"),
    "mode": (str, "pfedac"),
    "K_list": (list, None),
    "output_dir": (str, "runs/pfedac"),
    "debug_invariants": (bool, False),
    "record_wallclock": (bool, False),
    "log_every": (int, "auto"),
    "tie_policy_to_groups": (bool, "auto"),
    "group_persistence": (float, 0.0),
    "agent_pool": (int, None),
}

REQUIRED_TYPES = {"version": int, "env": str, "K": int, "r": int, "L": int, "T": int,
                  "gamma": float, "zeta": float, "seed": int}


@dataclass(frozen=True)
class RunConfig:
    version: int
    env: str
    K: int
    r: int
    L: int
    T: int
    gamma: float
    zeta: float
    seed: int
    num_groups: int = 2
    states_per_group: int = 4
    num_states: int = 8
    num_actions: int = 2
    feature_dim: Optional[int] = None
    d: Optional[int] = None
    U_r: float = 1.0
    U_omega: Union[float, str] = "auto"
    c: float = 1.0
    c_theta: float = 1.0
    workers: int = 1
    metrics_stride: int = 1
    burn_in: int = 0
    mode: str = "pfedac"
    K_list: Optional[Tuple[int, ...]] = None
    output_dir: str = "runs/pfedac"
    debug_invariants: bool = False
    record_wallclock: bool = False
    log_every: int = 1
    tie_policy_to_groups: bool = True
    group_persistence: float = 0.0
    agent_pool: Optional[int] = None

    @property
    def beta(self) -> float:
        return self.c * self.zeta

    @property
    def alpha(self) -> float:
        return self.c_theta * self.zeta

    @property
    def state_count(self) -> int:
        if self.env == "lumpable":
            return self.num_groups * self.states_per_group
        return self.num_states

    @property
    def feature_count(self) -> int:
        if self.env == "lumpable":
            return self.state_count
        return self.feature_dim or self.num_states

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        if self.K_list is not None:
            out["K_list"] = list(self.K_list)
        return out

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply CLI overrides (None means not given)"""
        given = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **given) if given else self


def _coerce(key: str, value: Any, expected: Any) -> Any:
    if expected is float:
        if isinstance(value, str):
            # PyYAML reads exponents without a dot (1e-3) as strings
            try:
                return float(value)
            except ValueError:
                raise InvalidValue(f"{key} must be a number, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidValue(f"{key} must be a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidValue(f"{key} must be an integer, got {value!r}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise InvalidValue(f"{key} must be true or false, got {value!r}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise InvalidValue(f"{key} must be a string, got {value!r}")
        return value
    if expected is list:
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise InvalidValue(f"{key} must be a list of integers, got {value!r}")
        return tuple(value)
    return value


def stepsize_conditions(zeta: float, L: int, gamma: float, U_r: float, U_omega: float) -> Dict[str, bool]:
    """The printed safety conditions on zeta, keyed by their inequality"""
    U_delta = U_r + 2.0 * U_omega
    return {
        "U_delta*U_omega*zeta/(L*(1-gamma)) <= 1/2": U_delta * U_omega * zeta / (L * (1.0 - gamma)) <= 0.5,
        "zeta <= 1": zeta <= 1.0,
        "zeta <= 1/(sqrt(6)*U_delta*U_omega)": zeta <= 1.0 / (math.sqrt(6.0) * U_delta * U_omega),
        "zeta <= 1/(2*U_omega)": zeta <= 1.0 / (2.0 * U_omega),
    }


def check_stepsize_conditions(zeta: float, L: int, gamma: float, U_r: float, U_omega: float):
    """Raise StepsizeConditionViolated naming the first violated inequality"""
    for inequality, holds in stepsize_conditions(zeta, L, gamma, U_r, U_omega).items():
        if not holds:
            raise StepsizeConditionViolated(
                f"stepsize condition violated: {inequality}",
                {"zeta": zeta, "L": L, "gamma": gamma, "U_r": U_r, "U_omega": U_omega},
            )


def max_safe_zeta(L: int, gamma: float, U_r: float, U_omega: float) -> float:
    """Largest zeta satisfying every safety condition"""
    U_delta = U_r + 2.0 * U_omega
    return min(
        L * (1.0 - gamma) / (2.0 * U_delta * U_omega),
        1.0,
        1.0 / (math.sqrt(6.0) * U_delta * U_omega),
        1.0 / (2.0 * U_omega),
    )


def resolve_config(raw: Dict[str, Any], env_workers: Optional[str] = None) -> RunConfig:
    """
    Validate a raw key-value mapping and fill defaults

    Args:
        raw: Parsed document
        env_workers: Value of PFEDAC_WORKERS, used when the document has no workers key

    Returns:
        Fully validated RunConfig
    """
    if not isinstance(raw, dict):
        raise InvalidValue("config must be a flat key-value document")

    unknown = sorted(set(raw) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        raise UnknownKey(f"unknown config key(s): {', '.join(unknown)}", {"keys": unknown})
    missing = [key for key in REQUIRED_KEYS if key not in raw]
    if missing:
        raise MissingKey(f"missing config key(s): {', '.join(missing)}", {"keys": missing})

    values: Dict[str, Any] = {key: _coerce(key, raw[key], REQUIRED_TYPES[key]) for key in REQUIRED_KEYS}
    for key, (expected, default) in OPTIONAL_KEYS.items():
        value = raw.get(key, default)
        if value is None or value == "auto":
            values[key] = value
        else:
            values[key] = _coerce(key, value, expected)

    if "workers" not in raw and env_workers:
        try:
            values["workers"] = int(env_workers)
        except ValueError:
            raise InvalidValue(f"PFEDAC_WORKERS must be an integer, got {env_workers!r}")

    if values["version"] != CONFIG_VERSION:
        raise InvalidValue(f"unsupported config version {values['version']}")
    if values["env"] not in ENVIRONMENTS:
        raise InvalidValue(f"env must be one of {ENVIRONMENTS}, got {values['env']!r}")
    if values["mode"] not in MODES:
        raise InvalidValue(f"mode must be one of {MODES}, got {values['mode']!r}")
    for key in ("K", "r", "L", "T", "num_groups", "states_per_group", "num_states", "num_actions", "workers"):
        if values[key] < 1:
            raise InvalidValue(f"{key} must be at least 1, got {values[key]}")
    if not 0.0 < values["gamma"] < 1.0:
        raise InvalidValue(f"gamma must lie in (0, 1), got {values['gamma']}")
    for key in ("zeta", "c", "c_theta"):
        if values[key] < 0:
            raise InvalidValue(f"{key} must be non-negative, got {values[key]}")
    if values["U_r"] <= 0:
        raise InvalidValue("U_r must be positive")
    if values["U_omega"] != "auto" and values["U_omega"] <= 0:
        raise InvalidValue("U_omega must be positive or auto")
    if not 0.0 <= values["group_persistence"] < 1.0:
        raise InvalidValue(f"group_persistence must lie in [0, 1), got {values['group_persistence']}")
    if values["group_persistence"] > 0.0 and values["env"] != "lumpable":
        raise InvalidValue("group_persistence needs a lumpable environment")
    if values["agent_pool"] is not None and values["agent_pool"] < 1:
        raise InvalidValue(f"agent_pool must be at least 1, got {values['agent_pool']}")

    num_states = values["num_groups"] * values["states_per_group"] if values["env"] == "lumpable" else values["num_states"]
    if values["env"] == "lumpable":
        feature_dim = num_states
    else:
        feature_dim = values["feature_dim"] or num_states
    if num_states > MAX_DIMENSION or feature_dim > MAX_DIMENSION:
        raise InvalidValue(f"|S| and d are capped at {MAX_DIMENSION}")
    if values["d"] is not None and values["d"] != feature_dim:
        raise InvalidValue(f"d={values['d']} does not match the generated feature dimension {feature_dim}")
    if values["r"] > feature_dim:
        raise InvalidValue(f"r={values['r']} exceeds d={feature_dim}")
    if values["env"] == "lumpable" and values["r"] != values["num_groups"]:
        raise InvalidValue(f"lumpable federations need r == num_groups, got r={values['r']}")

    if values["mode"] == "sweep":
        if not values["K_list"]:
            raise MissingKey("mode sweep requires K_list")
        if min(values["K_list"]) < 1:
            raise InvalidValue("K_list entries must be at least 1")

    T = values["T"]
    if values["metrics_stride"] == "auto":
        values["metrics_stride"] = 1 if num_states <= 64 else 10
    if values["burn_in"] == "auto":
        values["burn_in"] = math.ceil(T / 20)
    if values["log_every"] == "auto":
        values["log_every"] = max(1, T // 10)
    if values["tie_policy_to_groups"] == "auto":
        values["tie_policy_to_groups"] = values["env"] == "lumpable"
    if values["tie_policy_to_groups"] and values["env"] != "lumpable":
        raise InvalidValue("tie_policy_to_groups needs a lumpable environment")
    if values["metrics_stride"] < 1 or values["log_every"] < 1:
        raise InvalidValue("metrics_stride and log_every must be at least 1")
    if not 0 <= values["burn_in"] < T:
        raise InvalidValue(f"burn_in must lie in [0, T), got {values['burn_in']}")

    if values["U_omega"] != "auto":
        check_stepsize_conditions(values["zeta"], values["L"], values["gamma"], values["U_r"], values["U_omega"])

    return RunConfig(**values)


def parse_config(path: str, env_workers: Optional[str] = None) -> RunConfig:
    """
    Read and validate a config file

    Args:
        path: Path to the YAML document
        env_workers: Fallback worker count, defaults to the PFEDAC_WORKERS variable

    Returns:
        RunConfig
    """
    config_path = Path(path)
    if not config_path.exists():
        raise InvalidValue(f"config file not found: {path}")
    with open(config_path, "r") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise InvalidValue(f"config file is not valid YAML: {e}")
    if env_workers is None:
        env_workers = os.getenv("PFEDAC_WORKERS")
    config = resolve_config(raw or {}, env_workers)
    logger.debug(f"Parsed config from {config_path}: {config}")
    return config


def dump_config(config: RunConfig, path: str) -> Path:
    """Echo the resolved config so that parse_config(path) reproduces it"""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True)
    return out_path
