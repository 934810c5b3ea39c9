"""Experiment configuration: JSON in, validated dataclasses out.

Unknown keys are rejected at every level and every error names the field
path, so a bad config fails fast with an actionable message.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

EXPERIMENTS = ("fit-univariate", "fit-multivariate", "design-run", "regret-run", "appendix-c")
ESTIMATORS = ("isotonic", "parametric-probit", "parametric-logit")
COSTS = ("uniform", "square", "probit")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field_path: str, message: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_path}: {message}" if field_path else f"{where}{message}")
        self.field = field_path
        self.line = line


def _rng(lo=None, hi=None, lo_open=False, choices=None, nullable=False):
    return {"lo": lo, "hi": hi, "lo_open": lo_open, "choices": choices, "nullable": nullable}


@dataclass
class MarketSection:
    wage: float = field(default=4.0, metadata=_rng(0.0, None, lo_open=True))
    cost: str = field(default="uniform", metadata=_rng(choices=COSTS))
    cost_mu: float = field(default=0.5, metadata=_rng())
    cost_sigma: float = field(default=0.15, metadata=_rng(0.0, None, lo_open=True))
    skilled_power: float = field(default=2.0, metadata=_rng(0.0, None, lo_open=True))
    unskilled_power: float = field(default=1.0, metadata=_rng(0.0, None, lo_open=True))
    delta0: float = field(default=1.0, metadata=_rng(0.0, None, lo_open=True))
    delta1: float = field(default=1.0, metadata=_rng(0.0, None, lo_open=True))


@dataclass
class FitSection:
    design_points: int = field(default=200, metadata=_rng(1, 10**7))
    per_point_n: int = field(default=50, metadata=_rng(1, 10**7))
    layout: str = field(default="equidistant", metadata=_rng(choices=("equidistant", "random")))
    proportions: str = field(default="direct", metadata=_rng(choices=("direct", "moment-matching")))
    classifier_threshold: float = field(default=0.5, metadata=_rng(0.0, 1.0))
    eval_points: int = field(default=101, metadata=_rng(2, 10**6))


@dataclass
class MultivariateSection:
    actions: int = field(default=3, metadata=_rng(2, 8))
    models: int = field(default=200, metadata=_rng(1, 5000))
    per_model_n: int = field(default=200, metadata=_rng(1, 10**7))
    benefit_low: float = field(default=-1.0, metadata=_rng())
    benefit_high: float = field(default=1.0, metadata=_rng())
    mc_samples: int = field(default=20_000, metadata=_rng(100, 10**8))


@dataclass
class DesignSection:
    tau0: int = field(default=64, metadata=_rng(2, 10**6))
    episodes: int = field(default=6, metadata=_rng(1, 20))
    per_point_n: int = field(default=50, metadata=_rng(1, 10**6))
    mise_replications: int = field(default=40, metadata=_rng(1, 10**5))
    mise_points: int = field(default=1024, metadata=_rng(1, 10**7))
    pool_episodes: bool = False
    shrink_variance: bool = True
    floor: float = field(default=0.01, metadata=_rng(0.0, 1.0, lo_open=True))


@dataclass
class RegretSection:
    total: int = field(default=8192, metadata=_rng(2, 10**8))
    tau0: int = field(default=8, metadata=_rng(2, 10**6))
    alpha: Optional[float] = field(default=None, metadata=_rng(0.0, 1.0, lo_open=True, nullable=True))
    per_point_n: int = field(default=50, metadata=_rng(1, 10**6))
    theta_grid: int = field(default=256, metadata=_rng(2, 10**6))
    tail_fraction: float = field(default=0.9, metadata=_rng(0.0, 1.0, lo_open=True))
    shrink_variance: bool = True


@dataclass
class AppendixCSection:
    actions: int = field(default=4, metadata=_rng(2, 8))
    models: int = field(default=500, metadata=_rng(1, 10**5))
    noise_sd: float = field(default=0.1, metadata=_rng(0.0, None))
    mc_samples: int = field(default=20_000, metadata=_rng(100, 10**8))
    n_values: list = field(default_factory=lambda: list(range(50, 501, 50)))
    benefit_low: float = field(default=-1.0, metadata=_rng())
    benefit_high: float = field(default=1.0, metadata=_rng())


@dataclass
class RunConfig:
    experiment: str
    seed: int
    replications: int = 1
    estimator: str = "isotonic"
    output_dir: Optional[str] = None
    market: MarketSection = field(default_factory=MarketSection)
    fit: FitSection = field(default_factory=FitSection)
    multivariate: MultivariateSection = field(default_factory=MultivariateSection)
    design: DesignSection = field(default_factory=DesignSection)
    regret: RegretSection = field(default_factory=RegretSection)
    appendix_c: AppendixCSection = field(default_factory=AppendixCSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        data = self.to_dict()
        data.pop("output_dir", None)
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


_TOP_META = {
    "experiment": _rng(choices=EXPERIMENTS),
    "seed": _rng(0, 2**64 - 1),
    "replications": _rng(1, 10**5),
    "estimator": _rng(choices=ESTIMATORS),
    "output_dir": _rng(nullable=True),
}
_REQUIRED = ("experiment", "seed")


def _check_value(path: str, value: Any, ftype, meta: dict):
    if value is None:
        if meta.get("nullable"):
            return None
        raise ConfigError(path, "must not be null")
    type_name = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    if "bool" in type_name:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if type_name.startswith("int") or type_name == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif "float" in type_name:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        value = float(value)
    elif "str" in type_name:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
    choices = meta.get("choices")
    if choices is not None and value not in choices:
        raise ConfigError(path, f"must be one of {list(choices)}, got {value!r}")
    lo, hi = meta.get("lo"), meta.get("hi")
    if lo is not None and (value <= lo if meta.get("lo_open") else value < lo):
        raise ConfigError(path, f"must be {'>' if meta.get('lo_open') else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(path, f"must be <= {hi}, got {value!r}")
    return value


def _build_section(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        sub = f"{path}.{name}"
        if name == "n_values":
            values = data[name]
            if not isinstance(values, list) or not values or not all(
                isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in values
            ):
                raise ConfigError(sub, "expected a nonempty list of positive integers")
            kwargs[name] = sorted(values)
            continue
        kwargs[name] = _check_value(sub, data[name], f.type, dict(f.metadata))
    return cls(**kwargs)


_SECTIONS = {
    "market": MarketSection,
    "fit": FitSection,
    "multivariate": MultivariateSection,
    "design": DesignSection,
    "regret": RegretSection,
    "appendix_c": AppendixCSection,
}


def config_from_dict(data: Any) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    for key in data:
        if key not in _TOP_META and key not in _SECTIONS:
            raise ConfigError(key, "unknown key")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(key, "missing required field")
    kwargs = {}
    for key, meta in _TOP_META.items():
        if key in data:
            ftype = {"seed": "int", "replications": "int"}.get(key, "str")
            kwargs[key] = _check_value(key, data[key], ftype, meta)
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _build_section(cls, data[key], key)
    config = RunConfig(**kwargs)
    _cross_checks(config)
    return config


def _cross_checks(config: RunConfig) -> None:
    if config.multivariate.benefit_high <= config.multivariate.benefit_low:
        raise ConfigError("multivariate.benefit_high", "must exceed benefit_low")
    if config.appendix_c.benefit_high <= config.appendix_c.benefit_low:
        raise ConfigError("appendix_c.benefit_high", "must exceed benefit_low")
    if config.appendix_c.n_values[-1] > config.appendix_c.models:
        raise ConfigError("appendix_c.n_values", "values must not exceed appendix_c.models")
    if config.experiment in ("design-run", "fit-multivariate", "appendix-c") and config.estimator != "isotonic":
        raise ConfigError("estimator", f"{config.experiment} supports only the isotonic estimator")
    if config.regret.total < config.regret.tau0:
        raise ConfigError("regret.total", "must be >= regret.tau0")


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return config_from_dict(data)


PRESETS = {
    "fit-univariate": {"experiment": "fit-univariate", "seed": 42},
    "fit-multivariate": {"experiment": "fit-multivariate", "seed": 42},
    "design-run": {
        "experiment": "design-run",
        "seed": 42,
        "replications": 10,
        "design": {"tau0": 64, "episodes": 6, "per_point_n": 50},
    },
    "regret-run": {
        "experiment": "regret-run",
        "seed": 42,
        "replications": 10,
        "regret": {"total": 8192, "tau0": 8, "alpha": 0.75, "per_point_n": 50},
    },
    "appendix-c": {"experiment": "appendix-c", "seed": 42, "replications": 10},
}
