"""
Run configuration: a strict JSON document naming the task, the model, the
simulation settings, the task parameters and where to write results.
"""

import hashlib
import json
import logging
from copy import deepcopy
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from hawkes_ldp.models import (
    ClippedLinearRate,
    ExponentialKernel,
    IntensityModel,
    Interpolation,
    LinearRate,
    PowerLawKernel,
    SaturatingRate,
    TableKernel,
)
from hawkes_ldp.simulate import DEFAULT_MAX_EVENTS, SimConfig

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "OutputConfig",
    "RunConfig",
    "TASKS",
    "parse_config",
    "load_config",
    "model_from_dict",
    "config_hash",
]

TASKS = ("simulate", "loglik", "entropy", "rate-fn", "rare-event", "empirical", "lln")
STATISTICS = ("count", "at_least", "truncated_count", "mean_gap", "min_gap")
EVENT_FORMATS = ("csv", "binary", "none")


class ConfigError(ValueError):
    pass


def _check_keys(doc, allowed, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ConfigError(f"{path}.{key}: required field missing")
    return doc[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _choice(value, choices, path: str) -> str:
    if value not in choices:
        raise ConfigError(f"{path}: expected one of {', '.join(choices)}, got {value!r}")
    return value


_KERNEL_FIELDS = {
    "exponential": ("amplitude", "beta"),
    "power_law": ("amplitude", "c", "p"),
    "table": ("knots",),
}
_RATE_FIELDS = {
    "linear": ("nu",),
    "saturating": ("nu", "cap", "scale"),
    "clipped_linear": ("nu", "cap"),
}


def _kernel_from_dict(doc, path: str) -> tuple:
    shape = _choice(_require(doc, "shape", path), tuple(_KERNEL_FIELDS), f"{path}.shape")
    required = _KERNEL_FIELDS[shape]
    optional = ("interpolation",) if shape == "table" else ()
    _check_keys(doc, ("shape",) + required + optional, path)
    for key in required:
        _require(doc, key, path)
    if shape == "table":
        knots = doc["knots"]
        if not isinstance(knots, list) or not all(
            isinstance(k, list) and len(k) == 2 for k in knots
        ):
            raise ConfigError(f"{path}.knots: expected a list of [time, value] pairs")
        knots = tuple(
            (_number(t, f"{path}.knots[{i}]"), _number(v, f"{path}.knots[{i}]"))
            for i, (t, v) in enumerate(knots)
        )
        interpolation = _choice(
            doc.get("interpolation", "step"), ("step", "linear"), f"{path}.interpolation"
        )
        resolved = {
            "shape": shape,
            "knots": [list(k) for k in knots],
            "interpolation": interpolation,
        }
        build = lambda: TableKernel(knots, Interpolation[interpolation.upper()])
    else:
        values = {key: _number(doc[key], f"{path}.{key}") for key in required}
        resolved = {"shape": shape, **values}
        kernel_type = ExponentialKernel if shape == "exponential" else PowerLawKernel
        build = lambda: kernel_type(**values)
    try:
        return build(), resolved
    except ValueError as error:
        raise ConfigError(f"{path}: {error}") from error


def _rate_from_dict(doc, path: str) -> tuple:
    shape = _choice(_require(doc, "shape", path), tuple(_RATE_FIELDS), f"{path}.shape")
    required = _RATE_FIELDS[shape]
    optional = ("lower_bound",) + (("slope",) if shape == "linear" else ())
    _check_keys(doc, ("shape",) + required + optional, path)
    for key in required:
        _require(doc, key, path)
    values = {key: _number(doc[key], f"{path}.{key}") for key in required}
    if shape == "linear":
        values["slope"] = _number(doc.get("slope", 1.0), f"{path}.slope")
    if doc.get("lower_bound") is not None:
        values["lower_bound"] = _number(doc["lower_bound"], f"{path}.lower_bound")
    rate_type = {
        "linear": LinearRate,
        "saturating": SaturatingRate,
        "clipped_linear": ClippedLinearRate,
    }[shape]
    try:
        rate = rate_type(**values)
    except ValueError as error:
        raise ConfigError(f"{path}: {error}") from error
    return rate, {"shape": shape, **values, "lower_bound": rate.lower_bound}


def model_from_dict(doc, path: str = "model") -> tuple:
    """
    build an IntensityModel from its config block
    ----------
    Arguments:
        - doc: dict
            {"label", "kernel": {...}, "rate": {...}}
        - path: str
            dotted location used in error messages
    Returns:
        - tuple: (IntensityModel, the block with every default filled in)"""
    _check_keys(doc, ("label", "kernel", "rate"), path)
    kernel, kernel_doc = _kernel_from_dict(_require(doc, "kernel", path), f"{path}.kernel")
    rate, rate_doc = _rate_from_dict(_require(doc, "rate", path), f"{path}.rate")
    label = doc.get("label", path.rsplit(".", 1)[-1])
    if not isinstance(label, str):
        raise ConfigError(f"{path}.label: expected a string")
    try:
        model = IntensityModel(kernel, rate, label)
    except ValueError as error:
        raise ConfigError(f"{path}: {error}") from error
    return model, {"label": label, "kernel": kernel_doc, "rate": rate_doc}


def _sim_from_dict(doc, path: str = "sim") -> tuple:
    _check_keys(
        doc, ("seed", "horizon", "burn_in", "replicas", "max_events", "workers"), path
    )
    values = {
        "seed": _integer(doc.get("seed", 0), f"{path}.seed"),
        "horizon": _number(doc.get("horizon", 100.0), f"{path}.horizon"),
        "burn_in": None,
        "replicas": _integer(doc.get("replicas", 1), f"{path}.replicas"),
        "max_events": _integer(doc.get("max_events", DEFAULT_MAX_EVENTS), f"{path}.max_events"),
        "workers": _integer(doc.get("workers", 1), f"{path}.workers"),
    }
    if doc.get("burn_in") is not None:
        values["burn_in"] = _number(doc["burn_in"], f"{path}.burn_in")
    try:
        return SimConfig(**values), values
    except ValueError as error:
        raise ConfigError(f"{path}: {error}") from error


def _positive(value, path: str) -> float:
    value = _number(value, path)
    if value <= 0:
        raise ConfigError(f"{path}: must be positive, got {value:g}")
    return value


def _params_from_dict(task: str, doc, model: IntensityModel, path: str = "params") -> tuple:
    """validated task parameters with built models, and their resolved echo"""
    doc = {} if doc is None else doc
    if task == "simulate":
        _check_keys(doc, ("burned",), path)
        burned = doc.get("burned", False)
        if not isinstance(burned, bool):
            raise ConfigError(f"{path}.burned: expected true or false")
        return {"burned": burned}, {"burned": burned}
    if task in ("loglik", "entropy"):
        key = "target" if task == "loglik" else "q_model"
        _check_keys(doc, (key,), path)
        other, other_doc = model_from_dict(_require(doc, key, path), f"{path}.{key}")
        if model.rate.lower_bound <= 0:
            raise ConfigError(f"model: reference rate needs lower_bound > 0 for {task}")
        return {key: other}, {key: other_doc}
    if task == "rate-fn":
        _check_keys(doc, ("x_min", "x_max", "x_step"), path)
        if not model.is_linear or model.rate.nu <= 0:
            raise ConfigError("model: rate-fn needs a linear rate with nu > 0")
        values = {
            "x_min": _number(doc.get("x_min", 0.0), f"{path}.x_min"),
            "x_max": _number(doc.get("x_max", 5.0), f"{path}.x_max"),
            "x_step": _positive(doc.get("x_step", 0.1), f"{path}.x_step"),
        }
        if values["x_max"] < values["x_min"]:
            raise ConfigError(f"{path}.x_max: must be >= x_min")
        return values, dict(values)
    if task == "rare-event":
        _check_keys(doc, ("threshold", "tail", "proposal", "horizons"), path)
        threshold = _number(_require(doc, "threshold", path), f"{path}.threshold")
        tail = _choice(doc.get("tail", "upper"), ("upper", "lower"), f"{path}.tail")
        proposal = doc.get("proposal", "mean-matched")
        if isinstance(proposal, dict):
            proposal, proposal_doc = model_from_dict(proposal, f"{path}.proposal")
        else:
            proposal = proposal_doc = _choice(
                proposal, ("mean-matched", "tilted"), f"{path}.proposal"
            )
            if proposal == "tilted" and (not model.is_linear or model.rate.nu <= 0):
                raise ConfigError(f"{path}.proposal: tilted needs a linear model")
        if model.rate.lower_bound <= 0:
            raise ConfigError("model: rare-event needs rate lower_bound > 0")
        horizons = doc.get("horizons")
        if horizons is not None:
            if not isinstance(horizons, list) or not horizons:
                raise ConfigError(f"{path}.horizons: expected a non-empty list")
            horizons = [_positive(t, f"{path}.horizons[{i}]") for i, t in enumerate(horizons)]
        values = {
            "threshold": threshold,
            "tail": tail,
            "proposal": proposal,
            "horizons": horizons,
        }
        return values, {**values, "proposal": proposal_doc}
    if task == "empirical":
        _check_keys(doc, ("window", "statistic", "level"), path)
        values = {
            "window": _positive(doc.get("window", 1.0), f"{path}.window"),
            "statistic": _choice(
                doc.get("statistic", "count"), STATISTICS, f"{path}.statistic"
            ),
            "level": _integer(doc.get("level", 1), f"{path}.level"),
        }
        return values, dict(values)
    _check_keys(doc, (), path)
    return {}, {}


@dataclass(frozen=True)
class OutputConfig:
    directory: Path
    events: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    """
    a validated run
    ----------
    Arguments:
        - task: str
            one of TASKS
        - model: IntensityModel
            the Hawkes law of the run (the reference law P for loglik/entropy)
        - sim: SimConfig
        - params: dict
            task parameters, nested models already built
        - output: OutputConfig
        - document: dict
            the fully-resolved document, every default filled in
    """

    task: str
    model: IntensityModel
    sim: SimConfig
    params: dict
    output: OutputConfig
    document: dict

    def resolved(self) -> dict:
        return deepcopy(self.document)

    @property
    def config_hash(self) -> str:
        return config_hash(self.document)


def config_hash(document: dict) -> str:
    """SHA-256 of the canonical JSON of the document without its output block"""
    semantic = {key: value for key, value in document.items() if key != "output"}
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_OVERRIDES = {
    "seed": ("sim", "seed"),
    "horizon": ("sim", "horizon"),
    "replicas": ("sim", "replicas"),
    "workers": ("sim", "workers"),
    "out": ("output", "dir"),
}


def _apply_overrides(doc: dict, overrides: dict):
    for name, value in overrides.items():
        if value is None:
            continue
        if name == "task":
            if "task" in doc and doc["task"] != value:
                raise ConfigError(
                    f"task: document says {doc['task']!r} but {value!r} was requested"
                )
            doc["task"] = value
            continue
        if name not in _OVERRIDES:
            raise ConfigError(f"unknown override {name!r}")
        section, key = _OVERRIDES[name]
        block = doc.setdefault(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"{section}: expected an object")
        block[key] = value


def parse_config(text: str, overrides: Optional[dict] = None) -> RunConfig:
    """
    parse and validate a JSON run document
    ----------
    Arguments:
        - text: str
            the document
        - overrides: dict, optional
            task, seed, horizon, replicas, workers or out; applied to the
            raw document before validation
    Returns:
        - RunConfig
    Raises:
        - ConfigError: with line/column for malformed JSON, with the dotted
            field path for invalid content"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigError(
            f"line {error.lineno} column {error.colno}: {error.msg}"
        ) from error
    _check_keys(doc, ("task", "model", "sim", "params", "output"), "config")
    _apply_overrides(doc, overrides or {})

    task = _choice(_require(doc, "task", "config"), TASKS, "task")
    model, model_doc = model_from_dict(_require(doc, "model", "config"))
    sim, sim_doc = _sim_from_dict(doc.get("sim", {}))
    params, params_doc = _params_from_dict(task, doc.get("params"), model)

    output = doc.get("output", {})
    _check_keys(output, ("dir", "events"), "output")
    directory = output.get("dir", ".")
    if not isinstance(directory, str):
        raise ConfigError("output.dir: expected a path string")
    events = _choice(output.get("events", "csv"), EVENT_FORMATS, "output.events")

    document = {
        "task": task,
        "model": model_doc,
        "sim": sim_doc,
        "params": params_doc,
        "output": {"dir": directory, "events": events},
    }
    config = RunConfig(
        task, model, sim, params, OutputConfig(Path(directory), events), document
    )
    logger.debug("parsed %s config %s", task, config.config_hash[:12])
    return config


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"{path}: {error.strerror}") from error
    return parse_config(text, overrides)
