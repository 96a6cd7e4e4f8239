"""Experiment configuration: strict JSON parsing and model construction.

One JSON document describes one experiment.  Validation is strict: unknown
keys are rejected before any computation, so a typo cannot silently fall back
to a default.  Model presets give ready-made, admissibility-valid parameter
sets for each model; explicit configs can override any part.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import models as M
from .laws import AtomLaw, BoxLaw, TruncPowerLaw, UniformLaw
from .measures import (
    BirthLaw,
    EmpiricalMeasure,
    FragmentRatio,
    GridSpec,
    MatingMix,
    Space,
    SpatialNoise,
    affine_growth,
    affine_power_rate,
    constant_growth,
    constant_rate,
)

__all__ = ["ConfigError", "load_config", "build_model", "build_initial_cloud",
           "build_grid", "resolve_truncation", "preset_model_config", "expand_preset",
           "PRESET_NAMES"]


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to CLI usage errors."""


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def check_keys(obj: dict, required: tuple, optional: tuple = (), where: str = "config"):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _number(obj, where, positive=False, nonnegative=False):
    if not isinstance(obj, (int, float)) or isinstance(obj, bool):
        raise ConfigError(f"{where} must be a number")
    if positive and obj <= 0:
        raise ConfigError(f"{where} must be positive")
    if nonnegative and obj < 0:
        raise ConfigError(f"{where} must be nonnegative")
    return float(obj)


def _integer(obj, where, minimum=None):
    if not isinstance(obj, int) or isinstance(obj, bool):
        raise ConfigError(f"{where} must be an integer")
    if minimum is not None and obj < minimum:
        raise ConfigError(f"{where} must be at least {minimum}")
    return obj


def build_law(spec: dict, where: str = "law"):
    check_keys(spec, ("kind",), ("points", "weights", "lo", "hi", "exponent"), where)
    kind = spec["kind"]
    try:
        if kind == "atoms":
            pts = np.asarray(spec["points"], float)
            w = None if "weights" not in spec else np.asarray(spec["weights"], float)
            return AtomLaw(pts, w)
        if kind == "uniform":
            return UniformLaw(_number(spec["lo"], f"{where}.lo"), _number(spec["hi"], f"{where}.hi"))
        if kind == "box":
            return BoxLaw(np.asarray(spec["lo"], float), np.asarray(spec["hi"], float))
        if kind == "trunc_power":
            return TruncPowerLaw(
                _number(spec["exponent"], f"{where}.exponent"),
                _number(spec["lo"], f"{where}.lo"),
                _number(spec["hi"], f"{where}.hi"),
            )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad {where}: {exc}")
    raise ConfigError(f"{where}.kind must be one of atoms/uniform/box/trunc_power")


def build_rate(spec: dict, where: str = "rate"):
    check_keys(spec, ("kind",), ("value", "intercept", "slopes", "powers"), where)
    kind = spec["kind"]
    try:
        if kind == "constant":
            return constant_rate(_number(spec["value"], f"{where}.value", nonnegative=True))
        if kind == "affine_power":
            return affine_power_rate(
                _number(spec["intercept"], f"{where}.intercept", nonnegative=True),
                np.asarray(spec["slopes"], float),
                np.asarray(spec["powers"], float),
            )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad {where}: {exc}")
    raise ConfigError(f"{where}.kind must be constant or affine_power")


def build_growth(spec: dict, where: str = "growth"):
    check_keys(spec, ("kind",), ("value", "intercept", "slope"), where)
    kind = spec["kind"]
    try:
        if kind == "constant":
            return constant_growth(_number(spec["value"], f"{where}.value", nonnegative=True))
        if kind == "affine":
            return affine_growth(
                _number(spec["intercept"], f"{where}.intercept", nonnegative=True),
                _number(spec["slope"], f"{where}.slope"),
            )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad {where}: {exc}")
    raise ConfigError(f"{where}.kind must be constant or affine")


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------

_MODEL_KEYS = {
    "renewal": (("name", "growth", "rate", "birth_law"), ()),
    "renewal_system": (("name", "rates"), ("growths",)),
    "space_age": (("name", "rate", "noise_law", "noise_scale"), ("dim",)),
    "two_time": (("name", "rate"), ()),
    "growth_fragmentation": (("name", "growth", "rate", "fragment_law"), ()),
    "age_size": (("name", "growth", "rate", "fragment_law"), ()),
    "sexual": (("name", "mix_law"), ("power", "dim")),
}


def build_model(spec: dict, truncation: float) -> M.ModelSpec:
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("model spec needs a name")
    name = spec["name"]
    if name not in _MODEL_KEYS:
        raise ConfigError(f"unknown model {name!r}; expected one of {sorted(_MODEL_KEYS)}")
    required, optional = _MODEL_KEYS[name]
    check_keys(spec, required, optional, f"model {name}")
    try:
        if name == "renewal":
            return M.renewal_model(
                build_growth(spec["growth"]), build_rate(spec["rate"]),
                BirthLaw(build_law(spec["birth_law"], "birth_law")), truncation,
            )
        if name == "renewal_system":
            rates = [build_rate(r, f"rates[{i}]") for i, r in enumerate(spec["rates"])]
            growths_spec = spec.get("growths")
            if growths_spec is None:
                growths = [constant_growth(1.0)] * len(rates)
            else:
                growths = [build_growth(g, f"growths[{i}]") for i, g in enumerate(growths_spec)]
            return M.renewal_system_model(growths, rates, truncation)
        if name == "space_age":
            noise = SpatialNoise(build_law(spec["noise_law"], "noise_law"),
                                 _number(spec["noise_scale"], "noise_scale", positive=True))
            dim = spec.get("dim", noise.law.dim)
            return M.space_age_model(build_rate(spec["rate"]), noise, _integer(dim, "dim", 1), truncation)
        if name == "two_time":
            return M.two_time_model(build_rate(spec["rate"]), truncation)
        if name == "growth_fragmentation":
            return M.growth_fragmentation_model(
                build_growth(spec["growth"]), build_rate(spec["rate"]),
                FragmentRatio(build_law(spec["fragment_law"], "fragment_law")), truncation,
            )
        if name == "age_size":
            return M.age_size_model(
                build_growth(spec["growth"]), build_rate(spec["rate"]),
                FragmentRatio(build_law(spec["fragment_law"], "fragment_law")), truncation,
            )
        mix = MatingMix(build_law(spec["mix_law"], "mix_law"), float(spec.get("power", 1.0)))
        return M.sexual_model(mix, _integer(spec.get("dim", 1), "dim", 1))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad model {name}: {exc}")


def build_grid(spec: dict | None, model: M.ModelSpec) -> GridSpec | None:
    if spec is None:
        return None
    check_keys(spec, (), ("box", "grid_points", "refine_rounds"), "admissibility")
    hooks = model.admissibility
    box = spec.get("box", hooks.default_box if hooks else None)
    if box is None:
        raise ConfigError("admissibility box required for this model")
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if hooks and len(box) != hooks.box_ncols:
        raise ConfigError(f"admissibility box needs {hooks.box_ncols} coordinate ranges")
    kwargs = {}
    if "grid_points" in spec:
        kwargs["points"] = _integer(spec["grid_points"], "grid_points", 2)
    if "refine_rounds" in spec:
        kwargs["refine_rounds"] = _integer(spec["refine_rounds"], "refine_rounds", 0)
    try:
        return GridSpec(box, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad admissibility grid: {exc}")


def resolve_truncation(model_spec: dict, truncation, grid_spec: dict | None):
    """Build the model with its truncation level resolved.

    "auto" estimates the level from the rate on the validation grid and
    re-validates; an explicit level is validated as given.  Returns
    (model, level, admissibility report); the report is None for the
    untruncated model.
    """
    if model_spec.get("name") == "sexual":
        model = build_model(model_spec, np.inf)
        return model, float("inf"), None
    if truncation == "auto":
        probe = build_model(model_spec, 1.0)
        grid = build_grid(grid_spec, probe)
        level = M.suggest_truncation(probe, grid)
    else:
        level = _number(truncation, "truncation", positive=True)
    model = build_model(model_spec, level)
    grid = build_grid(grid_spec, model)
    report = M.validate_truncation(model, level, grid)
    return model, level, report


# ---------------------------------------------------------------------------
# initial measures
# ---------------------------------------------------------------------------


def build_initial_cloud(spec: dict, model: M.ModelSpec, n: int, rng: np.random.Generator) -> EmpiricalMeasure:
    """Equal-weight cloud of n i.i.d. draws from the configured initial law
    (or the explicit cloud, used as given)."""
    space = model.space
    if isinstance(spec, dict) and spec.get("kind") == "cloud":
        check_keys(spec, ("kind", "points"), ("weights",), "initial cloud")
        pts = np.atleast_2d(np.asarray(spec["points"], float))
        if "weights" in spec:
            return EmpiricalMeasure(space, pts, np.asarray(spec["weights"], float))
        return EmpiricalMeasure.from_points(space, pts)
    kind = space.kind
    try:
        if kind in ("age",):
            law = build_law(spec, "initial")
            pts = law.sample(n, rng)[:, None]
        elif kind == "age_state":
            check_keys(spec, ("age", "state_probs"), (), "initial")
            law = build_law(spec["age"], "initial.age")
            probs = np.asarray(spec["state_probs"], float)
            if probs.shape[0] != space.n_states or abs(probs.sum() - 1.0) > 1e-9:
                raise ConfigError("state_probs must give one probability per torus state")
            ages = law.sample(n, rng)
            states = rng.choice(space.n_states, size=n, p=probs / probs.sum()) + 1
            pts = np.column_stack([ages, states.astype(float)])
        elif kind == "age_position":
            check_keys(spec, ("age", "position"), (), "initial")
            ages = build_law(spec["age"], "initial.age").sample(n, rng)
            pos = build_law(spec["position"], "initial.position").sample(n, rng)
            pos = pos[:, None] if pos.ndim == 1 else pos
            if pos.shape[1] != space.dim:
                raise ConfigError("initial.position law dimension mismatch")
            pts = np.column_stack([ages, pos])
        elif kind == "time_pair":
            check_keys(spec, ("first", "gap"), (), "initial")
            first = build_law(spec["first"], "initial.first").sample(n, rng)
            gap = build_law(spec["gap"], "initial.gap").sample(n, rng)
            if np.any(gap <= 0):
                raise ConfigError("initial.gap law must be positive (open wedge)")
            pts = np.column_stack([first, first + gap])
        elif kind == "age_size":
            check_keys(spec, ("age", "size"), (), "initial")
            ages = build_law(spec["age"], "initial.age").sample(n, rng)
            sizes = build_law(spec["size"], "initial.size").sample(n, rng)
            pts = np.column_stack([ages, sizes])
        else:  # trait
            law = build_law(spec, "initial")
            pts = law.sample(n, rng)
            pts = pts[:, None] if pts.ndim == 1 else pts
            if pts.shape[1] != space.dim:
                raise ConfigError("initial law dimension mismatch")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad initial measure: {exc}")
    return EmpiricalMeasure.from_points(space, pts)


# ---------------------------------------------------------------------------
# presets: admissibility-valid parameter sets per model
# ---------------------------------------------------------------------------

PRESET_NAMES = M.MODEL_NAMES


def expand_preset(cfg: dict) -> dict:
    """Resolve a {"preset": name, ...overrides} config into a full one.

    Overrides merge one level deep, so {"sim": {"seed": 5}} changes only the
    seed of the preset's sim block.
    """
    if "preset" not in cfg:
        return cfg
    name = cfg["preset"]
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESET_NAMES)}")
    out = dict(preset_model_config(name))
    for key, value in cfg.items():
        if key == "preset":
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            merged = dict(out[key])
            merged.update(value)
            out[key] = merged
        else:
            out[key] = value
    return out


def preset_model_config(name: str) -> dict:
    """Ready-made experiment config for one model: rates of the always
    admissible affine family, simple kernels, distinct initial laws, and a
    horizon long enough that most pairs jump at least once."""
    base = {
        "truncation": "auto",
        "sim": {"n_pairs": 10000, "horizon": 2.0, "checkpoints": 10, "seed": 7,
                "replicas": 1, "ot_subsample": 1024},
    }
    if name == "renewal":
        base["model"] = {
            "name": "renewal",
            "growth": {"kind": "constant", "value": 1.0},
            "rate": {"kind": "affine_power", "intercept": 1.0, "slopes": [1.0], "powers": [1.0]},
            "birth_law": {"kind": "atoms", "points": [0.0]},
        }
        base["initial"] = {
            "first": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "second": {"kind": "uniform", "lo": 1.0, "hi": 3.0},
        }
    elif name == "renewal_system":
        base["model"] = {
            "name": "renewal_system",
            "rates": [
                {"kind": "affine_power", "intercept": 1.0, "slopes": [1.0], "powers": [1.0]},
                {"kind": "affine_power", "intercept": 1.5, "slopes": [1.0], "powers": [1.0]},
                {"kind": "affine_power", "intercept": 2.0, "slopes": [1.0], "powers": [1.0]},
            ],
        }
        base["initial"] = {
            "first": {"age": {"kind": "uniform", "lo": 0.0, "hi": 1.0}, "state_probs": [1.0, 0.0, 0.0]},
            "second": {"age": {"kind": "uniform", "lo": 0.0, "hi": 2.0}, "state_probs": [0.0, 0.5, 0.5]},
        }
    elif name == "space_age":
        base["model"] = {
            "name": "space_age",
            "rate": {"kind": "affine_power", "intercept": 1.0, "slopes": [1.0], "powers": [1.0]},
            "noise_law": {"kind": "uniform", "lo": -1.0, "hi": 1.0},
            "noise_scale": 0.5,
            "dim": 1,
        }
        base["initial"] = {
            "first": {"age": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
                      "position": {"kind": "uniform", "lo": -1.0, "hi": 1.0}},
            "second": {"age": {"kind": "uniform", "lo": 0.0, "hi": 2.0},
                       "position": {"kind": "uniform", "lo": 0.0, "hi": 2.0}},
        }
        base["sim"]["horizon"] = 1.0
    elif name == "two_time":
        base["model"] = {
            "name": "two_time",
            "rate": {"kind": "affine_power", "intercept": 1.0, "slopes": [0.5, 0.5], "powers": [1.0, 1.0]},
        }
        base["initial"] = {
            "first": {"first": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
                      "gap": {"kind": "uniform", "lo": 0.5, "hi": 1.5}},
            "second": {"first": {"kind": "uniform", "lo": 0.5, "hi": 2.0},
                       "gap": {"kind": "uniform", "lo": 0.1, "hi": 1.1}},
        }
    elif name == "growth_fragmentation":
        base["model"] = {
            "name": "growth_fragmentation",
            "growth": {"kind": "constant", "value": 1.0},
            "rate": {"kind": "affine_power", "intercept": 1.0, "slopes": [1.0], "powers": [1.0]},
            "fragment_law": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        }
        base["initial"] = {
            "first": {"kind": "atoms", "points": [1.0]},
            "second": {"kind": "uniform", "lo": 0.0, "hi": 2.0},
        }
        base["sim"]["horizon"] = 5.0
    elif name == "age_size":
        base["model"] = {
            "name": "age_size",
            "growth": {"kind": "constant", "value": 1.0},
            "rate": {"kind": "affine_power", "intercept": 1.0, "slopes": [0.5, 0.5], "powers": [1.0, 1.0]},
            "fragment_law": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        }
        base["initial"] = {
            "first": {"age": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
                      "size": {"kind": "uniform", "lo": 0.5, "hi": 1.5}},
            "second": {"age": {"kind": "uniform", "lo": 0.0, "hi": 2.0},
                       "size": {"kind": "uniform", "lo": 0.0, "hi": 1.0}},
        }
    elif name == "sexual":
        base["model"] = {
            "name": "sexual",
            "mix_law": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "power": 2.0,
            "dim": 2,
        }
        base["initial"] = {
            "first": {"kind": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
            "second": {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 2.0]},
        }
        base["sim"]["replicas"] = 32
        base["sim"]["n_pairs"] = 9600
    else:
        raise ConfigError(f"no preset for model {name!r}")
    return base
