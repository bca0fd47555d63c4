"""Generation configuration: defaults, JSON schema, parsing, validation.

A config file is a JSON document; omitted fields fall back to the
defaults below, so ``{}`` is a valid config.  Structural problems are
rejected with the offending field path, as are semantic ones (reversed
ranges, a mild corruption endpoint above its severe counterpart, ...).
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

import jsonschema

from .appearance import ContrastPrior, CorruptionParams
from .errors import ConfigError, InputError

DEFAULT_CONFIG = {
    "master_seed": 20240101,
    "batch_size": 4,
    "patch_size": [128, 128, 128],
    "deformation": {
        "rotation_deg": [-15.0, 15.0],
        "scaling": [0.85, 1.15],
        "shearing": [-0.012, 0.012],
        "translation_mm": [-15.0, 15.0],
        "svf_control_spacing_mm": 16.0,
        "svf_amplitude_mm": [0.0, 3.0],
        "integration_steps": 7,
    },
    "contrast": {
        "mu_mean": 0.5,
        "mu_std": 0.2,
        "sigma_scale": 0.1,
        "per_label": {},
    },
    "corruption": {
        "mild": {
            "bias_amplitude": 0.05,
            "bias_control_spacing": 40.0,
            "noise_sigma": 1.0,
            "slice_spacing": [1.0, 1.0, 1.0],
            "gamma_log_std": 0.0,
            "mixup_lambda": 1.0,
        },
        "severe": {
            "bias_amplitude": 0.4,
            "bias_control_spacing": 40.0,
            "noise_sigma": 10.0,
            "slice_spacing": [1.5, 1.5, 5.0],
            "gamma_log_std": 0.0,
            "mixup_lambda": 1.0,
        },
    },
    "mixup": {"enabled": True, "lambda_range": [0.3, 1.0]},
    "targets": {
        "distance_structures": {"brain": "foreground", "cortex": [3, 42]},
        "signed_distance": False,
    },
    "sampling": {"out_of_domain": "clamp"},
}

_RANGE = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_TRIPLE = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

_CORRUPTION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "bias_amplitude": {"type": "number", "minimum": 0},
        "bias_control_spacing": {"type": "number", "exclusiveMinimum": 0},
        "noise_sigma": {"type": "number", "minimum": 0},
        "slice_spacing": _TRIPLE,
        "gamma_log_std": {"type": "number", "minimum": 0},
        "mixup_lambda": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "master_seed": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "patch_size": {
            "anyOf": [
                {"type": "integer", "minimum": 1},
                {"type": "array", "items": {"type": "integer", "minimum": 1},
                 "minItems": 3, "maxItems": 3},
            ]
        },
        "deformation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rotation_deg": _RANGE,
                "scaling": _RANGE,
                "shearing": _RANGE,
                "translation_mm": _RANGE,
                "svf_control_spacing_mm": {"type": "number", "exclusiveMinimum": 0},
                "svf_amplitude_mm": _RANGE,
                "integration_steps": {"type": "integer", "minimum": 1},
            },
        },
        "contrast": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu_mean": {"type": "number"},
                "mu_std": {"type": "number", "minimum": 0},
                "sigma_scale": {"type": "number", "minimum": 0},
                "per_label": {
                    "type": "object",
                    "patternProperties": {r"^\d+$": _TRIPLE},
                    "additionalProperties": False,
                },
            },
        },
        "corruption": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mild": _CORRUPTION_SCHEMA, "severe": _CORRUPTION_SCHEMA},
        },
        "mixup": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"enabled": {"type": "boolean"}, "lambda_range": _RANGE},
        },
        "targets": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "distance_structures": {
                    "type": "object",
                    "additionalProperties": {
                        "anyOf": [
                            {"const": "foreground"},
                            {"type": "array", "items": {"type": "integer", "minimum": 0}},
                        ]
                    },
                },
                "signed_distance": {"type": "boolean"},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"out_of_domain": {"enum": ["clamp", "zero"]}},
        },
    },
}


@dataclass(frozen=True)
class DeformPrior:
    rotation_deg: tuple
    scaling: tuple
    shearing: tuple
    translation_mm: tuple
    svf_control_spacing_mm: float
    svf_amplitude_mm: tuple
    integration_steps: int


@dataclass(frozen=True)
class GenerationConfig:
    """Parsed and validated generation hyperparameters (the full parameter group)."""

    master_seed: int
    batch_size: int
    patch_size: tuple
    deformation: DeformPrior
    contrast: ContrastPrior
    mild: CorruptionParams
    severe: CorruptionParams
    mixup_enabled: bool
    mixup_lambda_range: tuple
    distance_structures: dict
    signed_distance: bool
    out_of_domain: str
    raw: dict = field(repr=False, default_factory=dict)


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in (
            "per_label", "distance_structures",
        ):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _path_of(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def _check_order(path: str, pair) -> tuple:
    lo, hi = float(pair[0]), float(pair[1])
    if lo > hi:
        raise ConfigError(f"{path}: range [{lo}, {hi}] has lo > hi")
    return lo, hi


def validate_config_dict(doc: dict) -> dict:
    """Schema + cross-field validation of a raw config document.

    Returns the document merged over the defaults.  Raises ConfigError with
    the offending field path on any violation.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"<root>: config must be a JSON object, got {type(doc).__name__}")
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{_path_of(exc)}: {exc.message}") from exc

    merged = _merge(DEFAULT_CONFIG, doc)
    deform = merged["deformation"]
    for key in ("rotation_deg", "scaling", "shearing", "translation_mm", "svf_amplitude_mm"):
        _check_order(f"deformation.{key}", deform[key])
    if deform["scaling"][0] <= 0:
        raise ConfigError(f"deformation.scaling: must be positive, got {deform['scaling']}")
    if deform["svf_amplitude_mm"][0] < 0:
        raise ConfigError(f"deformation.svf_amplitude_mm: must be >= 0, "
                          f"got {deform['svf_amplitude_mm']}")
    _check_order("mixup.lambda_range", merged["mixup"]["lambda_range"])
    lo, hi = merged["mixup"]["lambda_range"]
    if lo < 0 or hi > 1:
        raise ConfigError(f"mixup.lambda_range: must lie in [0, 1], got [{lo}, {hi}]")

    mild, severe = merged["corruption"]["mild"], merged["corruption"]["severe"]
    for key in ("noise_sigma", "bias_amplitude", "gamma_log_std"):
        if mild[key] > severe[key]:
            raise ConfigError(f"corruption.mild.{key}: {mild[key]} exceeds "
                              f"corruption.severe.{key}: {severe[key]}")
    for axis in range(3):
        if mild["slice_spacing"][axis] > severe["slice_spacing"][axis]:
            raise ConfigError(
                f"corruption.mild.slice_spacing.{axis}: {mild['slice_spacing'][axis]} "
                f"exceeds corruption.severe.slice_spacing.{axis}: "
                f"{severe['slice_spacing'][axis]}"
            )
    return merged


def config_from_dict(doc: dict) -> GenerationConfig:
    merged = validate_config_dict(doc)
    deform = merged["deformation"]
    patch = merged["patch_size"]
    if isinstance(patch, int):
        patch = [patch] * 3
    contrast = merged["contrast"]
    try:
        prior = ContrastPrior(
            mu_mean=contrast["mu_mean"], mu_std=contrast["mu_std"],
            sigma_scale=contrast["sigma_scale"],
            per_label={int(k): tuple(v) for k, v in contrast["per_label"].items()},
        )
        mild = CorruptionParams(**merged["corruption"]["mild"])
        severe = CorruptionParams(**merged["corruption"]["severe"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return GenerationConfig(
        master_seed=int(merged["master_seed"]),
        batch_size=int(merged["batch_size"]),
        patch_size=tuple(int(p) for p in patch),
        deformation=DeformPrior(
            rotation_deg=tuple(deform["rotation_deg"]),
            scaling=tuple(deform["scaling"]),
            shearing=tuple(deform["shearing"]),
            translation_mm=tuple(deform["translation_mm"]),
            svf_control_spacing_mm=float(deform["svf_control_spacing_mm"]),
            svf_amplitude_mm=tuple(deform["svf_amplitude_mm"]),
            integration_steps=int(deform["integration_steps"]),
        ),
        contrast=prior,
        mild=mild,
        severe=severe,
        mixup_enabled=bool(merged["mixup"]["enabled"]),
        mixup_lambda_range=tuple(merged["mixup"]["lambda_range"]),
        distance_structures=dict(merged["targets"]["distance_structures"]),
        signed_distance=bool(merged["targets"]["signed_distance"]),
        out_of_domain=str(merged["sampling"]["out_of_domain"]),
        raw=merged,
    )


def load_config(path) -> GenerationConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(doc)


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: GenerationConfig) -> str:
    return hashlib.sha256(canonical_json(config.raw).encode("utf-8")).hexdigest()
