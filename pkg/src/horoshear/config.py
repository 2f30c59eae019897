"""Experiment configuration: JSON in, validated, echoed back in every manifest."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .lattice import FuchsianGroupModel, bolza_group, group_from_json, load_group, translation_to
from .lie import AlgebraVector
from .observables import BumpSpec, Observable, build_observable

COMMANDS = ("verify", "decay", "mixing", "shadow")

_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_MAT = {"type": "array", "minItems": 2, "maxItems": 2,
        "items": {"type": "array", "minItems": 2, "maxItems": 2,
                  "items": {"type": ["number", "string"]}}}

SCHEMA = {
    "type": "object",
    "required": ["command", "seed"],
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "seed": {"type": "integer", "minimum": 0},
        "precision": {"enum": ["double", "dd"]},
        "lattice": {
            "type": "object",
            "properties": {
                "builtin": {"enum": ["bolza"]},
                "file": {"type": "string"},
                "inline": {"type": "object"},
            },
            "minProperties": 1, "maxProperties": 1, "additionalProperties": False,
        },
        "observables": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "radius"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string"},
                    "center": _MAT,
                    "center_point": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                    "radius": {"type": "number", "exclusiveMinimum": 0},
                    "smoothness": {"type": "integer", "minimum": 6},
                    "amplitude": _NUM,
                    "k_invariant": {"type": "boolean"},
                    "centering": {"enum": ["quadrature", "monte-carlo", "none"]},
                    "centering_samples": {"type": "integer", "minimum": 10000},
                    "seed": {"type": "integer", "minimum": 0},
                },
            },
        },
        "directions": {"type": "array", "items": _VEC3, "minItems": 1},
        "S": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "t_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "kappa": {"type": "number", "exclusiveMinimum": 0},
        "n_base_points": {"type": "integer", "minimum": 4},
        "suite_cases": {"type": "integer", "minimum": 1},
        "mixing": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "pairs": {"type": "array", "minItems": 1,
                          "items": {"type": "array", "items": {"type": "string"},
                                    "minItems": 2, "maxItems": 2}},
                "n_mc": {"type": "integer", "minimum": 100},
                "n_radial": {"type": "integer", "minimum": 1},
                "n_angular": {"type": "integer", "minimum": 1},
                "k_theta": {"type": "number", "exclusiveMinimum": 0},
                "n_sup": {"type": "integer", "minimum": 1},
                "n_ibp": {"type": "integer", "minimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

DEFAULT_OBSERVABLES = [
    {"label": "f", "center_point": [0.3, 1.2], "radius": 1.0, "k_invariant": True},
    {"label": "g1", "center_point": [-0.5, 0.8], "radius": 1.0, "k_invariant": True},
    {"label": "g2", "center_point": [0.1, 0.5], "radius": 1.0, "k_invariant": True},
    {"label": "g3", "center_point": [1.0, 1.5], "radius": 1.0, "k_invariant": True},
]

DEFAULTS = {
    "precision": "double",
    "lattice": {"builtin": "bolza"},
    "observables": DEFAULT_OBSERVABLES,
    "directions": [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
    "S": 2.0,
    "sigma": 2.0,
    "kappa": 20.0,
    "n_base_points": 8,
    "suite_cases": 100,
    "mixing": {"pairs": [["f", "f"], ["f", "g1"], ["f", "g2"], ["f", "g3"]],
               "n_mc": 100000, "n_radial": 8, "n_angular": 16, "k_theta": 2.0,
               "n_sup": 32, "n_ibp": 8, "sigma": 1.0},
}

DEFAULT_T_GRID = {
    "verify": [1.0],
    "decay": [2.0 ** k for k in range(1, 10)],
    "mixing": [2.0 ** k for k in range(1, 9)],
    "shadow": [2.0 ** k for k in range(2, 9)],
}


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration with every default filled in."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from None
        data = copy.deepcopy(DEFAULTS)
        for key, val in raw.items():
            if key == "mixing":
                data["mixing"].update(copy.deepcopy(val))
            else:
                data[key] = copy.deepcopy(val)
        data.setdefault("t_grid", list(DEFAULT_T_GRID[data["command"]]))
        if data["S"] > data["sigma"]:
            raise ConfigError("S must not exceed sigma")
        labels = [o["label"] for o in data["observables"]]
        if len(set(labels)) != len(labels):
            raise ConfigError("observable labels must be unique")
        pairs = data["mixing"]["pairs"] if data["command"] == "mixing" else []
        for pair in pairs:
            for lab in pair:
                if lab not in labels:
                    raise ConfigError(f"mixing pair refers to unknown observable {lab!r}")
        if list(data["t_grid"]) != sorted(set(data["t_grid"])):
            raise ConfigError("t_grid must be strictly increasing")
        for w in data["directions"]:
            if not any(w):
                raise ConfigError("directions must be non-zero")
        return cls(data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def default(cls, command: str, seed: int = 1) -> "ExperimentConfig":
        return cls.from_dict({"command": command, "seed": seed})

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def __getitem__(self, key):
        return self.data[key]

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and \
            json.dumps(self.data, sort_keys=True) == json.dumps(other.data, sort_keys=True)

    def directions(self) -> list[AlgebraVector]:
        return [AlgebraVector(*map(float, w)) for w in self.data["directions"]]

    def group(self) -> FuchsianGroupModel:
        spec = self.data["lattice"]
        try:
            if "builtin" in spec:
                return bolza_group()
            if "file" in spec:
                return load_group(spec["file"])
            return group_from_json(spec["inline"])
        except (KeyError, OSError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot build lattice: {exc}") from None

    def observables(self, group: FuchsianGroupModel) -> dict[str, Observable]:
        out = {}
        for k, o in enumerate(self.data["observables"]):
            if "center" in o:
                center = np.array([[float(e) for e in row] for row in o["center"]])
            else:
                x, y = o.get("center_point", [0.0, 1.0])
                center = translation_to(complex(x, y))
            try:
                spec = BumpSpec(center, o["radius"], o.get("smoothness", 6),
                                o.get("amplitude", 1.0), o.get("k_invariant", False))
            except ValueError as exc:
                raise ConfigError(f"observable {o['label']!r}: {exc}") from None
            seed = o.get("seed", self.data["seed"])
            rng = np.random.default_rng([seed, 0xC0DE, k])
            out[o["label"]] = build_observable(
                spec, group, centering=o.get("centering", "quadrature"), rng=rng,
                n_mc=o.get("centering_samples", 100_000), label=o["label"], seed=seed)
        return out
