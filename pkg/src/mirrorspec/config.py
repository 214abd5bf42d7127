"""Run configuration: one validated JSON document drives every pipeline.

Unknown keys are rejected at every level so typos fail before any compute
starts.  A short hash of the canonical document tags every output file,
making runs reproducible and collision-evident.  A few named profiles ship
with the package for the standard demos; anything else is a path to a JSON
file.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .evaluate import ModelSpec, Region
from .grid import FlipVariant, GridSpec
from .kalman import NoiseParams
from .motion import MotionConfig
from .simulate import SimulationConfig

__all__ = ["ConfigError", "RunConfig", "PROFILES"]


class ConfigError(ValueError):
    """Invalid run configuration."""


_SCHEMA = {
    "dataset": str,
    "seed": int,
    "units": str,
    "grid": {"n1": int, "n2": int},
    "simulation": {
        "steps": int,
        "delta": (int, float),
        "velocity": list,
        "source_center": list,
        "source_scale": (int, float),
        "source_amplitude": (int, float),
        "noise_alpha": (int, float),
        "noise_beta": (int, float),
        "noise_modes": (int, type(None)),
    },
    "storm": {"steps": int, "n_blobs": int, "peak_dbz": (int, float)},
    "flip": {"x_anchor": str, "y_anchor": str},
    "truncation": {"k": int, "k_star_factor": int},
    "noise": {
        "sigma2_alpha": (int, float),
        "sigma2_beta": (int, float),
        "sigma2_obs": (int, float),
    },
    "fit": {"enabled": bool, "budget": int, "grid": list},
    "motion": {
        "block": int,
        "overlap": (int, float),
        "search_radius": int,
        "min_block_energy": (int, float),
        "smooth_sigma": (int, float),
    },
    "velocity": {"mode": str, "value": list},
    "regions": None,  # free-form mapping name -> {x_range, y_range}
    "comparison": {"models": list, "train_steps": int, "eval_times": list},
    "render": {"scale": (list, str)},
}

_DEFAULTS = {
    "dataset": "advection",
    "seed": 20260809,
    "units": "dimensionless",
    "grid": {"n1": 100, "n2": 100},
    "simulation": {
        "steps": 30,
        "delta": 1.0,
        "velocity": [0.01, 0.0],
        "source_center": [0.1, 0.0],
        "source_scale": 0.18,
        "source_amplitude": 3.0,
        "noise_alpha": 0.005,
        "noise_beta": 0.001,
        "noise_modes": 80,
    },
    "flip": {"x_anchor": "right", "y_anchor": "bottom"},
    "truncation": {"k": 100, "k_star_factor": 4},
    "fit": {"enabled": True, "budget": 40, "grid": [1e-3, 1e-2]},
    "motion": {
        "block": 16,
        "overlap": 0.5,
        "search_radius": 8,
        "min_block_energy": 1e-4,
        "smooth_sigma": 2.0,
    },
    "velocity": {"mode": "constant", "value": [0.01, 0.0]},
    "regions": {"whole": {"x_range": [0.0, 0.999], "y_range": [0.0, 0.999]}},
    "render": {"scale": "auto"},
}


def _validate(node, schema, path="config"):
    if schema is None:
        return
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{path}: expected an object")
        for key, value in node.items():
            if key not in schema:
                raise ConfigError(f"{path}: unknown key {key!r}")
            _validate(value, schema[key], f"{path}.{key}")
    else:
        if isinstance(schema, tuple):
            ok = isinstance(node, schema) and not isinstance(node, bool)
            if type(None) in schema and node is None:
                ok = True
        elif schema is bool:
            ok = isinstance(node, bool)
        elif schema in (int,):
            ok = isinstance(node, int) and not isinstance(node, bool)
        else:
            ok = isinstance(node, schema)
        if not ok:
            raise ConfigError(f"{path}: expected {schema}, got {type(node).__name__}")


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class RunConfig:
    """Validated configuration document with typed accessors."""

    def __init__(self, data: dict):
        _validate(data, _SCHEMA)
        if "regions" in data:
            for name, spec in data["regions"].items():
                if set(spec) != {"x_range", "y_range"}:
                    raise ConfigError(f"config.regions.{name}: need exactly x_range and y_range")
        self.data = _merge(_DEFAULTS, data)
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        self.hash = hashlib.sha256(canon.encode()).hexdigest()[:12]

    @classmethod
    def load(cls, source: str) -> "RunConfig":
        """Load a named profile or a JSON file path."""
        if source in PROFILES:
            return cls(copy.deepcopy(PROFILES[source]))
        path = Path(source)
        if not path.exists():
            raise ConfigError(
                f"config {source!r} is neither a profile ({', '.join(sorted(PROFILES))}) "
                "nor an existing file"
            )
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls(data)

    def grid(self) -> GridSpec:
        g = self.data["grid"]
        try:
            return GridSpec(g["n1"], g["n2"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config.grid: {exc}") from exc

    def simulation(self, seed=None, steps=None) -> SimulationConfig:
        s = self.data["simulation"]
        try:
            return SimulationConfig(
                grid=self.grid(),
                steps=steps if steps is not None else s["steps"],
                delta=float(s["delta"]),
                velocity=tuple(s["velocity"]),
                source_center=tuple(s["source_center"]),
                source_scale=float(s["source_scale"]),
                source_amplitude=float(s["source_amplitude"]),
                noise_alpha=float(s["noise_alpha"]),
                noise_beta=float(s["noise_beta"]),
                noise_modes=s["noise_modes"],
                seed=seed if seed is not None else self.data["seed"],
            )
        except ValueError as exc:
            raise ConfigError(f"config.simulation: {exc}") from exc

    def flip_variant(self) -> FlipVariant:
        f = self.data["flip"]
        try:
            return FlipVariant(f["x_anchor"], f["y_anchor"])
        except ValueError as exc:
            raise ConfigError(f"config.flip: {exc}") from exc

    def motion(self) -> MotionConfig:
        m = self.data["motion"]
        try:
            return MotionConfig(**m)
        except ValueError as exc:
            raise ConfigError(f"config.motion: {exc}") from exc

    def noise(self) -> NoiseParams | None:
        n = self.data.get("noise")
        if n is None:
            return None
        try:
            return NoiseParams(
                float(n["sigma2_alpha"]), float(n["sigma2_beta"]),
                float(n.get("sigma2_obs", 0.0)),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"config.noise: {exc}") from exc

    def regions(self) -> dict[str, Region]:
        out = {}
        for name, spec in self.data["regions"].items():
            try:
                out[name] = Region(tuple(spec["x_range"]), tuple(spec["y_range"]))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"config.regions.{name}: {exc}") from exc
        return out

    def model_specs(self) -> list[ModelSpec]:
        comp = self.data.get("comparison")
        if comp is None:
            raise ConfigError("config.comparison is required for this command")
        specs = []
        for i, m in enumerate(comp["models"]):
            extra = set(m) - {"label", "k", "flip", "window"}
            if extra:
                raise ConfigError(f"config.comparison.models[{i}]: unknown keys {extra}")
            try:
                specs.append(ModelSpec(
                    label=m["label"], k=int(m["k"]),
                    flip=bool(m.get("flip", False)), window=bool(m.get("window", False)),
                ))
            except KeyError as exc:
                raise ConfigError(f"config.comparison.models[{i}]: missing {exc}") from exc
        return specs


PROFILES = {
    # 30-step drifting-source benchmark on a 100x100 grid
    "advection": {
        "dataset": "advection",
        "comparison": {
            "models": [
                {"label": "direct100", "k": 100},
                {"label": "flip400", "k": 400, "flip": True},
            ],
            "train_steps": 20,
            "eval_times": [11, 12, 13, 14, 15, 16, 17, 18, 19, 20],
        },
    },
    # whole-domain MAE of windowed models against the mirrored model
    "window-table": {
        "dataset": "advection",
        "comparison": {
            "models": [
                {"label": "window100", "k": 100, "window": True},
                {"label": "window196", "k": 196, "window": True},
                {"label": "window400", "k": 400, "window": True},
                {"label": "flip400", "k": 400, "flip": True},
            ],
            "train_steps": 20,
            "eval_times": [15, 16, 17, 18, 19, 20],
        },
    },
    # quiet-strip MAE: ringing of direct truncation vs the mirrored model
    "gibbs-strip": {
        "dataset": "advection",
        "regions": {
            "whole": {"x_range": [0.0, 0.999], "y_range": [0.0, 0.999]},
            "top-strip": {"x_range": [0.0, 0.99], "y_range": [0.95, 0.99]},
        },
        "comparison": {
            "models": [
                {"label": "direct100", "k": 100},
                {"label": "direct196", "k": 196},
                {"label": "direct400", "k": 400},
                {"label": "flip400", "k": 400, "flip": True},
            ],
            "train_steps": 20,
            "eval_times": [11, 12, 13, 14, 15, 16, 17, 18, 19, 20],
        },
    },
    # synthetic storm entering from the top-left corner, radar-style pipeline
    "storm": {
        "dataset": "storm",
        "units": "dBZ",
        "seed": 7,
        "storm": {"steps": 10, "n_blobs": 3, "peak_dbz": 42.0},
        "velocity": {"mode": "estimate", "value": [0.0, 0.0]},
        "truncation": {"k": 50, "k_star_factor": 4},
        "regions": {
            "whole": {"x_range": [0.0, 0.999], "y_range": [0.0, 0.999]},
            "quiet-quadrant": {"x_range": [0.6, 0.99], "y_range": [0.0, 0.4]},
        },
        "comparison": {
            "models": [
                {"label": "direct50", "k": 50},
                {"label": "flip200", "k": 200, "flip": True},
            ],
            "train_steps": 8,
            "eval_times": [5, 6, 7, 8, 9],
        },
    },
}
