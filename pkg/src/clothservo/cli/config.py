"""INI-style configuration shared by all subcommands.

One file, one section per module; every key has a default, so an empty or
absent file yields the reference setup. Values resolved here feed the
dataclass constructors, and the resolved mapping is hashed into reports so a
run can be tied to the exact configuration that produced it.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path

from ..clothsim import CameraModel, SimParams
from ..errors import ParameterError
from ..features import FeatureSet
from ..imaging import FlatBackground
from ..scene import BACKGROUND_COLOR
from ..servo import ServoConfig

DEFAULTS = {
    "sim": {
        "stiffness_structural": 60.0,
        "stiffness_shear": 30.0,
        "stiffness_bend": 0.6,
        "damping": 8.0,
        "gravity": 9.81,
        "timestep": 1.0 / 300.0,
        "substeps": 10,
        "max_gripper_speed": 0.25,
        "node_mass": 0.004,
        "ground_height": 0.0,
    },
    "camera": {
        "eye": (0.0, 0.6, 0.0),
        "look_at": (0.0, 0.0, 0.0),
        "up": (0.0, 0.0, -1.0),
        "fov": 0.7,
        "image_width": 64,
        "image_height": 64,
        "light_dir": (0.25, 1.0, 0.35),
        "background_color": BACKGROUND_COLOR,
        "cloth_color": (0.85, 0.35, 0.25),
    },
    "features": {
        "kind": "how",
        "grid_sizes": (8, 16, 32),
        "hog_cell": 8,
        "hog_bins": 9,
        "color_bins": 16,
    },
    "background": {
        "tolerance": 0.05,
    },
    "record": {
        "frames": 300,
        "frame_rate": 30.0,
        "style": "flatten",
    },
    "dictionary": {
        "n_pairs": 2500,
        "n_dic": 64,
    },
    "servo": {
        "gain": 0.5,
        "alpha": 0.1,
        "max_speed": 0.1,
        "max_steps": 400,
        "stop_epsilon": 0.2,
        "stop_epsilon_absolute": False,
        "satisfaction_radius": 0.6,
        "mode": "single",
        "solver_tol": 1e-10,
        "solver_max_iter": 2000,
    },
    "eval": {
        "seeds": (0, 1, 2, 3, 4, 5, 6, 7, 8, 9),
        "n_dic_sweep": (8, 16, 32, 64, 128),
        "alpha_sweep": (0.01, 0.1, 1.0),
        "feature_kinds": ("how+hog", "color"),
        "holdout_pairs": 400,
    },
}


def _coerce(raw: str, template):
    """Parse ``raw`` to the type of the default it replaces."""
    raw = raw.strip()
    if isinstance(template, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"expected a boolean, got {raw!r}")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        if not parts:
            raise ParameterError("expected a non-empty list value")
        inner = template[0] if template else 0.0
        return tuple(_coerce(p, inner) for p in parts)
    return raw


def load_config(path=None) -> dict:
    """Defaults overlaid with the file's sections; unknown keys rejected."""
    resolved = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    if path is None:
        return resolved
    path = Path(path)
    if not path.exists():
        raise ParameterError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ParameterError(f"cannot parse config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in resolved:
            raise ParameterError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in resolved[section]:
                raise ParameterError(f"unknown config key {key!r} in [{section}]")
            try:
                resolved[section][key] = _coerce(raw, DEFAULTS[section][key])
            except ValueError as exc:
                raise ParameterError(
                    f"bad value for {key!r} in [{section}]: {raw!r}"
                ) from exc
    return resolved


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, default=list, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_sim_params(cfg: dict) -> SimParams:
    s = cfg["sim"]
    ground = s["ground_height"]
    return SimParams(
        stiffness_structural=s["stiffness_structural"],
        stiffness_shear=s["stiffness_shear"],
        stiffness_bend=s["stiffness_bend"],
        damping=s["damping"],
        gravity=s["gravity"],
        timestep=s["timestep"],
        substeps=s["substeps"],
        max_gripper_speed=s["max_gripper_speed"],
        node_mass=s["node_mass"],
        ground_height=None if ground is not None and ground < -100 else ground,
    )


def build_camera(cfg: dict) -> CameraModel:
    c = cfg["camera"]
    return CameraModel(
        eye=tuple(c["eye"]),
        look_at=tuple(c["look_at"]),
        up=tuple(c["up"]),
        fov=c["fov"],
        image_dims=(c["image_width"], c["image_height"]),
        light_dir=tuple(c["light_dir"]),
        background_color=tuple(c["background_color"]),
        cloth_color=tuple(c["cloth_color"]),
    )


def build_feature_set(cfg: dict, kind: str | None = None) -> FeatureSet:
    f = cfg["features"]
    c = cfg["camera"]
    dims = (c["image_width"], c["image_height"])
    chosen = kind or f["kind"]
    how = None
    if "how" in chosen:
        from ..features import default_layout

        how = default_layout(image_dims=dims, grid_sizes=tuple(f["grid_sizes"]))
    return FeatureSet(
        kind=chosen,
        how=how,
        hog_cell=f["hog_cell"],
        hog_bins=f["hog_bins"],
        color_bins=f["color_bins"],
        image_dims=dims,
    )


def build_background(cfg: dict) -> FlatBackground:
    return FlatBackground(
        color=tuple(cfg["camera"]["background_color"]),
        tolerance=cfg["background"]["tolerance"],
    )


def build_servo_config(cfg: dict, **overrides) -> ServoConfig:
    s = dict(cfg["servo"])
    s.update(overrides)
    return ServoConfig(
        gain=s["gain"],
        alpha=s["alpha"],
        max_speed=s["max_speed"],
        max_steps=s["max_steps"],
        stop_epsilon=s["stop_epsilon"],
        stop_epsilon_absolute=s["stop_epsilon_absolute"],
        satisfaction_radius=s["satisfaction_radius"],
        mode=s["mode"],
        solver_tol=s["solver_tol"],
        solver_max_iter=s["solver_max_iter"],
    )
