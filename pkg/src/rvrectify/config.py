"""Sectioned key = value run configuration with strict schema validation.

Every run's effective configuration can be echoed back to disk verbatim,
and all randomness in a pipeline derives from the single root seed in the
``run`` section.
"""

import configparser
from pathlib import Path

import numpy as np

from .geometry import ProjectionConfig
from .rectifier import TrainConfig
from .synth import (BiasSpec, BleedSpec, CorruptionSpec, RoundSpec,
                    SceneSpec, WavySpec, random_scene)


class ConfigError(ValueError):
    """Unknown key/section or an unparseable value."""


# (section, key) -> (type, default). Section and key order defines the
# canonical echo layout.
_SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {
        "seed": (int, 0),
    },
    "projection": {
        "height": (int, 64),
        "width": (int, 1024),
        "elev_up_deg": (float, 2.0),
        "elev_down_deg": (float, -24.8),
        "elev_table_file": (str, ""),
    },
    "scene": {
        "ground_z": (float, -1.8),
        "sensor_height": (float, 0.0),
        "max_range": (float, 80.0),
        "n_objects": (int, 3),
        "room_min": (float, 14.0),
        "room_max": (float, 30.0),
        "standoff_min": (float, 1.0),
        "standoff_max": (float, 2.4),
    },
    "corruption": {
        "edge_threshold": (float, 2.0),
        "bleed_width": (int, 2),
        "bleed_probability": (float, 0.5),
        "wavy_amplitude": (float, 0.15),
        "wavy_azimuth_period": (float, 64.0),
        "wavy_elevation_period": (float, 16.0),
        "round_sigma": (float, 1.0),
        "round_band": (int, 3),
        "bias_count": (int, 4),
        "bias_min_area": (int, 200),
        "bias_shift_min": (float, 3.0),
        "bias_shift_max": (float, 8.0),
    },
    "train": {
        "model": (str, "mlp"),
        "loss": (str, "welsch"),
        "nu": (float, 0.5),
        "radius": (int, 6),
        "hidden": (int, 16),
        "epochs": (int, 6000),
        "step": (float, 0.0),  # 0 = per-loss default
        "step_decay": (float, 0.9997),
        "max_pixels": (int, 12000),
        "train_pairs": (int, 6),
        "eval_pairs": (int, 4),
        "smooth_sigma": (float, 0.0),
    },
    "metrics": {
        "bev_extent": (float, 40.0),
    },
    "diffusion": {
        "steps": (int, 50),
        "beta_start": (float, 1e-4),
        "beta_end": (float, 0.02),
        "trials": (int, 200),
        "grid_height": (int, 16),
        "grid_width": (int, 128),
    },
}


class RunConfig:
    def __init__(self, values: dict[str, dict[str, object]] | None = None):
        self.values = {
            section: {key: default for key, (_, default) in keys.items()}
            for section, keys in _SCHEMA.items()
        }
        if values:
            for section, keys in values.items():
                for key, val in keys.items():
                    self.set(section, key, val)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        typ, _ = _SCHEMA[section][key]
        try:
            self.values[section][key] = typ(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"[{section}] {key}: cannot parse {value!r} as {typ.__name__}"
            ) from exc

    # ------------------------------------------------------ serialization

    @classmethod
    def load(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case-sensitive
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        cfg = cls()
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                cfg.set(section, key, value)
        return cfg

    def to_text(self) -> str:
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {self.values[section][key]}")
            lines.append("")
        return "\n".join(lines)

    def echo(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    # --------------------------------------------------------- factories

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    def projection(self) -> ProjectionConfig:
        p = self.values["projection"]
        if p["elev_table_file"]:
            table = np.loadtxt(p["elev_table_file"], dtype=np.float64)
            return ProjectionConfig.from_table(p["width"], np.atleast_1d(table))
        return ProjectionConfig.from_fov(
            p["height"], p["width"],
            np.deg2rad(p["elev_up_deg"]), np.deg2rad(p["elev_down_deg"]))

    def scene(self, seed: int) -> SceneSpec:
        s = self.values["scene"]
        return random_scene(
            seed, n_objects=s["n_objects"], ground_z=s["ground_z"],
            sensor_height=s["sensor_height"], max_range=s["max_range"],
            room_min=s["room_min"], room_max=s["room_max"],
            standoff=(s["standoff_min"], s["standoff_max"]))

    def corruption(self, rng_seed: int | None = None) -> CorruptionSpec:
        c = self.values["corruption"]
        return CorruptionSpec(
            bleed=BleedSpec(c["edge_threshold"], c["bleed_width"],
                            c["bleed_probability"]),
            wavy=WavySpec(c["wavy_amplitude"], c["wavy_azimuth_period"],
                          c["wavy_elevation_period"]),
            round_corners=RoundSpec(c["round_sigma"], c["round_band"]),
            bias=BiasSpec(c["bias_count"], c["bias_min_area"],
                          (c["bias_shift_min"], c["bias_shift_max"])),
            rng_seed=self.seed if rng_seed is None else rng_seed)

    def train(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(radius=t["radius"], hidden=t["hidden"],
                           epochs=t["epochs"],
                           step=t["step"] if t["step"] > 0 else None,
                           step_decay=t["step_decay"], seed=self.seed,
                           max_pixels_per_pair=(t["max_pixels"]
                                                if t["max_pixels"] > 0
                                                else None))


def load_config(path=None) -> RunConfig:
    """Config at ``path``, or all defaults when no file is given."""
    return RunConfig() if path is None else RunConfig.load(path)
