"""Run configuration shared by the CLI subcommands.

Loaded from JSON; unknown keys are an error. ``inf`` may be written as the
string "inf" inside partitions.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

from .distance import check_partition
from .harness import BenchConfig
from .planner import PlannerConfig
from .scene import GeneratorConfig, preset
from .sensing import NoiseConfig, SensorConfig


class ConfigError(ValueError):
    pass


def _partition(p):
    try:
        return check_partition([math.inf if str(x).lower() in ("inf", "infinity") else float(x) for x in p])
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def _strict(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass
class RunConfig:
    scene_dir: str = "scenes"
    model_path: str = "model.bin"
    output_dir: str = "out"
    generator_preset: str = "desk"
    generator: dict = field(default_factory=dict)     # GeneratorConfig overrides
    n_scenes: int = 50
    n_train: int = 40
    episodes_per_scene: int = 20
    margin_m: float = 2.0
    max_steps: int = 500
    n_targets: int = 6
    sensor: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    policies: list = field(default_factory=lambda: ["cf"])
    predictors: list = field(default_factory=lambda: ["oracle"])
    planner: str = "fmm"
    partition: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, "inf"])
    p_flip: float = 0.2
    value_mode: str = "bin"
    commit_steps: int = 0
    alpha: float = 1.0
    samples_per_scene: int = 60
    sample_interval: int = 25
    rollout_steps: int = 200
    seed: int = 0
    snapshot_interval: int = 0
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = _strict(cls, d, "config")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        return cls.from_dict(d)

    def validate(self) -> None:
        self.generator_config()
        self.sensor_config()
        self.noise_config()
        self.partition_tuple()
        if not 0 < self.n_train <= self.n_scenes:
            raise ConfigError("need 0 < n_train <= n_scenes")
        if self.planner not in ("fmm", "dijkstra"):
            raise ConfigError(f"unknown planner {self.planner!r}")
        from .policy import POLICIES
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}")
        for p in self.predictors:
            if p not in ("oracle", "noisy", "learned", "none"):
                raise ConfigError(f"unknown predictor {p!r}")
        if self.value_mode not in ("bin", "expected"):
            raise ConfigError(f"unknown value mode {self.value_mode!r}")

    def generator_config(self) -> GeneratorConfig:
        try:
            base = preset(self.generator_preset).to_dict()
        except KeyError:
            raise ConfigError(f"unknown generator preset {self.generator_preset!r}") from None
        unknown = sorted(set(self.generator) - set(base))
        if unknown:
            raise ConfigError(f"generator: unknown keys {unknown}")
        base.update(self.generator)
        try:
            return GeneratorConfig.from_dict(base)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"generator: {e}") from None

    def sensor_config(self) -> SensorConfig:
        return _strict(SensorConfig, self.sensor, "sensor")

    def noise_config(self) -> NoiseConfig:
        return _strict(NoiseConfig, self.noise, "noise")

    def partition_tuple(self) -> tuple:
        return _partition(self.partition)

    def bench_configs(self) -> list:
        """Cartesian product of listed policies and predictors. The
        exploration baselines ignore the predictor and appear once."""
        out, seen = [], set()
        for pol in self.policies:
            for pred in self.predictors:
                if pol in ("random", "frontier"):
                    pred = "none"
                if (pol, pred) in seen:
                    continue
                seen.add((pol, pred))
                out.append(BenchConfig(
                    policy=pol, predictor=pred, partition=self.partition_tuple(), p_flip=self.p_flip,
                    value_mode=self.value_mode, commit_steps=self.commit_steps,
                    noise=self.noise_config(), planner=PlannerConfig(backend=self.planner),
                    sensor=self.sensor_config(), seed=self.seed,
                    model_path=self.model_path if pred == "learned" else None))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["partition"] = [("inf" if math.isinf(float(x)) else float(x)) if not isinstance(x, str) else x
                          for x in self.partition]
        return d

    def fingerprint(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
