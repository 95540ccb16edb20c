"""Pipeline configuration: one JSON document holding every tunable default.

Each knob that the algorithms leave open (cutoffs, band limits, lengths,
scale counts, network and training shapes, the seed) lives here so a single
file pins a reproducible run. ``load(save(cfg)) == cfg`` exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from ecgscalo.classifier import NetworkConfig, TrainConfig


@dataclass(frozen=True)
class ButterworthConfig:
    order: int = 6
    cutoff_hz: float = 35.0


@dataclass(frozen=True)
class DetectorConfig:
    integration_window: int = 30
    refractory_s: float = 0.2
    threshold_fraction: float = 0.25
    update_factor: float = 0.125
    searchback_factor: float = 1.66
    init_window_s: float = 2.0

    def __post_init__(self):
        if self.integration_window < 1:
            raise ValueError("integration window must be >= 1")
        if self.refractory_s <= 0 or self.init_window_s <= 0:
            raise ValueError("refractory and init window must be positive")
        if not 0 < self.update_factor <= 1 or not 0 < self.threshold_fraction <= 1:
            raise ValueError("update/threshold factors must lie in (0, 1]")


@dataclass(frozen=True)
class GateConfig:
    bpm_low: float = 30.0
    bpm_high: float = 200.0

    def __post_init__(self):
        if not 0 < self.bpm_low < self.bpm_high:
            raise ValueError("need 0 < bpm_low < bpm_high")


@dataclass(frozen=True)
class ScalogramConfig:
    num_scales: int = 64
    iterations: int = 10  # wavelet table resolution 2^iterations
    stride: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    fs_default: float = 200.0
    butterworth: ButterworthConfig = field(default_factory=ButterworthConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    feature_length: int = 1024
    scalogram: ScalogramConfig = field(default_factory=ScalogramConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.fs_default <= 0:
            raise ValueError("fs_default must be positive")
        if self.feature_length < 2:
            raise ValueError("feature_length must be >= 2")
        if self.scalogram.num_scales < 1 or self.scalogram.iterations < 4:
            raise ValueError("need >= 1 scale and >= 4 wavelet iterations")
        if (self.scalogram.num_scales % self.network.input_height
                or self.feature_length % self.network.input_width):
            raise ValueError(
                f"scalogram {self.scalogram.num_scales}x{self.feature_length}"
                f" must be an integer multiple of the network input "
                f"{self.network.input_height}x{self.network.input_width}")

    def with_seed(self, seed: int) -> "PipelineConfig":
        training = TrainConfig(
            learning_rate=self.training.learning_rate,
            momentum=self.training.momentum,
            batch_size=self.training.batch_size,
            epochs=self.training.epochs, seed=seed)
        return PipelineConfig(
            fs_default=self.fs_default, butterworth=self.butterworth,
            detector=self.detector, gate=self.gate,
            feature_length=self.feature_length, scalogram=self.scalogram,
            network=self.network, training=training, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            fs_default=d["fs_default"],
            butterworth=ButterworthConfig(**d["butterworth"]),
            detector=DetectorConfig(**d["detector"]),
            gate=GateConfig(**d["gate"]),
            feature_length=d["feature_length"],
            scalogram=ScalogramConfig(**d["scalogram"]),
            network=NetworkConfig(
                stage_widths=tuple(d["network"]["stage_widths"]),
                blocks_per_stage=tuple(d["network"]["blocks_per_stage"]),
                input_height=d["network"]["input_height"],
                input_width=d["network"]["input_width"],
                num_classes=d["network"]["num_classes"]),
            training=TrainConfig(**d["training"]),
            seed=d["seed"])


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2),
                          encoding="utf-8")


def load_config(path) -> PipelineConfig:
    return PipelineConfig.from_dict(
        json.loads(Path(path).read_text(encoding="utf-8")))
