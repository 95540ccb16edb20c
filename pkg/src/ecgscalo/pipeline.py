"""In-process composition of the pipeline stages.

The CLI drives exactly these functions, so chaining the stage commands
through files produces byte-identical results to running the whole chain
in memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ecgscalo import classifier, dsp, featurize, rpeak, scalogram
from ecgscalo.config import PipelineConfig
from ecgscalo.ingest import EcgRecord


@dataclass
class StageOutputs:
    """Everything one record produces on its way to the classifier."""

    filtered: np.ndarray
    peaks: rpeak.RPeaks
    feature: featurize.FeatureWave
    scalo: scalogram.Scalogram
    image: scalogram.GrayImage


def preprocess(record: EcgRecord, cfg: PipelineConfig) -> np.ndarray:
    """Butterworth low-pass of the raw samples."""
    cascade = dsp.design_butterworth_lowpass(
        cfg.butterworth.order, cfg.butterworth.cutoff_hz, record.fs)
    return dsp.apply_filter(cascade, record.samples)


def detect(record: EcgRecord, cfg: PipelineConfig,
           filtered: np.ndarray | None = None) -> rpeak.RPeaks:
    """R peaks of the preprocessed record."""
    if filtered is None:
        filtered = preprocess(record, cfg)
    clean = EcgRecord(id=record.id, fs=record.fs, samples=filtered,
                      scale=record.scale)
    d = cfg.detector
    return rpeak.detect_rpeaks(
        clean, refractory=d.refractory_s,
        threshold_fraction=d.threshold_fraction,
        update_factor=d.update_factor,
        searchback_factor=d.searchback_factor,
        init_window=d.init_window_s, window=d.integration_window)


def feature_wave(record: EcgRecord, cfg: PipelineConfig,
                 filtered: np.ndarray | None = None,
                 peaks: rpeak.RPeaks | None = None) -> featurize.FeatureWave:
    if filtered is None:
        filtered = preprocess(record, cfg)
    if peaks is None:
        peaks = detect(record, cfg, filtered)
    return featurize.extract_feature_wave(
        filtered, peaks, cfg.feature_length,
        bpm_low=cfg.gate.bpm_low, bpm_high=cfg.gate.bpm_high,
        source_id=record.id)


def feature_to_scalogram(wave: featurize.FeatureWave, cfg: PipelineConfig,
                         wavelet: scalogram.WaveletTable | None = None
                         ) -> scalogram.Scalogram:
    if wavelet is None:
        wavelet = scalogram.build_db4(cfg.scalogram.iterations)
    scales = np.arange(1, cfg.scalogram.num_scales + 1, dtype=np.float64)
    return scalogram.cwt(wave, scales, wavelet, fs=cfg.fs_default,
                         stride=cfg.scalogram.stride)


def run_record(record: EcgRecord, cfg: PipelineConfig,
               wavelet: scalogram.WaveletTable | None = None) -> StageOutputs:
    """Record -> filtered -> peaks -> feature wave -> scalogram -> image."""
    filtered = preprocess(record, cfg)
    peaks = detect(record, cfg, filtered)
    wave = feature_wave(record, cfg, filtered, peaks)
    scalo = feature_to_scalogram(wave, cfg, wavelet)
    image = scalogram.to_grayscale(scalo)
    return StageOutputs(filtered=filtered, peaks=peaks, feature=wave,
                        scalo=scalo, image=image)


def network_input(image: scalogram.GrayImage,
                  cfg: PipelineConfig) -> np.ndarray:
    """Rescale pixels to [0, 1] and area-average onto the network grid."""
    real = image.pixels.astype(np.float64) / 255.0
    return classifier.area_downsample(real, cfg.network.input_height,
                                      cfg.network.input_width)


def record_to_input(record: EcgRecord, cfg: PipelineConfig,
                    wavelet: scalogram.WaveletTable | None = None
                    ) -> np.ndarray:
    return network_input(run_record(record, cfg, wavelet).image, cfg)
