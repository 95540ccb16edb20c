"""Single-lead ECG arrhythmia classification via wavelet scalograms.

Pipeline stages: record loading, Butterworth preprocessing, Pan-Tompkins
R-peak detection, heart-rate noise gating, four-cycle feature-wave
extraction, db4 CWT scalograms, and a small residual CNN classifier.
"""

from ecgscalo.ingest import (
    EcgClass,
    EcgRecord,
    SynthSpec,
    load_labels,
    load_record,
    synth_ecg,
    write_raw16,
)
from ecgscalo.dsp import (
    IirCascade,
    RationalFilter,
    apply_filter,
    design_butterworth_lowpass,
    magnitude_response,
)
from ecgscalo.rpeak import RPeaks, detect_rpeaks, pt_chain
from ecgscalo.featurize import FeatureWave, extract_feature_wave, gate_noise
from ecgscalo.scalogram import (
    GrayImage,
    Scalogram,
    WaveletTable,
    build_db4,
    cwt,
    to_grayscale,
)
from ecgscalo.classifier import (
    Model,
    NetworkConfig,
    TrainConfig,
    forward,
    loss_and_grad,
    predict,
    train,
)
from ecgscalo.metrics import challenge_f1, confusion, precision_recall
from ecgscalo.config import PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "EcgClass",
    "EcgRecord",
    "SynthSpec",
    "load_labels",
    "load_record",
    "synth_ecg",
    "write_raw16",
    "IirCascade",
    "RationalFilter",
    "apply_filter",
    "design_butterworth_lowpass",
    "magnitude_response",
    "RPeaks",
    "detect_rpeaks",
    "pt_chain",
    "FeatureWave",
    "extract_feature_wave",
    "gate_noise",
    "GrayImage",
    "Scalogram",
    "WaveletTable",
    "build_db4",
    "cwt",
    "to_grayscale",
    "Model",
    "NetworkConfig",
    "TrainConfig",
    "forward",
    "loss_and_grad",
    "predict",
    "train",
    "challenge_f1",
    "confusion",
    "precision_recall",
    "PipelineConfig",
    "__version__",
]
