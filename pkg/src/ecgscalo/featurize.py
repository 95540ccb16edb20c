"""Heart-rate noise gate and four-cycle feature-wave interception.

Records whose R-wave count falls outside a plausible sustained heart-rate
band are treated as noise and replaced by an all-zero feature wave. Accepted
records contribute the span of five consecutive R peaks (four complete RR
cycles) centred on the middle peak, resampled to a fixed length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ecgscalo.rpeak import RPeaks

DEFAULT_LENGTH = 1024
BPM_LOW = 30.0
BPM_HIGH = 200.0


@dataclass
class FeatureWave:
    """Fixed-length 1-D sequence; all zeros when the record was gated."""

    samples: np.ndarray
    is_noise_gated: bool
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.is_noise_gated and np.any(self.samples != 0.0):
            raise ValueError("gated feature waves must be all zero")


def gate_noise(peaks: RPeaks, duration: float,
               bpm_low: float = BPM_LOW, bpm_high: float = BPM_HIGH) -> bool:
    """True (gate as noise) iff the peak count is outside the closed band
    [ceil(duration * bpm_low / 60), floor(duration * bpm_high / 60)]."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    low = math.ceil(duration * bpm_low / 60.0)
    high = math.floor(duration * bpm_high / 60.0)
    return not (low <= peaks.count <= high)


def extract_feature_wave(samples, peaks: RPeaks, length: int = DEFAULT_LENGTH,
                         *, bpm_low: float = BPM_LOW,
                         bpm_high: float = BPM_HIGH,
                         source_id: str = "") -> FeatureWave:
    """Cut four cardiac cycles from the middle of a filtered record.

    The window runs from peak m-2 to peak m+2 where m is the middle peak
    index, then is resampled to ``length`` points by linear interpolation on
    the half-open span (step = span / length), so an input holding an exact
    number of cycles stays exactly periodic after resampling. Records that
    fail the gate, or that have fewer than six peaks, yield the zero wave.
    """
    samples = np.asarray(samples, dtype=np.float64)
    duration = samples.size / peaks.fs
    gated = gate_noise(peaks, duration, bpm_low, bpm_high) or peaks.count < 6
    if gated:
        return FeatureWave(samples=np.zeros(length), is_noise_gated=True,
                           source_id=source_id)

    m = peaks.count // 2
    start = int(peaks.indices[m - 2])
    end = int(peaks.indices[m + 2])
    if start < 0 or end >= samples.size:
        raise ValueError(
            f"peaks {start}..{end} fall outside the {samples.size}-sample "
            f"record")
    window = samples[start:end + 1]
    positions = np.arange(length) * ((end - start) / length)
    resampled = np.interp(positions, np.arange(window.size), window)
    return FeatureWave(samples=resampled, is_noise_gated=False,
                       source_id=source_id)
