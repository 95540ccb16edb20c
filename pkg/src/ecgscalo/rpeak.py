"""Pan-Tompkins style R-wave detection.

The chain is band-pass -> five-point derivative -> squaring -> moving-window
integration, followed by dual adaptive thresholds with searchback. The
integer-coefficient band-pass is the printed low-pass/high-pass pair

    low-pass   (1 - z^-6)^2 / (1 - z^-1)^2
    high-pass  (-1 + 32 z^-16 + z^-32) / (1 + z^-1)

kept verbatim; both marginal denominators are cancelled by numerator zeros
once cascaded (low-pass first), so the composite is FIR-equivalent and
bounded. The filters are designed for 200 Hz; other rates are linearly
resampled to 200 Hz for detection and the found indices mapped back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ecgscalo.dsp import RationalFilter, apply_filter
from ecgscalo.ingest import EcgRecord

DESIGN_FS = 200.0
INTEGRATION_WINDOW = 30  # samples at 200 Hz
REFRACTORY_S = 0.2
# measured delay of the band-pass cascade at QRS frequencies: the low-pass
# is linear phase (5 samples), the high-pass contributes ~16
BANDPASS_DELAY = 21


def pt_lowpass() -> RationalFilter:
    """Second-order integer low-pass, DC gain 36."""
    num = np.zeros(13)
    num[0], num[6], num[12] = 1.0, -2.0, 1.0
    return RationalFilter(num=num, den=np.array([1.0, -2.0, 1.0]))


def pt_highpass() -> RationalFilter:
    """Integer high-pass built from an all-pass minus low-pass, DC gain 16."""
    num = np.zeros(33)
    num[0], num[16], num[32] = -1.0, 32.0, 1.0
    return RationalFilter(num=num, den=np.array([1.0, 1.0]))


@dataclass
class PtChainOutput:
    """Intermediate taps of the detection chain, all input-length."""

    bandpassed: np.ndarray
    derivative: np.ndarray
    squared: np.ndarray
    integrated: np.ndarray


@dataclass
class RPeaks:
    """Detected R-wave sample indices for one record."""

    indices: np.ndarray
    fs: float

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("peak indices must be strictly increasing")

    @property
    def count(self) -> int:
        return int(self.indices.size)


def pt_bandpass(x) -> np.ndarray:
    """Low-pass then high-pass; linear, composite DC gain 576."""
    return apply_filter(pt_highpass(), apply_filter(pt_lowpass(), x))


def pt_derivative(x, fs: float = DESIGN_FS) -> np.ndarray:
    """Five-point derivative y(n) = (-x(n-2) - 2x(n-1) + 2x(n+1) + x(n+2)) / (8T).

    Boundary samples treat x as zero outside its support.
    """
    x = np.asarray(x, dtype=np.float64)
    t = 1.0 / fs
    xp = np.pad(x, 2)
    return (-xp[:-4] - 2.0 * xp[1:-3] + 2.0 * xp[3:-1] + xp[4:]) / (8.0 * t)


def pt_square(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) ** 2


def pt_integrate(x, window: int = INTEGRATION_WINDOW) -> np.ndarray:
    """Causal moving mean over ``window`` samples with zero-padded history."""
    if window < 1:
        raise ValueError("integration window must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    kernel = np.full(window, 1.0 / window)
    return np.convolve(x, kernel, mode="full")[: x.size]


def pt_chain(x, fs: float = DESIGN_FS,
             window: int = INTEGRATION_WINDOW) -> PtChainOutput:
    """Run all four stages and keep every tap."""
    bp = pt_bandpass(x)
    der = pt_derivative(bp, fs)
    sq = pt_square(der)
    mwi = pt_integrate(sq, window)
    return PtChainOutput(bandpassed=bp, derivative=der, squared=sq,
                         integrated=mwi)


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices i with x[i-1] < x[i] >= x[i+1] (plateaus keep their first sample)."""
    if x.size < 3:
        return np.empty(0, dtype=np.int64)
    return np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:])) + 1


@dataclass
class _Thresholds:
    """Running signal/noise level estimates on the integrated waveform."""

    signal: float
    noise: float
    fraction: float
    update: float

    @property
    def value(self) -> float:
        return self.noise + self.fraction * (self.signal - self.noise)

    def mark_signal(self, v: float) -> None:
        self.signal = self.update * v + (1.0 - self.update) * self.signal

    def mark_noise(self, v: float) -> None:
        self.noise = self.update * v + (1.0 - self.update) * self.noise


def detect_rpeaks(record: EcgRecord, *,
                  refractory: float = REFRACTORY_S,
                  threshold_fraction: float = 0.25,
                  update_factor: float = 0.125,
                  searchback_factor: float = 1.66,
                  init_window: float = 2.0,
                  window: int = INTEGRATION_WINDOW) -> RPeaks:
    """Locate R waves with dual adaptive thresholds and searchback.

    Thresholding runs on the integrated waveform; each accepted detection is
    refined to the local maximum of the band-passed signal within +-0.1 s and
    compensated for the band-pass group delay, so reported indices line up
    with the R wave in the input record. Thresholds are initialized from the
    first ``init_window`` seconds of signal statistics, which makes the
    detected index set invariant to positive rescaling of the input.
    """
    if record.duration < 2.0:
        raise ValueError(
            f"record too short for detection ({record.duration:.3f} s < 2 s)")

    x = record.samples
    if record.fs != DESIGN_FS:
        n200 = int(round(x.size * DESIGN_FS / record.fs))
        t200 = np.arange(n200) / DESIGN_FS
        x = np.interp(t200, np.arange(x.size) / record.fs, x)
    n = x.size

    # trailing zero-pad so beats near the record end produce complete
    # integration bumps; indices past n are discarded after refinement
    pad = int(round(0.4 * DESIGN_FS))
    chain = pt_chain(np.concatenate([x, np.zeros(pad)]), DESIGN_FS, window)
    mwi, bp = chain.integrated, chain.bandpassed

    refr = int(round(refractory * DESIGN_FS))
    init_n = min(int(round(init_window * DESIGN_FS)), n)
    thr = _Thresholds(signal=float(np.max(mwi[:init_n])),
                      noise=float(np.mean(mwi[:init_n])),
                      fraction=threshold_fraction, update=update_factor)

    maxima = _local_maxima(mwi)
    anchors: list[int] = []
    rr_intervals: list[int] = []

    def accept(idx: int, value: float) -> None:
        if anchors:
            rr_intervals.append(idx - anchors[-1])
            del rr_intervals[:-8]
        anchors.append(idx)
        thr.mark_signal(value)

    for pos, c in enumerate(maxima):
        # searchback: no accepted peak for 1.66x the running RR average
        if len(rr_intervals) >= 1 and anchors:
            rr_avg = float(np.mean(rr_intervals))
            if c - anchors[-1] > searchback_factor * rr_avg:
                lo = anchors[-1] + refr
                first = int(np.searchsorted(maxima, lo))
                back = [m for m in maxima[first:pos]
                        if mwi[m] > thr.value / 2.0]
                if back:
                    best = max(back, key=lambda m: mwi[m])
                    accept(int(best), float(mwi[best]))
        if anchors and c - anchors[-1] < refr:
            continue
        v = float(mwi[c])
        if v > thr.value:
            accept(int(c), v)
        else:
            thr.mark_noise(v)

    # refine to the band-passed local maximum and undo the filter delay
    half = int(round(0.1 * DESIGN_FS))
    refined: list[int] = []
    for c in anchors:
        lo, hi = max(0, c - half), min(bp.size, c + half + 1)
        r = int(lo + np.argmax(bp[lo:hi])) - BANDPASS_DELAY
        if 0 <= r < n:
            refined.append(r)

    refined.sort()
    kept: list[int] = []
    for r in refined:
        if not kept or r - kept[-1] >= refr:
            kept.append(r)

    indices = np.asarray(kept, dtype=np.int64)
    if record.fs != DESIGN_FS:
        indices = np.round(indices * record.fs / DESIGN_FS).astype(np.int64)
        indices = np.unique(indices)
        indices = indices[indices < record.samples.size]
    return RPeaks(indices=indices, fs=record.fs)
