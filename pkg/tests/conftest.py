import math

import numpy as np
import pytest

from ecgscalo import scalogram


@pytest.fixture(scope="session")
def db4_table():
    """One table for the whole run; building it is the expensive part."""
    return scalogram.build_db4(10)


@pytest.fixture(scope="session")
def match_peaks():
    """Greedy nearest matching of detections to ground truth.

    Returns (tp, fn, fp) at the given sample tolerance; each detection can
    satisfy at most one truth peak.
    """

    def _match(truth, detected, tol):
        detected = np.asarray(detected)
        used = np.zeros(detected.size, dtype=bool)
        tp = 0
        for t in truth:
            if detected.size == 0:
                break
            dist = np.abs(detected - t).astype(float)
            dist[used] = np.inf
            j = int(np.argmin(dist))
            if dist[j] <= tol:
                tp += 1
                used[j] = True
        return tp, len(truth) - tp, int(detected.size) - tp

    return _match


@pytest.fixture(scope="session")
def cwt_oracle():
    """Term-by-term evaluation of the discretized transform.

    Independent of the fast path: plain Python double loop over (k, b) with
    its own nearest-sample lookup; only the wavelet table values are shared.
    """

    def _oracle(f, scales, table, fs):
        psi = [float(v) for v in table.psi]
        res = table.resolution
        n = len(psi)
        dt = 1.0 / fs
        samples = [float(v) for v in f]
        length = len(samples)
        out = np.empty((len(scales), length))
        for j, a in enumerate(scales):
            prefactor = dt / math.sqrt(a)
            for b in range(length):
                acc = 0.0
                for k in range(length):
                    idx = int(math.floor(((k - b) / a) * res + 0.5))
                    if 0 <= idx < n:
                        acc += samples[k] * psi[idx]
                out[j, b] = prefactor * acc
        return out

    return _oracle


@pytest.fixture(scope="session")
def quadrant_dataset():
    """Separable 4-class image set: one blob per class quadrant.

    Blob geometry is class-coded (tall / wide / square at matched area) so
    the classes stay separable under global average pooling; the Noise class
    is the all-black image.
    """

    def _make(n_per_class=40, height=16, width=32, seed=11):
        rng = np.random.default_rng(seed)
        corners = [(0, 0), (0, width // 2), (height // 2, 0)]
        shapes = [(height // 2, width // 8),
                  (height // 8, width // 2),
                  (height // 4, width // 4)]
        data = []
        for cls in range(4):
            for _ in range(n_per_class):
                img = np.zeros((height, width), dtype=np.uint8)
                if cls < 3:
                    r0, c0 = corners[cls]
                    bh, bw = shapes[cls]
                    dr = int(rng.integers(0, height // 2 - bh + 1))
                    dc = int(rng.integers(0, width // 2 - bw + 1))
                    val = int(rng.integers(150, 256))
                    img[r0 + dr:r0 + dr + bh, c0 + dc:c0 + dc + bw] = val
                data.append((img, cls))
        return data

    return _make
