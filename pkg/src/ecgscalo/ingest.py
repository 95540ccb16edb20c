"""Record and label loading plus synthetic ECG generation.

Supported on-disk formats:

* ``csv``    -- one decimal amplitude per line, ``.`` decimal separator.
* ``raw16``  -- little-endian signed 16-bit samples with a JSON sidecar
  ``<name>.json`` holding ``{"id": str, "fs": number, "scale": number}``.
* ``mat5``   -- uncompressed MATLAB level-5 file containing a single int16
  matrix named ``val`` (the shape the 2017 challenge distributes). Anything
  else is rejected.

Labels come as a two-column CSV (``id,symbol``) with symbols N / A / O / ~.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

DEFAULT_FS = 200.0  # Hz, used when no sidecar supplies a rate
DEFAULT_MAT_SCALE = 1e-3  # mV per ADC unit for challenge-style int16 data


class EcgClass(IntEnum):
    """The four admissible rhythm classes, in fixed scoring order."""

    Normal = 0
    AF = 1
    Other = 2
    Noise = 3


LABEL_SYMBOLS = {"N": EcgClass.Normal, "A": EcgClass.AF,
                 "O": EcgClass.Other, "~": EcgClass.Noise}
CLASS_SYMBOLS = {v: k for k, v in LABEL_SYMBOLS.items()}


class FormatError(ValueError):
    """Malformed input file; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class EcgRecord:
    """One single-lead ECG: identifier, sampling rate, real amplitudes.

    ``samples`` are stored in mV; ``scale`` records the mV-per-raw-unit
    factor that was applied at load time (1.0 when the source was already
    real-valued).
    """

    id: str
    fs: float
    samples: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.fs <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.samples.size == 0:
            raise ValueError("record has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("record contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs


@dataclass
class SynthSpec:
    """Parameters for the synthetic QRS-train generator."""

    duration: float
    bpm: float
    amplitude: float = 1.0
    qrs_width: float = 0.08
    noise_sigma: float = 0.0
    seed: int = 0
    fs: float = 200.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.bpm <= 0:
            raise ValueError("heart rate must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        if self.fs <= 0 or self.qrs_width <= 0:
            raise ValueError("fs and qrs_width must be positive")


def _read_sidecar(path: Path) -> dict | None:
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        return None
    with open(sidecar, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_record(path, fmt: str | None = None) -> EcgRecord:
    """Load one record from disk.

    ``fmt`` is one of ``csv`` / ``raw16`` / ``mat5``; when omitted it is
    inferred from the file extension (.csv, .raw16/.bin, .mat).
    """
    path = Path(path)
    if fmt is None:
        ext = path.suffix.lower()
        fmt = {".csv": "csv", ".raw16": "raw16", ".bin": "raw16",
               ".mat": "mat5"}.get(ext)
        if fmt is None:
            raise FormatError(f"cannot infer format from extension {ext!r}")
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "raw16":
        return _load_raw16(path)
    if fmt == "mat5":
        return _load_mat5(path)
    raise ValueError(f"unknown format {fmt!r}")


def _load_csv(path: Path) -> EcgRecord:
    data = path.read_bytes()
    values = []
    offset = 0
    for line in data.split(b"\n"):
        text = line.strip()
        if text:
            try:
                values.append(float(text))
            except ValueError:
                raise FormatError(
                    f"unparseable amplitude {text[:40]!r}", offset) from None
        elif offset + len(line) + 1 < len(data):
            # blank line in the middle of the file
            raise FormatError("blank line inside csv record", offset)
        offset += len(line) + 1
    if not values:
        raise FormatError("empty signal", 0)
    meta = _read_sidecar(path) or {}
    return EcgRecord(id=meta.get("id", path.stem),
                     fs=float(meta.get("fs", DEFAULT_FS)),
                     samples=np.array(values),
                     scale=float(meta.get("scale", 1.0)))


def _load_raw16(path: Path) -> EcgRecord:
    data = path.read_bytes()
    if len(data) == 0:
        raise FormatError("empty signal", 0)
    if len(data) % 2:
        raise FormatError("odd byte count for 16-bit samples",
                          len(data) - 1)
    meta = _read_sidecar(path)
    if meta is None:
        raise FormatError(f"missing sidecar {path.with_suffix('.json')}")
    raw = np.frombuffer(data, dtype="<i2").astype(np.float64)
    scale = float(meta["scale"])
    return EcgRecord(id=str(meta["id"]), fs=float(meta["fs"]),
                     samples=raw * scale, scale=scale)


def write_raw16(record: EcgRecord, path) -> None:
    """Quantize a record back to little-endian int16 plus JSON sidecar."""
    path = Path(path)
    raw = np.clip(np.round(record.samples / record.scale), -32768, 32767)
    path.write_bytes(raw.astype("<i2").tobytes())
    sidecar = {"id": record.id, "fs": record.fs, "scale": record.scale}
    path.with_suffix(".json").write_text(json.dumps(sidecar), encoding="utf-8")


# MATLAB level-5 constants (only the subset this reader accepts)
_MI_INT8 = 1
_MI_INT16 = 3
_MI_INT32 = 5
_MI_UINT32 = 6
_MI_MATRIX = 14
_MI_COMPRESSED = 15
_MX_INT16_CLASS = 10


def _mat_tag(data: bytes, off: int) -> tuple[int, int, int, int]:
    """Decode one element tag; returns (type, nbytes, payload_off, next_off)."""
    if off + 8 > len(data):
        raise FormatError("truncated element tag", off)
    dtype, nbytes = struct.unpack_from("<II", data, off)
    if dtype >> 16:
        # small element: payload packed into the tag's second word
        small_bytes = dtype >> 16
        dtype &= 0xFFFF
        return dtype, small_bytes, off + 4, off + 8
    payload = off + 8
    advance = payload + ((nbytes + 7) // 8) * 8  # 8-byte padding
    return dtype, nbytes, payload, advance


def _load_mat5(path: Path) -> EcgRecord:
    data = path.read_bytes()
    if len(data) < 128:
        raise FormatError("file shorter than the 128-byte header", len(data))
    version, endian = struct.unpack_from("<H2s", data, 124)
    if endian != b"IM":
        raise FormatError("not little-endian or not a level-5 file", 126)
    if version != 0x0100:
        raise FormatError(f"unsupported version 0x{version:04x}", 124)

    dtype, nbytes, payload, _ = _mat_tag(data, 128)
    if dtype == _MI_COMPRESSED:
        raise FormatError("compressed elements are not supported", 128)
    if dtype != _MI_MATRIX:
        raise FormatError(f"expected a matrix element, got type {dtype}", 128)
    end = payload + nbytes
    if end > len(data):
        raise FormatError("matrix element overruns the file", 128)

    # array flags
    dtype, n, p, off = _mat_tag(data, payload)
    if dtype != _MI_UINT32 or n != 8:
        raise FormatError("malformed array-flags subelement", payload)
    flags = struct.unpack_from("<I", data, p)[0]
    if flags & 0xFF != _MX_INT16_CLASS:
        raise FormatError(
            f"only int16 matrices are supported (class {flags & 0xFF})", p)

    # dimensions
    dtype, n, p, off = _mat_tag(data, off)
    if dtype != _MI_INT32:
        raise FormatError("malformed dimensions subelement", off)
    dims = struct.unpack_from(f"<{n // 4}i", data, p)
    if len(dims) != 2 or min(dims) not in (0, 1):
        raise FormatError(f"expected a vector, got dims {dims}", p)

    # array name
    dtype, n, p, off = _mat_tag(data, off)
    if dtype != _MI_INT8:
        raise FormatError("malformed array-name subelement", off)
    name = data[p:p + n].decode("ascii", errors="replace")
    if name != "val":
        raise FormatError(f"expected matrix named 'val', got {name!r}", p)

    # real part
    dtype, n, p, off = _mat_tag(data, off)
    if dtype != _MI_INT16:
        raise FormatError(f"expected int16 data, got type {dtype}", p)
    if p + n > len(data):
        raise FormatError("sample data overruns the file", p)
    count = n // 2
    if count != dims[0] * dims[1]:
        raise FormatError(
            f"dims {dims} disagree with {count} stored samples", p)
    if count == 0:
        raise FormatError("empty signal", p)
    raw = np.frombuffer(data, dtype="<i2", count=count, offset=p)

    meta = _read_sidecar(path) or {}
    scale = float(meta.get("scale", DEFAULT_MAT_SCALE))
    return EcgRecord(id=meta.get("id", path.stem),
                     fs=float(meta.get("fs", DEFAULT_FS)),
                     samples=raw.astype(np.float64) * scale,
                     scale=scale)


def load_labels(path) -> dict[str, EcgClass]:
    """Read a two-column ``id,symbol`` CSV into an id -> class map."""
    labels: dict[str, EcgClass] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(
                    f"line {lineno}: expected two columns, got {len(parts)}")
            rec_id, symbol = parts[0].strip(), parts[1].strip()
            if symbol not in LABEL_SYMBOLS:
                raise FormatError(
                    f"line {lineno}: unknown label symbol {symbol!r}")
            if rec_id in labels:
                raise FormatError(f"line {lineno}: duplicate id {rec_id!r}")
            labels[rec_id] = LABEL_SYMBOLS[symbol]
    return labels


def unlabeled_ids(labels: dict[str, EcgClass], ids) -> list[str]:
    """Record ids present on disk but absent from the label map."""
    return sorted(set(ids) - set(labels))


def synth_ecg(spec: SynthSpec) -> tuple[EcgRecord, np.ndarray]:
    """Generate a train of Gaussian QRS bumps plus seeded Gaussian noise.

    Returns ``(record, peak_indices)`` where ``peak_indices`` are the
    ground-truth R positions in samples. Peaks are laid out on
    ``[rr/2, duration - rr/2]`` so every beat is fully inside the record;
    the count lands within one of ``floor(duration * bpm / 60)``.

    The generator is a pure function of its spec: the same seed yields
    bit-identical sample arrays.
    """
    n = int(round(spec.duration * spec.fs))
    rr = 60.0 / spec.bpm
    times = np.arange(rr / 2, spec.duration - rr / 2 + 1e-12, rr)
    peak_indices = np.round(times * spec.fs).astype(np.int64)
    peak_indices = peak_indices[peak_indices < n]

    x = np.zeros(n)
    sigma_samples = spec.qrs_width * spec.fs / 2.0
    half = int(np.ceil(6 * sigma_samples))
    for idx in peak_indices:
        lo, hi = max(0, idx - half), min(n, idx + half + 1)
        k = np.arange(lo, hi)
        x[lo:hi] += spec.amplitude * np.exp(
            -((k - idx) ** 2) / (2.0 * sigma_samples ** 2))

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        x = x + rng.normal(0.0, spec.noise_sigma, n)

    record = EcgRecord(id=f"synth-{spec.seed}", fs=spec.fs, samples=x)
    return record, peak_indices
