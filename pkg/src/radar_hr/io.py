"""Binary session container and label files.

Layout: ``b"RVS1"``, u32 little-endian header length, UTF-8 JSON header,
then little-endian float32 payload.  ADC payloads hold real samples;
decimated payloads hold interleaved real/imag range profiles.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from radar_hr.config import AdcCube, RadarConfig, RangeProfileSeries

MAGIC = b"RVS1"
FORMAT_VERSION = 1
KINDS = ("adc", "decimated")


class SessionError(ValueError):
    code = "session"


class BadMagicError(SessionError):
    code = "bad_magic"


class TruncatedError(SessionError):
    code = "truncated"


class ChecksumError(SessionError):
    code = "checksum"


class DimensionError(SessionError):
    code = "dimension"


@dataclass(eq=False)
class SessionContainer:
    """Sensor data plus the radar configuration that produced it.

    ``data`` is float32 ``(burst, chirp, rx, sample)`` for ``adc`` and
    complex64 ``(time, rx, bin)`` for ``decimated``.
    """

    config: RadarConfig
    kind: str
    data: np.ndarray
    sample_rate: float = 0.0
    range_bin_size: float = 0.0
    start_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SessionError(f"unknown payload kind {self.kind!r}")
        dtype = np.float32 if self.kind == "adc" else np.complex64
        self.data = np.ascontiguousarray(self.data, dtype=dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SessionContainer):
            return NotImplemented
        return (self.config == other.config and self.kind == other.kind
                and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes()
                and self.sample_rate == other.sample_rate
                and self.range_bin_size == other.range_bin_size
                and self.start_time == other.start_time and self.meta == other.meta)

    @classmethod
    def from_series(cls, series: RangeProfileSeries, config: RadarConfig, meta=None):
        return cls(config, "decimated", series.profiles, series.sample_rate,
                   series.range_bin_size, series.start_time, dict(meta or {}))

    @classmethod
    def from_cube(cls, cube: AdcCube, meta=None):
        c = cube.config
        return cls(c, "adc", cube.samples, c.burst_rate, 0.0, cube.start_time, dict(meta or {}))

    def to_series(self) -> RangeProfileSeries:
        """Range profiles at the decimated rate, running the front end on ADC payloads."""
        if self.kind == "decimated":
            return RangeProfileSeries(self.data.astype(np.complex128), self.sample_rate,
                                      self.range_bin_size, self.start_time)
        from radar_hr.frontend import preprocess

        return preprocess(AdcCube(self.data.astype(np.float64), self.config, self.start_time))

    def payload(self) -> bytes:
        arr = self.data.view(np.float32) if self.kind == "decimated" else self.data
        return arr.astype("<f4", copy=False).tobytes()

    def header(self, payload: bytes) -> dict:
        return {
            "version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "kind": self.kind,
            "dims": list(self.data.shape),
            "crc32": zlib.crc32(payload),
            "sample_rate": self.sample_rate,
            "range_bin_size": self.range_bin_size,
            "start_time": self.start_time,
            "meta": self.meta,
        }


def to_bytes(session: SessionContainer) -> bytes:
    payload = session.payload()
    head = json.dumps(session.header(payload), sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def from_bytes(blob: bytes) -> SessionContainer:
    if blob[:4] != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, found {blob[:4]!r}")
    if len(blob) < 8:
        raise TruncatedError("file ends inside the header length field")
    (n,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + n:
        raise TruncatedError(f"header claims {n} bytes, only {len(blob) - 8} present")
    try:
        head = json.loads(blob[8:8 + n])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SessionError(f"malformed header: {exc}") from exc
    payload = blob[8 + n:]
    dims = tuple(int(d) for d in head["dims"])
    kind = head["kind"]
    if kind not in KINDS:
        raise SessionError(f"unknown payload kind {kind!r}")
    expected = int(np.prod(dims)) * 4 * (2 if kind == "decimated" else 1)
    if len(payload) < expected:
        if zlib.crc32(payload) == head["crc32"]:
            raise DimensionError(f"dims {dims} need {expected} payload bytes, found {len(payload)}")
        raise TruncatedError(f"payload has {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise DimensionError(f"dims {dims} need {expected} payload bytes, found {len(payload)}")
    if zlib.crc32(payload) != head["crc32"]:
        raise ChecksumError("payload checksum mismatch")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    data = arr.view(np.complex64).reshape(dims) if kind == "decimated" else arr.reshape(dims)
    return SessionContainer(RadarConfig.from_dict(head["config"]), kind, data,
                            head["sample_rate"], head["range_bin_size"], head["start_time"],
                            head.get("meta", {}))


def write_session(path, session: SessionContainer) -> None:
    Path(path).write_bytes(to_bytes(session))


def read_session(path) -> SessionContainer:
    return from_bytes(Path(path).read_bytes())


def labels_path(session_path) -> Path:
    p = Path(session_path)
    return p.with_name(p.stem + ".labels.json")


def write_labels(path, labels: dict) -> None:
    Path(path).write_text(json.dumps(labels, sort_keys=True, indent=1) + "\n")


def read_labels(path) -> dict:
    return json.loads(Path(path).read_text())
