"""Sensor configuration, derived physical quantities and shared data containers."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for physically invalid radar configurations."""


def _default_rx_positions() -> tuple[tuple[float, float], ...]:
    # axis-aligned L: origin, +x, +y at 2.5 mm spacing
    return ((0.0, 0.0), (2.5e-3, 0.0), (0.0, 2.5e-3))


@dataclass(frozen=True)
class RadarConfig:
    """FMCW chirp/burst/antenna parameters.

    Defaults reproduce the 60 GHz single-chip sensor: 58-63.5 GHz sweep,
    2 MHz ADC, 256 samples per chirp, 20 chirps per burst at 3 kHz,
    30 Hz bursts and three receivers in an L.
    """

    f_low: float = 58.0e9
    f_high: float = 63.5e9
    tx_power: float = 5.0e-3
    adc_rate: float = 2.0e6
    samples_per_chirp: int = 256
    chirps_per_burst: int = 20
    chirp_rate: float = 3000.0
    burst_rate: float = 30.0
    rx_count: int = 3
    rx_positions: tuple[tuple[float, float], ...] = field(default_factory=_default_rx_positions)

    def __post_init__(self):
        object.__setattr__(
            self, "rx_positions", tuple(tuple(float(c) for c in p) for p in self.rx_positions)
        )
        if not self.f_high > self.f_low:
            raise ConfigError(f"f_high ({self.f_high}) must exceed f_low ({self.f_low})")
        if self.adc_rate <= 0:
            raise ConfigError("adc_rate must be positive")
        for name in ("samples_per_chirp", "chirps_per_burst", "rx_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.burst_rate < 0 or self.chirp_rate <= 0:
            raise ConfigError("chirp_rate must be positive and burst_rate non-negative")
        if len(self.rx_positions) != self.rx_count:
            raise ConfigError("rx_positions must list one coordinate pair per receiver")

    @property
    def bandwidth(self) -> float:
        return self.f_high - self.f_low

    @property
    def center_frequency(self) -> float:
        return 0.5 * (self.f_low + self.f_high)

    @property
    def chirp_duration(self) -> float:
        """Active sampling time of one chirp in seconds."""
        return self.samples_per_chirp / self.adc_rate

    @property
    def slope(self) -> float:
        """Chirp slope in Hz/s."""
        return self.bandwidth / self.chirp_duration

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rx_positions"] = [list(p) for p in self.rx_positions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        d = dict(d)
        if "rx_positions" in d:
            d["rx_positions"] = tuple(tuple(p) for p in d["rx_positions"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RadarConfig":
        return cls.from_dict(json.loads(text))


def range_resolution(config: RadarConfig) -> float:
    """Range bin width c / (2B) in meters."""
    if config.bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    return SPEED_OF_LIGHT / (2.0 * config.bandwidth)


def duty_cycle(config: RadarConfig) -> float:
    """Fraction of time the transmitter is active."""
    return config.samples_per_chirp * config.chirps_per_burst / config.adc_rate * config.burst_rate


def wavelength(config: RadarConfig) -> float:
    return SPEED_OF_LIGHT / config.center_frequency


def unambiguous_range(config: RadarConfig) -> float:
    """Largest range representable by real-valued fast-time sampling (Nyquist = adc_rate/2)."""
    return 0.5 * config.adc_rate * SPEED_OF_LIGHT / (2.0 * config.slope)


@dataclass(frozen=True, eq=False)
class RangeProfileSeries:
    """Complex range profiles, shape ``(time, receiver, range_bin)``."""

    profiles: np.ndarray
    sample_rate: float
    range_bin_size: float
    start_time: float = 0.0

    def __post_init__(self):
        if self.profiles.ndim != 3:
            raise ValueError("profiles must be 3-D (time, receiver, range_bin)")

    @property
    def n_samples(self) -> int:
        return self.profiles.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.sample_rate

    def slice(self, start: int, stop: int) -> "RangeProfileSeries":
        return RangeProfileSeries(
            self.profiles[start:stop], self.sample_rate, self.range_bin_size,
            self.start_time + start / self.sample_rate,
        )


@dataclass(frozen=True, eq=False)
class AdcCube:
    """Real ADC samples, shape ``(burst, chirp, receiver, sample)``."""

    samples: np.ndarray
    config: RadarConfig
    start_time: float = 0.0

    def __post_init__(self):
        c = self.config
        shape = self.samples.shape
        if len(shape) != 4 or shape[1:] != (c.chirps_per_burst, c.rx_count, c.samples_per_chirp):
            raise ValueError(
                f"cube shape {shape} does not match config "
                f"(*, {c.chirps_per_burst}, {c.rx_count}, {c.samples_per_chirp})"
            )
