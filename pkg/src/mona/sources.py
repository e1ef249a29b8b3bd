"""Time-dependent source waveforms for independent voltage/current sources."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Waveform", "SourceSet"]


@dataclass(frozen=True)
class Waveform:
    """A scalar signal: either a constant or a sinusoid.

    Sinusoids are ``amplitude * sin(2*pi*frequency*t + phase)``.
    """

    kind: str  # "dc" | "sin"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dc", "sin"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")

    @classmethod
    def dc(cls, value: float) -> "Waveform":
        return cls(kind="dc", amplitude=float(value))

    @classmethod
    def sine(cls, amplitude: float, frequency: float, phase: float = 0.0) -> "Waveform":
        return cls(kind="sin", amplitude=float(amplitude),
                   frequency=float(frequency), phase=float(phase))

    def __call__(self, t: float) -> float:
        if self.kind == "dc":
            return self.amplitude
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class SourceSet:
    """The independent sources of a coupled system, one waveform per branch."""

    voltage: tuple[Waveform, ...] = ()
    current: tuple[Waveform, ...] = ()

    def voltage_at(self, t: float) -> np.ndarray:
        return np.array([w(t) for w in self.voltage], dtype=float)

    def current_at(self, t: float) -> np.ndarray:
        return np.array([w(t) for w in self.current], dtype=float)
