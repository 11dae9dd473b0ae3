"""Camera footprint, detection probability and search confidence."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SensorModel:
    fov_angle: float  # radians
    d_min: float
    d_max: float

    def __post_init__(self):
        if not 0 < self.fov_angle < math.pi:
            raise ValueError("fov_angle must lie in (0, pi) radians")
        if not 0 <= self.d_min < self.d_max:
            raise ValueError("need 0 <= d_min < d_max")

    @classmethod
    def from_degrees(cls, fov_deg: float, d_min: float, d_max: float) -> "SensorModel":
        return cls(math.radians(fov_deg), float(d_min), float(d_max))


def footprint_side(d: float, s: SensorModel) -> float:
    """Side length of the square footprint at distance d."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    return 2.0 * d * math.tan(s.fov_angle / 2.0)


def footprint_distance(side: float, s: SensorModel) -> float:
    """Distance at which the footprint side equals ``side``."""
    return side / (2.0 * math.tan(s.fov_angle / 2.0))


def detection_prob(d: float, s: SensorModel) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    if d <= s.d_min:
        return 0.0
    return max(0.0, 1.0 - (d - s.d_min) / (s.d_max - s.d_min))


def search_confidence(d: float, s: SensorModel) -> float:
    """Detection probability weighted by footprint area (m^2)."""
    return detection_prob(d, s) * footprint_side(d, s) ** 2
