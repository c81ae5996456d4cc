"""Sensor message types shared by backends and the planners that consume them."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LidarScan:
    angle_min: float
    angle_increment: float
    ranges: tuple[float, ...]
    stamp: float
    max_range: float = 8.0

    @property
    def no_hit(self) -> float:
        return self.max_range + 1.0

    def to_dict(self) -> dict:
        return {
            "angle_min": self.angle_min,
            "angle_increment": self.angle_increment,
            "ranges": list(self.ranges),
            "stamp": self.stamp,
            "max_range": self.max_range,
        }

    @classmethod
    def from_dict(cls, d) -> "LidarScan":
        return cls(d["angle_min"], d["angle_increment"], tuple(d["ranges"]), d.get("stamp", 0.0),
                   d.get("max_range", 8.0))
