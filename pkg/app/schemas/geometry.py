"""
Pydantic schemas for rig geometry: positions, sensor measurements and the
sensor triangle. All lengths are millimeters, all angles radians.
"""
import math
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ZSide(str, Enum):
    """Half-space (relative to the sensor plane) the tracked joints live in"""
    ABOVE = "above"
    BELOW = "below"

    @property
    def sign(self) -> float:
        return 1.0 if self is ZSide.ABOVE else -1.0


class Point3(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x: float
    y: float
    z: float

    @classmethod
    def from_array(cls, values) -> "Point3":
        x, y, z = (float(v) for v in values)
        return cls(x=x, y=y, z=z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def distance_to(self, other: "Point3") -> float:
        return math.dist(self.as_tuple(), other.as_tuple())


class RawMeasurement(BaseModel):
    """Depth plus horizontal/vertical angle of one target as seen by one sensor"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    depth: float = Field(..., gt=0, description="Perpendicular distance to the sensor's vertical plane (mm)")
    theta1: float = Field(..., description="Horizontal angle (rad)")
    theta2: float = Field(..., description="Vertical angle (rad)")

    @field_validator("theta1", "theta2")
    @classmethod
    def _angle_in_range(cls, value: float) -> float:
        if not abs(value) < math.pi / 2:
            raise ValueError("angle must satisfy |theta| < pi/2")
        return value


class RigGeometry(BaseModel):
    """Baselines between the three sensors and the derived vertex coordinates"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    l12: float = Field(..., gt=0)
    l13: float = Field(..., gt=0)
    l23: float = Field(..., gt=0)
    k1: Point3
    k2: Point3
    k3: Point3

    @model_validator(mode="after")
    def _check_vertices(self):
        a, b, c = self.l12, self.l13, self.l23
        if not (a + b > c and a + c > b and b + c > a):
            raise ValueError("baselines violate the strict triangle inequality")
        for vertex in (self.k1, self.k2, self.k3):
            if vertex.z != 0.0:
                raise ValueError("all sensors must lie in the z = 0 plane")
        pairs = ((self.k1, self.k2, a), (self.k1, self.k3, b), (self.k2, self.k3, c))
        for p, q, expected in pairs:
            if not math.isclose(p.distance_to(q), expected, rel_tol=1e-9):
                raise ValueError("vertex distances do not match baselines")
        return self

    @property
    def vertices(self) -> Tuple[Point3, Point3, Point3]:
        return (self.k1, self.k2, self.k3)

    def vertex(self, sensor_index: int) -> Point3:
        if sensor_index not in (1, 2, 3):
            raise ValueError(f"sensor index must be 1, 2 or 3, got {sensor_index}")
        return self.vertices[sensor_index - 1]
