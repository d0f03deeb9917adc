"""
Pydantic schemas for the sensor simulator: walking pattern, measurement noise,
client clocks and the simulated LAN.
"""
import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.frame import Joint


class Direction(str, Enum):
    FORWARD = "+Y"
    BACKWARD = "-Y"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.FORWARD else -1


class GaitSegment(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    direction: Direction
    steps: int = Field(..., ge=1)


def _default_plan() -> List[GaitSegment]:
    return [
        GaitSegment(direction=Direction.FORWARD, steps=3),
        GaitSegment(direction=Direction.BACKWARD, steps=4),
        GaitSegment(direction=Direction.FORWARD, steps=4),
        GaitSegment(direction=Direction.BACKWARD, steps=5),
        GaitSegment(direction=Direction.FORWARD, steps=3),
    ]


def _default_lateral() -> Dict[Joint, float]:
    return {joint: (-100.0 if joint.is_left else 100.0) for joint in Joint}


class GaitProfile(BaseModel):
    """Piecewise-sinusoidal walking pattern for the six lower-limb joints"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    plan: List[GaitSegment] = Field(default_factory=_default_plan, min_length=1)
    step_length: float = Field(500.0, gt=0, description="mm per step")
    cadence: float = Field(1.0, gt=0, description="steps per second")
    hip_height: float = Field(900.0, gt=0)
    knee_height: float = Field(500.0, gt=0)
    ankle_height: float = Field(80.0, gt=0)
    lateral_offsets: Dict[Joint, float] = Field(default_factory=_default_lateral)
    swing_amplitude: float = Field(150.0, ge=0, description="Peak ankle lift during swing (mm)")
    origin_x: float = Field(0.0, description="World X of the walking line (mm)")
    origin_y: float = Field(0.0, description="World Y where the walk starts (mm)")

    @model_validator(mode="after")
    def _heights_ordered(self):
        if not (self.hip_height > self.knee_height > self.ankle_height > 0):
            raise ValueError("heights must satisfy hip > knee > ankle > 0")
        missing = set(Joint) - set(self.lateral_offsets)
        if missing:
            raise ValueError(f"lateral offsets missing for {sorted(j.value for j in missing)}")
        return self

    @property
    def plan_steps(self) -> int:
        return sum(segment.steps for segment in self.plan)


class DelayShape(str, Enum):
    LOGNORMAL = "lognormal"
    UNIFORM = "uniform"
    CONSTANT = "constant"


class NetworkModel(BaseModel):
    """One-way LAN delay: base + jitter, with occasional stalls"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_ms: float = Field(0.3, ge=0)
    jitter_ms: float = Field(0.1, ge=0, description="Median jitter (lognormal) or upper bound (uniform)")
    shape: DelayShape = DelayShape.LOGNORMAL
    lognormal_sigma: float = Field(0.6, ge=0)
    stall_probability: float = Field(0.005, ge=0, le=1)
    stall_ms: Tuple[float, float] = (2.0, 7.0)

    @classmethod
    def ideal(cls) -> "NetworkModel":
        return cls(base_ms=0.0, jitter_ms=0.0, shape=DelayShape.CONSTANT, stall_probability=0.0)

    @property
    def jitter_free(self) -> bool:
        return self.shape is DelayShape.CONSTANT or self.jitter_ms == 0.0


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    sigma_depth: float = Field(0.0, ge=0, description="mm")
    sigma_angle: float = Field(0.0, ge=0, description="rad")
    sigma_angle_deg: Optional[float] = Field(None, ge=0, exclude=True)
    seed: int = Field(0, ge=0, description="Seed for every random stream of a session")
    clock_offset_us: Dict[int, int] = Field(default_factory=lambda: {1: 8000, 2: -5000, 3: 12000})
    clock_drift_ppm: Dict[int, float] = Field(default_factory=lambda: {1: 50.0, 2: -30.0, 3: 20.0})
    network: NetworkModel = Field(default_factory=NetworkModel)

    @model_validator(mode="before")
    @classmethod
    def _degrees_at_boundary(cls, data):
        if isinstance(data, dict) and data.get("sigma_angle_deg") is not None:
            data = dict(data)
            data["sigma_angle"] = math.radians(data["sigma_angle_deg"])
        return data

    @model_validator(mode="after")
    def _offsets_within_a_second(self):
        # client clocks start one second into the session and must stay non-negative
        for client_id, offset in self.clock_offset_us.items():
            if abs(offset) >= 1_000_000:
                raise ValueError(f"clock offset of client {client_id} must be below 1 s")
        return self

    @property
    def noiseless(self) -> bool:
        return self.sigma_depth == 0.0 and self.sigma_angle == 0.0

    def offset_for(self, client_id: int) -> int:
        return self.clock_offset_us.get(client_id, 0)

    def drift_for(self, client_id: int) -> float:
        return self.clock_drift_ppm.get(client_id, 0.0)

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(clock_offset_us={}, clock_drift_ppm={}, network=NetworkModel.ideal())
