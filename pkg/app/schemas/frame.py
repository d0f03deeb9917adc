"""
Pydantic schemas for messages carried between sensor clients and the server
"""
from enum import Enum, IntEnum
from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.schemas.geometry import RawMeasurement


class Joint(str, Enum):
    LEFT_HIP = "left_hip"
    RIGHT_HIP = "right_hip"
    LEFT_KNEE = "left_knee"
    RIGHT_KNEE = "right_knee"
    LEFT_ANKLE = "left_ankle"
    RIGHT_ANKLE = "right_ankle"

    @property
    def is_left(self) -> bool:
        return self.value.startswith("left")


# Wire order of the joints inside a frame
JOINT_ORDER: List[Joint] = list(Joint)


class MessageType(IntEnum):
    SYNC_REQ = 0
    SYNC_RESP = 1
    JOINT_FRAME = 2
    SESSION_CTRL = 3


class SessionOp(IntEnum):
    HELLO = 0
    ACCEPT = 1
    REJECT = 2
    READY = 3
    START = 4
    STOP = 5
    BYE = 6


class WireMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: MessageType
    payload: bytes = b""


class JointFrame(BaseModel):
    """One client's measurement of all six joints at one capture instant"""
    model_config = ConfigDict(frozen=True)

    client_id: int = Field(..., ge=1, le=3)
    seq: int = Field(..., ge=0, le=0xFFFFFFFF)
    client_ts: int = Field(..., ge=0, le=0xFFFFFFFFFFFFFFFF, description="Client clock at send (us)")
    joints: List[RawMeasurement] = Field(..., min_length=6, max_length=6)

    @field_validator("joints")
    @classmethod
    def _six_joints(cls, value: List[RawMeasurement]) -> List[RawMeasurement]:
        if len(value) != len(JOINT_ORDER):
            raise ValueError(f"a frame carries exactly {len(JOINT_ORDER)} joints")
        return value


class SyncRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    t1: int = Field(..., ge=0)


class SyncResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    t1: int = Field(..., ge=0)
    t2: int = Field(..., ge=0)
    t3: int = Field(..., ge=0)


class SessionControl(BaseModel):
    """Session lifecycle message; `value` and `count` carry START's schedule anchor"""
    model_config = ConfigDict(frozen=True)

    op: SessionOp
    client_id: int = Field(0, ge=0, le=255)
    value: int = Field(0, ge=0, le=0xFFFFFFFFFFFFFFFF)
    count: int = Field(0, ge=0, le=0xFFFFFFFF)
