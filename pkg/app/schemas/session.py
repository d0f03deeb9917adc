"""
Records produced by a tracking session and the summaries describing it
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.schemas.frame import JointFrame


class RunMode(str, Enum):
    SIMULATE = "simulate"
    SERVE = "serve"
    CLIENT = "client"
    ANALYZE = "analyze"


@dataclass(frozen=True)
class ArrivalEvent:
    """One frame arrival; server_time_us is relative to the session start"""
    client: int
    seq: int
    server_time_us: int


@dataclass(frozen=True)
class TrilateratedRow:
    iteration: int
    joint: str
    x_mm: float
    y_mm: float
    z_mm: float
    server_time_us: int


@dataclass(frozen=True)
class GroundTruthRow:
    iteration: int
    joint: str
    x_mm: float
    y_mm: float
    z_mm: float
    capture_time_us: int


@dataclass(frozen=True)
class ReceivedFrame:
    iteration: int
    frame: JointFrame


class ClientSummary(BaseModel):
    client_id: int
    frames_sent: int = 0
    frames_skipped: int = 0
    sync_models: int = 0
    clock_offset_us: Optional[float] = None
    clock_error_bound_us: Optional[float] = None
    rejected: bool = False
    abandoned: bool = False


class SessionSummary(BaseModel):
    """Counters of one server session; everything non-fatal ends up here"""
    virtual_time: bool
    iterations_planned: int
    iterations_completed: int = 0
    iterations_skipped: int = 0
    trilaterated_rows: int = 0
    unsolved_joints: int = 0
    frames_received: int = 0
    frames_late: int = 0
    frames_duplicate: int = 0
    frames_out_of_range: int = 0
    slot_violations: int = 0
    sequence_gaps: int = 0
    sync_requests: int = 0
    clients_lost: List[int] = Field(default_factory=list)
    errors: List[Dict[str, Any]] = Field(default_factory=list, description="Error bodies of session-level failures")
    rejected_connections: int = 0
    start_at_us: Optional[int] = None
    network_stalls: int = 0
    clients: Dict[int, ClientSummary] = Field(default_factory=dict)


@dataclass
class SessionArtifacts:
    """In-memory result of a session, before it is written to disk"""
    summary: SessionSummary
    ground_truth: List[GroundTruthRow] = field(default_factory=list)
    raw_frames: Dict[int, List[ReceivedFrame]] = field(default_factory=dict)
    trilaterated: List[TrilateratedRow] = field(default_factory=list)
    events: List[ArrivalEvent] = field(default_factory=list)


class RunManifest(BaseModel):
    mode: RunMode
    config_path: Optional[str] = None
    config_sha256: str
    seed: int
    output_dir: str
    duration_s: float
    iterations: int
    flags: Dict[str, object] = Field(default_factory=dict)
    config: Dict[str, object] = Field(default_factory=dict, description="Full resolved config")
