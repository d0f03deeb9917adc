"""
Pydantic schemas for accuracy, trace comparison and timing reports
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from app.schemas.geometry import Point3

TRILATERATION = "trilateration"


class AccuracyReport(BaseModel):
    """Distance of each localization method from the reference position (mm)"""
    errors: Dict[str, float]
    winner: str


class LocalizationRequest(BaseModel):
    reference: Point3
    singles: List[Point3] = Field(..., min_length=3, max_length=3, description="Relocations by k1, k2, k3")
    trilaterated: Point3


class TraceDiffReport(BaseModel):
    """Population std of the per-sample difference between two traces (cm)"""
    per_axis: Dict[str, Dict[str, float]]
    total_cm: float = Field(..., description="Std over all pooled joint-axis differences")
    mean_of_stds_cm: float
    samples: int


class HistogramBucket(BaseModel):
    label: str
    lower_ms: float
    upper_ms: Optional[float] = None
    count: int
    fraction: float


class TimingReport(BaseModel):
    frame_count: int
    fraction_within_1ms: float
    max_error_ms: Dict[int, float]
    histogram: List[HistogramBucket]
    span_s: float
    ordering_ok: bool
    sequence_gaps: int = 0


class TimingRequest(BaseModel):
    """Arrival log to evaluate: (client, seq, server_time_us) triples"""
    arrivals: List[Tuple[int, int, int]] = Field(..., description="(client, seq, server_time_us) per frame")
    slot_ms: float = Field(15.0, gt=0)
    clients: List[int] = Field(default_factory=lambda: [1, 2, 3])
    trilateration_slot: bool = True
    nominal_interframe_ms: Optional[float] = None


class MethodAccuracy(BaseModel):
    count: int
    mean_mm: Optional[float] = None
    median_mm: Optional[float] = None


class NoiseStudyReport(BaseModel):
    trials: int
    seed: int
    sigma_depth_mm: float
    sigma_angle_rad: float
    target: Point3
    methods: Dict[str, MethodAccuracy]
    unsolved: int
    median_ratio: Optional[float] = Field(
        None, description="Trilateration median error over the best single-sensor median"
    )
    trilateration_best_mean: bool


class ArtifactAccuracy(BaseModel):
    methods: Dict[str, MethodAccuracy]
    winner: Optional[str] = None
    max_trilateration_error_mm: Optional[float] = None


class ArtifactReport(BaseModel):
    """Everything `analyze` derives from one run directory"""
    iterations_planned: int
    iterations_trilaterated: int
    trilaterated_rows: int
    accuracy: ArtifactAccuracy
    trace_diff: Optional[TraceDiffReport] = None
    timing: TimingReport
    slot_violations: int
    slots_respected: bool
