from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

TRILATERATION_SLOT = "trilateration"


class ScheduleConfig(BaseModel):
    """Fixed slotted transmission schedule; one slot per client plus an optional trilateration slot"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    slot_ms: float = Field(15.0, gt=0, description="Length of one transmission slot")
    clients: List[int] = Field(default_factory=lambda: [1, 2, 3], min_length=1)
    trilateration_slot: bool = Field(True, description="Reserve a slot for the server's trilateration")
    nominal_interframe_ms: Optional[float] = Field(
        None, gt=0, description="Expected interval between frames of one client; defaults to the iteration length"
    )

    @field_validator("clients")
    @classmethod
    def _distinct_clients(cls, value: List[int]) -> List[int]:
        if len(set(value)) != len(value):
            raise ValueError("client ids must be distinct")
        return value

    @property
    def slot_count(self) -> int:
        return len(self.clients) + (1 if self.trilateration_slot else 0)

    @property
    def iteration_ms(self) -> float:
        return self.slot_ms * self.slot_count

    @property
    def slot_us(self) -> int:
        return int(round(self.slot_ms * 1000))

    @property
    def iteration_us(self) -> int:
        return self.slot_us * self.slot_count

    @property
    def interframe_ms(self) -> float:
        if self.nominal_interframe_ms is None:
            return self.iteration_ms
        return self.nominal_interframe_ms

    @property
    def finalize_offset_us(self) -> int:
        """Offset within an iteration at which the server assembles its frames"""
        return self.slot_us * len(self.clients)


class TimingError(BaseModel):
    model_config = ConfigDict(frozen=True)

    client: int
    seq: int = Field(..., ge=2)
    error_ms: float
    server_time_us: int


class SequenceGap(BaseModel):
    client: int
    after_seq: int
    next_seq: int


class TimingErrorSet(BaseModel):
    """Per-frame timing errors plus the headline statistics derived from them"""
    errors: List[TimingError] = []
    gaps: List[SequenceGap] = []
    fraction_within_1ms: float = 1.0
    max_error_ms: Dict[int, float] = {}
