from pydantic import BaseModel, ConfigDict, Field, model_validator


class SyncSample(BaseModel):
    """The four timestamps of one request/response exchange (microseconds).

    t1 client send, t2 server receive, t3 server send, t4 client receive.
    """
    model_config = ConfigDict(frozen=True)

    t1: int = Field(..., ge=0)
    t2: int = Field(..., ge=0)
    t3: int = Field(..., ge=0)
    t4: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.t4 < self.t1:
            raise ValueError("t4 must not precede t1")
        if self.t3 < self.t2:
            raise ValueError("t3 must not precede t2")
        return self

    @property
    def round_trip_delay(self) -> int:
        return (self.t2 - self.t1) + (self.t4 - self.t3)


class ClockModel(BaseModel):
    """Immutable snapshot of a client clock's estimated offset to the server clock"""
    model_config = ConfigDict(frozen=True)

    offset: float = Field(..., description="Server time minus client time (us)")
    round_trip_delay: float = Field(..., ge=0, description="Round-trip network delay (us)")
    error_bound: float = Field(..., ge=0, description="Half the round-trip delay (us)")

    @model_validator(mode="after")
    def _bound_is_half_delay(self):
        if self.error_bound != self.round_trip_delay / 2:
            raise ValueError("error_bound must equal round_trip_delay / 2")
        return self

    @classmethod
    def identity(cls) -> "ClockModel":
        """Model used when synchronisation is disabled"""
        return cls(offset=0.0, round_trip_delay=0.0, error_bound=0.0)
