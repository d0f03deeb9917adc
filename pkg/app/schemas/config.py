"""
Session configuration file schema (one JSON document per rig session)
"""
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.geometry import ZSide
from app.schemas.schedule import ScheduleConfig
from app.schemas.simulation import GaitProfile, NoiseModel


class RigSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    l12: float = Field(6000.0, description="Baseline k1-k2 (mm)")
    l13: float = Field(5000.0, description="Baseline k1-k3 (mm)")
    l23: float = Field(5000.0, description="Baseline k2-k3 (mm)")
    z_side: ZSide = ZSide.ABOVE
    z_slack_mm: float = Field(50.0, ge=0, description="Tolerated negative z^2 is -(z_slack_mm)^2")


class SyncSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    burst_size: int = Field(8, ge=1)
    refresh_s: float = Field(10.0, gt=0)


class SessionSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    duration_s: float = Field(60.0, gt=0)
    acquire_delay_ms: float = Field(3.0, ge=0, description="Frame generation cost before each send")
    start_margin_ms: float = Field(200.0, ge=0, description="Lead time between READY and the first iteration")
    virtual_time: bool = False


class RigConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rig: RigSection = Field(default_factory=RigSection)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    gait: GaitProfile = Field(default_factory=lambda: GaitProfile(origin_x=3000.0, origin_y=1500.0))
    noise: NoiseModel = Field(default_factory=NoiseModel)
    sync: SyncSection = Field(default_factory=SyncSection)
    session: SessionSection = Field(default_factory=SessionSection)

    @property
    def seed(self) -> int:
        return self.noise.seed

    @property
    def iterations(self) -> int:
        duration_us = int(round(self.session.duration_s * 1_000_000))
        return duration_us // self.schedule.iteration_us

    def with_overrides(
        self,
        *,
        seed: Optional[int] = None,
        duration_s: Optional[float] = None,
        nominal_interframe_ms: Optional[float] = None,
        sync_enabled: Optional[bool] = None,
        virtual_time: Optional[bool] = None,
    ) -> "RigConfig":
        """Apply command-line overrides, revalidating the affected sections"""
        data = self.model_dump(mode="json")
        if seed is not None:
            data["noise"]["seed"] = seed
        if duration_s is not None:
            data["session"]["duration_s"] = duration_s
        if nominal_interframe_ms is not None:
            data["schedule"]["nominal_interframe_ms"] = nominal_interframe_ms
        if sync_enabled is not None:
            data["sync"]["enabled"] = sync_enabled
        if virtual_time is not None:
            data["session"]["virtual_time"] = virtual_time
        return RigConfig.model_validate(data)
